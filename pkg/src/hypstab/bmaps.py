"""Implicit maps obtained by eliminating trailing boundary-map components.

Level i (1 <= i <= min(k, m-1)) solves the trailing i components of
B(y+) = 0 for the trailing i unknowns, given the leading m-i entries of
y+.  The map with index j = k - i + 1 returns the first solved unknown;
substituting all solved unknowns makes the trailing components of B
vanish, which is what the feedback uses to zero the reflected waves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .model import check_class_B

__all__ = [
    "ReducedMaps",
    "BmapError",
    "NewtonError",
    "TrustRegionError",
    "build_reduced_maps",
    "eval_M",
    "eval_M_tail",
]

MAX_NEWTON_ITERS = 50


class BmapError(RuntimeError):
    pass


class NewtonError(BmapError):
    pass


class TrustRegionError(BmapError):
    pass


@dataclass(frozen=True)
class _Level:
    i: int                # number of trailing unknowns
    lead_count: int       # number of given leading entries
    lu: tuple             # LU factors of the trailing i x i block of grad B(0)
    lead_block: np.ndarray  # trailing i rows, leading m-i columns of grad B(0)


@dataclass(frozen=True)
class ReducedMaps:
    spec: object
    levels: dict  # map index j -> _Level

    @property
    def map_indices(self):
        return tuple(sorted(self.levels))


def build_reduced_maps(spec):
    """LU-factor the trailing blocks of grad B(0) for every level."""
    count = min(spec.k, spec.m - 1)
    report = check_class_B(spec)
    if count > 0 and not report.member:
        raise BmapError(
            f"boundary-map gradient not in the admissible class: "
            f"trailing minors {report.minor_dets}"
        )
    levels = {}
    for i in range(1, count + 1):
        j = spec.k - i + 1
        trailing = report.gradient[-i:, -i:]
        lead = report.gradient[-i:, : spec.m - i]
        levels[j] = _Level(i, spec.m - i, lu_factor(trailing), lead)
    return ReducedMaps(spec, levels)


def eval_M_tail(maps, j, args):
    """Solve the level of map j; returns the full trailing unknown vector."""
    spec = maps.spec
    if j not in maps.levels:
        raise BmapError(f"map index {j} not defined (levels: {maps.map_indices})")
    level = maps.levels[j]
    args = np.atleast_1d(np.asarray(args, dtype=float))
    if args.size != level.lead_count:
        raise BmapError(
            f"map {j} takes {level.lead_count} arguments, got {args.size}")
    if args.size and np.max(np.abs(args)) > spec.trust_radius:
        raise TrustRegionError(
            f"arguments {args} leave the trust radius {spec.trust_radius}")

    i = level.i
    trailing_rows = range(spec.k - i, spec.k)

    def residual_and_jacobian(z):
        y_plus = np.concatenate([args, z])
        binding = {v: float(val) for v, val in zip(spec.bmap_vars, y_plus)}
        res = np.empty(i)
        jac = np.empty((i, i))
        for row, r in enumerate(trailing_rows):
            dual = spec.bmap[r].eval_dual(binding)
            res[row] = dual.value
            jac[row] = dual.partials[-i:]
        return res, jac

    # start from the linearization at the origin
    rhs0 = level.lead_block @ args if args.size else np.zeros(i)
    z = lu_solve(level.lu, -rhs0)
    for _ in range(MAX_NEWTON_ITERS):
        res, jac = residual_and_jacobian(z)
        if np.max(np.abs(res)) <= spec.newton_tol:
            return z
        try:
            step = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as err:
            raise NewtonError(f"singular Jacobian at level {j}: {err}") from err
        z = z - step
    raise NewtonError(
        f"no convergence in {MAX_NEWTON_ITERS} iterations for map {j}({args})")


def eval_M(maps, j, args):
    """Value of map j: the first solved trailing unknown."""
    return float(eval_M_tail(maps, j, args)[0])
