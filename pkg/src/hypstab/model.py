"""System specification, validation, transit times, and compatible data.

A system couples k rightward components w_1..w_k (reflected at x=0 through
the nonlinear boundary map) with m leftward components w_{k+1}..w_{k+m}
(driven at x=1 by the feedback).  All speeds lambda_i are positive; the
sign structure is carried by the component index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import exprs
from .state import StateSnapshot, one_sided_derivative, uniform_grid

__all__ = [
    "SystemSpec",
    "TimesReport",
    "ValidationReport",
    "ClassBReport",
    "SpecError",
    "validate_spec",
    "compute_tau",
    "compute_topt",
    "check_class_B",
    "check_compatibility",
    "make_compatible_initial_data",
    "trailing_minors",
    "speed_range",
]


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSpec:
    """Immutable problem definition.

    ``lambdas[i]`` is the speed of component i+1 as an expression in
    (x, y1..yn); ``bmap[r]`` is component r+1 of the x=0 boundary map as an
    expression in (y{k+1}..y{k+m}).  ``T`` is the stabilization horizon.
    """

    k: int
    m: int
    lambdas: tuple
    bmap: tuple
    T: float
    alpha: float = 1.0
    beta: float = 4.0
    bc_tol: float = 1e-12
    minor_tol: float = 1e-10
    newton_tol: float = 1e-12
    trust_radius: float = 0.5
    box_radius: float = 1.0

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise SpecError("need at least one component on each side")
        lambdas = tuple(
            e if isinstance(e, exprs.Expr) else exprs.parse(e) for e in self.lambdas
        )
        bmap = tuple(
            e if isinstance(e, exprs.Expr) else exprs.parse(e) for e in self.bmap
        )
        if len(lambdas) != self.n:
            raise SpecError(f"expected {self.n} speed expressions, got {len(lambdas)}")
        if len(bmap) != self.k:
            raise SpecError(f"expected {self.k} boundary-map components, got {len(bmap)}")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "bmap", bmap)
        allowed_lam = set(self.lambda_vars)
        for i, e in enumerate(lambdas):
            extra = set(e.free_vars) - allowed_lam
            if extra:
                raise SpecError(f"lambda_{i + 1} uses unknown variables {sorted(extra)}")
        allowed_b = set(self.bmap_vars)
        for r, e in enumerate(bmap):
            extra = set(e.free_vars) - allowed_b
            if extra:
                raise SpecError(
                    f"boundary map component {r + 1} may only use "
                    f"{list(allowed_b)}, found {sorted(extra)}"
                )

    @property
    def n(self):
        return self.k + self.m

    @property
    def lambda_vars(self):
        return ("x",) + tuple(f"y{i + 1}" for i in range(self.n))

    @property
    def bmap_vars(self):
        return tuple(f"y{self.k + 1 + j}" for j in range(self.m))

    def lambda_pack(self):
        return exprs.pack_programs(self.lambdas, self.lambda_vars)

    def bmap_pack(self):
        return exprs.pack_programs(self.bmap, self.bmap_vars)

    def eval_speeds(self, xs, w):
        """Speeds of all components at nodes: xs (N+1,), w (n, N+1) -> (n, N+1)."""
        cols = np.vstack([np.asarray(xs, dtype=np.float64)[None, :], w])
        pack = self.lambda_pack()
        return np.vstack([pack.eval_cols(i, cols) for i in range(self.n)])

    def eval_bmap(self, y_plus):
        """Boundary map at one y+ point -> length-k vector."""
        binding = dict(zip(self.bmap_vars, np.asarray(y_plus, dtype=float)))
        return np.array([e.eval(binding) for e in self.bmap])

    def bmap_jacobian(self, y_plus):
        """Gradient of the boundary map at y+ (k x m), exact forward mode."""
        binding = {v: float(val) for v, val in zip(self.bmap_vars, y_plus)}
        return np.vstack([e.eval_dual(binding).partials for e in self.bmap])


@dataclass(frozen=True)
class TimesReport:
    tau: np.ndarray
    t_opt: float
    delta: float


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    point: Optional[tuple] = None


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def as_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "detail": c.detail,
                    "point": None if c.point is None else list(c.point),
                }
                for c in self.checks
            ],
        }


@dataclass
class ClassBReport:
    member: bool
    minor_dets: np.ndarray
    gradient: np.ndarray


def _validation_lattice(spec, box_radius, n_x=33, n_y=5):
    axes = [np.linspace(0.0, 1.0, n_x)]
    axes += [np.linspace(-box_radius, box_radius, n_y)] * spec.n
    grids = np.meshgrid(*axes, indexing="ij")
    return np.vstack([g.ravel() for g in grids])  # (n+1, npts)


def validate_spec(spec, box_radius=None):
    """Report-style validation of ordering, map origin, and ODE constants."""
    radius = spec.box_radius if box_radius is None else box_radius
    checks = []

    cols = _validation_lattice(spec, radius)
    pack = spec.lambda_pack()
    values = np.vstack([pack.eval_cols(i, cols) for i in range(spec.n)])

    positive = values > 0.0
    if not positive.all():
        bad = np.argwhere(~positive)[0]
        point = tuple(cols[:, bad[1]])
        checks.append(CheckResult(
            "speeds_positive", False,
            f"lambda_{bad[0] + 1} <= 0 at sample", point))
    else:
        checks.append(CheckResult("speeds_positive", True))

    ordered = np.ones(cols.shape[1], dtype=bool)
    for i in range(spec.k - 1):  # -lambda_1 < ... < -lambda_k  <=>  descending
        ordered &= values[i] > values[i + 1]
    for i in range(spec.k, spec.n - 1):  # 0 < lambda_{k+1} < ... ascending
        ordered &= values[i] < values[i + 1]
    if not ordered.all():
        idx = int(np.argmin(ordered))
        checks.append(CheckResult(
            "speed_ordering", False,
            "eigenvalue ordering violated at sample", tuple(cols[:, idx])))
    else:
        checks.append(CheckResult("speed_ordering", True))

    b0 = spec.eval_bmap(np.zeros(spec.m))
    if np.max(np.abs(b0)) > spec.bc_tol:
        checks.append(CheckResult(
            "bmap_origin", False,
            f"|B(0)| = {np.max(np.abs(b0)):.3e} exceeds {spec.bc_tol:.0e}"))
    else:
        checks.append(CheckResult("bmap_origin", True))

    a, b = spec.alpha, spec.beta
    ok_ab = (a != b) and (a * a + b * b - 4.0 * a * b > 0.0) and a > 0.0 and b > 0.0
    checks.append(CheckResult(
        "aux_constants", ok_ab,
        "" if ok_ab else f"alpha={a}, beta={b} violate the pair-ODE constraints"))

    return ValidationReport(checks)


def speed_range(spec, box_radius=None):
    """(per-component min, per-component max) of speeds over the sample box."""
    radius = spec.box_radius if box_radius is None else box_radius
    cols = _validation_lattice(spec, radius)
    pack = spec.lambda_pack()
    values = np.vstack([pack.eval_cols(i, cols) for i in range(spec.n)])
    return values.min(axis=1), values.max(axis=1)


def compute_tau(spec):
    """Transit times: integral over [0,1] of 1/lambda_i(x, 0)."""
    zeros = {v: 0.0 for v in spec.lambda_vars}
    tau = np.empty(spec.n)
    for i, lam in enumerate(spec.lambdas):
        def integrand(x, lam=lam):
            env = dict(zeros)
            env["x"] = x
            value = lam.eval(env)
            if value <= 0.0:
                raise SpecError(f"lambda_{i + 1}({x}, 0) = {value} is not positive")
            return 1.0 / value
        tau[i], _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return tau


def compute_topt(tau, k, m):
    """Two-branch optimal horizon from the transit times."""
    tau = np.asarray(tau, dtype=float)
    if tau.size != k + m:
        raise SpecError(f"expected {k + m} transit times, got {tau.size}")
    if m >= k:
        candidates = [tau[i] + tau[m + i] for i in range(k)]
        candidates.append(tau[k])
    else:
        candidates = [tau[k - m + j] + tau[k + j] for j in range(m)]
    return float(max(candidates))


def times_report(spec):
    tau = compute_tau(spec)
    t_opt = compute_topt(tau, spec.k, spec.m)
    return TimesReport(tau, t_opt, spec.T - t_opt)


def trailing_minors(matrix, count):
    """Determinants of the trailing i x i blocks for i = 1..count."""
    matrix = np.asarray(matrix, dtype=float)
    return np.array([
        np.linalg.det(matrix[-i:, -i:]) for i in range(1, count + 1)
    ])


def check_class_B(spec):
    """Invertibility of trailing minors of the boundary-map gradient at 0."""
    grad = spec.bmap_jacobian(np.zeros(spec.m))
    count = min(spec.m - 1, spec.k)
    dets = trailing_minors(grad, count)
    scale = max(1.0, float(np.max(np.abs(grad))) if grad.size else 1.0)
    member = bool(np.all(np.abs(dets) > spec.minor_tol * scale))
    return ClassBReport(member, dets, grad)


def check_compatibility(spec, snapshot):
    """Residuals of the x=0 value and slope matching conditions."""
    if snapshot.xs.size < 4:
        raise ValueError("grid too coarse for compatibility residuals (< 4 nodes)")
    k = spec.k
    w0 = snapshot.w[:, 0]
    y_plus = w0[k:]

    res0 = float(np.max(np.abs(w0[:k] - spec.eval_bmap(y_plus))))

    dx = snapshot.dx
    dxw = one_sided_derivative(snapshot.w[:, :3], dx, at_start=True)
    speeds = spec.eval_speeds(snapshot.xs[:1], w0[:, None])[:, 0]
    sigma_minus = -speeds[:k]
    sigma_plus = speeds[k:]
    grad = spec.bmap_jacobian(y_plus)
    lhs = sigma_minus * dxw[:k]
    rhs = grad @ (sigma_plus * dxw[k:])
    res1 = float(np.max(np.abs(lhs - rhs)))
    return res0, res1


def _smoothstep(u):
    """Quintic smoothstep: C^2 ramp from 0 to 1 on [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 + u * (-15.0 + 6.0 * u))


def _cutoff(xs, flat_end=0.125, support_end=0.5):
    """C^2 cutoff: 1 on [0, flat_end], 0 beyond support_end."""
    return 1.0 - _smoothstep((xs - flat_end) / (support_end - flat_end))


def _trig_profile(rng, xs, order=2):
    coeffs = rng.uniform(-1.0, 1.0, size=(2, order + 1))
    out = np.zeros_like(xs)
    for p in range(order + 1):
        out += coeffs[0, p] * np.cos(p * np.pi * xs)
        if p > 0:
            out += coeffs[1, p] * np.sin(p * np.pi * xs)
    return out


def make_compatible_initial_data(spec, amplitude, seed, n_cells=64):
    """Random smooth data satisfying both x=0 matching conditions.

    The leftward block is a random low-order trigonometric profile; the
    rightward block matches the boundary map value and slope near x=0
    (using the same one-sided stencil as the checker, so the residuals are
    exact to rounding) and blends into a free profile beyond x = 1/2.
    """
    xs = uniform_grid(n_cells)
    n = spec.n
    if amplitude == 0.0:
        return StateSnapshot(0.0, xs, np.zeros((n, xs.size)))
    if amplitude < 0.0:
        raise ValueError("amplitude must be nonnegative")

    rng = np.random.default_rng(seed)
    plus_profiles = np.vstack([_trig_profile(rng, xs) for _ in range(spec.m)])
    minus_tails = np.vstack([_trig_profile(rng, xs) for _ in range(spec.k)])
    chi = _cutoff(xs)
    dx = xs[1] - xs[0]

    def build(scale):
        w = np.zeros((n, xs.size))
        w[spec.k:] = scale * plus_profiles
        y_plus = w[spec.k:, 0]
        v = spec.eval_bmap(y_plus)
        # slope from the checker's own stencil keeps residual_1 at rounding level
        dxw_plus = one_sided_derivative(w[spec.k:, :3], dx, at_start=True)
        w_at_0 = np.concatenate([v, y_plus])
        speeds = spec.eval_speeds(xs[:1], w_at_0[:, None])[:, 0]
        grad = spec.bmap_jacobian(y_plus)
        slope = (grad @ (speeds[spec.k:] * dxw_plus)) / (-speeds[:spec.k])
        linear = v[:, None] + slope[:, None] * xs[None, :]
        w[:spec.k] = linear * chi[None, :] + scale * minus_tails * (1.0 - chi[None, :])
        return w

    scale = amplitude
    w = build(scale)
    for _ in range(8):
        norm = StateSnapshot(0.0, xs, w).c1_norm()
        if norm <= amplitude:
            break
        scale *= 0.95 * amplitude / norm
        w = build(scale)
    return StateSnapshot(0.0, xs, w)
