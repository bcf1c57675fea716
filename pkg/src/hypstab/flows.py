"""Characteristic flows over discrete space-time fields.

Rightward components (index <= k) follow dx/dt = +lambda_j, leftward ones
dx/dt = -lambda_j, with the speed read from a bilinear interpolation of
the field.  Exit times and the foot points of backward-traced slower
families feed the boundary feedback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels

__all__ = [
    "SpaceTimeField",
    "FlowTrace",
    "FlowError",
    "integrate_flow",
    "exit_time",
    "foot_points",
]


class FlowError(RuntimeError):
    pass


@dataclass
class SpaceTimeField:
    """Snapshots stacked at a fixed time step, bilinear in (t, x).

    Values past the last stored time continue constantly; traces record
    when they relied on that extension.
    """

    t0: float
    dt: float
    xs: np.ndarray
    data: np.ndarray  # (n_times, n_components, n_nodes)

    def __post_init__(self):
        self.xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != self.xs.size:
            raise ValueError(f"field shape {self.data.shape} vs grid {self.xs.shape}")
        if self.dt <= 0.0:
            raise ValueError("field dt must be positive")

    @property
    def n_times(self):
        return self.data.shape[0]

    @property
    def n_components(self):
        return self.data.shape[1]

    @property
    def t_end(self):
        return self.t0 + (self.n_times - 1) * self.dt

    def row_at(self, t):
        """Time-interpolated (n, N+1) state matrix (constant extension)."""
        rel = (t - self.t0) / self.dt
        idx = int(np.floor(rel))
        if idx < 0:
            return self.data[0].copy()
        if idx >= self.n_times - 1:
            return self.data[-1].copy()
        frac = rel - idx
        return (1.0 - frac) * self.data[idx] + frac * self.data[idx + 1]

    def value(self, t, x, component):
        """Bilinear sample of one component at (t, x)."""
        row = self.row_at(t)
        return float(np.interp(x, self.xs, row[component]))


@dataclass
class FlowTrace:
    family: int
    times: np.ndarray       # absolute times at RK nodes
    positions: np.ndarray
    event: str              # 'exit0' | 'exit1' | 'target'
    t_event: float
    x_end: float
    used_extension: bool


_EVENTS = {0: "target", 1: "exit0", 2: "exit1"}


def _lambda_program(spec, family):
    return spec.lambdas[family - 1].program(spec.lambda_vars)


def integrate_flow(field, spec, family, s, xi, t_target):
    """Trace family ``family`` from (s, xi) toward t_target.

    RK4 with step dt/2 on the field's clock; a domain exit is located by
    bisection on the final step to 1e-12 in time.  Backward integration
    (t_target < s) is allowed.
    """
    if not 0.0 <= xi <= 1.0:
        raise FlowError(f"launch position {xi} outside [0, 1]")
    if not 1 <= family <= spec.n:
        raise FlowError(f"family {family} out of range")
    direction = 1.0 if family <= spec.k else -1.0
    program = _lambda_program(spec, family)
    status, t_event_rel, x_end, used_ext, times_rel, positions = kernels().trace_flow(
        field.data, field.t0, field.dt, field.xs,
        program, direction,
        s - field.t0, xi, t_target - field.t0,
        0.5 * field.dt,
    )
    if status < 0:
        raise FlowError(
            f"nonpositive interpolated speed for family {family} near "
            f"t={field.t0 + t_event_rel}, x={x_end}")
    return FlowTrace(
        family=family,
        times=field.t0 + times_rel,
        positions=positions,
        event=_EVENTS[int(status)],
        t_event=field.t0 + t_event_rel,
        x_end=float(x_end),
        used_extension=bool(used_ext),
    )


def exit_time(field, spec, family, t):
    """Transit time of the leftward characteristic launched at (t, 1)."""
    if family <= spec.k:
        raise FlowError("exit_time is defined for leftward families only")
    lam_min = _min_speed_lower_bound(field, spec, family)
    cap = t + 4.0 / lam_min
    trace = integrate_flow(field, spec, family, t, 1.0, cap)
    if trace.event != "exit0":
        raise FlowError(
            f"family {family} did not reach x=0 before t={cap} "
            f"(event {trace.event}); field horizon too short")
    return trace.t_event - t


def _min_speed_lower_bound(field, spec, family):
    # crude positive lower bound from the field's value range
    data = field.data
    lo = min(0.0, float(data.min()))
    hi = max(0.0, float(data.max()))
    program = _lambda_program(spec, family)
    samples = []
    for y in (lo, 0.0, hi):
        cols = np.vstack([
            np.linspace(0.0, 1.0, 9)[None, :],
            np.full((spec.n, 9), y),
        ])
        samples.append(program.eval_cols(cols).min())
    lam_min = min(samples)
    if lam_min <= 0.0:
        raise FlowError(f"family {family} speed not positive on the field range")
    return lam_min


def foot_points(field, spec, t, j_star, t_exit=None):
    """Current positions of families k+1..j_star-1 whose characteristics
    pass through (t + t_exit(j_star), 0)."""
    if j_star <= spec.k + 1:
        raise FlowError("foot points need a level with at least one slower family")
    if t_exit is None:
        t_exit = exit_time(field, spec, j_star, t)
    arrival = t + t_exit
    feet = np.empty(j_star - 1 - spec.k)
    for idx, family in enumerate(range(spec.k + 1, j_star)):
        trace = integrate_flow(field, spec, family, arrival, 0.0, t)
        if trace.event != "target":
            raise FlowError(
                f"backward trace of family {family} left the domain "
                f"(event {trace.event})")
        feet[idx] = min(1.0, max(0.0, trace.x_end))
    return feet
