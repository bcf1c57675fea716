"""Numpy reference kernels (fallback backend).

Same contracts as the compiled module `_kernels_cy`; the compiled core is
preferred at import when available.  Status codes for the upwind kernels:
0 ok, 1 CFL violation, 2 boundary-map trust exit, 3 non-finite value.
Trace statuses: 0 target reached, 1 exit at x=0, 2 exit at x=1,
-1 nonpositive speed.
"""

from __future__ import annotations

import math

import numpy as np

MODE_CONTROL = 0
MODE_PAD_COPY = 1
MODE_PAD_ZERO = 2

STATUS_OK = 0
STATUS_CFL = 1
STATUS_TRUST = 2
STATUS_NONFINITE = 3


def _speeds(lam_pack, xs, state):
    cols = np.vstack([xs[None, :], state])
    n = len(lam_pack)
    lam = np.empty((n, xs.size))
    for i in range(n):
        lam[i] = lam_pack.eval_cols(i, cols)
    return lam


def upwind_step(w, xs, dt, k, lam_pack, bmap_pack, mode, control,
                speeds_state=None, trust_radius=np.inf):
    """One frozen-coefficient upwind step.

    Returns (status, w_next).  ``speeds_state`` supplies the state the
    speeds are evaluated at (defaults to ``w``); ``control`` fills the
    x=1 inflow of the leftward block in MODE_CONTROL.
    """
    n, nn = w.shape
    dx = xs[1] - xs[0]
    state = w if speeds_state is None else speeds_state
    lam = _speeds(lam_pack, xs, state)
    if float(np.max(lam)) * dt / dx > 1.0 + 1e-12:
        return STATUS_CFL, w
    r = dt / dx
    wn = np.empty_like(w)
    diff = w[:, 1:] - w[:, :-1]
    # rightward block: information moves from smaller x
    wn[:k, 1:] = w[:k, 1:] - (r * lam[:k, 1:]) * diff[:k]
    # leftward block: information moves from larger x
    wn[k:, :-1] = w[k:, :-1] + (r * lam[k:, :-1]) * diff[k:]
    if mode == MODE_CONTROL:
        wn[k:, -1] = control
    elif mode == MODE_PAD_COPY:
        wn[k:, -1] = wn[k:, -2]
    else:
        wn[k:, -1] = 0.0
    y_plus = wn[k:, 0]
    if mode != MODE_CONTROL and y_plus.size \
            and float(np.max(np.abs(y_plus))) > trust_radius:
        return STATUS_TRUST, w
    for rr in range(k):
        wn[rr, 0] = bmap_pack.programs[rr].eval_scalar(y_plus)
    if not np.all(np.isfinite(wn)):
        return STATUS_NONFINITE, wn
    return STATUS_OK, wn


def upwind_run(w0, xs, dt, k, lam_pack, bmap_pack, n_steps, pad_mode,
               trust_radius):
    """March ``n_steps`` with a padding rule at x=1, storing every level.

    Returns (status, field (n_steps+1, n, N+1), failed_step).
    """
    n, nn = w0.shape
    field = np.empty((n_steps + 1, n, nn))
    field[0] = w0
    w = w0
    for step in range(n_steps):
        status, w = upwind_step(w, xs, dt, k, lam_pack, bmap_pack,
                                pad_mode, None, None, trust_radius)
        if status != STATUS_OK:
            return status, field[: step + 1], step
        field[step + 1] = w
    return STATUS_OK, field, -1


def _interp_state(field_data, dt_f, xs, t_rel, x, out):
    """Bilinear field sample of all components into ``out``; returns
    True when the constant time extension was used."""
    nt = field_data.shape[0]
    used_ext = False
    rt = t_rel / dt_f
    if rt <= 0.0:
        it, ft = 0, 0.0
        used_ext = rt < -1e-12
    elif rt >= nt - 1:
        it, ft = nt - 2, 1.0
        used_ext = rt > nt - 1 + 1e-12
        if nt == 1:
            it, ft = 0, 0.0
    else:
        it = int(rt)
        ft = rt - it
    dx = xs[1] - xs[0]
    rx = (x - xs[0]) / dx
    nn = xs.size
    if rx <= 0.0:
        ix, fx = 0, 0.0
    elif rx >= nn - 1:
        ix, fx = nn - 2, 1.0
    else:
        ix = int(rx)
        fx = rx - ix
    row0 = field_data[it]
    row1 = field_data[min(it + 1, nt - 1)]
    a = (1.0 - ft) * row0[:, ix] + ft * row1[:, ix]
    b = (1.0 - ft) * row0[:, ix + 1] + ft * row1[:, ix + 1]
    out[:] = (1.0 - fx) * a + fx * b
    return used_ext


def trace_flow(field_data, dt_f, xs, program, direction, s_rel, xi,
               t_target_rel, h):
    """RK4 characteristic trace over the field, in field-relative time.

    Stops at a domain exit (located by bisection on the last step to
    1e-12 in time) or on reaching t_target_rel.  Returns
    (status, t_event_rel, x_end, used_extension, times_rel, positions).
    """
    n = field_data.shape[1]
    y = np.empty(n)
    vals = np.empty(n + 1)
    used_ext = [False]
    bad_speed = [False]

    def velocity(t_rel, x):
        xc = min(1.0, max(0.0, x))
        if _interp_state(field_data, dt_f, xs, t_rel, xc, y):
            used_ext[0] = True
        vals[0] = xc
        vals[1:] = y
        lam = program.eval_scalar(vals)
        if lam <= 0.0:
            bad_speed[0] = True
        return direction * lam

    def rk4(t_rel, x, step):
        k1 = velocity(t_rel, x)
        k2 = velocity(t_rel + 0.5 * step, x + 0.5 * step * k1)
        k3 = velocity(t_rel + 0.5 * step, x + 0.5 * step * k2)
        k4 = velocity(t_rel + step, x + step * k3)
        return x + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    sgn = 1.0 if t_target_rel >= s_rel else -1.0
    t = s_rel
    x = xi
    times = [t]
    positions = [x]

    while sgn * (t_target_rel - t) > 0.0:
        step = sgn * min(h, abs(t_target_rel - t))
        x_new = rk4(t, x, step)
        if bad_speed[0]:
            return -1, t, x, used_ext[0], np.array(times), np.array(positions)
        t_new = t + step
        if x_new < 0.0 or x_new > 1.0:
            boundary = 0.0 if x_new < 0.0 else 1.0
            lo, hi = 0.0, step  # sub-step length within [t, t_new]
            for _ in range(80):
                if abs(hi - lo) <= 1e-12:
                    break
                mid = 0.5 * (lo + hi)
                x_mid = rk4(t, x, mid)
                if (x_mid - boundary) * (x_new - boundary) > 0.0:
                    hi = mid
                else:
                    lo = mid
            t_event = t + 0.5 * (lo + hi)
            times.append(t_event)
            positions.append(boundary)
            status = 1 if boundary == 0.0 else 2
            return (status, t_event, boundary, used_ext[0],
                    np.array(times), np.array(positions))
        t, x = t_new, x_new
        times.append(t)
        positions.append(x)
    return 0, t, x, used_ext[0], np.array(times), np.array(positions)
