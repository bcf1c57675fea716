"""Per-channel auxiliary signals with finite-time extinction.

Each control channel carries two signal pairs (phi, psi):

    phi' = -ra * phi / (phi^2 + psi^2)^(1/3)
    psi' = -rb * psi / (phi^2 + psi^2)^(1/3)

with rates (ra, rb) = (alpha, beta) for the trace signal zeta and
(mu^(5/3) alpha, mu^(5/3) beta) for the gate signal eta.  The right-hand
side is defined as 0 at the origin, so 0 is an equilibrium and a pair
that reaches it stays there.  The non-Lipschitz denominator drives the
radius to exactly zero in finite time; the pair is then snapped to (0, 0).

Initial pairs come from a 2x2 linear solve against the root of the cubic

    P(Y) = (alpha-beta)^2 Y^3 - (2 b^2 Y^2 + 2 a b (alpha+beta) Y
                                 + a^2 (alpha^2+beta^2))

so that zeta(0) = a and zeta'(0) = b; the gate starts at eta(0) = 1,
eta'(0) = 0 and is sped up by the scale mu until it dies before delta/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "CubicProblem",
    "AuxChannel",
    "AuxError",
    "solve_cubic",
    "init_zeta",
    "init_eta",
    "choose_mu",
    "step_aux",
    "zeta_eta_values",
    "step_pair",
    "pair_extinction_time",
]

SNAP_TOL = 1e-14


class AuxError(RuntimeError):
    pass


@dataclass(frozen=True)
class CubicProblem:
    a: float
    b: float
    alpha: float
    beta: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if a == b:
            raise AuxError("alpha and beta must be distinct")
        if a * a + b * b - 4.0 * a * b <= 0.0:
            raise AuxError("alpha^2 + beta^2 - 4 alpha beta must be positive")

    def __call__(self, y):
        gap = (self.alpha - self.beta) ** 2
        return gap * y ** 3 - (
            2.0 * self.b ** 2 * y ** 2
            + 2.0 * self.a * self.b * (self.alpha + self.beta) * y
            + self.a ** 2 * (self.alpha ** 2 + self.beta ** 2)
        )


def solve_cubic(problem):
    """Unique nonnegative root, Newton safeguarded by bisection.

    The residual stop is relative to the sum of absolute cubic terms at the
    current point, so roots close to zero are still resolved sharply.
    """
    a, b = problem.a, problem.b
    if a == 0.0 and b == 0.0:
        return 0.0
    gap = (problem.alpha - problem.beta) ** 2
    q2 = 2.0 * b * b
    q1 = 2.0 * a * b * (problem.alpha + problem.beta)
    q0 = a * a * (problem.alpha ** 2 + problem.beta ** 2)
    y_max = 1.0 + (q2 + abs(q1) + q0) / gap

    def local_scale(y):
        return gap * y ** 3 + q2 * y * y + abs(q1) * y + q0

    lo, hi = 0.0, y_max
    # P(0) <= 0 and P(y_max) > 0 by construction
    y = 0.5 * (lo + hi)
    for _ in range(300):
        p = problem(y)
        if p == 0.0 or abs(p) <= 1e-12 * local_scale(y):
            break
        if p > 0.0:
            hi = y
        else:
            lo = y
        dp = 3.0 * gap * y * y - (2.0 * q2 * y + q1)
        candidate = y - p / dp if dp != 0.0 else lo - 1.0
        if lo < candidate < hi:
            y = candidate
        else:
            y = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
    return y


def init_zeta(a, b, alpha, beta):
    """Pair with phi + psi = a (bitwise) and -alpha phi - beta psi = b Y."""
    problem = CubicProblem(a, b, alpha, beta)
    y = solve_cubic(problem)
    if y == 0.0:
        return 0.0, 0.0
    psi = -(b * y + alpha * a) / (beta - alpha)
    phi = a - psi
    # enforce the defining sum exactly; the slope equation absorbs the ulp
    for _ in range(4):
        err = a - (phi + psi)
        if err == 0.0:
            break
        phi += err
    return phi, psi


def init_eta(mu, alpha, beta):
    """Gate pair: value 1, slope 0, sped up by mu (kept a power of two)."""
    if mu <= 0.0:
        raise AuxError("mu must be positive")
    phi, psi = init_zeta(1.0 / mu, 0.0, alpha, beta)
    return mu * phi, mu * psi


def _rhs(phi, psi, ra, rb):
    r2 = phi * phi + psi * psi
    if r2 == 0.0:
        return 0.0, 0.0
    s = r2 ** (1.0 / 3.0)
    return -ra * phi / s, -rb * psi / s


def step_pair(phi, psi, ra, rb, dt, snap_tol=SNAP_TOL):
    """Advance one pair by dt with radius-adaptive RK4 sub-steps.

    Returns (phi, psi, extinct, time_of_extinction_or_None); extinction
    time is measured from the start of this call.
    """
    if phi == 0.0 and psi == 0.0:
        return 0.0, 0.0, True, 0.0
    rate = max(ra, rb)
    t = 0.0
    while t < dt:
        r = math.hypot(phi, psi)
        if r <= snap_tol:
            return 0.0, 0.0, True, t
        h = min(dt - t, r ** (2.0 / 3.0) / (4.0 * rate))
        k1 = _rhs(phi, psi, ra, rb)
        k2 = _rhs(phi + 0.5 * h * k1[0], psi + 0.5 * h * k1[1], ra, rb)
        k3 = _rhs(phi + 0.5 * h * k2[0], psi + 0.5 * h * k2[1], ra, rb)
        k4 = _rhs(phi + h * k3[0], psi + h * k3[1], ra, rb)
        phi += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        psi += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        t += h
    if math.hypot(phi, psi) <= snap_tol:
        return 0.0, 0.0, True, t
    return phi, psi, False, None


def pair_extinction_time(phi, psi, ra, rb, t_cap):
    """Time for the pair to die, or None if it survives past t_cap."""
    phi, psi, extinct, t_ext = step_pair(phi, psi, ra, rb, t_cap)
    return t_ext if extinct else None


@dataclass(frozen=True)
class AuxChannel:
    """Extinction pairs for one control channel (value type)."""

    phi_zeta: float
    psi_zeta: float
    phi_eta: float
    psi_eta: float
    alpha: float
    beta: float
    mu: float
    delta: float
    zeta_extinct: bool = False
    eta_extinct: bool = False

    @classmethod
    def create(cls, a, b, alpha, beta, mu, delta):
        pz, sz = init_zeta(a, b, alpha, beta)
        pe, se = init_eta(mu, alpha, beta)
        return cls(pz, sz, pe, se, alpha, beta, mu, delta,
                   zeta_extinct=(pz == 0.0 and sz == 0.0),
                   eta_extinct=False)

    @property
    def eta_rates(self):
        boost = self.mu ** (5.0 / 3.0)
        return boost * self.alpha, boost * self.beta


def step_aux(channel, dt):
    """Advance both pairs of the channel by dt; extinct pairs stay (0, 0)."""
    if dt <= 0.0:
        raise AuxError("dt must be positive")
    if channel.zeta_extinct:
        pz, sz, zx = 0.0, 0.0, True
    else:
        pz, sz, zx, _ = step_pair(
            channel.phi_zeta, channel.psi_zeta, channel.alpha, channel.beta, dt)
    if channel.eta_extinct:
        pe, se, ex = 0.0, 0.0, True
    else:
        ra, rb = channel.eta_rates
        pe, se, ex, _ = step_pair(channel.phi_eta, channel.psi_eta, ra, rb, dt)
    return replace(channel, phi_zeta=pz, psi_zeta=sz, phi_eta=pe, psi_eta=se,
                   zeta_extinct=zx, eta_extinct=ex)


def zeta_eta_values(channel):
    """(zeta, zeta', eta, eta') from the pair states and exact ODE sums."""
    if channel.zeta_extinct:
        zeta, dzeta = 0.0, 0.0
    else:
        zeta = channel.phi_zeta + channel.psi_zeta
        dp, ds = _rhs(channel.phi_zeta, channel.psi_zeta,
                      channel.alpha, channel.beta)
        dzeta = dp + ds
    if channel.eta_extinct:
        eta, deta = 0.0, 0.0
    else:
        eta = channel.phi_eta + channel.psi_eta
        ra, rb = channel.eta_rates
        dp, ds = _rhs(channel.phi_eta, channel.psi_eta, ra, rb)
        deta = dp + ds
    return zeta, dzeta, eta, deta


def choose_mu(alpha, beta, delta):
    """Smallest power-of-two scale whose gate dies before delta/2."""
    if delta <= 0.0:
        raise AuxError("horizon margin delta must be positive")
    target = 0.5 * delta
    for exponent in range(61):
        mu = 2.0 ** exponent
        phi, psi = init_eta(mu, alpha, beta)
        ra, rb = mu ** (5.0 / 3.0) * alpha, mu ** (5.0 / 3.0) * beta
        t_ext = pair_extinction_time(phi, psi, ra, rb, target)
        if t_ext is not None and t_ext <= target:
            # verify by a fresh integration over the full window
            _, _, extinct, _ = step_pair(*init_eta(mu, alpha, beta), ra, rb, target)
            if extinct:
                return mu
    raise AuxError(f"no mu <= 2^60 extinguishes the gate before {target}")
