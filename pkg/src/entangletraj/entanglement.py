"""Pure-state concurrence along trajectories and its mean-value dynamics.

For pure states c = |cbar| with cbar = 2 (psi01 psi10 - psi00 psi11).
Along a trajectory the increment of c has the Ito form

    dc = [-gamma c + 2 gamma Re(cbar conj(psi11)^2 u12 / c)] dt - 2 c Re(<J^dag> dxi)

and with the optimal u the ensemble mean obeys

    dE[c]/dt = -gamma E[c] - 2 gamma |psi11(0)|^2 exp(-2 gamma t),

solved by E[c](t) = exp(-gamma t) [c(0) - 2 |psi11(0)|^2 (1 - exp(-gamma t))].
The bracket is signed: it equals Lambda(rho(t)), so the trajectory mean
reproduces its modulus after the sudden-death time t_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sse import THETA_UNDEFINED, TrajectoryRecord, expect_jumps
from .unraveling import cbar, theta_quantity, validate

DRIFT_MIN_C = 1e-10
DC_CHECK_MIN_C = 1e-6
JUMP_WINDOW = 10
GUARD_P = 0.01


@dataclass(frozen=True)
class EntanglementSample:
    c: float
    cbar: complex
    Theta: complex
    theta: float  # NaN when |Theta| < 1e-14

    @property
    def theta_defined(self) -> bool:
        return not math.isnan(self.theta)


def pure_concurrence(psi) -> EntanglementSample:
    a = np.asarray(psi, dtype=complex)
    cb = cbar(a)
    th_q = theta_quantity(a)
    theta = math.nan
    if abs(th_q) >= THETA_UNDEFINED:
        theta = math.atan2(th_q.imag, th_q.real)
        if theta <= -math.pi:
            theta += 2 * math.pi
    return EntanglementSample(abs(cb), cb, th_q, theta)


def concurrence_increment_drift(psi, u, gamma: float) -> float:
    """dt-coefficient of dc."""
    a = np.asarray(psi, dtype=complex)
    u = validate(u)
    cb = cbar(a)
    c = abs(cb)
    if c < DRIFT_MIN_C:
        raise ValueError("drift undefined at zero concurrence")
    return -gamma * c + 2 * gamma * (cb * np.conj(a[3]) ** 2 * u.u12 / c).real


def concurrence_increment_noise(psi, dxi, gamma: float) -> float:
    """Stochastic part -2 c Re(<J^dag> dxi) for one increment pair."""
    a = np.asarray(psi, dtype=complex).reshape(1, 4)
    a1, a2 = expect_jumps(a, gamma)
    d = np.asarray(dxi, dtype=complex)
    c = abs(cbar(a[0]))
    return float(-2 * c * (a1[0].conj() * d[0] + a2[0].conj() * d[1]).real)


@dataclass(frozen=True)
class DcCheck:
    residual: float  # RMS of the per-step mismatch; O(dt)
    mean_residual: float
    n_used: int


def finite_difference_dc_check(traj: TrajectoryRecord, u, gamma: float) -> DcCheck:
    """Compare observed per-step changes of c with the Ito increment.

    Needs states at every step (``state_stride=1``) and the increments.
    Steps with c below 1e-6 are skipped because the drift divides by c.
    """
    if traj.increments is None:
        raise ValueError("trajectory has no stored increments")
    n = traj.increments.shape[0]
    if traj.states.shape[0] != n + 1:
        raise ValueError("trajectory must store the state at every step")
    u = validate(u)
    dt = float(traj.times[1] - traj.times[0])
    res = []
    for k in range(n):
        psi = traj.states[k]
        c = traj.concurrences[k]
        if c < DC_CHECK_MIN_C:
            continue
        pred = (concurrence_increment_drift(psi, u, gamma) * dt
                + concurrence_increment_noise(psi, traj.increments[k], gamma))
        res.append(traj.concurrences[k + 1] - c - pred)
    if not res:
        return DcCheck(0.0, 0.0, 0)
    r = np.asarray(res)
    return DcCheck(float(np.sqrt(np.mean(r ** 2))), float(r.mean()), r.size)


# -- analytic mean law -------------------------------------------------------

def _c0_p11(psi0):
    a = np.asarray(psi0, dtype=complex)
    return abs(cbar(a)), abs(a[3]) ** 2


def analytic_signed_concurrence(psi0, gamma: float, t):
    """Raw closed-form bracket; negative past t_s, where it equals Lambda."""
    c0, p11 = _c0_p11(psi0)
    e = np.exp(-gamma * np.asarray(t, dtype=float))
    return e * (c0 - 2 * p11 * (1 - e))


def analytic_mean_concurrence(psi0, gamma: float, t):
    """Closed-form mean concurrence floored at zero."""
    return np.maximum(analytic_signed_concurrence(psi0, gamma, t), 0.0)


def mean_concurrence_ode_rhs(Ec, psi0, gamma: float, t):
    _, p11 = _c0_p11(psi0)
    return -gamma * Ec - 2 * gamma * p11 * np.exp(-2 * gamma * t)


def integrate_mean_concurrence(psi0, gamma: float, t_max: float, dt: float = 1e-3):
    """RK4 solution of the mean-concurrence ODE; returns ``(times, values)``."""
    n = max(1, int(math.ceil(t_max / dt - 1e-9)))
    h = t_max / n
    times = np.arange(n + 1) * h
    y = np.empty(n + 1)
    y[0] = _c0_p11(psi0)[0]
    f = mean_concurrence_ode_rhs
    for i in range(n):
        t = times[i]
        k1 = f(y[i], psi0, gamma, t)
        k2 = f(y[i] + 0.5 * h * k1, psi0, gamma, t + 0.5 * h)
        k3 = f(y[i] + 0.5 * h * k2, psi0, gamma, t + 0.5 * h)
        k4 = f(y[i] + h * k3, psi0, gamma, t + h)
        y[i + 1] = y[i] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return times, y


# -- disentanglement ---------------------------------------------------------

@dataclass(frozen=True)
class DisentanglementReport:
    kind: str  # "finite" | "asymptotic"
    t_s: float | None = None
    p_s: float | None = None
    detection: str = "phase_jump"  # "phase_jump" | "concurrence_floor" | "analytic"
    index: int | None = None


def to_p(t, gamma: float):
    return 1.0 - np.exp(-gamma * np.asarray(t, dtype=float))


def wrap(angle):
    """Wrap into (-pi, pi]."""
    a = np.asarray(angle, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


def find_phase_jump(thetas, window: int = JUMP_WINDOW) -> int | None:
    """First step where theta sits more than pi/2 away from theta(0) and
    stays there for ``window`` steps; ``None`` if it never does."""
    th = np.asarray(thetas, dtype=float)
    if th.size == 0 or np.isnan(th[0]):
        return None
    away = np.abs(wrap(th - th[0])) > np.pi / 2
    away &= ~np.isnan(th)
    if not away.any():
        return None
    run = np.convolve(away.astype(int), np.ones(window, dtype=int), mode="valid")
    hits = np.nonzero(run == window)[0]
    return int(hits[0]) if hits.size else None


def detect_disentanglement(traj: TrajectoryRecord, gamma: float = 1.0,
                           window: int = JUMP_WINDOW) -> DisentanglementReport:
    """Locate the pi jump of theta that marks t_s on a single trajectory."""
    th = traj.thetas
    if th.size == 0 or np.isnan(th[0]):
        # no phase to track: separable from the start or psi11 = 0
        return DisentanglementReport("asymptotic", detection="concurrence_floor")
    i = find_phase_jump(th, window)
    if i is None:
        return DisentanglementReport("asymptotic", detection="phase_jump")
    t = float(traj.times[i])
    return DisentanglementReport("finite", t, float(to_p(t, gamma)), "phase_jump", i)


def analytic_ts(psi0, gamma: float) -> DisentanglementReport:
    c0, p11 = _c0_p11(psi0)
    if c0 < 2 * p11:
        p_s = float(c0 / (2 * p11))
        return DisentanglementReport("finite", -math.log(1 - p_s) / gamma, p_s, "analytic")
    return DisentanglementReport("asymptotic", detection="analytic")


def circular_mean_std(angles, axis=None):
    """Circular mean and std (sqrt(-2 ln R)); NaN entries are ignored."""
    a = np.asarray(angles, dtype=float)
    z = np.exp(1j * np.where(np.isnan(a), 0.0, a))
    ok = ~np.isnan(a)
    cnt = ok.sum(axis=axis)
    s = np.where(ok, z, 0).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_vec = s / cnt
        R = np.minimum(np.abs(mean_vec), 1.0)
        std = np.sqrt(-2 * np.log(R))
    return np.angle(mean_vec), std


def phase_spread(times, thetas, t_s: float | None, gamma: float, guard_p: float = GUARD_P):
    """Circular std of theta before and after t_s.

    Points within ``guard_p`` (in p units) of t_s are excluded: c passes
    through zero there and the phase is ill-conditioned.  Without a
    t_s the whole trajectory counts as "before" and "after" is NaN.
    """
    p = to_p(times, gamma)
    th = np.asarray(thetas, dtype=float)
    if t_s is None:
        return float(circular_mean_std(th)[1]), math.nan
    p_s = float(to_p(t_s, gamma))
    before = th[p < p_s - guard_p]
    after = th[p > p_s + guard_p]
    sb = float(circular_mean_std(before)[1]) if before.size else math.nan
    sa = float(circular_mean_std(after)[1]) if after.size else math.nan
    return sb, sa
