"""Euler-Maruyama integration of the Ito diffusive stochastic Schroedinger equation

    d|psi> = [-iH - 1/2 sum_k (J_k^dag J_k + <J_k^dag><J_k> - 2 <J_k^dag> J_k)] |psi> dt
             + sum_k conj(dxi_k) (J_k - <J_k>) |psi>

with explicit renormalization after every step.

The kernels below act on batches ``psi[n, 4]`` and only use elementwise
arithmetic, so a trajectory's result does not depend on which batch (or
worker) it was computed in.  The lowering operators are applied by index
shuffling instead of matrix products for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import LAWS, NoiseGenerator
from .oracle import IntegrationError
from .states import LindbladSet, StateVector, make_state
from .unraveling import ZERO, CorrelationMatrix, validate

MAX_DT_GAMMA = 1e-2
THETA_UNDEFINED = 1e-14
NOISE_BLOCK = 512


class StepDivergence(IntegrationError):
    def __init__(self, step: int, index: int | None = None, seed: int | None = None):
        self.step, self.index, self.seed = step, index, seed
        where = f" at step {step}"
        if index is not None:
            where += f" (trajectory {index}, seed {seed})"
        super().__init__(f"step diverged; reduce dt{where}")


@dataclass(frozen=True)
class SseConfig:
    lindblad: LindbladSet = field(default_factory=LindbladSet)
    u: CorrelationMatrix = ZERO
    dt: float = 1e-3
    t_max: float = 7.0
    seed: int = 0
    hamiltonian: np.ndarray | None = None
    emit_records: bool = False
    state_stride: int = 10
    law: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "u", validate(self.u))
        g = self.lindblad.gamma
        if not (0 < self.dt * g <= MAX_DT_GAMMA + 1e-15):
            raise ValueError(f"dt must satisfy 0 < dt <= {MAX_DT_GAMMA}/gamma")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.state_stride < 1:
            raise ValueError("state_stride must be >= 1")
        if self.law not in LAWS:
            raise ValueError(f"unknown increment law {self.law!r}")
        if self.hamiltonian is not None:
            h = np.array(self.hamiltonian, dtype=complex)
            if (h.shape != (4, 4) or not np.all(np.isfinite(h))
                    or np.max(np.abs(h - h.conj().T)) > 1e-12):
                raise ValueError("hamiltonian must be a finite Hermitian 4x4 matrix")
            h.setflags(write=False)
            object.__setattr__(self, "hamiltonian", h)

    @property
    def gamma(self) -> float:
        return self.lindblad.gamma

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "SseConfig":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    concurrences: np.ndarray
    thetas: np.ndarray  # NaN where the phase of Theta is undefined
    state_times: np.ndarray
    states: np.ndarray  # (m, 4), every ``state_stride`` steps
    seed: int
    index: int = 0
    currents: np.ndarray | None = None  # (n_steps, 2) record increments Y dt
    increments: np.ndarray | None = None  # (n_steps, 2) dxi actually used

    @property
    def final_state(self) -> StateVector:
        return make_state(self.states[-1])


# -- batched kernels ---------------------------------------------------------

def lowered(psi: np.ndarray, gamma: float):
    """(J1 psi, J2 psi) for a batch of states."""
    s = np.sqrt(gamma)
    z = np.zeros(psi.shape[0], dtype=complex)
    j1 = np.stack([psi[:, 2] * s, psi[:, 3] * s, z, z], axis=1)
    j2 = np.stack([psi[:, 1] * s, z, psi[:, 3] * s, z], axis=1)
    return j1, j2


def expect_jumps(psi: np.ndarray, gamma: float):
    """(<J1>, <J2>) for a batch of states."""
    s = np.sqrt(gamma)
    c = psi.conj()
    a1 = s * (c[:, 0] * psi[:, 2] + c[:, 1] * psi[:, 3])
    a2 = s * (c[:, 0] * psi[:, 1] + c[:, 2] * psi[:, 3])
    return a1, a2


def _apply_h(h: np.ndarray, psi: np.ndarray) -> np.ndarray:
    out = np.empty_like(psi)
    for i in range(4):
        out[:, i] = h[i, 0] * psi[:, 0] + h[i, 1] * psi[:, 1] + h[i, 2] * psi[:, 2] + h[i, 3] * psi[:, 3]
    return out


def drift_batch(psi: np.ndarray, gamma: float, hamiltonian=None) -> np.ndarray:
    j1, j2 = lowered(psi, gamma)
    a1, a2 = expect_jumps(psi, gamma)
    jdj = np.empty_like(psi)  # sum_k J_k^dag J_k = gamma diag(0, 1, 1, 2)
    jdj[:, 0] = 0
    jdj[:, 1] = gamma * psi[:, 1]
    jdj[:, 2] = gamma * psi[:, 2]
    jdj[:, 3] = 2 * gamma * psi[:, 3]
    sq = (a1.real ** 2 + a1.imag ** 2) + (a2.real ** 2 + a2.imag ** 2)
    out = -0.5 * (jdj + sq[:, None] * psi - 2 * (a1.conj()[:, None] * j1 + a2.conj()[:, None] * j2))
    if hamiltonian is not None:
        out = out - 1j * _apply_h(hamiltonian, psi)
    return out


def _norm(psi):
    p = psi.real ** 2 + psi.imag ** 2
    return np.sqrt(p[:, 0] + p[:, 1] + p[:, 2] + p[:, 3])


def step_batch(psi: np.ndarray, dxi: np.ndarray, gamma: float, dt: float,
               hamiltonian=None) -> np.ndarray:
    """One Euler-Maruyama step followed by renormalization."""
    j1, j2 = lowered(psi, gamma)
    a1, a2 = expect_jumps(psi, gamma)
    d1 = dxi[:, 0].conj()[:, None]
    d2 = dxi[:, 1].conj()[:, None]
    new = (psi + drift_batch(psi, gamma, hamiltonian) * dt
           + d1 * (j1 - a1[:, None] * psi) + d2 * (j2 - a2[:, None] * psi))
    return new / _norm(new)[:, None]


def record_drift_batch(psi: np.ndarray, u: CorrelationMatrix, gamma: float) -> np.ndarray:
    """Deterministic part of Y^T = <J^dag u + J^T>, shape (n, 2)."""
    a1, a2 = expect_jumps(psi, gamma)
    out = np.empty((psi.shape[0], 2), dtype=complex)
    out[:, 0] = a1.conj() * u.u11 + a2.conj() * u.u12 + a1
    out[:, 1] = a1.conj() * u.u12 + a2.conj() * u.u22 + a2
    return out


def concurrence_batch(psi: np.ndarray):
    """Pure-state concurrence and phase of Theta for a batch."""
    cb = 2 * (psi[:, 1] * psi[:, 2] - psi[:, 0] * psi[:, 3])
    theta_q = cb.conj() * psi[:, 3] ** 2
    c = np.abs(cb)
    th = np.angle(theta_q)
    th = np.where(th <= -np.pi, th + 2 * np.pi, th)
    th = np.where(np.abs(theta_q) < THETA_UNDEFINED, np.nan, th)
    return c, th


# -- single-state API -------------------------------------------------------

def _raw(psi) -> np.ndarray:
    return np.asarray(psi, dtype=complex).reshape(1, 4)


def drift(psi, cfg: SseConfig) -> np.ndarray:
    return drift_batch(_raw(psi), cfg.gamma, cfg.hamiltonian)[0]


def step(psi, dxi, cfg: SseConfig) -> StateVector:
    new = step_batch(_raw(psi), np.asarray(dxi, dtype=complex).reshape(1, 2), cfg.gamma,
                     cfg.dt, cfg.hamiltonian)
    if not np.all(np.isfinite(new)):
        raise StepDivergence(0)
    return StateVector(new[0])


# -- integration ------------------------------------------------------------

@dataclass
class BatchRun:
    indices: np.ndarray
    series_steps: np.ndarray
    concurrences: np.ndarray  # (len(series_steps), n)
    thetas: np.ndarray  # (len(series_steps), n)
    sampled_steps: np.ndarray
    sampled_states: np.ndarray  # (len(sampled_steps), n, 4)
    currents: np.ndarray | None = None  # (n_steps, n, 2)
    increments: np.ndarray | None = None  # (n_steps, n, 2)


def integrate_batch(psi0, cfg: SseConfig, indices, sample_steps=None, series_steps=None,
                    keep_increments: bool = False) -> BatchRun:
    """Run trajectories ``indices`` (noise substreams of ``cfg.seed``) together.

    ``sample_steps`` lists the step numbers whose states are returned; by
    default every ``cfg.state_stride``-th step plus the final one.
    ``series_steps`` selects where c and theta are recorded (default: all).
    """
    indices = np.asarray(indices, dtype=np.int64)
    n = indices.size
    n_steps = cfg.n_steps
    if sample_steps is None:
        sample_steps = np.unique(np.r_[np.arange(0, n_steps + 1, cfg.state_stride), n_steps])
    sample_steps = np.asarray(sample_steps, dtype=np.int64)
    if series_steps is None:
        series_steps = np.arange(n_steps + 1)
    series_steps = np.asarray(series_steps, dtype=np.int64)
    state_slot = {int(s): i for i, s in enumerate(sample_steps)}
    series_slot = {int(s): i for i, s in enumerate(series_steps)}

    gens = [NoiseGenerator(cfg.u, cfg.seed, int(k), law=cfg.law) for k in indices]
    psi = np.tile(np.asarray(psi0, dtype=complex), (n, 1))
    cs = np.empty((series_steps.size, n))
    ths = np.empty((series_steps.size, n))
    states = np.empty((sample_steps.size, n, 4), dtype=complex)
    currents = np.empty((n_steps, n, 2), dtype=complex) if cfg.emit_records else None
    incs = np.empty((n_steps, n, 2), dtype=complex) if keep_increments else None

    block = None
    for k in range(n_steps + 1):
        if k in series_slot:
            i = series_slot[k]
            cs[i], ths[i] = concurrence_batch(psi)
        if k in state_slot:
            states[state_slot[k]] = psi
        if k == n_steps:
            break
        off = k % NOISE_BLOCK
        if off == 0:
            m = min(NOISE_BLOCK, n_steps - k)
            block = np.stack([g.sample(cfg.dt, m) for g in gens], axis=1)
        dxi = block[off]
        if currents is not None:
            currents[k] = record_drift_batch(psi, cfg.u, cfg.gamma) * cfg.dt + dxi
        if incs is not None:
            incs[k] = dxi
        psi = step_batch(psi, dxi, cfg.gamma, cfg.dt, cfg.hamiltonian)
        if not np.all(np.isfinite(psi)):
            bad = int(np.nonzero(~np.all(np.isfinite(psi), axis=1))[0][0])
            raise StepDivergence(k, int(indices[bad]), cfg.seed)
    return BatchRun(indices, series_steps, cs, ths, sample_steps, states, currents, incs)


def run_trajectory(psi0, cfg: SseConfig, index: int = 0,
                   keep_increments: bool | None = None) -> TrajectoryRecord:
    """Single trajectory on the uniform grid ``cfg.times``.

    Trajectory ``index`` draws from noise substream ``(cfg.seed, index)``,
    so it is identical to member ``index`` of an ensemble with the same
    master seed.  Increments are kept whenever records are emitted.
    """
    if keep_increments is None:
        keep_increments = cfg.emit_records
    run = integrate_batch(make_state(psi0), cfg, [index], keep_increments=keep_increments)
    times = cfg.times
    return TrajectoryRecord(
        times=times,
        concurrences=run.concurrences[:, 0],
        thetas=run.thetas[:, 0],
        state_times=times[run.sampled_steps],
        states=run.sampled_states[:, 0, :],
        seed=cfg.seed,
        index=index,
        currents=None if run.currents is None else run.currents[:, 0, :],
        increments=None if run.increments is None else run.increments[:, 0, :],
    )
