"""Measurement records of the optimal unraveling and their replay.

For the optimal u the complex record is

    Y1 dt = sqrt(g) <-e^{i th} s+^(2) + s-^(1)> dt + dxi1
    Y2 dt = sqrt(g) <-e^{i th} s+^(1) + s-^(2)> dt + dxi2

and the two homodyne detectors behind the phase shifter and 50-50 beam
splitter deliver the real currents

    I1 dt = sqrt(g/2) <-e^{i th} s+^(2) + s+^(1) + h.c.> dt + dzeta1
    I2 dt = -i sqrt(g/2) <e^{i th} s+^(2) + s+^(1) - h.c.> dt + dzeta2

related to Y by Y1 = (I1 - i I2)/sqrt2 and Y2 = -e^{i th} (I1 + i I2)/sqrt2.
The optics are represented only through this composite map.  Records
store increments (Y dt, I dt), never rates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .entanglement import wrap
from .sse import (
    SseConfig, StepDivergence, TrajectoryRecord, concurrence_batch, integrate_batch,
    record_drift_batch, step_batch,
)
from .states import SIGMA_MINUS, SIGMA_PLUS, StateVector, expectation, local, make_state, state_from_reals
from .unraveling import CorrelationMatrix

SQ2 = math.sqrt(2.0)
_SM1 = local(SIGMA_MINUS, None)
_SM2 = local(None, SIGMA_MINUS)
_SP1 = local(SIGMA_PLUS, None)
_SP2 = local(None, SIGMA_PLUS)


class RecordMismatch(ValueError):
    def __init__(self, detail: str = ""):
        super().__init__("record/config mismatch" + (f": {detail}" if detail else ""))


@dataclass
class CurrentRecord:
    times: np.ndarray  # start of each step
    Y: np.ndarray  # (n, 2) complex, Y dt
    I: np.ndarray  # (n, 2) real, I dt
    theta_opt: float
    gamma: float
    dt: float
    seed: int = 0
    psi0: StateVector | None = None

    def __len__(self):
        return self.Y.shape[0]


def optimal_record_step(psi, dxi, theta_opt: float, gamma: float, dt: float) -> np.ndarray:
    """(Y1 dt, Y2 dt) from the explicit optimal-record form."""
    e = np.exp(1j * theta_opt)
    s = math.sqrt(gamma)
    d = np.asarray(dxi, dtype=complex)
    y1 = s * expectation(-e * _SP2 + _SM1, psi) * dt + d[0]
    y2 = s * expectation(-e * _SP1 + _SM2, psi) * dt + d[1]
    return np.array([y1, y2])


def generic_record_step(psi, dxi, u: CorrelationMatrix, gamma: float, dt: float) -> np.ndarray:
    """Y^T dt = <J^dag u + J^T> dt + dxi^T for any u."""
    det = record_drift_batch(np.asarray(psi, dtype=complex).reshape(1, 4), u, gamma)[0]
    return det * dt + np.asarray(dxi, dtype=complex)


def _homodyne_det(psi, theta_opt: float, gamma: float) -> np.ndarray:
    e = np.exp(1j * theta_opt)
    k = math.sqrt(gamma / 2)
    a = -e * _SP2 + _SP1
    b = e * _SP2 + _SP1
    i1 = k * expectation(a + a.conj().T, psi)
    i2 = -1j * k * expectation(b - b.conj().T, psi)
    return np.array([i1.real, i2.real])


def homodyne_currents(psi, dzeta, theta_opt: float, gamma: float, dt: float) -> np.ndarray:
    """(I1 dt, I2 dt) for real shot-noise increments ``dzeta``."""
    return _homodyne_det(psi, theta_opt, gamma) * dt + np.asarray(dzeta, dtype=float)


def reconstruct_Y(I, theta_opt: float) -> np.ndarray:
    """Complex record from the two real photocurrents (pointwise)."""
    I = np.asarray(I, dtype=float)
    out = np.empty(I.shape, dtype=complex)
    out[..., 0] = (I[..., 0] - 1j * I[..., 1]) / SQ2
    out[..., 1] = -np.exp(1j * theta_opt) * (I[..., 0] + 1j * I[..., 1]) / SQ2
    return out


def shot_noise_from_increments(dxi) -> np.ndarray:
    """Detector noise (dzeta1, dzeta2) carrying dxi1 = (dzeta1 - i dzeta2)/sqrt2."""
    d = np.asarray(dxi, dtype=complex)
    return np.stack([SQ2 * d[..., 0].real, -SQ2 * d[..., 0].imag], axis=-1)


def optimal_theta(u: CorrelationMatrix) -> float:
    """theta of u12 = -exp(i theta); rejects u that is not of the optimal form."""
    if abs(u.u11) > 1e-12 or abs(u.u22) > 1e-12 or abs(abs(u.u12) - 1) > 1e-12:
        raise ValueError("records need an optimal-form unraveling (zero diagonal, |u12| = 1)")
    return float(np.angle(-u.u12))


def record_trajectory(psi0, cfg: SseConfig, index: int = 0):
    """Simulate one optimal-u trajectory with its detector record.

    Returns ``(TrajectoryRecord, CurrentRecord)``.
    """
    psi0 = make_state(psi0)
    theta = optimal_theta(cfg.u)
    cfg = cfg.replace(emit_records=True)
    steps = np.arange(cfg.n_steps + 1)
    run = integrate_batch(psi0, cfg, [index], sample_steps=steps, keep_increments=True)
    states = run.sampled_states[:, 0, :]
    incs = run.increments[:, 0, :]
    dzeta = shot_noise_from_increments(incs)
    I = np.array([homodyne_currents(states[k], dzeta[k], theta, cfg.gamma, cfg.dt)
                  for k in range(cfg.n_steps)]).reshape(-1, 2)
    times = cfg.times
    traj = TrajectoryRecord(times, run.concurrences[:, 0], run.thetas[:, 0], times, states,
                            cfg.seed, index, run.currents[:, 0, :], incs)
    rec = CurrentRecord(times[:-1], run.currents[:, 0, :], I, theta, cfg.gamma, cfg.dt,
                        cfg.seed, psi0)
    return traj, rec


def check_compatible(record: CurrentRecord, cfg: SseConfig) -> None:
    if abs(record.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise RecordMismatch(f"dt {record.dt!r} vs {cfg.dt!r}")
    if abs(record.gamma - cfg.gamma) > 1e-12 * cfg.gamma:
        raise RecordMismatch(f"gamma {record.gamma!r} vs {cfg.gamma!r}")
    try:
        theta = optimal_theta(cfg.u)
    except ValueError as exc:
        raise RecordMismatch(str(exc)) from None
    if abs(float(wrap(theta - record.theta_opt))) > 1e-12:
        raise RecordMismatch(f"theta_opt {record.theta_opt!r} vs {theta!r}")
    times = np.arange(len(record)) * cfg.dt
    if len(record) and np.max(np.abs(record.times - times)) > 1e-9 * max(1.0, times[-1]):
        raise RecordMismatch("time grid differs from a uniform grid of step dt")


def replay_from_record(psi0, record: CurrentRecord, cfg: SseConfig,
                       source: str = "Y") -> TrajectoryRecord:
    """Drive the conditional state with a measured record.

    Each step recovers dxi^T = Y^T dt - <J^dag u + J^T> dt from the replayed
    state.  ``source="I"`` first rebuilds Y from the real photocurrents.
    The trajectory covers the record's length, whatever ``cfg.t_max`` says.
    """
    check_compatible(record, cfg)
    if source == "Y":
        Y = np.asarray(record.Y, dtype=complex)
    elif source == "I":
        Y = reconstruct_Y(record.I, record.theta_opt)
    else:
        raise ValueError("source must be 'Y' or 'I'")
    n = Y.shape[0]
    psi = np.asarray(make_state(psi0), dtype=complex).reshape(1, 4)
    stride = cfg.state_stride
    cs = np.empty(n + 1)
    ths = np.empty(n + 1)
    incs = np.empty((n, 2), dtype=complex)
    keep = list(range(0, n + 1, stride))
    if keep[-1] != n:
        keep.append(n)
    keep_set = set(keep)
    states = []
    for k in range(n + 1):
        c, th = concurrence_batch(psi)
        cs[k], ths[k] = c[0], th[0]
        if k in keep_set:
            states.append(psi[0].copy())
        if k == n:
            break
        dxi = Y[k] - record_drift_batch(psi, cfg.u, cfg.gamma)[0] * cfg.dt
        incs[k] = dxi
        psi = step_batch(psi, dxi.reshape(1, 2), cfg.gamma, cfg.dt, cfg.hamiltonian)
        if not np.all(np.isfinite(psi)):
            raise StepDivergence(k)
    times = np.arange(n + 1) * cfg.dt
    return TrajectoryRecord(times, cs, ths, times[keep], np.array(states), record.seed, 0,
                            Y.copy(), incs)


# -- CSV ---------------------------------------------------------------------

RECORD_COLUMNS = ["t", "re_Y1dt", "im_Y1dt", "re_Y2dt", "im_Y2dt", "I1dt", "I2dt"]


def _g(x: float) -> str:
    return format(float(x), ".17g")


def write_record_csv(path, record: CurrentRecord, manifest: dict | None = None) -> None:
    lines = []
    if manifest:
        lines.append("# manifest: " + json.dumps(manifest, sort_keys=True))
    lines += [
        f"# gamma: {_g(record.gamma)}",
        f"# dt: {_g(record.dt)}",
        f"# theta_opt: {_g(record.theta_opt)}",
        f"# seed: {record.seed}",
    ]
    if record.psi0 is not None:
        lines.append("# psi0: " + ",".join(_g(v) for v in record.psi0.to_reals()))
    lines.append(",".join(RECORD_COLUMNS))
    for t, y, i in zip(record.times, record.Y, record.I):
        vals = (t, y[0].real, y[0].imag, y[1].real, y[1].imag, i[0], i[1])
        lines.append(",".join(_g(v) for v in vals))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_record_csv(path) -> CurrentRecord:
    header = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                header[key.strip()] = val.strip()
            elif line.startswith("t,"):
                if line.split(",") != RECORD_COLUMNS:
                    raise ValueError(f"unexpected record columns: {line}")
            else:
                rows.append([float(v) for v in line.split(",")])
    for key in ("gamma", "dt", "theta_opt"):
        if key not in header:
            raise ValueError(f"record header lacks {key!r}")
    a = np.array(rows, dtype=float).reshape(-1, 7)
    psi0 = state_from_reals(header["psi0"].split(",")) if "psi0" in header else None
    return CurrentRecord(
        times=a[:, 0],
        Y=np.stack([a[:, 1] + 1j * a[:, 2], a[:, 3] + 1j * a[:, 4]], axis=1),
        I=a[:, 5:7].copy(),
        theta_opt=float(header["theta_opt"]),
        gamma=float(header["gamma"]),
        dt=float(header["dt"]),
        seed=int(header.get("seed", 0)),
        psi0=psi0,
    )
