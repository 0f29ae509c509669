"""Unconditional reference dynamics and mixed-state concurrence.

The master equation is integrated with a fixed-step RK4 scheme in units
where hbar = 1.  The Wootters lambdas are taken as singular values of V^T (sy x sy) V
with rho = V V^dag.  Their squares are the eigenvalues of
rho (sy x sy) rho* (sy x sy), and the SVD resolves the zero ones of a
nearly pure rho to rounding level rather than its square root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .states import SPIN_FLIP, DensityMatrix, LindbladSet

LAMBDA_NEG_TOL = 1e-9


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MasterEvolution:
    lindblad: LindbladSet = field(default_factory=LindbladSet)
    hamiltonian: np.ndarray | None = None
    dt: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
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


@dataclass(frozen=True)
class WoottersResult:
    lambdas: np.ndarray  # sqrt of the eigenvalues, descending
    Lambda: float
    concurrence: float


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return np.array(rho.entries)
    return np.asarray(rho, dtype=complex)


def lindblad_rhs(rho, evo: MasterEvolution) -> np.ndarray:
    r = _as_matrix(rho)
    out = np.zeros((4, 4), dtype=complex)
    if evo.hamiltonian is not None:
        h = evo.hamiltonian
        out += -1j * (h @ r - r @ h)
    for J in evo.lindblad.operators:
        Jd = J.conj().T
        JdJ = Jd @ J
        out += J @ r @ Jd - 0.5 * (JdJ @ r + r @ JdJ)
    return out


def _rk4(r: np.ndarray, h: float, evo: MasterEvolution) -> np.ndarray:
    k1 = lindblad_rhs(r, evo)
    k2 = lindblad_rhs(r + 0.5 * h * k1, evo)
    k3 = lindblad_rhs(r + 0.5 * h * k2, evo)
    k4 = lindblad_rhs(r + h * k3, evo)
    r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (r + r.conj().T)


def _propagate(r: np.ndarray, evo: MasterEvolution, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return r
    n = max(1, math.ceil(t / evo.dt - 1e-9))
    h = t / n
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            r = _rk4(r, h, evo)
            if not np.all(np.isfinite(r)):
                raise IntegrationError("integration diverged")
    return r


def evolve_master(rho0, evo: MasterEvolution, t: float) -> DensityMatrix:
    """rho(t) from ``rho0`` with steps no longer than ``evo.dt``."""
    return DensityMatrix(_propagate(_as_matrix(rho0), evo, float(t)))


def wootters_concurrence(rho) -> WoottersResult:
    r = _as_matrix(rho)
    r = 0.5 * (r + r.conj().T)
    w, v = np.linalg.eigh(r)
    if w.min() < -LAMBDA_NEG_TOL:
        raise ArithmeticError(f"negative eigenvalue {w.min():.3e} in density matrix")
    # rho = V V^dag; the lambdas are the singular values of V^T (sy x sy) V
    vv = v * np.sqrt(np.clip(w, 0.0, None))
    try:
        roots = np.linalg.svd(vv.T @ SPIN_FLIP @ vv, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"singular value computation failed: {exc}") from exc
    Lambda = float(roots[0] - roots[1:].sum())
    return WoottersResult(lambdas=roots, Lambda=Lambda, concurrence=max(0.0, Lambda))


@dataclass
class OracleSeries:
    times: np.ndarray
    Lambda: np.ndarray
    concurrence: np.ndarray
    crossings: list[float]  # refined sign changes of Lambda

    def rows(self):
        return list(zip(self.times, self.Lambda, self.concurrence))


def lambda_timeseries(rho0, evo: MasterEvolution, grid, crossing_tol: float | None = None
                      ) -> OracleSeries:
    """Lambda and c(rho) on ``grid``; sign changes refined by bisection.

    ``crossing_tol`` defaults to ``evo.dt``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    tol = evo.dt if crossing_tol is None else crossing_tol
    r = _propagate(_as_matrix(rho0), evo, float(grid[0])) if grid.size else None
    rhos, lams = [], []
    t_prev = grid[0] if grid.size else 0.0
    for t in grid:
        r = _propagate(r, evo, float(t - t_prev))
        t_prev = t
        rhos.append(r)
        lams.append(wootters_concurrence(r).Lambda)
    lams = np.array(lams)
    crossings = []
    for i in range(len(grid) - 1):
        if np.sign(lams[i]) * np.sign(lams[i + 1]) < 0:
            crossings.append(_bisect(rhos[i], float(grid[i]), float(grid[i + 1]),
                                     lams[i], evo, tol))
    return OracleSeries(grid, lams, np.maximum(lams, 0.0), crossings)


def _bisect(r_lo, t_lo, t_hi, lam_lo, evo, tol):
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        r_mid = _propagate(r_lo, evo, mid - t_lo)
        lam_mid = wootters_concurrence(r_mid).Lambda
        if np.sign(lam_mid) == np.sign(lam_lo):
            r_lo, t_lo, lam_lo = r_mid, mid, lam_mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


def trace_distance(a, b) -> float:
    d = _as_matrix(a) - _as_matrix(b)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())
