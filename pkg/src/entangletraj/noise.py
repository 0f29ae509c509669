"""Correlated complex Wiener increments.

Splitting dxi = x + i y, the pair correlations dxi dxi^dag = 1 dt and
dxi dxi^T = u dt fix the covariance of the real vector
(Re dxi1, Re dxi2, Im dxi1, Im dxi2) per unit time to

    Sigma(u) = 1/2 [[1 + Re u, Im u], [Im u, 1 - Re u]].

Two increment laws share that covariance:

``gaussian``
    L z sqrt(dt) with z four standard normals.
``spherical``
    L z sqrt(dt) with z uniform on the sphere of radius sqrt(rank) in the
    range of Sigma.  Same first and second moments, so the Euler scheme
    keeps weak order one, but products such as |dxi_1|^2 equal their Ito
    values exactly for rank-deficient u.  For the optimal unraveling this
    removes the per-step fluctuation that otherwise smears out the common
    zero crossing of the concurrence.

Every trajectory owns a stream derived from ``(seed, index)``.
"""

from __future__ import annotations

import numpy as np

from .unraveling import CorrelationMatrix, validate

PIVOT_MIN = 1e-13
PSD_TOL = 1e-12
LAWS = ("gaussian", "spherical")


class InvalidCorrelation(ValueError):
    def __init__(self, msg="invalid correlation"):
        super().__init__(msg)


def real_covariance(u) -> np.ndarray:
    m = validate(u).matrix
    eye = np.eye(2)
    return 0.5 * np.block([[eye + m.real, m.imag], [m.imag, eye - m.real]])


def psd_factor(sigma: np.ndarray) -> tuple[np.ndarray, int]:
    """Return ``(L, rank)`` with ``L @ L.T == sigma``.

    Cholesky when every pivot exceeds ``PIVOT_MIN``, otherwise an
    eigendecomposition whose null directions are moved to the trailing
    columns of ``L`` (set to zero).
    """
    try:
        L = np.linalg.cholesky(sigma)
        if np.min(np.diag(L)) ** 2 >= PIVOT_MIN:
            return L, sigma.shape[0]
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(sigma)
    if w.min() < -PSD_TOL:
        raise InvalidCorrelation()
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    keep = w > PIVOT_MIN
    L = np.zeros_like(sigma)
    L[:, : keep.sum()] = v[:, keep] * np.sqrt(w[keep])
    return L, int(keep.sum())


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for trajectory ``index`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


class NoiseGenerator:
    """Stateful increment source for one trajectory."""

    def __init__(self, u: CorrelationMatrix, seed: int, index: int = 0, law: str = "gaussian"):
        if law not in LAWS:
            raise ValueError(f"unknown increment law {law!r}; expected one of {LAWS}")
        self.u = validate(u)
        self.seed = int(seed)
        self.index = int(index)
        self.law = law
        self.covariance = real_covariance(self.u)
        self.factor, self.rank = psd_factor(self.covariance)
        self._rng = substream(self.seed, self.index)

    def sample(self, dt: float, n_steps: int) -> np.ndarray:
        """``(n_steps, 2)`` complex array of (dxi1, dxi2)."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        z = self._rng.standard_normal((int(n_steps), 4))
        if self.law == "spherical" and self.rank > 0:
            r = self.rank
            zr = z[:, :r]
            scale = np.sqrt(r) / np.sqrt(sum(zr[:, j] ** 2 for j in range(r)))
            z = np.zeros_like(z)
            z[:, :r] = zr * scale[:, None]
        L = self.factor
        # explicit sums keep every row bitwise independent of the block size
        x = [sum(L[i, j] * z[:, j] for j in range(4)) for i in range(4)]
        s = np.sqrt(dt)
        out = np.empty((z.shape[0], 2), dtype=complex)
        out[:, 0] = (x[0] + 1j * x[2]) * s
        out[:, 1] = (x[1] + 1j * x[3]) * s
        return out


def build_generator(u, seed: int, index: int = 0, law: str = "gaussian") -> NoiseGenerator:
    return NoiseGenerator(validate(u), seed, index=index, law=law)


def sample_increments(gen: NoiseGenerator, dt: float, n_steps: int) -> np.ndarray:
    return gen.sample(dt, n_steps)
