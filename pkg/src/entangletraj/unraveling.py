"""Correlation matrices u parameterizing diffusive unravelings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import StateVector

SYM_TOL = 1e-12
NORM_SLACK = 1e-12
PHASE_DEGENERACY = 1e-14


class UnravelingError(ValueError):
    pass


class OptimalPhaseUndefined(UnravelingError):
    def __init__(self, msg="optimal phase undefined"):
        super().__init__(msg)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Complex symmetric 2x2 matrix stored as (u11, u12, u22)."""

    u11: complex = 0j
    u12: complex = 0j
    u22: complex = 0j

    def __post_init__(self):
        for name in ("u11", "u12", "u22"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if self.norm2() > 1.0 + NORM_SLACK:
            raise UnravelingError(
                f"unphysical correlation (||u||_2 > 1): ||u||_2 = {self.norm2():.6g}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.u11, self.u12], [self.u12, self.u22]], dtype=complex)

    def norm2(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_reals(self) -> list[float]:
        return [self.u11.real, self.u11.imag, self.u12.real, self.u12.imag,
                self.u22.real, self.u22.imag]

    @classmethod
    def from_reals(cls, values) -> "CorrelationMatrix":
        v = [float(x) for x in values]
        if len(v) != 6:
            raise UnravelingError("custom unraveling needs 6 reals: Re/Im of u11, u12, u22")
        return cls(complex(v[0], v[1]), complex(v[2], v[3]), complex(v[4], v[5]))

    @classmethod
    def off_diagonal(cls, phase: float) -> "CorrelationMatrix":
        """u12 = -exp(i phase), zero diagonal."""
        return cls(0j, -np.exp(1j * phase), 0j)


ZERO = CorrelationMatrix()


def validate(u) -> CorrelationMatrix:
    if isinstance(u, CorrelationMatrix):
        return u
    m = np.asarray(u, dtype=complex)
    if m.shape != (2, 2):
        raise UnravelingError(f"u must be 2x2, got shape {m.shape}")
    if abs(m[0, 1] - m[1, 0]) > SYM_TOL:
        raise UnravelingError("not symmetric")
    return CorrelationMatrix(m[0, 0], 0.5 * (m[0, 1] + m[1, 0]), m[1, 1])


def cbar(psi) -> complex:
    """<Psi*| sy (x) sy |Psi> = 2 (psi01 psi10 - psi00 psi11)."""
    a = np.asarray(psi, dtype=complex)
    return complex(2.0 * (a[1] * a[2] - a[0] * a[3]))


def theta_quantity(psi) -> complex:
    """Theta = conj(cbar) psi11^2; its phase fixes the optimal unraveling."""
    a = np.asarray(psi, dtype=complex)
    return complex(np.conj(cbar(a)) * a[3] ** 2)


def _principal(phase: float) -> float:
    # map into (-pi, pi]
    return phase + 2 * math.pi if phase <= -math.pi else phase


def theta_from_state(psi) -> float:
    th = theta_quantity(psi)
    if abs(th) < PHASE_DEGENERACY:
        raise OptimalPhaseUndefined()
    return _principal(math.atan2(th.imag, th.real))


@dataclass(frozen=True)
class OptimalUnraveling:
    theta_opt: float
    u: CorrelationMatrix


def optimal_unraveling(psi0: StateVector) -> OptimalUnraveling:
    """Time-independent optimal u built from the initial state only."""
    theta = theta_from_state(psi0)
    return OptimalUnraveling(theta, CorrelationMatrix.off_diagonal(theta))
