"""Two-qubit state algebra.

Basis ordering is fixed as (|00>, |01>, |10>, |11>) with the left index
belonging to qubit 1.  Every other module relies on this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-10

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |1> is the excited level, so sigma_minus maps |1> -> |0>
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
EXCITED = np.array([[0, 0], [0, 1]], dtype=complex)

SPIN_FLIP = np.kron(PAULI_Y, PAULI_Y)


class DegenerateStateError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def local(op1: np.ndarray | None = None, op2: np.ndarray | None = None) -> np.ndarray:
    """Tensor product ``op1 (x) op2``; a missing factor is the identity."""
    a = IDENTITY2 if op1 is None else np.asarray(op1, dtype=complex)
    b = IDENTITY2 if op2 is None else np.asarray(op2, dtype=complex)
    return np.kron(a, b)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state of the two qubits.

    Use :func:`make_state` to build one from arbitrary amplitudes.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    def __array__(self, dtype=None, copy=None):
        out = np.array(self.amplitudes)
        return out if dtype is None else out.astype(dtype)

    def __iter__(self):
        return iter(self.amplitudes)

    @property
    def psi00(self) -> complex:
        return complex(self.amplitudes[0])

    @property
    def psi01(self) -> complex:
        return complex(self.amplitudes[1])

    @property
    def psi10(self) -> complex:
        return complex(self.amplitudes[2])

    @property
    def psi11(self) -> complex:
        return complex(self.amplitudes[3])

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def to_reals(self) -> list[float]:
        """Interleaved (Re, Im) pairs, the on-disk layout."""
        return [float(v) for a in self.amplitudes for v in (a.real, a.imag)]


def make_state(amplitudes) -> StateVector:
    """Normalize ``amplitudes`` into a :class:`StateVector`."""
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if amps.shape != (4,):
        raise ValueError(f"expected 4 amplitudes, got {amps.size}")
    if not np.all(np.isfinite(amps)):
        raise ValueError("amplitudes must be finite")
    norm = np.sqrt(np.sum(np.abs(amps) ** 2))
    if norm == 0.0:
        raise DegenerateStateError("degenerate state")
    if abs(norm - 1.0) <= 4 * np.finfo(float).eps:
        return StateVector(amps)  # idempotent on normalized input
    return StateVector(amps / norm)


def state_from_reals(values) -> StateVector:
    """Build a state from 8 reals ``Re0, Im0, ..., Re3, Im3``."""
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.size != 8:
        raise ValueError(f"expected 8 reals, got {vals.size}")
    return make_state(vals[0::2] + 1j * vals[1::2])


def apply_operator(op, psi) -> np.ndarray:
    """Plain matrix-vector product, no renormalization."""
    return np.asarray(op, dtype=complex) @ np.asarray(psi, dtype=complex)


def expectation(op, psi) -> complex:
    v = np.asarray(psi, dtype=complex)
    return complex(np.vdot(v, np.asarray(op, dtype=complex) @ v))


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        out = np.array(self.entries)
        return out if dtype is None else out.astype(dtype)

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex)
        return cls(np.outer(v, v.conj()))

    def check(self, tol: float = NORM_TOL) -> "DensityMatrix":
        """Raise ``ValueError`` unless Hermitian, unit trace and PSD within ``tol``."""
        m = self.entries
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > tol:
            raise ValueError("density matrix trace differs from 1")
        if np.min(np.linalg.eigvalsh((m + m.conj().T) / 2)) < -tol:
            raise ValueError("density matrix has negative eigenvalues")
        return self


@dataclass(frozen=True)
class LindbladSet:
    """Spontaneous emission of both qubits at a common rate ``gamma``.

    The operators are J1 = sqrt(gamma) sigma_- (x) 1 and
    J2 = sqrt(gamma) 1 (x) sigma_-.
    """

    gamma: float = 1.0
    operators: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError("gamma must be a positive finite rate")
        s = np.sqrt(self.gamma)
        ops = (_frozen(s * local(SIGMA_MINUS, None)), _frozen(s * local(None, SIGMA_MINUS)))
        object.__setattr__(self, "operators", ops)

    def __len__(self):
        return 2


def _preset(*amps) -> StateVector:
    return make_state(np.array(amps, dtype=complex) / np.sqrt(8))


_S5 = np.sqrt(5.0)

PRESETS: dict[str, StateVector] = {
    # dashed line: (i sqrt5 |00> - |01> + i |10> + |11>) / sqrt8
    "fig1-dashed": _preset(1j * _S5, -1, 1j, 1),
    # solid line: (|00> - |01> + i |10> + i sqrt5 |11>) / sqrt8
    "fig1-solid": _preset(1, -1, 1j, 1j * _S5),
    "bell": make_state([0, 1, 1, 0]),
}


def parse_state(spec: str) -> StateVector:
    """Resolve a preset name or a comma separated list of 8 reals."""
    key = spec.strip().lower()
    if key in PRESETS:
        return PRESETS[key]
    parts = [p for p in spec.replace(" ", "").split(",") if p]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValueError(
            f"unknown state {spec!r}: use one of {sorted(PRESETS)} or 8 comma separated reals"
        ) from None
    return state_from_reals(vals)
