"""Small dense quantum value types: kets, operators, density matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._constants import (
    BLOCH_TOL,
    DENSITY_HERMITIAN_TOL,
    DENSITY_POSITIVITY_SLACK,
    DENSITY_TRACE_TOL,
    HERMITIAN_TOL,
    MAX_DIM,
    NORM_TOL,
)


class DimensionError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


def _as_complex_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_dim(dim: int) -> None:
    if not 2 <= dim <= MAX_DIM:
        raise DimensionError(f"dimension {dim} outside [2, {MAX_DIM}]")


@dataclass(frozen=True, eq=False)
class StateVector:
    """A ket. ``normalized`` records whether unit norm was asserted."""

    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amps = _as_complex_array(self.amplitudes, 1)
        _check_dim(amps.shape[0])
        object.__setattr__(self, "amplitudes", amps)
        if self.normalized and abs(self.norm2 - 1.0) > NORM_TOL:
            raise NormalizationError(f"norm^2 = {self.norm2!r} is not 1")

    @classmethod
    def normalize(cls, values) -> "StateVector":
        arr = np.asarray(values, dtype=np.complex128)
        n = np.linalg.norm(arr)
        if n == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return cls(arr / n, normalized=True)

    @classmethod
    def basis(cls, dim: int, k: int) -> "StateVector":
        amps = np.zeros(dim, dtype=np.complex128)
        amps[k] = 1.0
        return cls(amps, normalized=True)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm2 - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class Operator:
    entries: np.ndarray

    def __post_init__(self):
        m = _as_complex_array(self.entries, 2)
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got {m.shape}")
        _check_dim(m.shape[0])
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dag(self) -> "Operator":
        return Operator(self.entries.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)

    def is_identity(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - np.eye(self.dim))) <= tol)

    def is_diagonal(self, tol: float = HERMITIAN_TOL) -> bool:
        off = self.entries - np.diag(np.diag(self.entries))
        return bool(np.max(np.abs(off)) <= tol)

    def scaled(self, c: complex) -> "Operator":
        return Operator(c * self.entries)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = _as_complex_array(self.entries, 2)
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got {m.shape}")
        _check_dim(m.shape[0])
        object.__setattr__(self, "entries", m)
        problem = density_violation(m)
        if problem:
            raise ValueError(problem)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))


def density_violation(m: np.ndarray) -> str | None:
    """Describe how ``m`` fails to be a density matrix, or return None."""
    herm = np.max(np.abs(m - m.conj().T))
    if herm > DENSITY_HERMITIAN_TOL:
        return f"not Hermitian (deviation {herm:.3g})"
    tr = np.trace(m)
    if abs(tr - 1.0) > DENSITY_TRACE_TOL:
        return f"trace {tr:.12g} differs from 1"
    lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
    if lo < -DENSITY_POSITIVITY_SLACK:
        return f"negative eigenvalue {lo:.3g}"
    return None


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.x**2 + self.y**2 + self.z**2 > 1 + BLOCH_TOL:
            raise ValueError("Bloch vector longer than 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


SIGMA_X = Operator([[0, 1], [1, 0]])
SIGMA_Y = Operator([[0, -1j], [1j, 0]])
SIGMA_Z = Operator([[1, 0], [0, -1]])
IDENTITY2 = Operator(np.eye(2))

# |+> and |-> are the sigma_z eigenstates with eigenvalues +1 and -1
KET_PLUS = StateVector.basis(2, 0)
KET_MINUS = StateVector.basis(2, 1)


def _same_dim(a, b) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    _same_dim(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def expectation(op: Operator, psi: StateVector) -> complex:
    _same_dim(op, psi)
    if not psi.is_normalized():
        raise NormalizationError("expectation requires a normalized state")
    amps = psi.amplitudes
    return complex(np.vdot(amps, op.entries @ amps))


def pure_density(psi: StateVector) -> DensityMatrix:
    if not psi.is_normalized():
        raise NormalizationError("pure_density requires a normalized state")
    amps = psi.amplitudes
    return DensityMatrix(np.outer(amps, amps.conj()))


def bloch(psi: StateVector) -> BlochVector:
    if psi.dim != 2:
        raise DimensionError("Bloch vectors are defined for qubits only")
    return BlochVector(
        expectation(SIGMA_X, psi).real,
        expectation(SIGMA_Y, psi).real,
        expectation(SIGMA_Z, psi).real,
    )


def spin_state(theta: float) -> StateVector:
    """cos(theta/2)|+> + sin(theta/2)|->."""
    return StateVector([np.cos(theta / 2), np.sin(theta / 2)], normalized=True)
