"""Deterministic density-matrix evolution and the exact dephasing solution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._constants import HERMITIAN_TOL, STEP_SLACK
from .core import (
    SIGMA_Z,
    DensityMatrix,
    DimensionError,
    Operator,
    StateVector,
    density_violation,
    pure_density,
    spin_state,
)


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


def n_steps(t_final: float, dt: float) -> int:
    """Number of steps of size ``dt`` covering ``[0, t_final]``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    ratio = t_final / dt
    n = int(round(ratio))
    if abs(ratio - n) > STEP_SLACK * max(1.0, ratio):
        raise ValueError(f"t_final={t_final} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True, eq=False)
class LindbladModel:
    hamiltonian: Operator
    lindblad_ops: tuple[Operator, ...]
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lindblad_ops", tuple(self.lindblad_ops))
        if not self.hamiltonian.is_hermitian(HERMITIAN_TOL):
            raise ValueError("Hamiltonian is not Hermitian")
        for L in self.lindblad_ops:
            if L.dim != self.hamiltonian.dim:
                raise DimensionError("Lindblad operator dimension differs from H")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def n_channels(self) -> int:
        return len(self.lindblad_ops)

    def gauged(self, phases: Sequence[float]) -> "LindbladModel":
        """Model with every L_n replaced by exp(i phi_n) L_n."""
        phases = list(phases)
        if len(phases) != self.n_channels:
            raise ValueError("one gauge angle per Lindblad operator is required")
        ops = tuple(L.scaled(np.exp(1j * p)) for L, p in zip(self.lindblad_ops, phases))
        return LindbladModel(self.hamiltonian, ops, self.lam)


@dataclass(frozen=True)
class DephasingSpinModel:
    """Spin in a z field with sigma_z dephasing: H = -mu_b sigma_z, L = sigma_z."""

    mu_b: float = 1.0
    lam: float = 0.5
    theta: float = np.pi / 3

    def __post_init__(self):
        if not 0 <= self.theta <= np.pi:
            raise ValueError("theta must lie in [0, pi]")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")

    def lindblad(self) -> LindbladModel:
        return LindbladModel(SIGMA_Z.scaled(-self.mu_b), (SIGMA_Z,), self.lam)

    def initial_state(self) -> StateVector:
        return spin_state(self.theta)


def lindblad_rhs(model: LindbladModel, rho) -> np.ndarray:
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if m.shape != (model.dim, model.dim):
        raise DimensionError(f"rho has shape {m.shape}, model dim is {model.dim}")
    return _rhs(model.hamiltonian.entries, [L.entries for L in model.lindblad_ops], model.lam, m)


def _rhs(H, Ls, lam, m):
    out = -1j * (H @ m - m @ H)
    for L in Ls:
        LdL = L.conj().T @ L
        out -= 0.5 * lam**2 * (LdL @ m + m @ LdL - 2 * L @ m @ L.conj().T)
    return out


@dataclass(frozen=True, eq=False)
class MasterPath:
    times: np.ndarray
    rhos: np.ndarray  # (n_times, dim, dim)

    def __len__(self):
        return len(self.times)

    def density(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.rhos[k])


def integrate_master(model: LindbladModel, rho0: DensityMatrix, t_final: float, dt: float,
                     stride: int = 1) -> MasterPath:
    """Classical RK4 on the density matrix, recording every ``stride`` steps."""
    if rho0.dim != model.dim:
        raise DimensionError("rho0 dimension differs from model")
    steps = n_steps(t_final, dt)
    H = model.hamiltonian.entries
    Ls = [L.entries for L in model.lindblad_ops]
    lam = model.lam
    m = rho0.entries.copy()
    times, rhos = [0.0], [m.copy()]
    for k in range(1, steps + 1):
        k1 = _rhs(H, Ls, lam, m)
        k2 = _rhs(H, Ls, lam, m + 0.5 * dt * k1)
        k3 = _rhs(H, Ls, lam, m + 0.5 * dt * k2)
        k4 = _rhs(H, Ls, lam, m + dt * k3)
        m = m + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        problem = density_violation(m)
        if problem:
            raise IntegrationError(problem, step=k)
        if k % stride == 0 or k == steps:
            times.append(k * dt)
            rhos.append(m.copy())
    return MasterPath(np.array(times), np.array(rhos))


def dephasing_exact(model: DephasingSpinModel, t: float) -> DensityMatrix:
    if t < 0:
        raise ValueError("t must be non-negative")
    return DensityMatrix(dephasing_exact_array(model, np.array([t]))[0])


def dephasing_exact_array(model: DephasingSpinModel, times) -> np.ndarray:
    """Closed-form rho(t) for every entry of ``times``; shape (n, 2, 2)."""
    times = np.asarray(times, dtype=float)
    c2 = np.cos(model.theta / 2) ** 2
    rho01 = 0.5 * np.sin(model.theta) * np.exp((2j * model.mu_b - 2 * model.lam**2) * times)
    out = np.empty(times.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c2
    out[..., 1, 1] = 1 - c2
    out[..., 0, 1] = rho01
    out[..., 1, 0] = rho01.conj()
    return out


def initial_density(model: DephasingSpinModel) -> DensityMatrix:
    return pure_density(model.initial_state())
