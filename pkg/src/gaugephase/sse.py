"""Euler-Maruyama integration of the nonlinear and linear stochastic
Schroedinger equations under a gauge L_n -> exp(i phi_n) L_n.

All kernels work on batches: kets are ``(B, dim)`` arrays and Wiener
increments ``(B, steps, N)``. Operator application is written as explicit
column sums so each row's arithmetic does not depend on the batch size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._constants import DEGENERATE_NORM, TRAJECTORY_NORM_TOL
from .core import SIGMA_Z, DimensionError, NormalizationError, StateVector
from .lindblad import LindbladModel, n_steps

NONLINEAR = "nonlinear_P"
LINEAR = "linear_Q"
EQUATIONS = (NONLINEAR, LINEAR)


class DegenerateStateError(ArithmeticError):
    def __init__(self, message: str, rows=None):
        super().__init__(message)
        self.rows = None if rows is None else [int(r) for r in rows]


def reduce_angle(a):
    """Map angles into (-pi, pi]."""
    r = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    r = np.where(r == -np.pi, np.pi, r)
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class UnravellingGauge:
    phases: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(reduce_angle(p) for p in np.atleast_1d(self.phases)))

    @classmethod
    def uniform(cls, phi: float, n_channels: int = 1) -> "UnravellingGauge":
        return cls((phi,) * n_channels)

    @property
    def factors(self) -> np.ndarray:
        return np.exp(1j * np.array(self.phases))


@dataclass(frozen=True)
class SdeConfig:
    dt: float = 1e-3
    t_final: float = 2.0
    scheme: str = "euler_maruyama"
    renormalize_each_step: bool = True
    record_stride: int = 1
    # Wiener increments are built from this many sub-increments, so runs at
    # dt and dt/k with refinement k share one Brownian path
    noise_refinement: int = 1

    def __post_init__(self):
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.record_stride < 1 or self.noise_refinement < 1:
            raise ValueError("record_stride and noise_refinement must be >= 1")
        n_steps(self.t_final, self.dt)

    @property
    def steps(self) -> int:
        return n_steps(self.t_final, self.dt)

    def record_indices(self) -> np.ndarray:
        idx = np.arange(0, self.steps + 1, self.record_stride)
        if idx[-1] != self.steps:
            idx = np.append(idx, self.steps)
        return idx

    def record_times(self) -> np.ndarray:
        return self.record_indices() * self.dt


@dataclass(frozen=True, eq=False)
class NoisePath:
    increments: np.ndarray  # (N, steps)
    dt: float
    measure_tag: str = "P"

    def __post_init__(self):
        if self.measure_tag not in ("P", "Q"):
            raise ValueError("measure_tag must be 'P' or 'Q'")
        inc = np.atleast_2d(np.asarray(self.increments, dtype=float))
        object.__setattr__(self, "increments", inc)

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    def path(self) -> np.ndarray:
        """Cumulative Wiener path, starting at 0; shape (N, steps + 1)."""
        n = self.increments.shape[0]
        return np.concatenate([np.zeros((n, 1)), np.cumsum(self.increments, axis=1)], axis=1)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray  # (n_rec, dim)
    noise: NoisePath
    sz_path: np.ndarray
    weight_path: np.ndarray
    dyn_phase_path: np.ndarray
    equation: str = NONLINEAR
    driving_noise: NoisePath | None = field(default=None)

    def state(self, k: int = -1) -> StateVector:
        return StateVector(self.states[k])


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream keyed by (master_seed, trajectory index)."""
    key = (int(master_seed) % 2**64) << 64 | (int(index) % 2**64)
    return np.random.Generator(np.random.Philox(key=key))


def wiener_increments(master_seed: int, index: int, steps: int, n_channels: int, dt: float,
                      refinement: int = 1) -> np.ndarray:
    """Increments of shape (steps, n_channels) with variance ``dt`` each."""
    rng = trajectory_rng(master_seed, index)
    fine = rng.standard_normal((steps * refinement, n_channels)) * np.sqrt(dt / refinement)
    if refinement == 1:
        return fine
    return fine.reshape(steps, refinement, n_channels).sum(axis=1)


def _apply(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    """M @ x for column-stacked kets ``x`` of shape (d, B)."""
    out = M[:, 0:1] * x[0]
    for j in range(1, M.shape[1]):
        out = out + M[:, j:j + 1] * x[j]
    return out


def _vdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise <a|b> for (d, B) arrays."""
    return (a.conj() * b).sum(axis=0)


class _Kernel:
    """Gauged operators of one model, prepared for batch stepping.

    Kets are stored column-wise, shape (d, B).
    """

    def __init__(self, model: LindbladModel, gauge: UnravellingGauge):
        if len(gauge.phases) != model.n_channels:
            raise ValueError(
                f"gauge has {len(gauge.phases)} angles, model has {model.n_channels} channels")
        self.dim = model.dim
        self.lam = model.lam
        self.H = model.hamiltonian.entries
        self.Ls = [f * L.entries for f, L in zip(gauge.factors, model.lindblad_ops)]
        LdL_sum = sum(L.conj().T @ L for L in self.Ls)
        self.linear_drift = -1j * self.H - 0.5 * self.lam**2 * LdL_sum
        self.lamLs = [self.lam * L for L in self.Ls]

    def nonlinear(self, psi: np.ndarray):
        """Drift, diffusions [(d, B)] and r_n [(B,)] at normalized ``psi``."""
        lam2 = self.lam**2
        drift = _apply(self.linear_drift, psi)
        diffusions, rs = [], []
        for L in self.Ls:
            Lpsi = _apply(L, psi)
            r = _vdot(psi, Lpsi).real
            drift = drift + lam2 * r * Lpsi - (0.5 * lam2) * (r * r) * psi
            diffusions.append(self.lam * (Lpsi - r * psi))
            rs.append(r)
        return drift, diffusions, rs

    def r_values(self, psi: np.ndarray) -> list[np.ndarray]:
        return [_vdot(psi, _apply(L, psi)).real for L in self.Ls]

    def advance_nonlinear(self, psi, dW, dt, renormalize=True):
        """One Euler-Maruyama step; returns (new state, Ito increment of Im<psi|dpsi>).

        ``dW`` has shape (N, B).
        """
        drift, diffusions, _ = self.nonlinear(psi)
        dpsi = drift * dt
        for n, d in enumerate(diffusions):
            dpsi = dpsi + d * dW[n]
        dyn = _vdot(psi, dpsi).imag
        new = psi + dpsi
        norm = np.sqrt(_vdot(new, new).real)
        bad = ~(norm >= DEGENERATE_NORM)
        if np.any(bad):
            raise DegenerateStateError("state norm collapsed during a nonlinear step",
                                       np.flatnonzero(bad))
        if renormalize:
            new = new / norm
        return new, dyn

    def step_linear(self, phi, dxi, dt):
        new = phi + _apply(self.linear_drift, phi) * dt
        for n, lamL in enumerate(self.lamLs):
            new = new + _apply(lamL, phi) * dxi[n]
        return new


def _check_state(model, psi: StateVector, need_norm: bool):
    if psi.dim != model.dim:
        raise DimensionError(f"state dim {psi.dim} differs from model dim {model.dim}")
    if need_norm and not psi.is_normalized():
        raise NormalizationError("state must be normalized")


def nonlinear_drift_diffusion(model: LindbladModel, gauge: UnravellingGauge, psi: StateVector):
    """Drift and per-channel diffusion vectors of the norm-preserving equation."""
    _check_state(model, psi, True)
    drift, diffusions, _ = _Kernel(model, gauge).nonlinear(psi.amplitudes[:, None])
    return drift[:, 0], [d[:, 0] for d in diffusions]


def step_nonlinear(model, gauge, psi: StateVector, dW: Sequence[float], dt: float,
                   renormalize: bool = True) -> StateVector:
    _check_state(model, psi, True)
    dW = np.asarray(dW, dtype=float).reshape(-1, 1)
    if not np.all(np.isfinite(dW)):
        raise ValueError("non-finite Wiener increment")
    new = _Kernel(model, gauge).advance_nonlinear(psi.amplitudes[:, None], dW, dt, renormalize)[0][:, 0]
    return StateVector(new, normalized=renormalize)


def step_linear(model, gauge, phi: StateVector, dxi: Sequence[float], dt: float) -> StateVector:
    _check_state(model, phi, False)
    dxi = np.asarray(dxi, dtype=float).reshape(-1, 1)
    if not np.all(np.isfinite(dxi)):
        raise ValueError("non-finite Wiener increment")
    return StateVector(_Kernel(model, gauge).step_linear(phi.amplitudes[:, None], dxi, dt)[:, 0])


@dataclass(frozen=True, eq=False)
class BatchPaths:
    """Recorded paths of a batch of trajectories driven by ``noise``."""

    times: np.ndarray  # (n_rec,)
    states: np.ndarray | None  # (B, n_rec, d); normalized for nonlinear, raw for linear
    weights: np.ndarray  # (B, n_rec); <phi|phi> for linear, ones for nonlinear
    sz: np.ndarray  # (B, n_rec); <sigma_z> of the normalized state, NaN if dim != 2
    dyn_phase: np.ndarray  # (B, n_rec)
    sz2_integral: np.ndarray  # (B,) left-point integral of <sigma_z>^2
    sz_excursion: np.ndarray  # (B,) max over steps of |<sigma_z>_t - <sigma_z>_0|
    final_states: np.ndarray  # (B, d) normalized
    final_weights: np.ndarray  # (B,)
    final_dyn: np.ndarray  # (B,)
    driving: np.ndarray | None  # (B, steps, N) noise the nonlinear dynamics effectively saw


def simulate_batch(model: LindbladModel, gauge: UnravellingGauge, psi0: np.ndarray,
                   noise: np.ndarray, config: SdeConfig, equation: str = NONLINEAR,
                   keep_states: bool = True, on_record=None) -> BatchPaths:
    """Integrate B trajectories from the rows of ``psi0`` with increments ``noise``.

    For the nonlinear equation ``noise`` is dW under P; for the linear one it
    is dxi under Q, and the nonlinear-equivalent dW = dxi - 2 lam r dt is
    reconstructed along the normalized path for the dynamical phase.
    ``on_record(k, psi, weight, sz)`` is called at each record with the
    normalized kets as columns of ``psi`` (shape (d, B)); ``weight`` is None
    for the nonlinear equation.
    """
    if equation not in EQUATIONS:
        raise ValueError(f"unknown equation {equation!r}")
    kern = _Kernel(model, gauge)
    psi0 = np.atleast_2d(np.asarray(psi0, dtype=np.complex128))
    B, d = psi0.shape
    if d != model.dim:
        raise DimensionError("initial states do not match model dimension")
    steps = config.steps
    N = model.n_channels
    # (steps, N, B) so each step's increments are contiguous
    noise = np.ascontiguousarray(np.asarray(noise, dtype=float).reshape(B, steps, N).transpose(1, 2, 0))
    dt = config.dt
    rec_idx = config.record_indices()
    n_rec = len(rec_idx)
    is_rec = np.zeros(steps + 1, dtype=bool)
    is_rec[rec_idx] = True
    qubit = d == 2
    linear = equation == LINEAR
    renorm = config.renormalize_each_step

    if keep_states:
        states = np.empty((B, n_rec, d), dtype=np.complex128)
        weights = np.ones((B, n_rec))
        sz_rec = np.full((B, n_rec), np.nan)
        dyn_rec = np.zeros((B, n_rec))
        driving = np.empty_like(noise) if linear else noise
    else:
        states = weights = sz_rec = dyn_rec = driving = None

    x = np.ascontiguousarray(psi0.T)
    dyn = np.zeros(B)
    sz2_int = np.zeros(B)
    sz_exc = np.zeros(B)
    sz0 = None
    w = None
    r = 0
    for k in range(steps + 1):
        w = None
        if linear:
            w = _vdot(x, x).real
            bad = ~(w >= DEGENERATE_NORM**2)
            if np.any(bad):
                raise DegenerateStateError("linear solution norm vanished", np.flatnonzero(bad))
            psi = x / np.sqrt(w)
        elif renorm:
            psi = x
        else:
            psi = x / np.sqrt(_vdot(x, x).real)
        sz = (psi[0].real**2 + psi[0].imag**2) - (psi[1].real**2 + psi[1].imag**2) if qubit else None
        if qubit:
            if sz0 is None:
                sz0 = sz
            sz_exc = np.maximum(sz_exc, np.abs(sz - sz0))
        if is_rec[k]:
            if keep_states:
                states[:, r] = x.T
                if linear:
                    weights[:, r] = w
                if qubit:
                    sz_rec[:, r] = sz
                dyn_rec[:, r] = dyn
            if on_record is not None:
                on_record(r, psi, w, sz)
            r += 1
        if k == steps:
            break
        inc = noise[k]
        if linear:
            dW = inc - (2 * model.lam * dt) * np.array(kern.r_values(psi))
            if driving is not None:
                driving[k] = dW
            dyn = dyn + kern.advance_nonlinear(psi, dW, dt)[1]
            x = kern.step_linear(x, inc, dt)
        else:
            x, ddyn = kern.advance_nonlinear(x, inc, dt, renorm)
            dyn = dyn + ddyn
        if qubit:
            sz2_int = sz2_int + sz * sz * dt
    wT = _vdot(x, x).real
    final = (x / np.sqrt(wT)).T
    return BatchPaths(
        times=rec_idx * dt, states=states, weights=weights, sz=sz_rec, dyn_phase=dyn_rec,
        sz2_integral=sz2_int, sz_excursion=sz_exc, final_states=final,
        final_weights=wT if linear else np.ones(B), final_dyn=dyn,
        driving=None if driving is None else driving.transpose(2, 0, 1))


def simulate_trajectory(model: LindbladModel, gauge: UnravellingGauge, psi0: StateVector,
                        config: SdeConfig, increments=None, equation: str = NONLINEAR,
                        master_seed: int = 0, index: int = 0) -> TrajectoryRecord:
    """One trajectory; increments are drawn from (master_seed, index) if not given."""
    _check_state(model, psi0, equation == NONLINEAR)
    if increments is None:
        increments = wiener_increments(master_seed, index, config.steps, model.n_channels,
                                       config.dt, config.noise_refinement)
    inc = np.asarray(increments, dtype=float).reshape(config.steps, model.n_channels)
    paths = simulate_batch(model, gauge, psi0.amplitudes[None, :], inc[None], config, equation)
    tag = "P" if equation == NONLINEAR else "Q"
    if equation == NONLINEAR and config.renormalize_each_step:
        dev = np.abs(np.sum(np.abs(paths.states[0]) ** 2, axis=1) - 1).max()
        if dev > TRAJECTORY_NORM_TOL:
            raise DegenerateStateError(f"nonlinear state lost normalization ({dev:.3g})")
    return TrajectoryRecord(
        times=paths.times,
        states=paths.states[0],
        noise=NoisePath(inc.T, config.dt, tag),
        sz_path=paths.sz[0],
        weight_path=paths.weights[0],
        dyn_phase_path=paths.dyn_phase[0],
        equation=equation,
        driving_noise=NoisePath(paths.driving[0].T, config.dt, "P"),
    )


def girsanov_shift(model: LindbladModel, gauge: UnravellingGauge,
                   trajectory: TrajectoryRecord) -> NoisePath:
    """Q-noise dxi_n = dW_n + 2 lam r_n dt along a recorded nonlinear trajectory.

    The trajectory must be recorded at every step.
    """
    if trajectory.equation != NONLINEAR:
        raise ValueError("girsanov_shift expects a nonlinear (P) trajectory")
    noise = trajectory.noise
    if trajectory.states.shape[0] != noise.steps + 1:
        raise ValueError("trajectory must be recorded at every step")
    kern = _Kernel(model, gauge)
    psi = trajectory.states[:-1].T
    psi = psi / np.sqrt(_vdot(psi, psi).real)
    rs = np.stack(kern.r_values(psi), axis=0)  # (N, steps)
    return NoisePath(noise.increments + 2 * model.lam * rs * noise.dt, noise.dt, "Q")


RAY = "ray"
VECTOR = "vector"


def pathwise_deviations(model: LindbladModel, gauge: UnravellingGauge, phi0: StateVector,
                        increments: np.ndarray, dt: float, renormalize: bool = True,
                        metric: str = RAY) -> np.ndarray:
    """Max over time of the distance between phi_t/|phi_t| and psi_t for each path.

    ``increments`` has shape (B, steps, N) and is read as Q-noise dxi: phi solves
    the linear equation with it, psi the nonlinear one driven by
    dW = dxi - 2 lam r dt with r taken along psi.

    ``metric="ray"`` compares the states as rays, min over alpha of
    || phi/|phi| - e^{i alpha} psi ||, so a global phase picked up by the two
    discretizations does not count. ``metric="vector"`` is the plain norm.
    """
    if metric not in (RAY, VECTOR):
        raise ValueError(f"unknown metric {metric!r}")
    _check_state(model, phi0, True)
    kern = _Kernel(model, gauge)
    inc = np.asarray(increments, dtype=float)
    inc = np.ascontiguousarray(inc.reshape(inc.shape[0], inc.shape[1], -1).transpose(1, 2, 0))
    B = inc.shape[2]
    phi = np.repeat(phi0.amplitudes[:, None], B, axis=1)
    psi = phi.copy()
    worst = np.zeros(B)
    for dxi in inc:
        dW = dxi - 2 * model.lam * dt * np.array(kern.r_values(psi))
        phi = kern.step_linear(phi, dxi, dt)
        psi = kern.advance_nonlinear(psi, dW, dt, renormalize)[0]
        n = np.sqrt(_vdot(phi, phi).real)
        if np.any(n < DEGENERATE_NORM):
            raise DegenerateStateError("linear solution norm vanished", np.flatnonzero(n < DEGENERATE_NORM))
        psi_n = psi if renormalize else psi / np.sqrt(_vdot(psi, psi).real)
        if metric == RAY:
            ov = _vdot(psi_n, phi)
            a = np.abs(ov)
            psi_n = psi_n * np.where(a > 0, ov / np.where(a > 0, a, 1), 1)
        diff = phi / n - psi_n
        worst = np.maximum(worst, np.sqrt(_vdot(diff, diff).real))
    return worst


def pathwise_equivalence_check(model: LindbladModel, gauge: UnravellingGauge,
                               phi0: StateVector, noise: NoisePath, dt: float,
                               renormalize: bool = True, metric: str = RAY) -> float:
    """Largest deviation between the normalized linear solution driven by the
    Q-noise ``noise`` and the nonlinear solution driven by the shifted noise."""
    if abs(noise.dt - dt) > 1e-15 * max(1.0, dt):
        raise ValueError("noise was sampled on a different step")
    return float(pathwise_deviations(model, gauge, phi0, noise.increments.T[None], dt, renormalize, metric)[0])


def measure_weight(trajectory: TrajectoryRecord) -> np.ndarray:
    """<phi_t|phi_t> along a linear (Q) trajectory."""
    if trajectory.equation != LINEAR:
        raise ValueError("measure weights are defined for linear trajectories")
    return np.sum(np.abs(trajectory.states) ** 2, axis=1)
