"""Seeded, chunked Monte Carlo ensembles of trajectories.

Trajectory ``i`` draws its Wiener increments from a counter-based stream keyed
by ``(master_seed, i)``. Trajectories are processed in fixed-size chunks and
chunk sums are combined in chunk order, so results are bit-identical for any
number of workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._constants import WEIGHT_SUM_TOL
from .core import DensityMatrix, Operator, StateVector
from .lindblad import DephasingSpinModel, LindbladModel, dephasing_exact_array
from .phases import PhaseSamples, PhaseSummary, channel_phases, interference_functional, summarize
from .sse import (
    EQUATIONS,
    NONLINEAR,
    DegenerateStateError,
    SdeConfig,
    TrajectoryRecord,
    UnravellingGauge,
    simulate_batch,
    _apply,
    _vdot,
    simulate_trajectory,
    wiener_increments,
)

log = logging.getLogger(__name__)

DEFAULT_SEED = 12345
DEFAULT_CHUNK = 4096


class TrajectoryError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"trajectory {index}: {cause}")
        self.index = index


@dataclass(frozen=True, eq=False)
class InitialEnsemble:
    members: tuple[tuple[StateVector, float], ...]

    def __post_init__(self):
        members = tuple((s, float(p)) for s, p in self.members)
        if not members:
            raise ValueError("initial ensemble is empty")
        if any(p <= 0 for _, p in members):
            raise ValueError("weights must be positive")
        if abs(sum(p for _, p in members) - 1) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1")
        if len({s.dim for s, _ in members}) != 1:
            raise ValueError("all members must share a dimension")
        if not all(s.is_normalized() for s, _ in members):
            raise ValueError("members must be normalized")
        object.__setattr__(self, "members", members)

    @classmethod
    def pure(cls, psi: StateVector) -> "InitialEnsemble":
        return cls(((psi, 1.0),))

    @property
    def dim(self) -> int:
        return self.members[0][0].dim

    def counts(self, n_traj: int) -> np.ndarray:
        """Largest-remainder split of ``n_traj`` proportional to the weights."""
        p = np.array([w for _, w in self.members])
        exact = p * n_traj
        base = np.floor(exact).astype(int)
        rest = n_traj - base.sum()
        order = sorted(range(len(p)), key=lambda k: (-(exact[k] - base[k]), k))
        for k in order[:rest]:
            base[k] += 1
        return base

    def assignment(self, n_traj: int) -> np.ndarray:
        return np.repeat(np.arange(len(self.members)), self.counts(n_traj))

    def matrix(self) -> np.ndarray:
        return np.array([s.amplitudes for s, _ in self.members])


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    model: LindbladModel
    gauge: UnravellingGauge
    initial: InitialEnsemble
    sde: SdeConfig
    n_traj: int = 10_000
    master_seed: int = DEFAULT_SEED
    equation: str = NONLINEAR
    chunk_size: int = DEFAULT_CHUNK
    observables: tuple[Operator, ...] = ()
    # closed-form reference, when the model is the dephasing spin preset
    spin: DephasingSpinModel | None = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.initial.dim != self.model.dim:
            raise ValueError("initial states do not match model dimension")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        object.__setattr__(self, "observables", tuple(self.observables))

    @classmethod
    def for_spin(cls, spin: DephasingSpinModel, phi: float = 0.0, sde: SdeConfig | None = None,
                 **kw) -> "EnsembleSpec":
        return cls(spin.lindblad(), UnravellingGauge.uniform(phi), InitialEnsemble.pure(spin.initial_state()),
                   sde or SdeConfig(), spin=spin, **kw)

    def with_gauge(self, gauge: UnravellingGauge | float) -> "EnsembleSpec":
        if not isinstance(gauge, UnravellingGauge):
            gauge = UnravellingGauge.uniform(gauge, self.model.n_channels)
        return replace(self, gauge=gauge)

    def chunks(self) -> list[range]:
        return [range(a, min(a + self.chunk_size, self.n_traj))
                for a in range(0, self.n_traj, self.chunk_size)]


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    times: np.ndarray
    mean_density: np.ndarray  # (n_rec, d, d)
    stderr_density: np.ndarray  # (n_rec, d, d) complex: stderr of real part + 1j * imag part
    mean_sz: np.ndarray
    stderr_sz: np.ndarray
    mean_sz2: np.ndarray
    stderr_sz2: np.ndarray
    mean_weight: np.ndarray
    stderr_weight: np.ndarray
    obs_mean: np.ndarray  # (n_obs, n_rec)
    obs_stderr: np.ndarray
    samples: PhaseSamples
    sz_excursion: np.ndarray  # per trajectory, max_t |<sigma_z>_t - <sigma_z>_0|
    phase_summary: PhaseSummary | None
    n_traj: int
    trajectories: list[TrajectoryRecord] = field(default_factory=list)

    def density(self, k: int) -> DensityMatrix:
        return DensityMatrix(self.mean_density[k])


class _Sums:
    """Per-record-time running sums over trajectories."""

    def __init__(self, n_rec: int, d: int, n_obs: int):
        self.rho = np.zeros((n_rec, d, d), dtype=np.complex128)
        self.rho_re2 = np.zeros((n_rec, d, d))
        self.rho_im2 = np.zeros((n_rec, d, d))
        self.v = np.zeros((6 + 2 * n_obs, n_rec))  # sz, sz^2, sz2, sz2^2, w, w^2, obs...

    def add(self, other: "_Sums") -> None:
        self.rho += other.rho
        self.rho_re2 += other.rho_re2
        self.rho_im2 += other.rho_im2
        self.v += other.v


def _initial_rows(spec: EnsembleSpec, idx: range) -> np.ndarray:
    return spec.initial.matrix()[spec.initial.assignment(spec.n_traj)[idx.start:idx.stop]]


def chunk_noise(spec: EnsembleSpec, idx: range) -> np.ndarray:
    sde = spec.sde
    return np.stack([
        wiener_increments(spec.master_seed, i, sde.steps, spec.model.n_channels, sde.dt,
                          sde.noise_refinement)
        for i in idx
    ])


def _run_chunk(spec: EnsembleSpec, idx: range, f_phases):
    n_rec = len(spec.sde.record_indices())
    obs = [o.entries for o in spec.observables]
    d = spec.model.dim
    sums = _Sums(n_rec, d, len(obs))

    def record(r, psi, w, sz):
        wt = np.ones(psi.shape[1]) if w is None else w
        wpsi = wt * psi
        for i in range(d):
            for j in range(i, d):
                e = wpsi[i] * psi[j].conj()
                sums.rho[r, i, j] = e.sum()
                sums.rho_re2[r, i, j] = (e.real * e.real).sum()
                sums.rho_im2[r, i, j] = (e.imag * e.imag).sum()
                if j != i:
                    sums.rho[r, j, i] = np.conj(sums.rho[r, i, j])
                    sums.rho_re2[r, j, i] = sums.rho_re2[r, i, j]
                    sums.rho_im2[r, j, i] = sums.rho_im2[r, i, j]
        rows = []
        if sz is not None:
            a, b = wt * sz, wt * sz**2
            rows += [a, a * a, b, b * b]
        else:
            rows += [np.zeros_like(wt)] * 4
        rows += [wt, wt * wt]
        for o in obs:
            e = wt * _vdot(psi, _apply(o, psi)).real
            rows += [e, e * e]
        sums.v[:, r] = [x.sum() for x in rows]

    try:
        paths = simulate_batch(spec.model, spec.gauge, _initial_rows(spec, idx), chunk_noise(spec, idx),
                               spec.sde, spec.equation, keep_states=False, on_record=record)
    except DegenerateStateError as exc:
        first = idx.start + (exc.rows[0] if exc.rows else 0)
        raise TrajectoryError(first, exc) from exc
    f = (interference_functional(paths.final_states, f_phases) if f_phases is not None
         else np.full(len(idx), np.nan + 0j))
    return sums, (f, paths.final_dyn, paths.final_weights, paths.sz2_integral, paths.sz_excursion)


def _stderr_from_sums(s1, s2, n):
    if n < 2:
        return np.zeros_like(s1)
    var = np.maximum(s2 - s1 * s1 / n, 0.0) / (n - 1)
    return np.sqrt(var / n)


def run_ensemble(spec: EnsembleSpec, n_workers: int = 1, keep_trajectories: int = 0) -> EnsembleStats:
    """Simulate ``spec.n_traj`` trajectories and reduce them to ensemble statistics."""
    try:
        f_phases = channel_phases(spec.model, spec.sde.t_final)
    except ValueError:
        f_phases = None
    chunks = spec.chunks()
    log.debug("running %d trajectories in %d chunks on %d workers", spec.n_traj, len(chunks), n_workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda c: _run_chunk(spec, c, f_phases), chunks))
    else:
        results = [_run_chunk(spec, c, f_phases) for c in chunks]

    total = results[0][0]
    for s, _ in results[1:]:
        total.add(s)
    n = spec.n_traj
    finals = [np.concatenate([r[1][j] for r in results]) for j in range(5)]
    samples = PhaseSamples(f=finals[0], dyn=finals[1], weights=finals[2], sz2_integral=finals[3])
    v = total.v
    n_obs = len(spec.observables)
    n_rec = v.shape[1]
    obs_mean = v[6::2] / n
    obs_se = np.array([_stderr_from_sums(v[6 + 2 * j], v[7 + 2 * j], n) for j in range(n_obs)]).reshape(n_obs, n_rec)
    summary = summarize(samples, spec.gauge) if f_phases is not None and n >= 1 else None
    trajs = [
        simulate_trajectory(spec.model, spec.gauge, StateVector(_initial_rows(spec, range(i, i + 1))[0]),
                            spec.sde, equation=spec.equation, master_seed=spec.master_seed, index=i)
        for i in range(min(keep_trajectories, n))
    ]
    return EnsembleStats(
        times=spec.sde.record_times(),
        mean_density=total.rho / n,
        stderr_density=_stderr_from_sums(total.rho.real, total.rho_re2, n)
        + 1j * _stderr_from_sums(total.rho.imag, total.rho_im2, n),
        mean_sz=v[0] / n,
        stderr_sz=_stderr_from_sums(v[0], v[1], n),
        mean_sz2=v[2] / n,
        stderr_sz2=_stderr_from_sums(v[2], v[3], n),
        mean_weight=v[4] / n,
        stderr_weight=_stderr_from_sums(v[4], v[5], n),
        obs_mean=obs_mean,
        obs_stderr=obs_se,
        samples=samples,
        sz_excursion=finals[4],
        phase_summary=summary,
        n_traj=n,
        trajectories=trajs,
    )


def observable_average(spec: EnsembleSpec, op: Operator, n_workers: int = 1):
    """(mean, stderr) of <psi_t|op|psi_t> over the ensemble at each record time."""
    if op.dim != spec.model.dim:
        raise ValueError("operator dimension differs from model")
    if not op.is_hermitian():
        raise ValueError("observable must be Hermitian")
    stats = run_ensemble(replace(spec, observables=(op,)), n_workers)
    return stats.obs_mean[0], stats.obs_stderr[0]


def compare_gauges(spec: EnsembleSpec, gauges: Sequence[UnravellingGauge | float],
                   n_workers: int = 1) -> list[EnsembleStats]:
    """One ensemble per gauge, all driven by the same Wiener increments."""
    if len(gauges) < 2:
        raise ValueError("at least two gauges are required")
    return [run_ensemble(spec.with_gauge(g), n_workers) for g in gauges]


def oracle_deviation(stats: EnsembleStats, spin: DephasingSpinModel) -> float:
    exact = dephasing_exact_array(spin, stats.times)
    return float(np.abs(stats.mean_density - exact).max())


def convergence_report(spec: EnsembleSpec, dt_list: Sequence[float], n_workers: int = 1):
    """[(dt, max |mean density - exact|)] over ``dt_list`` on a shared Brownian path.

    Every dt must be an integer multiple of the smallest one; coarser runs sum
    the fine increments.
    """
    if spec.spin is None:
        raise ValueError("convergence_report needs a spec built from a DephasingSpinModel")
    dts = list(dt_list)
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    finest = dts[-1]
    rows = []
    for dt in dts:
        ratio = int(round(dt / finest))
        if abs(dt / finest - ratio) > 1e-9:
            raise ValueError(f"dt={dt} is not an integer multiple of {finest}")
        sde = replace(spec.sde, dt=dt, noise_refinement=ratio,
                      record_stride=max(1, int(round(spec.sde.record_stride * spec.sde.dt / dt))))
        stats = run_ensemble(replace(spec, sde=sde), n_workers)
        rows.append((dt, oracle_deviation(stats, spec.spin)))
    return rows
