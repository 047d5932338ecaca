"""Total, dynamical and geometric phases per trajectory and on average.

Sign convention: the total phase is Arg E_Q[<phi_0|phi_T>], so for the spin
model a channel with Hamiltonian eigenvalue h picks up exp(-i h T) in the
interference functional f. The fringe seen at the detector is then
1/2 + (nu/2) cos(chi - total). The interferometer formula as usually written
attaches the opposite sign to the field arm; ``intensity`` keeps that written
form, so feed it ``conj(f)`` to get the physical fringe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._constants import DEGENERATE_NORM, ORTHOGONAL_OVERLAP, UNDEFINED_VISIBILITY
from .core import NormalizationError, StateVector, inner
from .lindblad import DephasingSpinModel, LindbladModel
from .sse import TrajectoryRecord, UnravellingGauge, _Kernel, reduce_angle

PHASE_AVERAGE = "phase_average"
FACTOR_AVERAGE = "factor_average"


class UndefinedPhaseError(ArithmeticError):
    pass


@dataclass(frozen=True)
class InterferometerSetup:
    chi: float
    T: float
    model: DephasingSpinModel


@dataclass(frozen=True)
class PhaseRecord:
    total: float
    dynamical: float
    trajectory_id: int = 0

    @property
    def geometric(self) -> float:
        return geometric_phase(self)


@dataclass(frozen=True, eq=False)
class PhaseSamples:
    """Per-trajectory end-of-run quantities, in trajectory-index order.

    ``weights`` are the measure-change weights <phi_T|phi_T> for linear
    trajectories and ones otherwise. Ensemble means are self-normalized,
    sum(weights * x) / sum(weights), so a norm drift shared by every
    trajectory (Euler steps inflate |phi|^2 even without noise) cancels.
    """

    f: np.ndarray
    dyn: np.ndarray
    weights: np.ndarray
    sz2_integral: np.ndarray

    def __len__(self):
        return len(self.f)

    @property
    def w(self) -> np.ndarray:
        return _normalized(self.weights)

    def records(self) -> list[PhaseRecord]:
        tot = np.angle(self.f)
        return [PhaseRecord(float(t), float(d), i) for i, (t, d) in enumerate(zip(tot, self.dyn))]


@dataclass(frozen=True)
class PhaseSummary:
    gauge: UnravellingGauge
    n_traj: int
    mean_total: float
    stderr_total: float
    visibility: float
    stderr_visibility: float
    total_defined: bool
    mean_dyn_phase_average: float
    stderr_dyn_phase_average: float
    mean_dyn_factor_average: float
    stderr_dyn_factor_average: float
    dyn_factor_modulus: float
    stderr_dyn_factor_modulus: float
    mean_geo_by_phase: float
    stderr_geo_by_phase: float
    mean_geo_by_factor: float
    stderr_geo_by_factor: float
    mean_sz2_integral: float

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "gauge"}
        out["phi"] = self.gauge.phases[0] if len(self.gauge.phases) == 1 else list(self.gauge.phases)
        return out


def _stderr(u: np.ndarray) -> float:
    n = len(u)
    if n < 2:
        return float("nan")
    return float(np.std(u, ddof=1) / np.sqrt(n))


def _normalized(weights: np.ndarray) -> np.ndarray:
    return weights / weights.mean()


def _weighted(w: np.ndarray, x: np.ndarray):
    """Weighted mean and its per-trajectory influence w (x - mean)."""
    m = (w * x).mean()
    return m, w * (x - m)


def _require(n: int) -> None:
    if n == 0:
        raise ValueError("empty ensemble")


def pancharatnam_total_phase(psi0: StateVector, psiT: StateVector) -> float:
    for p in (psi0, psiT):
        if not p.is_normalized():
            raise NormalizationError("total phase needs normalized states")
    ov = inner(psi0, psiT)
    if abs(ov) <= ORTHOGONAL_OVERLAP:
        raise UndefinedPhaseError("states are orthogonal; the total phase is undefined")
    return reduce_angle(np.angle(ov))


def channel_phases(model: LindbladModel | DephasingSpinModel, T: float) -> np.ndarray:
    """exp(-i h_k T) for the diagonal Hamiltonian entries h_k."""
    if isinstance(model, DephasingSpinModel):
        model = model.lindblad()
    if not model.hamiltonian.is_diagonal():
        raise ValueError("interference functional needs a Hamiltonian diagonal in the channel basis")
    return np.exp(-1j * np.diag(model.hamiltonian.entries).real * T)


def interference_functional(states: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """f for each row of ``states``: sum_k |a_k|^2 e^{-i h_k T} / sum_k |a_k|^2."""
    states = np.atleast_2d(states)
    p = np.abs(states) ** 2
    norm = p.sum(axis=1)
    if np.any(norm < DEGENERATE_NORM**2):
        raise NormalizationError("vanishing norm in interference functional")
    return (p * phases).sum(axis=1) / norm


def trajectory_f(traj: TrajectoryRecord, setup: InterferometerSetup) -> complex:
    return complex(interference_functional(traj.states[-1], channel_phases(setup.model, setup.T))[0])


def intensity(setup: InterferometerSetup, f: complex) -> float:
    """1/2 + |f|/2 cos(chi + Arg f)."""
    if abs(f) > 1 + 1e-9:
        raise ValueError("|f| must not exceed 1")
    return 0.5 + 0.5 * abs(f) * np.cos(setup.chi + np.angle(f))


def fringe(chi, visibility: float, total_phase: float):
    return 0.5 + 0.5 * visibility * np.cos(np.asarray(chi) - total_phase)


def _arg_influence(z: np.ndarray, m: complex) -> np.ndarray:
    return (z * np.conj(m)).imag / abs(m) ** 2


def total_phase_stats(f: np.ndarray, weights: np.ndarray | None = None):
    """(total phase, visibility, stderr_total, stderr_visibility, defined)."""
    f = np.asarray(f, dtype=np.complex128)
    _require(len(f))
    w = np.ones(len(f)) if weights is None else _normalized(np.asarray(weights, dtype=float))
    m, d = _weighted(w, f)
    m = complex(m)
    vis = abs(m)
    if vis < UNDEFINED_VISIBILITY:
        return float("nan"), vis, float("nan"), _stderr(np.abs(d)), False
    se_vis = _stderr((d * np.conj(m)).real / vis)
    return reduce_angle(np.angle(m)), vis, _stderr(_arg_influence(d, m)), se_vis, True


def ensemble_total_phase(trajs: Sequence[TrajectoryRecord], setup: InterferometerSetup):
    """(total phase, visibility) from measure-weighted f over trajectories."""
    if len(trajs) < 2:
        raise ValueError("at least two trajectories are required")
    ph = channel_phases(setup.model, setup.T)
    f = np.array([interference_functional(t.states[-1], ph)[0] for t in trajs])
    w = np.array([t.weight_path[-1] for t in trajs])
    gamma, vis, *_ = total_phase_stats(f, w)
    return gamma, vis


def dynamical_phase_increment(model: LindbladModel, gauge: UnravellingGauge, psi: StateVector,
                              dW: Sequence[float], dt: float) -> float:
    """Ito increment Im<psi|dpsi> of the nonlinear equation."""
    if not psi.is_normalized():
        raise NormalizationError("dynamical phase needs a normalized state")
    dW = np.asarray(dW, dtype=float).reshape(-1, 1)
    return float(_Kernel(model, gauge).advance_nonlinear(psi.amplitudes[:, None], dW, dt, False)[1][0])


def mean_dynamical_phase(samples: PhaseSamples) -> tuple[float, float]:
    _require(len(samples))
    m, d = _weighted(samples.w, samples.dyn)
    return float(m), _stderr(d)


def dynamical_phase_target(samples: PhaseSamples, model: DephasingSpinModel, phi: float,
                           T: float) -> float:
    """mu_b T cos(theta) + lam^2 sin(phi)cos(phi) * mean of int <sigma_z>^2."""
    m, _ = _weighted(samples.w, samples.sz2_integral)
    return model.mu_b * T * np.cos(model.theta) + model.lam**2 * np.sin(phi) * np.cos(phi) * float(m)


def mean_dynamical_phase_factor(samples: PhaseSamples):
    """(E[exp(i dyn)], stderr of its modulus, stderr of its argument)."""
    _require(len(samples))
    m, d = _weighted(samples.w, np.exp(1j * samples.dyn))
    m = complex(m)
    if abs(m) < UNDEFINED_VISIBILITY:
        return m, _stderr(np.abs(d)), float("nan")
    return m, _stderr((d * np.conj(m)).real / abs(m)), _stderr(_arg_influence(d, m))


def geometric_phase(record: PhaseRecord) -> float:
    return reduce_angle(record.total - record.dynamical)


def geometric_influence(samples: PhaseSamples, convention: str = PHASE_AVERAGE):
    """(value, per-trajectory influence) of the averaged geometric phase."""
    _require(len(samples))
    w = samples.w
    mf, df = _weighted(w, samples.f)
    mf = complex(mf)
    if abs(mf) < UNDEFINED_VISIBILITY:
        raise UndefinedPhaseError("visibility vanishes; total phase undefined")
    u_tot = _arg_influence(df, mf)
    if convention == PHASE_AVERAGE:
        md, dd = _weighted(w, samples.dyn)
        return reduce_angle(np.angle(mf) - md), u_tot - dd
    if convention == FACTOR_AVERAGE:
        me, de = _weighted(w, np.exp(1j * samples.dyn))
        me = complex(me)
        if abs(me) < UNDEFINED_VISIBILITY:
            raise UndefinedPhaseError("dynamical phase factor averages to zero")
        return reduce_angle(np.angle(mf) - np.angle(me)), u_tot - _arg_influence(de, me)
    raise ValueError(f"unknown convention {convention!r}")


def mean_geometric_phase(samples: PhaseSamples, convention: str = PHASE_AVERAGE) -> tuple[float, float]:
    """Average total phase minus the averaged dynamical phase; (value, stderr)."""
    value, u = geometric_influence(samples, convention)
    return value, _stderr(u)


def summarize(samples: PhaseSamples, gauge: UnravellingGauge) -> PhaseSummary:
    tot, vis, se_tot, se_vis, defined = total_phase_stats(samples.f, samples.weights)
    dyn, se_dyn = mean_dynamical_phase(samples)
    fac, se_mod, se_arg = mean_dynamical_phase_factor(samples)
    if defined:
        geo_p, se_geo_p = mean_geometric_phase(samples, PHASE_AVERAGE)
        try:
            geo_f, se_geo_f = mean_geometric_phase(samples, FACTOR_AVERAGE)
        except UndefinedPhaseError:
            geo_f, se_geo_f = float("nan"), float("nan")
    else:
        geo_p = se_geo_p = geo_f = se_geo_f = float("nan")
    return PhaseSummary(
        gauge=gauge,
        n_traj=len(samples),
        mean_total=tot,
        stderr_total=se_tot,
        visibility=vis,
        stderr_visibility=se_vis,
        total_defined=defined,
        mean_dyn_phase_average=dyn,
        stderr_dyn_phase_average=se_dyn,
        mean_dyn_factor_average=float(np.angle(fac)),
        stderr_dyn_factor_average=se_arg,
        dyn_factor_modulus=abs(fac),
        stderr_dyn_factor_modulus=se_mod,
        mean_geo_by_phase=geo_p,
        stderr_geo_by_phase=se_geo_p,
        mean_geo_by_factor=geo_f,
        stderr_geo_by_factor=se_geo_f,
        mean_sz2_integral=float(_weighted(samples.w, samples.sz2_integral)[0]),
    )


def angle_distance(a: float, b: float) -> float:
    """|a - b| measured on the circle."""
    return abs(reduce_angle(a - b))
