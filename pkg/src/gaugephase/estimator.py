"""scikit-learn style front end: gauge angles in, phase features out."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ensemble import DEFAULT_CHUNK, DEFAULT_SEED, EnsembleSpec, run_ensemble
from .lindblad import DephasingSpinModel
from .sse import NONLINEAR, SdeConfig

FEATURES = (
    "total_phase", "visibility", "dyn_phase_average", "dyn_factor_average",
    "geo_phase_average", "geo_factor_average", "sz2_integral",
)


class GaugePhaseScan(TransformerMixin, BaseEstimator):
    """Ensemble phase estimates for the dephasing spin, one row per gauge angle.

    ``fit`` simulates an ensemble for every distinct angle in ``X`` (one column,
    radians) with common random numbers. ``transform`` looks the rows up and
    simulates any angle it has not seen, so results only depend on the
    parameters and the angle itself.
    """

    def __init__(self, mu_b=1.0, lam=0.5, theta=np.pi / 3, dt=1e-3, t_final=2.0, n_traj=10_000,
                 master_seed=DEFAULT_SEED, equation=NONLINEAR, n_workers=1, chunk_size=DEFAULT_CHUNK):
        self.mu_b = mu_b
        self.lam = lam
        self.theta = theta
        self.dt = dt
        self.t_final = t_final
        self.n_traj = n_traj
        self.master_seed = master_seed
        self.equation = equation
        self.n_workers = n_workers
        self.chunk_size = chunk_size

    def _angles(self, X) -> np.ndarray:
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError(f"expected one column of gauge angles, got {X.shape[1]}")
            X = X[:, 0]
        return X

    def _row(self, phi: float) -> np.ndarray:
        spin = DephasingSpinModel(self.mu_b, self.lam, self.theta)
        spec = EnsembleSpec.for_spin(spin, phi, SdeConfig(self.dt, self.t_final), n_traj=self.n_traj,
                                     master_seed=self.master_seed, equation=self.equation,
                                     chunk_size=self.chunk_size)
        p = run_ensemble(spec, self.n_workers).phase_summary
        return np.array([p.mean_total, p.visibility, p.mean_dyn_phase_average, p.mean_dyn_factor_average,
                         p.mean_geo_by_phase, p.mean_geo_by_factor, p.mean_sz2_integral])

    def fit(self, X, y=None):
        angles = self._angles(X)
        self.table_ = {float(phi): self._row(float(phi)) for phi in np.unique(angles)}
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "table_")
        rows = []
        for phi in map(float, self._angles(X)):
            if phi not in self.table_:
                self.table_[phi] = self._row(phi)
            rows.append(self.table_[phi])
        return np.array(rows).reshape(-1, len(FEATURES))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURES, dtype=object)
