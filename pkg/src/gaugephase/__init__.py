"""Gauge freedom of quantum-state-diffusion unravellings and interferometric phases."""
from .core import (
    IDENTITY2, KET_MINUS, KET_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z, BlochVector, DensityMatrix, DimensionError,
    NormalizationError, Operator, StateVector, bloch, expectation, inner, pure_density, spin_state,
)
from .ensemble import (
    DEFAULT_SEED, EnsembleSpec, EnsembleStats, InitialEnsemble, TrajectoryError, compare_gauges,
    convergence_report, observable_average, oracle_deviation, run_ensemble,
)
from .lindblad import (
    DephasingSpinModel, IntegrationError, LindbladModel, MasterPath, dephasing_exact, integrate_master,
    lindblad_rhs,
)
from .phases import (
    FACTOR_AVERAGE, PHASE_AVERAGE, InterferometerSetup, PhaseRecord, PhaseSummary, UndefinedPhaseError,
    ensemble_total_phase, geometric_phase, intensity, interference_functional, mean_dynamical_phase,
    mean_dynamical_phase_factor, mean_geometric_phase, pancharatnam_total_phase,
)
from .estimator import GaugePhaseScan
from .results import ResultTable
from .sse import (
    LINEAR, NONLINEAR, DegenerateStateError, NoisePath, SdeConfig, TrajectoryRecord, UnravellingGauge,
    girsanov_shift, measure_weight, pathwise_equivalence_check, simulate_trajectory, step_linear,
    step_nonlinear,
)

__version__ = "0.1.0"
