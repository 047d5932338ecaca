"""Numerical tolerances shared by operations and tests."""

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12
DENSITY_HERMITIAN_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10
DENSITY_POSITIVITY_SLACK = 1e-8
BLOCH_TOL = 1e-8
EXPECTATION_REAL_TOL = 1e-10
TRAJECTORY_NORM_TOL = 1e-6
DEGENERATE_NORM = 1e-12
ORTHOGONAL_OVERLAP = 1e-12
UNDEFINED_VISIBILITY = 1e-6
WEIGHT_SUM_TOL = 1e-12
STEP_SLACK = 1e-9
# added to every 3-sigma band so that zero-variance estimators are not
# judged against round-off
STAT_FLOOR = 1e-9
MAX_DIM = 16
