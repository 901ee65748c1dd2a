"""Constants used throughout the application."""

# Mesh
NODE_TOLERANCE = 1e-12  # absolute, node deduplication and atom lookup
DEFAULT_CELLS = 2000

# Eigensolver
BISECTION_RTOL = 1e-12  # bracket width relative to max(1, |lambda|)
RESIDUAL_TOL = 1e-10  # backward error for inverse iteration
ZERO_PIVOT_RTOL = 1e-14  # pivots below this times the scale count as zero
MAX_INVERSE_ITERATIONS = 100
MAX_BRACKET_DOUBLINGS = 200
SHIFT_OFFSET = 1.0  # xi = lambda_1 - SHIFT_OFFSET

# Fundamental system integration
SUBSTEPS = 8  # RK4 steps per cell, must be even (Simpson panels)
TAU_RENORMALIZATION_TOL = 1e-8
MIN_Y1_WARNING = 1e-6
DEFAULT_DIRICHLET_C = 1.0

# Oscillation analysis
ZTOL_RELATIVE = 1e-8  # zero tolerance relative to sup|f|
DEFAULT_EPS_GRID = (1e-1, 1e-2, 1e-3)  # relative to sup|f|
DEFAULT_TRIALS = 100
DEFAULT_SEED = 42
DEFAULT_CHEBYSHEV_MAX = 6
POWER_ITERATION_TARGET = 1e-8  # (lambda_n / lambda_n+1) ** steps
STAGNATION_NORM = 1e-300

# Solver defaults
DEFAULT_EIGEN_COUNT = 8

# Acceptance thresholds used by the reports
SPECTRAL_INVARIANCE_RTOL = 1e-3
IDENTITY_RESIDUAL_TOL = 1e-6

# Report formatting
CSV_FLOAT_FORMAT = '.17g'

# Boundary kinds accepted by bc.kind in problem files
BC_KIND_NAMES = {
    'dirichlet_dirichlet': (True, True),
    'neumann_dirichlet': (False, True),
    'dirichlet_neumann': (True, False),
    'neumann_neumann': (False, False),
}
