"""
Application constants: default hyper-parameters for the sampler, the importance
measures, the selection procedures and the benchmark harness.
"""

APP_NAME = "bartvs"
APP_VERSION = "0.1.0"

# Environment variable pointing at an optional JSON settings file
CONFIG_ENV_VAR = "BARTVS_CONFIG"

# Predictor type tags
TYPE_CONTINUOUS = "continuous"
TYPE_BINARY = "binary"
PREDICTOR_TYPES = (TYPE_CONTINUOUS, TYPE_BINARY)

# Response kinds
RESPONSE_CONTINUOUS = "continuous"
RESPONSE_PROBIT = "probit"

# Tree prior: P(split at depth d) = gamma * (1 + d) ** -beta
DEFAULT_GAMMA = 0.95
DEFAULT_BETA = 2.0

# Leaf prior shrinkage; continuous leaves use 0.5 / (k sqrt(M)) on the [-0.5, 0.5] scale
DEFAULT_K = 2.0
CONTINUOUS_LEAF_HALF_RANGE = 0.5
PROBIT_LEAF_HALF_RANGE = 3.0

# Error-variance prior (nu, q)
DEFAULT_NU = 3.0
DEFAULT_Q = 0.90

# Tree count and iteration budget
DEFAULT_TREES = 200
DEFAULT_BURN = 1000
DEFAULT_KEEP = 1000
DEFAULT_THIN = 1
DEFAULT_SEED = 0

# Cutpoints per continuous predictor
DEFAULT_CUTPOINTS = 100

# BIRTH/DEATH proposal mix
BIRTH_PROBABILITY = 0.5

# Nodes-ratio modes for the BIRTH Metropolis ratio
NODES_RATIO_CLOSED_FORM = "closed_form"
NODES_RATIO_EXACT = "exact"
NODES_RATIO_MODES = (NODES_RATIO_CLOSED_FORM, NODES_RATIO_EXACT)

# Probit offset clipping of the response mean
PROBIT_MEAN_CLIP = (0.01, 0.99)

# DART: lambda = theta / (theta + rho) ~ Beta(a, b), rho defaults to p
DEFAULT_DART_A = 0.5
DEFAULT_DART_B = 1.0
DEFAULT_DART_START_FRACTION = 0.5
DART_THETA_GRID_SIZE = 1000

# Permutation selection
DEFAULT_PERMUTATION_L = 100
DEFAULT_PERMUTATION_L_REP = 10
DEFAULT_ALPHA = 0.05
DEFAULT_PERMUTATION_TREES = 20

# Backward selection
DEFAULT_SPLIT_RATIO = 0.8
DEFAULT_BACKWARD_TREES = 50

# DART selection
DEFAULT_MPVIP_THRESHOLD = 0.5
DEFAULT_DART_TREES = 200

# ABC Bayesian forest
DEFAULT_ABC_ITERATIONS = 1000
DEFAULT_ABC_KEEP_FRACTION = 0.1
DEFAULT_ABC_SPLIT_RATIO = 0.5
DEFAULT_ABC_BURN = 200
DEFAULT_ABC_THRESHOLD = 0.5
DEFAULT_ABC_TREES = 10

# PSIS-LOO
PSIS_REFF = 1.0
PSIS_MIN_DRAWS = 5
PARETO_K_WARNING = 0.7
PARETO_K_UNDEFINED = float("inf")
EXACT_LOO_MAX_N = 50

# Importance kinds
KIND_VIP = "vip"
KIND_VIP_APPROX = "vip_approx"
KIND_WITHIN_TYPE_VIP = "within_type_vip"
KIND_MI = "mi"
KIND_MPVIP = "mpvip"
IMPORTANCE_KINDS = (KIND_VIP, KIND_VIP_APPROX, KIND_WITHIN_TYPE_VIP, KIND_MI, KIND_MPVIP)
PERMUTATION_KINDS = (KIND_VIP, KIND_WITHIN_TYPE_VIP, KIND_MI)

# Selection method names
METHOD_PERMUTE_VIP = "permute-vip"
METHOD_PERMUTE_WTVIP = "permute-wtvip"
METHOD_PERMUTE_MI = "permute-mi"
METHOD_BACKWARD = "backward"
METHOD_DART = "dart"
METHOD_ABC = "abc"
SELECTION_METHODS = (
    METHOD_PERMUTE_VIP,
    METHOD_PERMUTE_WTVIP,
    METHOD_PERMUTE_MI,
    METHOD_BACKWARD,
    METHOD_DART,
    METHOD_ABC,
)
PERMUTATION_METHOD_KINDS = {
    METHOD_PERMUTE_VIP: KIND_VIP,
    METHOD_PERMUTE_WTVIP: KIND_WITHIN_TYPE_VIP,
    METHOD_PERMUTE_MI: KIND_MI,
}

# Benchmark scenarios
SCENARIO_IDS = (
    "CC1", "CC2", "CM1", "CM2",
    "BC1", "BC2", "BM1", "BM2",
    "EX1", "EX2", "NULL",
)
SCENARIO_FIXED_P = {"CM2": 84, "BM2": 84, "EX1": 20, "EX2": 20}
SCENARIO_CORRELATION = 0.3

# Output formats
OUTPUT_FORMATS = ("json", "csv")
