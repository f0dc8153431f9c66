"""Default settings for experiments."""

# Data settings
DATA_GENERATOR = 'moons'  # 'gaussians', 'moons' or 'csv'
CSV_PATH = ''
ANGLES = [0.0, 18.0, 36.0, 54.0, 72.0, 90.0, 108.0]  # source first, target last
N_PER_DOMAIN = 500
NOISE_SD = 0.1
EVAL_LABELS = True  # keep target labels in the evaluation-only channel

# Network dims (input and class count come from the data)
FEATURE_HIDDEN = [16]
FEATURE_DIM = 8
INVARIANT_HIDDEN = [8]
INVARIANT_DIM = 4
SPECIFIC_HIDDEN = [8]
SPECIFIC_DIM = 4
MINE_HIDDEN = [16]
POLICY_HIDDEN = [16]

# Training parameters
EPOCHS = 200
BATCH_SIZE = 64
FEATURE_RATE = 0.05   # F, I, S, C
MINE_RATE = 0.01      # statistic networks T
POLICY_RATE = 0.01    # tau in the policy ascent step
ROLLOUTS = 0          # rollouts per epoch, 0 means one per intermediate domain (K)
MODE = 'full'         # 'classifier_only', 'disentangle_only' or 'full'
SEED = 0
TRAIN_SELECTED_ONLY = False
ALIGNED_BATCHES = True
DIVERGENCE_LIMIT = 1e6

# Self-training along the extracted path, then on the target
ADAPT_STEPS = 500     # classifier steps per visited domain, 0 skips adaptation
ADAPT_KEEP = 0.9      # most confident fraction of pseudo-labels trained on

# Policy parameters
GAMMA = 0.9
PENALTY = 0.0         # finite stand-in for the -inf reward branch; 0 scales it with the distances
PENALTY_SCALE = 10.0  # scaled penalty = -PENALTY_SCALE * running mean of D_it_s
POLICY_BASELINE = True

# Distance settings
DISTANCE_METHOD = 'sliced'  # 'sliced' or 'exact'
N_PROJECTIONS = 64
DISTANCE_ROWS = 128
DISTANCE_ON = 'cloud'       # 'cloud' or 'pooled'

# Exact optimal assignment is only run on small supports
EXACT_MAX_POINTS = 64

# Probability clamp for log-probabilities
PROB_CLAMP = 1e-6

# Output settings
OUTPUT_DIR = 'runs'
PROGRESS = True

# Logging settings
LOG_LEVEL = 'INFO'
LOG_FILE = 'logs/rlcda.log'
