"""Configuration file for the safe arm RL stack"""
import os
from dotenv import load_dotenv

load_dotenv()

# Paths
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIRECTORY = os.path.join(PROJECT_ROOT, "configs")
ARM_MODEL_DIRECTORY = os.path.join(CONFIG_DIRECTORY, "arms")
EXPERIMENT_DIRECTORY = os.path.join(CONFIG_DIRECTORY, "experiments")
DEFAULT_ARM_MODEL = "panda"
DEFAULT_OUTPUT_DIRECTORY = os.getenv(
    "SAFE_ARM_RL_OUTPUT_DIR", os.path.join(PROJECT_ROOT, "runs")
)

# Worker pool (seeds run as independent processes)
MAX_WORKERS = max(1, int(os.getenv("SAFE_ARM_RL_THREADS", "1")))

# Kinematics Configuration
AXIS_NORM_TOLERANCE = 1e-9
IK_DAMPING = 0.05  # mu in J^T (J J^T + mu^2 I)^-1 e
IK_MAX_ITERATIONS = 10
IK_TOLERANCE = 1e-4  # meters
IK_BACKTRACK_STEPS = 5  # step halvings tried per iteration before raising the damping
IK_SOLVE_ITERATIONS = 100  # per start in the full solve
IK_RESTARTS = 4  # random starts tried after the first one stalls

# Collision Configuration
COARSE_SAMPLES = 16  # coarse scan before golden-section refinement
GOLDEN_SECTION_TOLERANCE = 1e-10  # on the segment parameter

# Environment Configuration
MAX_EPISODE_STEPS = 500
ACTION_SCALE_CART = 0.05  # meters per unit action (AR1)
ACTION_SCALE_JOINT = 0.05  # radians per unit action (AR2)
SUCCESS_RADIUS = 0.05
OBSTACLE_SIZE = (0.1, 0.1, 0.1)
MAX_PLACEMENT_ATTEMPTS = 100
TABLE_THICKNESS = 0.02
TABLE_HALF_EXTENT = 1.0

# Network Configuration
HIDDEN_SIZES = (64, 64)
POLICY_OUTPUT_GAIN = 0.01
VALUE_OUTPUT_GAIN = 1.0
LOG_STD_INIT = -0.5
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# PPO / cPPO defaults
GAMMA = 0.99
GAE_LAMBDA = 0.95
CLIP_EPS = 0.2
POLICY_LR = 3e-4
VALUE_LR = 1e-3
UPDATE_MINIBATCH = 64
UPDATE_PASSES = 10
TARGET_KL = 0.015
KL_STOP_FACTOR = 1.5  # policy passes stop once kl > factor * target_kl
STEPS_PER_EPOCH = 1000
MAX_EPOCHS = 200
COST_LIMIT = 10.0
DUAL_LR = 0.05
ADVANTAGE_STD_FLOOR = 1e-8

# Harness Configuration
DESK_SCALE_MAX_EPOCHS = 30
DESK_SCALE_MAX_EPISODE_STEPS = 500
DESK_SCALE_FINAL_WINDOW = 10
FULL_SCALE_FINAL_WINDOW = 25
REWARD_THRESHOLD_FRACTION = 0.1  # threshold = -fraction * max_episode_steps
REPORT_SCHEMA_VERSION = 1
METRICS_COLUMNS = [
    "epoch",
    "mean_ep_reward",
    "mean_ep_cost",
    "mean_ep_len",
    "lambda",
    "kl",
    "policy_loss",
    "value_loss",
    "cost_value_loss",
]
