"""
Configuration file for the TTM library.
Environment-driven settings plus the numeric and training defaults.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Runtime Configuration
TTM_THREADS = max(1, int(os.getenv("TTM_THREADS", "1")))  # Cap on worker threads (data loader)
TTM_OUTPUT_DIR = os.getenv("TTM_OUTPUT_DIR", "runs")
TTM_LOG_DIR = os.getenv("TTM_LOG_DIR", "logs")
QUIET_LOGGERS = ("matplotlib", "PIL")  # Held at WARNING so DEBUG runs stay readable

# Numerics
LAYER_NORM_EPS = 1e-6
GELU_COEF = 0.044715  # tanh approximation
SOFTMAX_CHECK_TOL = 1e-6

# FLOP accounting (shared by the runtime op counter and the static analyzer)
FLOPS_PER_MAC = 2
FLOPS_ELEMENTWISE = 1  # add/sub/mul/div/exp/log/tanh/sigmoid/relu
FLOPS_GELU = 8
FLOPS_SOFTMAX = 4  # max-subtract, exp, sum, divide
FLOPS_LAYER_NORM = 8  # mean, centre, square, variance, normalise, gain, bias (+eps)

# Model defaults: m = 96, r = 16, hidden size 512, four blocks
DEFAULT_MEMORY_TOKENS = 96
DEFAULT_READ_TOKENS = 16
DEFAULT_INPUT_TOKENS = 16
DEFAULT_CHANNELS = 512
DEFAULT_DEPTH = 4
DEFAULT_HEADS = 8
INIT_STD = 0.02  # positional tables, embeddings, latent queries

# Training defaults
DEFAULT_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LABEL_SMOOTHING = 0.1
GRAD_CLIP_NORM = 1.0
DEFAULT_BATCH_SIZE = 32
LOADER_PREFETCH = 4  # Bounded queue size in batches

# Gradient check defaults
GRADCHECK_EPS = 1e-5
GRADCHECK_TOL = 1e-4
GRADCHECK_MAX_ENTRIES = 12  # Sampled entries per parameter tensor
GRADCHECK_FLOOR = 1e-8  # Relative-error denominator floor
GRADCHECK_PARAM_SCALE = 0.3  # Std of the noise added to parameters before a model-level check
