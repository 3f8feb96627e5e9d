"""Hash-table weight sharing for MLPs (ArbNets) with from-scratch training."""
from .arbnet import ArbLinear, BatchNorm, Network, WeightTable, build_network, load_checkpoint, save_checkpoint
from .errors import LoadError, UsageError
from .hashing import Assignment, HashSpec, build_assignment, conv_toeplitz_assignment, usage_entropy
from .numerics import RngStream

__version__ = "0.1.0"
