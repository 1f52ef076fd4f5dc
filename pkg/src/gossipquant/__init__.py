"""Decentralized gossip SGD with adaptive codebook quantization.

Simulates synchronized rounds of local SGD plus quantized differential
exchange over a doubly stochastic mixing matrix, with bit-budget
accounting and closed-form convergence calculators.
"""

from .engine import AdaptiveLevels, MetricsLog, RunConfig, run_simulation
from .kernels import BACKEND as KERNEL_BACKEND
from .learning import Dataset, Model, gen_synthetic, partition_noniid
from .quantizers import LevelTable, QuantizerKind, dequantize, fit_lloyd_max, quantize_vector
from .topology import MixingMatrix, build_mixing, zeta

__version__ = "0.1.0"
__all__ = [
    "AdaptiveLevels",
    "MetricsLog",
    "RunConfig",
    "run_simulation",
    "KERNEL_BACKEND",
    "Dataset",
    "Model",
    "gen_synthetic",
    "partition_noniid",
    "LevelTable",
    "QuantizerKind",
    "dequantize",
    "fit_lloyd_max",
    "quantize_vector",
    "MixingMatrix",
    "build_mixing",
    "zeta",
    "__version__",
]
