"""Scalar and vector quantizers, codebook fitting, and distortion tools."""

from .codebook import EmpiricalCdf, LevelTable, alq_coordinate_step, fit_lloyd_max, quantize_scalar_lm
from .distortion import distortion_bound, empirical_distortion, empirical_scalar_mse, level_ratio
from .stochastic import natural_scalar, qsgd_scalar, stochastic_round_indices
from .vector import (
    LOSSLESS_LEVEL_COUNT,
    QuantizedVector,
    QuantizerKind,
    dequantize,
    encoded_bits,
    natural_level_table,
    pack_codebook,
    pack_payload,
    qsgd_level_table,
    quantize_vector,
    unpack_codebook,
    unpack_payload,
    wire_bits,
)

__all__ = [
    "EmpiricalCdf",
    "LevelTable",
    "alq_coordinate_step",
    "fit_lloyd_max",
    "quantize_scalar_lm",
    "distortion_bound",
    "empirical_distortion",
    "empirical_scalar_mse",
    "level_ratio",
    "natural_scalar",
    "qsgd_scalar",
    "stochastic_round_indices",
    "LOSSLESS_LEVEL_COUNT",
    "QuantizedVector",
    "QuantizerKind",
    "dequantize",
    "encoded_bits",
    "natural_level_table",
    "pack_codebook",
    "pack_payload",
    "qsgd_level_table",
    "quantize_vector",
    "unpack_codebook",
    "unpack_payload",
    "wire_bits",
]
