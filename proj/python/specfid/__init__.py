"""Spectral fidelity of low-bit quantization.

Thin wrapper over the compiled ``_specfid`` extension. Matrices are 2-D
float64 NumPy arrays; schemes are preset names or dicts in the config JSON
layout; verification configs are None, a JSON string or a dict.
"""

from . import _specfid
from ._specfid import (
    ConfigError,
    DataError,
    DomainError,
    Error,
    FormatError,
    IndexError,
    IoError,
    ShapeError,
    TruncationError,
    bbp_map,
    bbp_threshold,
    bernstein_tail_bound,
    decode_tensor,
    default_config,
    e2m1_grid,
    embedding_matrix,
    encode_tensor,
    energy_concentration,
    error_stats,
    failure_profile,
    fit_power_law,
    invert_tail_bound,
    load_matrix,
    mp_bulk_edge,
    noise_level,
    power_law_spectrum,
    prescribed_spectrum_matrix,
    quantize,
    quantize_scalar,
    run_full_suite,
    run_protocol,
    save_tensor,
    singular_values,
    spectral_norm,
    stable_rank,
    stieltjes_discrete,
    stieltjes_gap,
    stieltjes_white,
    weyl_gap,
    zipf_probabilities,
)

__version__ = "0.1.0"

# IndexError stays reachable as specfid.IndexError but is left out of
# star-imports so it does not shadow the builtin.
__all__ = [n for n in dir(_specfid) if not n.startswith("_") and n != "IndexError"]
