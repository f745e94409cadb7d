"""Nonlinear modal analysis of base-excited beams: reference backbones, virtual
phase-resonance tests, damping identification and reduced-order forced responses."""

from ._nlmodal import (
    Config,
    NlmodalError,
    compare_files,
    damping_model_based,
    damping_model_free,
    epmc_backbone,
    forced_response,
    linear_frequencies,
    list_experiments,
    load_config,
    parse_config,
    read_table,
    run_experiment,
)

__all__ = [
    "Config",
    "NlmodalError",
    "compare_files",
    "damping_model_based",
    "damping_model_free",
    "epmc_backbone",
    "forced_response",
    "linear_frequencies",
    "list_experiments",
    "load_config",
    "parse_config",
    "read_table",
    "run_experiment",
]
