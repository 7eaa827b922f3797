__version__ = "0.1.0"

from coherence_protection import (
    cli,
    ensemble,
    evolve,
    exact1x,
    measures,
    model,
    noise_gen,
    o_operator,
    presets,
    utils,
)
from coherence_protection.ensemble import EnsembleConfig, EnsembleResult, run_ensemble
from coherence_protection.model import ClassicalNoiseSpec, CorrelationSpec, ModelParams
from coherence_protection.presets import ExperimentPreset, parse_config
