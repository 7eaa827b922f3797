"""Configuration documents, figure presets and their validation."""
import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from coherence_protection import model
from coherence_protection.ensemble import EnsembleConfig
from coherence_protection.utils import ConfigError, Constants

SECTIONS = ("model", "bath", "classical_noise", "sim", "output")

# key -> accepted type; keys listed in NULLABLE may also be null
SCHEMA = {
    "model": {"omega0": float, "Omega": float, "G0": float, "kx0": float, "n_max": int, "init_atom": list},
    "bath": {"kind": str, "Gamma": float, "gamma": float, "components": list, "tau": list, "values": list},
    "classical_noise": {
        "channel": str,
        "process": str,
        "Gamma": float,
        "gamma": float,
        "p": float,
        "amplitude": float,
        "flip_interval": float,
        "offset": float,
        "correlation": dict,
        "seed_stream": int,
        "rotated_frame": bool,
    },
    "sim": {
        "n_traj": int,
        "base_seed": int,
        "T": float,
        "dt": float,
        "record_stride": int,
        "solver": str,
        "Gamma3": float,
        "chunk_size": int,
        "workers": int,
        "dt_f": float,
    },
    "output": {
        "preset": str,
        "dir": str,
        "sweep_key": str,
        "sweep_values": list,
        "factors": dict,
        "full_stderr": bool,
    },
}
NULLABLE = {
    "classical_noise.amplitude",
    "classical_noise.flip_interval",
    "classical_noise.correlation",
    "output.sweep_key",
}
REQUIRED_KEYS = (
    "model.G0",
    "model.kx0",
    "bath.kind",
    "bath.Gamma",
    "classical_noise.channel",
    "sim.n_traj",
    "sim.T",
    "sim.dt",
)
GAMMA_SWEEP = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0]


def _correlation_document(spec):
    return {
        "kind": spec.kind,
        "Gamma": float(spec.Gamma),
        "gamma": float(spec.gamma),
        "components": [list(c) for c in spec.components],
        "tau": list(spec.tau),
        "values": [float(v) for v in spec.values],
    }


def config_document(config, dt_f=0.05):
    """Nested document of every EnsembleConfig field; the output section is left to the caller."""
    params, classical = config.params, config.classical
    return {
        "model": {
            "omega0": params.omega0,
            "Omega": params.Omega,
            "G0": params.G0,
            "kx0": params.kx0,
            "n_max": params.n_max,
            "init_atom": [[c.real, c.imag] for c in params.init_atom],
        },
        "bath": _correlation_document(config.alpha1),
        "classical_noise": {
            "channel": classical.channel,
            "process": classical.process,
            "Gamma": classical.Gamma,
            "gamma": classical.gamma,
            "p": classical.p,
            "amplitude": classical.amplitude,
            "flip_interval": classical.flip_interval,
            "offset": classical.offset,
            "correlation": None if classical.correlation is None else _correlation_document(classical.correlation),
            "seed_stream": classical.seed_stream,
            "rotated_frame": classical.rotated_frame,
        },
        "sim": {
            "n_traj": config.n_traj,
            "base_seed": config.base_seed,
            "T": config.T,
            "dt": config.dt,
            "record_stride": config.record_stride,
            "solver": config.solver,
            "Gamma3": config.Gamma3,
            "chunk_size": config.chunk_size,
            "workers": config.workers,
            "dt_f": dt_f,
        },
    }


DEFAULTS = {
    **config_document(EnsembleConfig()),
    "output": {
        "preset": "custom",
        "dir": ".",
        "sweep_key": None,
        "sweep_values": [],
        "factors": {},
        "full_stderr": False,
    },
}


def _preset(name, **sections):
    document = copy.deepcopy(DEFAULTS)
    document["output"]["preset"] = name
    for section, values in sections.items():
        document[section].update(values)
    return document


def _custom():
    document = _preset("custom")
    for key in REQUIRED_KEYS:
        section, name = key.split(".")
        del document[section][name]
    return document


PRESETS = {
    "fig2_xi_surface": _preset(
        "fig2_xi_surface",
        classical_noise={"channel": Constants.CHANNEL_XI},
        output={"sweep_key": "classical_noise.gamma", "sweep_values": GAMMA_SWEEP},
    ),
    "fig3_frozen_offsets": _preset(
        "fig3_frozen_offsets",
        classical_noise={"channel": Constants.CHANNEL_XI, "process": "constant"},
        output={"sweep_key": "classical_noise.offset", "sweep_values": [0.05, -0.05]},
    ),
    "fig4_thresholds": _preset(
        "fig4_thresholds",
        bath={"gamma": 0.5},
        classical_noise={"channel": Constants.CHANNEL_XI},
        sim={"n_traj": 500},
        output={
            "sweep_key": "classical_noise.gamma",
            "sweep_values": GAMMA_SWEEP,
            "factors": {
                "bath.gamma": [0.2, 0.5, 1.0, 2.0, 5.0],
                "model.kx0": [0.02, 0.04, 0.08, 0.16, 0.32],
                "bath.Gamma": [0.25, 0.5, 1.0, 2.0, 4.0],
            },
        },
    ),
    "fig5_eta_surface": _preset(
        "fig5_eta_surface",
        model={"G0": 0.1, "kx0": math.pi / 2},
        classical_noise={"channel": Constants.CHANNEL_ETA, "rotated_frame": True},
        output={"sweep_key": "classical_noise.gamma", "sweep_values": GAMMA_SWEEP},
    ),
    "fig6_coherence_vs_negativity": _preset(
        "fig6_coherence_vs_negativity",
        model={"kx0": 0.1},
        bath={"Gamma": 0.5, "gamma": 1.0},
        classical_noise={"channel": Constants.CHANNEL_XI, "gamma": 10.0},
        output={"sweep_key": "classical_noise.Gamma", "sweep_values": [0.0, 0.5, 1.0, 2.0]},
    ),
    "figFi_fcoefficients": _preset(
        "figFi_fcoefficients",
        bath={"gamma": 0.5},
        sim={"T": 20.0, "dt_f": 0.05},
    ),
    # the telegraph amplitude has no published value and must be given explicitly
    "fig8_telegraph": _preset(
        "fig8_telegraph",
        classical_noise={"channel": Constants.CHANNEL_XI, "process": "telegraph"},
        output={"sweep_key": "classical_noise.p", "sweep_values": [0.1, 0.25, 0.5, 0.75, 1.0]},
    ),
    "custom": _custom(),
}


@dataclass(frozen=True)
class ExperimentPreset:
    """A named parameter set plus the explicit "section.key" overrides read from a document."""

    name: str = "custom"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in PRESETS:
            raise ValueError(f"Unknown preset {self.name!r}, expected one of {tuple(PRESETS)}")

    def document(self):
        document = copy.deepcopy(PRESETS[self.name])
        for key, value in self.overrides.items():
            section, name = key.split(".", 1)
            document.setdefault(section, {})[name] = copy.deepcopy(value)
        return document

    @property
    def output(self):
        return self.document()["output"]

    @property
    def dt_f(self):
        return self.document()["sim"]["dt_f"]

    def config(self):
        return build_config(self.document())


def _coerce(key, value, kind):
    """Returns (value, problem) with value converted to the schema type."""
    if value is None:
        return None, None if key in NULLABLE else "must not be null"
    match kind.__name__, value:
        case "float", bool():
            pass
        case "float", int() | float():
            return float(value), None
        case "int", bool():
            pass
        case "int", int():
            return value, None
        case ("str", str()) | ("bool", bool()) | ("list", list() | tuple()) | ("dict", dict()):
            return value, None
    return value, f"expected {kind.__name__}, got {type(value).__name__} {value!r}"


def _complex(value):
    match value:
        case bool():
            raise TypeError(f"not an amplitude: {value!r}")
        case int() | float():
            return complex(value)
        case [re, im]:
            return complex(float(re), float(im))
        case _:
            raise TypeError(f"not an amplitude: {value!r}")


def _build_correlation(section, prefix, problems):
    try:
        match section.get("kind"):
            case "ou":
                return model.CorrelationSpec.ou(section["Gamma"], section["gamma"])
            case "delta":
                return model.CorrelationSpec.delta(section["Gamma"])
            case "sum_ou":
                return model.CorrelationSpec.sum_ou([tuple(c) for c in section.get("components", [])])
            case "tabulated":
                return model.CorrelationSpec.tabulated(section.get("tau", []), section.get("values", []))
            case kind:
                problems.append((f"{prefix}.kind", f"unknown correlation kind {kind!r}"))
    except (ValueError, TypeError, KeyError) as e:
        problems.append((prefix, str(e)))
    return None


def _check_sweeps(output, problems):
    def check(key, values, path):
        if key.count(".") != 1 or key.split(".")[1] not in SCHEMA.get(key.split(".")[0], {}):
            problems.append((path, f"unknown sweep key {key!r}"))
        elif SCHEMA[key.split(".")[0]][key.split(".")[1]] is not float:
            problems.append((path, f"sweep key {key!r} is not numeric"))
        if not isinstance(values, (list, tuple)) or not values:
            problems.append((path, "needs a non-empty list of values"))
        elif any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            problems.append((path, f"sweep values must be numbers, got {values!r}"))

    if output.get("sweep_key") is not None:
        check(output["sweep_key"], output.get("sweep_values"), "output.sweep_values")
    for key, values in output.get("factors", {}).items():
        check(key, values, f"output.factors.{key}")


def build_config(document):
    """Validates a merged document and builds the EnsembleConfig; every problem is reported at once."""
    problems = []
    document = copy.deepcopy(document)
    for key in REQUIRED_KEYS:
        section, name = key.split(".")
        if name not in document.get(section, {}):
            problems.append((key, "missing required key"))
    for section, body in document.items():
        for name, value in body.items():
            body[name], problem = _coerce(f"{section}.{name}", value, SCHEMA[section][name])
            if problem:
                problems.append((f"{section}.{name}", problem))
    if problems:
        raise ConfigError(problems)

    model_section, noise, sim = document["model"], document["classical_noise"], document["sim"]
    params = alpha1 = classical = None
    try:
        init_atom = tuple(_complex(c) for c in model_section["init_atom"])
        params = model.ModelParams(**{**model_section, "init_atom": init_atom})
    except (ValueError, TypeError) as e:
        problems.append(("model", str(e)))
    alpha1 = _build_correlation(document["bath"], "bath", problems)

    correlation = None
    if noise["correlation"] is not None:
        unknown = set(noise["correlation"]) - set(SCHEMA["bath"])
        problems.extend((f"classical_noise.correlation.{k}", "unknown key") for k in sorted(unknown))
        correlation = _build_correlation(
            {**DEFAULTS["bath"], **noise["correlation"]}, "classical_noise.correlation", problems
        )
    if noise["channel"] != Constants.CHANNEL_NONE and noise["process"] == "telegraph" and noise["amplitude"] is None:
        problems.append(("classical_noise.amplitude", "required for telegraph noise"))
    else:
        try:
            classical = model.ClassicalNoiseSpec(**{**noise, "correlation": correlation})
        except ValueError as e:
            problems.append(("classical_noise", str(e)))
    _check_sweeps(document["output"], problems)
    if problems:
        raise ConfigError(problems)

    sim = {k: v for k, v in sim.items() if k != "dt_f"}
    try:
        return EnsembleConfig(params=params, alpha1=alpha1, classical=classical, **sim)
    except ValueError as e:
        raise ConfigError([("sim", str(e))]) from e


def parse_document(document):
    """Resolves a raw document against its preset; returns (EnsembleConfig, ExperimentPreset)."""
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError([("<document>", f"expected a mapping of sections, got {type(document).__name__}")])
    problems = []
    overrides = {}
    for section, body in document.items():
        if section not in SCHEMA:
            problems.append((str(section), f"unknown section, expected one of {SECTIONS}"))
        elif not isinstance(body, dict):
            problems.append((section, "expected a mapping of keys"))
        else:
            for name, value in body.items():
                if name not in SCHEMA[section]:
                    problems.append((f"{section}.{name}", "unknown key"))
                elif (section, name) != ("output", "preset"):
                    overrides[f"{section}.{name}"] = value
    output = document.get("output")
    name = output.get("preset", "custom") if isinstance(output, dict) else "custom"
    if name not in PRESETS:
        problems.append(("output.preset", f"unknown preset {name!r}, expected one of {tuple(PRESETS)}"))
    if problems:
        raise ConfigError(problems)
    preset = ExperimentPreset(name, overrides)
    return preset.config(), preset


def load_document(path):
    path = Path(path)
    try:
        return yaml.safe_load(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError([(str(path), "file not found")]) from e
    except yaml.YAMLError as e:
        raise ConfigError([(str(path), f"not a valid YAML document: {e}")]) from e


def parse_config(path):
    return parse_document(load_document(path))


def emit_document(config, preset):
    document = config_document(config, dt_f=preset.dt_f)
    document["output"] = preset.output
    return document


def emit_config(config, preset, path):
    """Writes a document that parses back to an equal EnsembleConfig."""
    path = Path(path)
    path.write_text(yaml.safe_dump(emit_document(config, preset), sort_keys=False))
    return path


def override(config, key, value, dt_f=0.05):
    """Returns config with one "section.key" replaced, validated like a document value."""
    document = config_document(config, dt_f)
    section, name = key.split(".", 1)
    document[section][name] = value
    document["output"] = copy.deepcopy(DEFAULTS["output"])
    return build_config(document)


def without_noise(config):
    return replace(config, classical=model.ClassicalNoiseSpec())
