"""Monte Carlo averaging over classical noise realizations."""
import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import integrate, stats
from tqdm import tqdm

from coherence_protection import evolve, exact1x, measures, model, noise_gen, utils
from coherence_protection.utils import Constants, ShapeError

log = logging.getLogger(__name__)

SOLVERS = (Constants.SOLVER_EXACT, Constants.SOLVER_MEQ, Constants.SOLVER_LINDBLAD)


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble run; `workers` only affects scheduling, never the numbers."""

    params: model.ModelParams = field(default_factory=model.ModelParams)
    alpha1: model.CorrelationSpec = field(default_factory=model.CorrelationSpec)
    classical: model.ClassicalNoiseSpec = field(default_factory=model.ClassicalNoiseSpec)
    n_traj: int = 2000
    base_seed: int = 0
    T: float = 100.0
    dt: float = 0.01
    record_stride: int = 10
    solver: str = Constants.SOLVER_MEQ
    Gamma3: float = 0.0
    chunk_size: int = 64
    workers: int = 1

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj=}")
        if not (self.T > 0 and self.dt > 0):
            raise ValueError(f"Need T > 0 and dt > 0, got {self.T=}, {self.dt=}")
        if self.record_stride < 1 or self.chunk_size < 1 or self.workers < 1:
            raise ValueError(f"record_stride, chunk_size and workers must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"Unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.solver == Constants.SOLVER_LINDBLAD and self.classical.channel != Constants.CHANNEL_NONE:
            raise ValueError("The Lindblad solver runs without classical noise")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def deterministic(self):
        return self.classical.is_deterministic or self.solver == Constants.SOLVER_LINDBLAD

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        document = dataclasses.asdict(self)
        document["params"]["init_atom"] = [[c.real, c.imag] for c in self.params.init_atom]
        return document

    @property
    def config_hash(self):
        document = self.to_dict()
        document.pop("workers")
        return utils.config_digest(document)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    times: np.ndarray
    mean: measures.ObservableRecord
    stderr: dict
    n_traj: int
    config_hash: str
    rho_mean: np.ndarray = None
    config: EnsembleConfig = None

    def to_frame(self, full_stderr=False):
        frame = pd.DataFrame(
            {
                "t": self.times,
                "coherence_mean": self.mean.coherence,
                "coherence_stderr": self.stderr["coherence"],
                "purity_mean": self.mean.purity,
                "negativity_mean": self.mean.negativity,
                "pop_e_mean": self.mean.pop_e,
            }
        )
        if full_stderr:
            for name in Constants.OBSERVABLES[1:]:
                if f"{name}_mean" not in frame:
                    frame[f"{name}_mean"] = getattr(self.mean, name)
                frame[f"{name}_stderr"] = self.stderr[name]
        return frame


@dataclass
class _Sums:
    """Per-time sums of rho' and of the per-trajectory observable samples and their squared moduli."""

    rho: np.ndarray
    first: dict
    second: dict
    count: int

    @classmethod
    def from_states(cls, states, c_g):
        samples = _samples(states, c_g)
        return cls(
            rho=states.sum(axis=0),
            first={k: v.sum(axis=0) for k, v in samples.items()},
            second={k: (np.abs(v) ** 2).sum(axis=0) for k, v in samples.items()},
            count=states.shape[0],
        )

    def __add__(self, other):
        return _Sums(
            self.rho + other.rho,
            {k: self.first[k] + other.first[k] for k in self.first},
            {k: self.second[k] + other.second[k] for k in self.second},
            self.count + other.count,
        )


def _samples(states, c_g):
    rho_a = measures.partial_trace_cavity(states)
    record = measures.ObservableRecord.from_states(np.zeros(states.shape[-3]), states, c_g)
    return {
        "coherence": rho_a[..., 0, 1],
        "purity": record.purity,
        "negativity": record.negativity,
        "pop_e": record.pop_e,
        "pop_photon": record.pop_photon,
        "pop_bath_proxy": record.pop_bath_proxy,
    }


def _pairwise(parts):
    if len(parts) == 1:
        return parts[0]
    half = len(parts) // 2
    return _pairwise(parts[:half]) + _pairwise(parts[half:])


def sample_noise(config, seeds):
    """Noise paths on the dt/2 grid, one row per seed, or None without a classical channel."""
    if config.classical.channel == Constants.CHANNEL_NONE:
        return None
    grid = noise_gen.TimeGrid(0.0, config.dt, config.n_steps).halved()
    return np.stack(
        [
            noise_gen.sample_path(config.classical, grid, seed, default_flip_interval=config.dt).values
            for seed in seeds
        ]
    )


def trajectory_states(config, noise_values, seeds=None):
    """Recorded atom x cavity states (B, R, d, d), eta runs expressed in the frame co-rotating with the noise phase."""
    params, classical = config.params, config.classical
    stride = config.record_stride
    match config.solver:
        case Constants.SOLVER_LINDBLAD:
            run = evolve.run_lindblad(params, config.alpha1.Gamma, config.Gamma3, config.T, config.dt, stride)
            return run.states[None]
        case Constants.SOLVER_MEQ:
            run = evolve.run_trajectories(
                params, config.alpha1, noise_values, classical.channel, config.T, config.dt,
                stride, classical.rotated_frame, seeds,
            )
            states, phase = run.states, run.phase
        case Constants.SOLVER_EXACT:
            G, omega, phase = evolve.coefficient_paths(
                params, noise_values, classical.channel, config.dt / 2, classical.rotated_frame
            )
            run = exact1x.run_single_excitation(
                params, config.alpha1, G, np.asarray(omega) - params.Omega, config.T, config.dt, stride, seeds
            )
            states = exact1x.density_from_amplitudes(run.A, run.B, run.C, params.n_max)
            if phase is not None:
                phase = phase[..., :: 2 * stride][..., : len(run.times)]
    if states.ndim == 3:
        states = states[None]
    if phase is not None:
        states = evolve.corotate_eta(states, phase, params.n_max)
    return states


def run_chunk(config, start, stop):
    seeds = [_seed(config, i) for i in range(start, stop)]
    states = trajectory_states(config, sample_noise(config, seeds), seeds)
    log.debug("chunk [%d, %d) done", start, stop)
    return _Sums.from_states(states, config.params.init_atom[1])


def _seed(config, index):
    return noise_gen.split_seed(config.base_seed, index, config.classical.seed_stream)


def run_ensemble(config, progress=False):
    """Averages rho' over n_traj noise realizations, chunked independently of the worker count."""
    started = time.perf_counter()
    if config.deterministic:
        chunks = [(0, 1)]
    else:
        chunks = [(s, min(s + config.chunk_size, config.n_traj)) for s in range(0, config.n_traj, config.chunk_size)]
    log.info(
        "ensemble: solver=%s n_traj=%d chunks=%d workers=%d",
        config.solver, config.n_traj, len(chunks), config.workers,
    )
    if config.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = executor.map(run_chunk, *zip(*[(config, s, e) for s, e in chunks]))
            parts = list(tqdm(futures, total=len(chunks), disable=not progress, desc="trajectories"))
    else:
        parts = [run_chunk(config, s, e) for s, e in tqdm(chunks, disable=not progress, desc="trajectories")]

    sums = _pairwise(parts)
    n = sums.count
    rho_mean = sums.rho / n
    times = config.dt * config.record_stride * np.arange(rho_mean.shape[0])
    mean = measures.ObservableRecord.from_states(times, rho_mean, config.params.init_atom[1])
    if n > 1:
        stderr = {
            k: np.sqrt(np.clip(sums.second[k] / n - np.abs(sums.first[k] / n) ** 2, 0, None) / (n - 1))
            for k in sums.first
        }
    else:
        stderr = {k: np.zeros_like(times) for k in Constants.OBSERVABLES}
    log.info("ensemble finished in %.2fs", time.perf_counter() - started)
    return EnsembleResult(times, mean, stderr, config.n_traj, config.config_hash, rho_mean, config)


def combine_results(results, c_g=None):
    """Equal-weight mixture of independent ensembles, e.g. two frozen-noise branches."""
    results = list(results)
    _check_times(*results)
    if c_g is None:
        config = results[0].config
        c_g = config.params.init_atom[1] if config is not None else 1 / np.sqrt(2)
    rho_mean = np.mean([r.rho_mean for r in results], axis=0)
    mean = measures.ObservableRecord.from_states(results[0].times, rho_mean, c_g)
    stderr = {
        k: np.sqrt(np.sum([r.stderr[k] ** 2 for r in results], axis=0)) / len(results)
        for k in Constants.OBSERVABLES
    }
    config_hash = utils.config_digest([r.config_hash for r in results])
    return EnsembleResult(results[0].times, mean, stderr, sum(r.n_traj for r in results), config_hash, rho_mean)


def _check_times(*results):
    times = results[0].times
    for result in results[1:]:
        if result.times.shape != times.shape or not np.allclose(result.times, times):
            raise ShapeError(f"Mismatched time grids: {times.shape=} vs {result.times.shape=}")


def _horizon_mask(times, horizon):
    horizon = min(horizon, times[-1])
    return times <= horizon + 1e-9, horizon


def protection_metric(with_noise, baseline, horizon=Constants.PROTECTION_HORIZON):
    """Time-averaged coherence gain over [0, horizon]."""
    _check_times(with_noise, baseline)
    mask, horizon = _horizon_mask(with_noise.times, horizon)
    delta = with_noise.mean.coherence - baseline.mean.coherence
    return integrate.trapezoid(delta[mask], with_noise.times[mask]) / horizon


def protection_metric_stderr(with_noise, horizon=Constants.PROTECTION_HORIZON):
    """Upper bound on the metric's standard error: the time average of the coherence stderr."""
    mask, horizon = _horizon_mask(with_noise.times, horizon)
    return integrate.trapezoid(with_noise.stderr["coherence"][mask], with_noise.times[mask]) / horizon


def windowed_difference(with_noise, baseline, t_start, t_end):
    """Mean coherence difference over [t_start, t_end] and its stderr bound."""
    _check_times(with_noise, baseline)
    t = with_noise.times
    mask = (t >= t_start - 1e-9) & (t <= t_end + 1e-9)
    if np.count_nonzero(mask) < 2:
        raise ShapeError(f"Window [{t_start}, {t_end}] holds fewer than two samples of the grid [{t[0]}, {t[-1]}]")
    width = t[mask][-1] - t[mask][0]
    delta = with_noise.mean.coherence - baseline.mean.coherence
    return (
        integrate.trapezoid(delta[mask], t[mask]) / width,
        integrate.trapezoid(with_noise.stderr["coherence"][mask], t[mask]) / width,
    )


def difference_surface(sweep, baseline):
    """Long table of coherence and its difference to the baseline for each (sweep value, result) pair."""
    frames = []
    for value, result in sweep:
        _check_times(result, baseline)
        frames.append(
            pd.DataFrame(
                {
                    "sweep_value": value,
                    "t": result.times,
                    "coherence_mean": result.mean.coherence,
                    "coherence_stderr": result.stderr["coherence"],
                    "delta_vs_baseline": result.mean.coherence - baseline.mean.coherence,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def coherence_negativity_correlation(result, t_end=Constants.PROTECTION_HORIZON):
    mask = result.times <= t_end + 1e-9
    return stats.pearsonr(result.mean.coherence[mask], -result.mean.negativity[mask]).statistic


def write_result_csv(result, path, full_stderr=False):
    """Writes the ensemble table plus a JSON sidecar with the full configuration."""
    path = Path(path)
    utils.write_csv(result.to_frame(full_stderr), path, result.config_hash)
    sidecar = {
        "tool": Constants.TOOL_NAME,
        "config_hash": result.config_hash,
        "n_traj": result.n_traj,
        "config": None if result.config is None else result.config.to_dict(),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str))
    log.info("wrote %s", path)
    return path
