"""Classical noise realizations on a uniform time grid."""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import fft, signal

from coherence_protection import model
from coherence_protection.utils import ShapeError, write_csv

log = logging.getLogger(__name__)

SPECTRAL_MARGIN = 4.0
NEGATIVE_DENSITY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 0.01
    n_steps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Time step must be positive, got {self.dt=}")
        if self.n_steps < 1:
            raise ValueError(f"Time grid needs at least one step, got {self.n_steps=}")

    @classmethod
    def from_horizon(cls, T, dt, t0=0.0):
        return cls(t0=t0, dt=dt, n_steps=int(round(T / dt)))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def T(self):
        return self.dt * self.n_steps

    def halved(self):
        """Same span at half the step, so RK4 stage points land on samples."""
        return TimeGrid(self.t0, self.dt / 2, 2 * self.n_steps)


@dataclass(frozen=True, eq=False)
class NoisePath:
    grid: TimeGrid
    values: np.ndarray
    spec_tag: model.ClassicalNoiseSpec = None

    def __post_init__(self):
        values = np.array(self.values)
        if values.shape != (self.grid.n_steps + 1,):
            raise ShapeError(
                f"Path length does not match grid: {values.shape=}, expected ({self.grid.n_steps + 1},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Noise path contains non-finite samples")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def times(self):
        return self.grid.times


class CorrelationEstimate(NamedTuple):
    tau: np.ndarray
    value: np.ndarray
    stderr: np.ndarray


def split_seed(base_seed, index, stream=0):
    """Counter-based seed for trajectory `index`, independent of scheduling."""
    sequence = np.random.SeedSequence([int(base_seed), int(stream)], spawn_key=(int(index),))
    return int(sequence.generate_state(1, np.uint64)[0])


def sample_ou(Gamma, gamma, grid, seed, spec_tag=None):
    """Stationary OU path via the exact AR(1) update x[n+1] = x[n] exp(-gamma dt) + sigma sqrt(1 - exp(-2 gamma dt)) w[n]."""
    if gamma <= 0:
        raise ValueError(f"OU inverse memory time must be positive, got {gamma=}")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(Gamma * gamma / 2)
    decay = np.exp(-gamma * grid.dt)
    drive = np.empty(grid.n_steps + 1)
    drive[0] = sigma * rng.standard_normal()
    drive[1:] = sigma * np.sqrt(1 - decay**2) * rng.standard_normal(grid.n_steps)
    values = signal.lfilter([1.0], [1.0, -decay], drive)
    return NoisePath(grid, values, spec_tag)


def sample_telegraph(p, amplitude, flip_interval, grid, seed, spec_tag=None):
    if not 0 <= p <= 1:
        raise ValueError(f"Flip probability must lie in [0, 1], got {p=}")
    if flip_interval is None:
        flip_interval = grid.dt
    rng = np.random.default_rng(seed)
    interval = np.floor((grid.times - grid.t0) / flip_interval + 1e-9).astype(int)
    n_intervals = interval[-1] + 1
    first = rng.choice([-1.0, 1.0])
    flips = rng.random(n_intervals - 1) < p
    signs = first * np.concatenate([[1.0], np.where(np.cumsum(flips) % 2 == 1, -1.0, 1.0)])
    return NoisePath(grid, amplitude * signs[interval], spec_tag)


def constant_offset(c, grid, spec_tag=None):
    return NoisePath(grid, np.full(grid.n_steps + 1, float(c)), spec_tag)


def _lag_correlation(target, lags, dt):
    match target.kind:
        case "delta":
            # discrete delta: all weight on lag 0
            return np.where(lags == 0, target.Gamma / dt, 0.0)
        case "tabulated":
            inside = lags <= target.tau[-1]
            values = np.zeros(len(lags), dtype=np.asarray(target.values).dtype)
            values[inside] = model.ou_correlation(target, lags[inside])
            return values
        case _:
            return model.ou_correlation(target, lags)


def sample_spectral(target, grid, seed, spec_tag=None):
    """Complex Gaussian path with <z(t) z*(s)> = alpha(t - s), built by filtering complex white noise.

    The power spectrum is the DFT of alpha on a circular lag grid padded by SPECTRAL_MARGIN memory times on
    each side; the padding is dropped after synthesis.
    """
    memory = target.memory_time
    if memory >= grid.T / 4:
        raise ValueError(f"Memory time {memory} too long for a grid spanning {grid.T}")
    margin = int(np.ceil(SPECTRAL_MARGIN * memory / grid.dt))
    n_samples = grid.n_steps + 1
    n_fft = fft.next_fast_len(n_samples + 2 * margin)

    k = np.arange(n_fft)
    lags = np.minimum(k, n_fft - k) * grid.dt
    correlation = _lag_correlation(target, lags, grid.dt)
    density = fft.fft(correlation).real
    if density.min() < -NEGATIVE_DENSITY_TOLERANCE * max(density.max(), 1.0):
        raise ValueError(
            f"Correlation {target.kind!r} has a negative spectral density ({density.min():.3g})"
        )
    if density.min() < 0:
        log.warning("clipping negative spectral density %.3g to zero", density.min())
    kernel = np.sqrt(np.clip(density, 0, None))

    rng = np.random.default_rng(seed)
    white = (rng.standard_normal(n_fft) + 1j * rng.standard_normal(n_fft)) / np.sqrt(2)
    values = fft.ifft(kernel * fft.fft(white))
    return NoisePath(grid, values[margin : margin + n_samples], spec_tag)


def sample_path(spec, grid, seed, default_flip_interval=None):
    """Samples the real noise of a classical channel; spectral paths are projected to sqrt(2) Re(z)."""
    match spec.process:
        case "ou":
            return sample_ou(spec.Gamma, spec.gamma, grid, seed, spec)
        case "telegraph":
            flip_interval = spec.flip_interval or default_flip_interval
            return sample_telegraph(spec.p, spec.amplitude, flip_interval, grid, seed, spec)
        case "constant":
            return constant_offset(spec.offset, grid, spec)
        case "spectral":
            path = sample_spectral(spec.correlation, grid, seed)
            return NoisePath(grid, np.sqrt(2) * path.values.real, spec)
        case _:
            raise ValueError(f"Unknown noise process {spec.process!r}")


def estimate_correlation(paths, max_lag):
    """Estimates <x(t + tau) x*(t)> for lags 0..max_lag, averaged over t and paths.

    stderr is the path-to-path spread of the per-path time averages.
    """
    paths = list(paths)
    if len(paths) < 2:
        raise ValueError(f"Need at least two paths, got {len(paths)}")
    grid = paths[0].grid
    if any(path.grid != grid for path in paths):
        raise ShapeError("All paths must share the same time grid")
    if not 0 <= max_lag <= grid.n_steps:
        raise ShapeError(f"{max_lag=} outside the grid with {grid.n_steps} steps")

    x = np.stack([path.values for path in paths])
    n = x.shape[1]
    per_path = np.stack(
        [np.mean(x[:, lag:] * np.conj(x[:, : n - lag]), axis=1) for lag in range(max_lag + 1)],
        axis=1,
    )
    if not np.iscomplexobj(x):
        per_path = per_path.real
    value = per_path.mean(axis=0)
    return CorrelationEstimate(np.arange(max_lag + 1) * grid.dt, value, _stderr(per_path))


def _stderr(samples):
    spread = np.sqrt(np.var(samples.real, axis=0, ddof=1) + np.var(samples.imag, axis=0, ddof=1))
    return spread / np.sqrt(samples.shape[0])


def write_paths_csv(paths, path, config_hash=""):
    frames = [
        pd.DataFrame(
            {
                "path": index,
                "t": noise.times,
                "value_re": np.real(noise.values),
                "value_im": np.imag(noise.values),
            }
        )
        for index, noise in enumerate(paths)
    ]
    frame = pd.concat(frames, ignore_index=True)
    write_csv(frame, path, config_hash)
    return frame
