import numpy as np
import pandas as pd
import pytest
from scipy import stats

from coherence_protection import noise_gen
from coherence_protection.model import ClassicalNoiseSpec, CorrelationSpec
from coherence_protection.noise_gen import NoisePath, TimeGrid
from coherence_protection.utils import ShapeError


def ou_paths(n_paths, grid, Gamma=1.0, gamma=1.0, base_seed=0):
    return [
        noise_gen.sample_ou(Gamma, gamma, grid, noise_gen.split_seed(base_seed, i))
        for i in range(n_paths)
    ]


def test_time_grid():
    grid = TimeGrid.from_horizon(2.0, 0.5)
    np.testing.assert_allclose(grid.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    half = grid.halved()
    assert half.n_steps == 8 and half.dt == 0.25 and half.T == pytest.approx(2.0)
    with pytest.raises(ValueError):
        TimeGrid(dt=0.0)


def test_noise_path_validation():
    grid = TimeGrid(0.0, 0.1, 4)
    with pytest.raises(ShapeError):
        NoisePath(grid, np.zeros(4))
    with pytest.raises(ValueError):
        NoisePath(grid, [0.0, np.nan, 0.0, 0.0, 0.0])
    path = NoisePath(grid, np.zeros(5))
    with pytest.raises(ValueError):
        path.values[0] = 1.0


def test_split_seed():
    assert noise_gen.split_seed(7, 3) == noise_gen.split_seed(7, 3)
    seeds = {noise_gen.split_seed(7, i) for i in range(100)}
    assert len(seeds) == 100
    assert noise_gen.split_seed(7, 3, stream=1) != noise_gen.split_seed(7, 3)
    assert noise_gen.split_seed(8, 3) != noise_gen.split_seed(7, 3)


def test_ou_same_seed_same_path():
    grid = TimeGrid(0.0, 0.01, 100)
    a = noise_gen.sample_ou(1.0, 1.0, grid, 42)
    b = noise_gen.sample_ou(1.0, 1.0, grid, 42)
    np.testing.assert_array_equal(a.values, b.values)


def test_ou_statistics():
    grid = TimeGrid.from_horizon(20.0, 0.01)
    estimate = noise_gen.estimate_correlation(ou_paths(2000, grid), max_lag=100)
    assert estimate.value[0] == pytest.approx(0.5, rel=0.05)
    assert estimate.value[100] == pytest.approx(0.5 * np.exp(-1), rel=0.1)


@pytest.mark.slow
def test_ou_statistics_many_paths():
    grid = TimeGrid.from_horizon(20.0, 0.01)
    paths = ou_paths(10_000, grid)
    estimate = noise_gen.estimate_correlation(paths, max_lag=100)
    assert estimate.value[0] == pytest.approx(0.5, rel=0.05)
    assert estimate.value[100] == pytest.approx(0.5 * np.exp(-1), rel=0.05)


def test_ou_is_stationary():
    grid = TimeGrid.from_horizon(20.0, 0.01)
    values = np.stack([path.values for path in ou_paths(4000, grid, base_seed=5)])
    n = values.shape[1]
    early, late = values[:, n // 8], values[:, 7 * n // 8]
    var_early, var_late = early.var(ddof=1), late.var(ddof=1)
    stderr = np.hypot(var_early, var_late) * np.sqrt(2 / (len(early) - 1))
    assert abs(var_early - var_late) <= 3 * stderr
    assert values[:, 0].var(ddof=1) == pytest.approx(0.5, rel=0.1)


def test_ou_is_gaussian():
    grid = TimeGrid.from_horizon(100.0, 0.1)
    samples = np.concatenate([path.values[::10] for path in ou_paths(2000, grid)])
    assert abs(stats.kurtosis(samples)) < 0.1
    assert abs(stats.skew(samples)) < 0.05


def test_spectral_matches_ou():
    grid = TimeGrid.from_horizon(20.0, 0.01)
    target = CorrelationSpec.ou(1.0, 1.0)
    spectral = [noise_gen.sample_spectral(target, grid, noise_gen.split_seed(1, i)) for i in range(2000)]
    ou = noise_gen.estimate_correlation(ou_paths(2000, grid, base_seed=2), max_lag=2)
    estimate = noise_gen.estimate_correlation(spectral, max_lag=2)
    combined = np.sqrt(estimate.stderr**2 + ou.stderr**2)
    assert np.all(np.abs(estimate.value - ou.value) <= 3 * combined)
    np.testing.assert_allclose(estimate.value.real, 0.5 * np.exp(-estimate.tau), rtol=0.05)


def test_spectral_white_noise():
    grid = TimeGrid(0.0, 0.01, 1999)
    target = CorrelationSpec.delta(1.0)
    paths = [noise_gen.sample_spectral(target, grid, seed) for seed in range(50)]
    estimate = noise_gen.estimate_correlation(paths, max_lag=1)
    assert estimate.value[0].real == pytest.approx(1.0 / grid.dt, rel=0.05)
    assert abs(estimate.value[0]) > 50 * abs(estimate.value[1])


def test_spectral_memory_too_long():
    with pytest.raises(ValueError):
        noise_gen.sample_spectral(CorrelationSpec.ou(1.0, 0.1), TimeGrid.from_horizon(20.0, 0.01), 0)


def test_spectral_sum_ou_variance():
    grid = TimeGrid.from_horizon(40.0, 0.02)
    target = CorrelationSpec.sum_ou([(1.0, 1.0, 1.0), (1.0, 2.0, 4.0)])
    paths = [noise_gen.sample_spectral(target, grid, seed) for seed in range(400)]
    estimate = noise_gen.estimate_correlation(paths, max_lag=0)
    assert estimate.value[0].real == pytest.approx(0.5 + 4.0, rel=0.05)


def test_telegraph_values():
    grid = TimeGrid(0.0, 0.1, 30)
    held = noise_gen.sample_telegraph(0.0, 0.5, None, grid, 3)
    assert np.all(held.values == held.values[0])
    assert abs(held.values[0]) == 0.5
    flipping = noise_gen.sample_telegraph(1.0, 0.5, None, grid, 3)
    np.testing.assert_array_equal(flipping.values[1:], -flipping.values[:-1])


def test_telegraph_flip_interval():
    grid = TimeGrid(0.0, 0.1, 30)
    path = noise_gen.sample_telegraph(1.0, 1.0, 0.3, grid, 5)
    blocks = path.values[:30].reshape(10, 3)
    assert np.all(blocks == blocks[:, :1])
    np.testing.assert_array_equal(blocks[1:, 0], -blocks[:-1, 0])


@pytest.mark.parametrize("p, expected", [(0.5, 0.0), (0.1, 0.8)])
def test_telegraph_correlation(p, expected):
    grid = TimeGrid(0.0, 0.1, 999)
    paths = [noise_gen.sample_telegraph(p, 2.0, None, grid, seed) for seed in range(200)]
    estimate = noise_gen.estimate_correlation(paths, max_lag=1)
    assert estimate.value[0] == pytest.approx(4.0)
    assert estimate.value[1] / estimate.value[0] == pytest.approx(expected, abs=0.02)


def test_constant_offset():
    path = noise_gen.constant_offset(-0.05, TimeGrid(0.0, 0.1, 3))
    np.testing.assert_array_equal(path.values, [-0.05] * 4)


def test_sample_path_dispatch():
    grid = TimeGrid.from_horizon(10.0, 0.05)
    spectral = ClassicalNoiseSpec(channel="xi", process="spectral", correlation=CorrelationSpec.ou(1.0, 2.0))
    path = noise_gen.sample_path(spectral, grid, 0)
    assert not np.iscomplexobj(path.values)
    assert path.spec_tag is spectral

    telegraph = ClassicalNoiseSpec(channel="xi", process="telegraph", amplitude=1.0, p=1.0)
    path = noise_gen.sample_path(telegraph, grid, 0, default_flip_interval=0.1)
    assert path.values[0] == path.values[1] == -path.values[2]

    constant = ClassicalNoiseSpec(channel="xi", process="constant", offset=0.05)
    np.testing.assert_array_equal(noise_gen.sample_path(constant, grid, 0).values, 0.05)


def test_spectral_real_projection_variance():
    grid = TimeGrid.from_horizon(20.0, 0.05)
    spec = ClassicalNoiseSpec(channel="eta", process="spectral", correlation=CorrelationSpec.ou(1.0, 2.0))
    paths = [noise_gen.sample_path(spec, grid, seed) for seed in range(1000)]
    estimate = noise_gen.estimate_correlation(paths, max_lag=0)
    assert estimate.value[0] == pytest.approx(1.0, rel=0.05)


def test_estimate_correlation_errors():
    grid = TimeGrid(0.0, 0.1, 10)
    path = noise_gen.constant_offset(1.0, grid)
    with pytest.raises(ValueError):
        noise_gen.estimate_correlation([path], max_lag=1)
    with pytest.raises(ShapeError):
        noise_gen.estimate_correlation([path, noise_gen.constant_offset(1.0, TimeGrid(0.0, 0.1, 11))], 1)
    with pytest.raises(ShapeError):
        noise_gen.estimate_correlation([path, path], max_lag=11)


def test_write_paths_csv(tmp_path):
    grid = TimeGrid(0.0, 0.1, 4)
    paths = [noise_gen.sample_ou(1.0, 1.0, grid, seed) for seed in range(3)]
    target = tmp_path / "noise.csv"
    noise_gen.write_paths_csv(paths, target, "abc")
    assert target.read_text().splitlines()[0].endswith("config_hash=abc")
    frame = pd.read_csv(target, comment="#")
    assert list(frame.columns) == ["path", "t", "value_re", "value_im"]
    assert len(frame) == 15
    np.testing.assert_allclose(frame.value_re[frame.path == 2], paths[2].values)
