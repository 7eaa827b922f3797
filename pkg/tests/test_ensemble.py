import json

import numpy as np
import pandas as pd
import pytest

from coherence_protection import ensemble, evolve, measures, noise_gen
from coherence_protection.ensemble import EnsembleConfig, EnsembleResult
from coherence_protection.model import ClassicalNoiseSpec, CorrelationSpec, ModelParams
from coherence_protection.utils import Constants, ShapeError

XI_NOISE = ClassicalNoiseSpec(channel="xi", Gamma=1.0, gamma=1.0)


def small_config(**changes):
    config = EnsembleConfig(classical=XI_NOISE, n_traj=10, T=2.0, dt=0.01, record_stride=10, chunk_size=4)
    return config.replace(**changes)


def fake_result(times, coherence, negativity=None, stderr=0.0):
    times = np.asarray(times, dtype=float)
    coherence = np.broadcast_to(np.asarray(coherence, dtype=float), times.shape)
    negativity = np.zeros_like(times) if negativity is None else np.asarray(negativity, dtype=float)
    zeros = np.zeros_like(times)
    mean = measures.ObservableRecord(times, coherence, zeros, negativity, zeros, zeros, zeros)
    errors = {name: np.full_like(times, stderr) for name in Constants.OBSERVABLES}
    return EnsembleResult(times, mean, errors, 1, "hash")


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_traj=0)
    with pytest.raises(ValueError):
        EnsembleConfig(T=-1.0)
    with pytest.raises(ValueError):
        EnsembleConfig(solver="euler")
    with pytest.raises(ValueError):
        EnsembleConfig(solver="lindblad", classical=XI_NOISE)


def test_config_hash():
    config = small_config()
    assert config.config_hash == small_config(workers=4).config_hash
    assert config.config_hash != small_config(n_traj=11).config_hash
    assert config.config_hash != small_config(base_seed=1).config_hash
    assert len(config.config_hash) == 64


def test_deterministic_run_uses_one_trajectory():
    config = EnsembleConfig(n_traj=50, T=2.0, dt=0.01, record_stride=10)
    result = ensemble.run_ensemble(config)
    single = evolve.run_trajectory(config.params, config.alpha1, None, "none", T=2.0, dt=0.01, stride=10)
    np.testing.assert_allclose(result.rho_mean, single.states, atol=1e-15)
    for name in Constants.OBSERVABLES:
        np.testing.assert_array_equal(result.stderr[name], 0.0)
    assert result.n_traj == 50


def test_mean_is_average_of_trajectories():
    config = small_config()
    seeds = [noise_gen.split_seed(config.base_seed, i) for i in range(config.n_traj)]
    noise = ensemble.sample_noise(config, seeds)
    assert noise.shape == (10, 401)
    states = evolve.run_trajectories(config.params, config.alpha1, noise, "xi", 2.0, 0.01, 10).states
    result = ensemble.run_ensemble(config)
    np.testing.assert_allclose(result.rho_mean, states.mean(axis=0), atol=1e-14)
    rho_a = measures.partial_trace_cavity(states)
    expected = np.std(rho_a[..., 0, 1].real, axis=0, ddof=1) ** 2 + np.std(rho_a[..., 0, 1].imag, axis=0, ddof=1) ** 2
    np.testing.assert_allclose(result.stderr["coherence"], np.sqrt(expected / 10), rtol=1e-6, atol=1e-8)
    assert np.all(result.stderr["coherence"][1:] > 0)


def test_worker_count_independence():
    serial = ensemble.run_ensemble(small_config())
    parallel = ensemble.run_ensemble(small_config(workers=2))
    assert np.max(np.abs(serial.rho_mean - parallel.rho_mean)) <= 1e-14
    assert serial.config_hash == parallel.config_hash


def test_seed_reproducibility():
    a = ensemble.run_ensemble(small_config())
    b = ensemble.run_ensemble(small_config())
    c = ensemble.run_ensemble(small_config(base_seed=1))
    np.testing.assert_array_equal(a.rho_mean, b.rho_mean)
    assert np.max(np.abs(a.rho_mean - c.rho_mean)) > 0


def test_exact_solver_agrees_with_master_equation():
    config = small_config(classical=ClassicalNoiseSpec(channel="xi", Gamma=0.01, gamma=1.0), n_traj=8, T=10.0)
    meq = ensemble.run_ensemble(config)
    exact = ensemble.run_ensemble(config.replace(solver="exact1x"))
    np.testing.assert_allclose(exact.times, meq.times)
    assert np.max(np.abs(exact.mean.coherence - meq.mean.coherence)) <= 1e-3


def test_lindblad_solver():
    config = EnsembleConfig(solver="lindblad", Gamma3=0.1, T=5.0, dt=0.01)
    result = ensemble.run_ensemble(config)
    assert result.mean.coherence[0] == pytest.approx(0.5)
    assert result.mean.coherence[-1] < result.mean.coherence[0]


def test_eta_frames_agree_after_corotation():
    params = ModelParams(G0=0.1, kx0=np.pi / 2)
    eta = ClassicalNoiseSpec(channel="eta", Gamma=0.1, gamma=1.0)
    config = small_config(params=params, classical=eta, n_traj=4, T=5.0)
    direct = ensemble.run_ensemble(config)
    rotated_eta = ClassicalNoiseSpec(channel="eta", Gamma=0.1, gamma=1.0, rotated_frame=True)
    rotated = ensemble.run_ensemble(config.replace(classical=rotated_eta))
    np.testing.assert_allclose(direct.rho_mean, rotated.rho_mean, atol=1e-5)


def test_constant_offset_is_deterministic():
    offset = ClassicalNoiseSpec(channel="xi", process="constant", offset=0.05)
    result = ensemble.run_ensemble(small_config(classical=offset, n_traj=100))
    params = ModelParams(kx0=0.08 + 0.05)
    reference = evolve.run_trajectory(params, CorrelationSpec.ou(1.0, 1.0), None, "none", 2.0, 0.01, 10)
    np.testing.assert_allclose(result.rho_mean, reference.states, atol=1e-12)


def test_protection_metric():
    times = np.linspace(0.0, 100.0, 101)
    baseline = fake_result(times, 0.3)
    assert ensemble.protection_metric(fake_result(times, 0.35, stderr=0.01), baseline) == pytest.approx(0.05)
    assert ensemble.protection_metric_stderr(fake_result(times, 0.35, stderr=0.01)) == pytest.approx(0.01)
    ramp = fake_result(times, 0.3 + times / 1000)
    assert ensemble.protection_metric(ramp, baseline, horizon=50.0) == pytest.approx(0.025)


def test_protection_metric_horizon_clamped():
    times = np.linspace(0.0, 20.0, 21)
    assert ensemble.protection_metric(fake_result(times, 0.4), fake_result(times, 0.3)) == pytest.approx(0.1)


def test_protection_metric_grid_mismatch():
    with pytest.raises(ShapeError):
        ensemble.protection_metric(fake_result(np.arange(10.0), 0.3), fake_result(np.arange(11.0), 0.3))


def test_windowed_difference():
    times = np.linspace(0.0, 100.0, 101)
    delta = np.where(times < 50, -0.02, 0.04)
    noisy = fake_result(times, 0.3 + delta, stderr=0.002)
    mean, stderr = ensemble.windowed_difference(noisy, fake_result(times, 0.3), 5.0, 40.0)
    assert mean == pytest.approx(-0.02)
    assert stderr == pytest.approx(0.002)


@pytest.mark.parametrize("t_start, t_end", [(40.0, 5.0), (200.0, 300.0), (10.2, 10.8)])
def test_windowed_difference_empty_window(t_start, t_end):
    times = np.linspace(0.0, 100.0, 101)
    with pytest.raises(ShapeError, match="Window"):
        ensemble.windowed_difference(fake_result(times, 0.3), fake_result(times, 0.3), t_start, t_end)


def test_difference_surface():
    times = np.linspace(0.0, 10.0, 11)
    baseline = fake_result(times, 0.3)
    sweep = [(0.5, fake_result(times, 0.2)), (50.0, fake_result(times, 0.4))]
    frame = ensemble.difference_surface(sweep, baseline)
    assert list(frame.columns) == ["sweep_value", "t", "coherence_mean", "coherence_stderr", "delta_vs_baseline"]
    assert len(frame) == 22
    np.testing.assert_allclose(frame.delta_vs_baseline[frame.sweep_value == 50.0], 0.1)


def test_coherence_negativity_correlation():
    times = np.linspace(0.0, 100.0, 101)
    coherence = 0.5 * np.exp(-times / 30)
    result = fake_result(times, coherence, negativity=0.5 - coherence)
    assert ensemble.coherence_negativity_correlation(result) == pytest.approx(1.0)


def test_combine_results():
    a = ensemble.run_ensemble(small_config(classical=ClassicalNoiseSpec(channel="xi", process="constant", offset=0.05)))
    b = ensemble.run_ensemble(small_config(classical=ClassicalNoiseSpec(channel="xi", process="constant", offset=-0.05)))
    average = ensemble.combine_results([a, b])
    np.testing.assert_allclose(average.rho_mean, (a.rho_mean + b.rho_mean) / 2)
    assert average.n_traj == a.n_traj + b.n_traj
    with pytest.raises(ShapeError):
        ensemble.combine_results([a, ensemble.run_ensemble(small_config(classical=ClassicalNoiseSpec(), T=3.0))])


def test_write_result_csv_is_reproducible(tmp_path):
    first = ensemble.write_result_csv(ensemble.run_ensemble(small_config()), tmp_path / "a.csv")
    second = ensemble.write_result_csv(ensemble.run_ensemble(small_config(workers=2)), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text().splitlines()
    assert lines[0].startswith(f"# {Constants.TOOL_NAME} ")
    assert lines[1] == "t,coherence_mean,coherence_stderr,purity_mean,negativity_mean,pop_e_mean"
    sidecar = json.loads((tmp_path / "a.json").read_text())
    assert sidecar["config_hash"] == small_config().config_hash
    assert sidecar["n_traj"] == 10
    frame = pd.read_csv(first, comment="#")
    assert len(frame) == 21


def test_full_stderr_columns():
    frame = ensemble.run_ensemble(small_config()).to_frame(full_stderr=True)
    for name in ("purity", "negativity", "pop_photon", "pop_bath_proxy"):
        assert f"{name}_stderr" in frame
    assert "pop_photon_mean" in frame
