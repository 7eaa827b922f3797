import numpy as np
import pytest

from coherence_protection import exact1x, measures
from coherence_protection.exact1x import Amplitudes
from coherence_protection.model import CorrelationSpec, ModelParams
from coherence_protection.utils import IntegratorError, UnsupportedSpecError

PARAMS = ModelParams()


def test_rabi_oscillation():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(0.0, 1.0), 0.5, 0.0, T=50.0, dt=1e-3, stride=100)
    expected = np.abs(PARAMS.init_atom[0] * np.cos(0.5 * run.times))
    assert np.max(np.abs(np.abs(run.A) - expected)) <= 1e-8


def test_norm_conserved_without_bath():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(0.0, 1.0), 0.3, 0.0, T=20.0, dt=0.01, stride=10)
    norm = np.abs(run.A) ** 2 + np.abs(run.B) ** 2 + np.abs(run.C) ** 2
    np.testing.assert_allclose(norm, 1.0, atol=1e-10)


def test_bath_absorbs_excitation():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 1.0), 0.3, 0.0, T=100.0, dt=0.01, stride=100)
    bath = exact1x.bath_population(Amplitudes(run.A, run.B, run.C, run.I))
    assert bath[0] == 0.0
    assert 0.45 < bath[-1] <= 0.5 + 1e-9
    np.testing.assert_allclose(np.abs(run.C), abs(PARAMS.init_atom[1]))


def test_bath_population_never_decreases_with_short_memory():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 40.0), np.sin(0.08), 0.0, T=20.0, dt=0.01)
    bath = exact1x.bath_population(Amplitudes(run.A, run.B, run.C, run.I))
    assert np.all(np.diff(bath) >= -1e-7)
    assert bath[-1] > 0


def test_rk4_step_halving():
    alpha1 = CorrelationSpec.ou(1.0, 1.0)
    finals = [
        exact1x.run_single_excitation(PARAMS, alpha1, 0.3, 0.0, T=10.0, dt=dt, stride=int(round(1 / dt))).A
        for dt in (0.01, 0.005, 0.0025)
    ]
    coarse = np.max(np.abs(finals[0] - finals[1]))
    fine = np.max(np.abs(finals[1] - finals[2]))
    assert 0 < coarse <= 16.5 * fine


def test_single_step_matches_rhs_for_small_dt():
    state = Amplitudes.initial(PARAMS)
    stepped = exact1x.step_single_excitation(state, 0.2, 1.0, 1.0, 1e-4)
    assert stepped.t == pytest.approx(1e-4)
    assert stepped.B == pytest.approx(-1j * 0.2 * state.A * 1e-4, rel=1e-3)


def test_delta_bath_is_wide_ou_limit():
    delta = exact1x.run_single_excitation(PARAMS, CorrelationSpec.delta(1.0), 0.3, 0.0, T=10.0, dt=1e-3, stride=100)
    wide = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 200.0), 0.3, 0.0, T=10.0, dt=1e-3, stride=100)
    np.testing.assert_allclose(
        exact1x.coherence_1x(delta.at(-1)), exact1x.coherence_1x(wide.at(-1)), atol=1e-2
    )
    np.testing.assert_allclose(delta.I, 0.5 * delta.B)


def test_phase_gauge_invariance():
    alpha1 = CorrelationSpec.ou(1.0, 1.0)
    plain = exact1x.run_single_excitation(PARAMS, alpha1, 0.3, 0.0, T=20.0, dt=0.01, stride=10)
    shifted = exact1x.run_single_excitation(PARAMS, alpha1, 0.3 * np.exp(0.7j), 0.0, T=20.0, dt=0.01, stride=10)
    for name in ("coherence", "concurrence", "bath_pop"):
        np.testing.assert_allclose(plain.to_frame()[name], shifted.to_frame()[name], atol=1e-12)


def test_batched_paths_match_single_runs():
    alpha1 = CorrelationSpec.ou(1.0, 1.0)
    n = 2 * 200 + 1
    rng = np.random.default_rng(0)
    G = 0.3 + 0.05 * rng.standard_normal((3, n))
    batch = exact1x.run_single_excitation(PARAMS, alpha1, G, 0.0, T=2.0, dt=0.01, stride=20)
    assert batch.A.shape == (3, 11)
    single = exact1x.run_single_excitation(PARAMS, alpha1, G[1], 0.0, T=2.0, dt=0.01, stride=20)
    np.testing.assert_allclose(batch.A[1], single.A, atol=1e-14)


def test_non_finite_reports_seed():
    n = 2 * 10 + 1
    G = np.vstack([np.full(n, 0.1), np.full(n, np.nan)])
    with pytest.raises(IntegratorError) as info:
        exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 1.0), G, 0.0, T=0.1, dt=0.01, seeds=[11, 22])
    assert info.value.seed == 22


def test_unsupported_bath():
    alpha1 = CorrelationSpec.sum_ou([(1.0, 1.0, 1.0)])
    with pytest.raises(UnsupportedSpecError):
        exact1x.run_single_excitation(PARAMS, alpha1, 0.3, 0.0, T=1.0, dt=0.01)


def test_to_frame_columns():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 1.0), 0.3, 0.0, T=1.0, dt=0.01, stride=10)
    frame = run.to_frame()
    assert list(frame.columns) == ["t", "re_A", "im_A", "re_B", "im_B", "coherence", "concurrence", "bath_pop"]
    assert len(frame) == 11
    assert frame.coherence[0] == pytest.approx(0.5)


def test_density_from_amplitudes():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(1.0, 1.0), 0.3, 0.0, T=30.0, dt=0.01, stride=100)
    rho = exact1x.density_from_amplitudes(run.A, run.B, run.C)
    np.testing.assert_allclose(np.trace(rho, axis1=-2, axis2=-1), 1.0, atol=1e-10)
    np.testing.assert_allclose(rho, np.conj(np.swapaxes(rho, -1, -2)))
    rho_a = measures.partial_trace_cavity(rho)
    np.testing.assert_allclose(measures.coherence(rho_a), exact1x.coherence_1x(run.at(slice(None))), atol=1e-14)


def test_concurrence_is_twice_negativity_for_pure_states():
    run = exact1x.run_single_excitation(PARAMS, CorrelationSpec.ou(0.0, 1.0), 0.3, 0.0, T=20.0, dt=0.01, stride=10)
    rho = exact1x.density_from_amplitudes(run.A, run.B, run.C)
    state = Amplitudes(run.A, run.B, run.C, run.I)
    np.testing.assert_allclose(exact1x.concurrence_1x(state), 2 * measures.negativity(rho), atol=1e-9)
    np.testing.assert_allclose(exact1x.tangle_1x(state), 4 * np.abs(run.A) ** 2 * np.abs(run.B) ** 2)
