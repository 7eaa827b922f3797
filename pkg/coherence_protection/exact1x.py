"""Exact amplitude dynamics in the single-excitation sector.

State: A|e,0> + B|g,1> + C|g,0> plus the bath excitation, with the bath entering through the memory integral
I(t) = int_0^t alpha(t - s) B(s) ds. All amplitudes are arrays with a common leading batch shape.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from coherence_protection import utils
from coherence_protection.utils import IntegratorError, UnsupportedSpecError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Amplitudes:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    I: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, params, batch_shape=()):
        c_e, c_g = params.init_atom
        zeros = np.zeros(batch_shape, dtype=complex)
        return cls(zeros + c_e, zeros.copy(), zeros + c_g, zeros.copy(), 0.0)


def _rhs(state, G, detuning, gamma1, Gamma1, Omega):
    A, B, I = state
    dA = -1j * detuning * A - 1j * G * B
    if np.isinf(gamma1):
        return dA, -1j * np.conj(G) * A - Gamma1 / 2 * B, np.zeros_like(I)
    dB = -1j * np.conj(G) * A - I
    dI = Gamma1 * gamma1 / 2 * B - (gamma1 - 1j * Omega) * I
    return dA, dB, dI


def step_single_excitation(state, G, gamma1, Gamma1, dt, detuning=0.0, Omega=0.0):
    """One RK4 step of
        dA/dt = -i detuning A - i G B,
        dB/dt = -i G* A - I,
        dI/dt = (Gamma1 gamma1 / 2) B - (gamma1 - i Omega) I.

    Args:
        state: Amplitudes at time t.
        G: coupling at (t, t + dt/2, t + dt), or a single value for a constant coupling.
        gamma1, Gamma1: OU bath parameters; gamma1 = inf selects the memoryless bath with I = (Gamma1/2) B.
        dt: step.
        detuning: omega(t) - Omega at the same three times (or constant); zero in the cavity-resonant frame.
        Omega: frequency shift of the memory kernel, nonzero when the bath correlation is defined in the
            cavity's lab frame.
    """
    G = _as_stages(G)
    detuning = _as_stages(detuning)
    stages = tuple((g, d, gamma1, Gamma1, Omega) for g, d in zip(G, detuning))
    A, B, I = utils.rk4_step(_rhs, (state.A, state.B, state.I), dt, stages)
    if np.isinf(gamma1):
        I = Gamma1 / 2 * B
    finite = np.isfinite(A) & np.isfinite(B) & np.isfinite(I)
    if not np.all(finite):
        index = int(np.argmin(finite.reshape(-1)))
        raise IntegratorError(f"Non-finite amplitudes at t={state.t + dt:.6g}", index=index)
    return Amplitudes(A, B, state.C, I, state.t + dt)


def _as_stages(values):
    match values:
        case (start, mid, end):
            return start, mid, end
        case _:
            return values, values, values


def coherence_1x(state):
    return np.abs(state.A * np.conj(state.C))


def concurrence_1x(state):
    return 2 * np.abs(state.A) * np.abs(state.B)


def tangle_1x(state):
    """Squared concurrence 4|A|^2|B|^2."""
    return concurrence_1x(state) ** 2


def bath_population(state):
    remaining = np.abs(state.A) ** 2 + np.abs(state.B) ** 2 + np.abs(state.C) ** 2
    return np.clip(1 - remaining, 0, None)


@dataclass(frozen=True, eq=False)
class SingleExcitationRun:
    times: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    I: np.ndarray

    def at(self, index):
        return Amplitudes(self.A[..., index], self.B[..., index], self.C[..., index], self.I[..., index], self.times[index])

    def to_frame(self, trajectory=0):
        state = Amplitudes(self.A, self.B, self.C, self.I)
        if self.A.ndim > 1:
            state = Amplitudes(*(x[trajectory] for x in (self.A, self.B, self.C, self.I)))
        return pd.DataFrame(
            {
                "t": self.times,
                "re_A": state.A.real,
                "im_A": state.A.imag,
                "re_B": state.B.real,
                "im_B": state.B.imag,
                "coherence": coherence_1x(state),
                "concurrence": concurrence_1x(state),
                "bath_pop": bath_population(state),
            }
        )


def run_single_excitation(params, alpha1, G, detuning, T, dt, stride=1, seeds=None):
    """Integrates a batch of trajectories over [0, T].

    Args:
        params: ModelParams providing the initial state and the cavity frequency.
        alpha1: OU or delta CorrelationSpec of the bath.
        G: couplings on the dt/2 grid, shape (N,), (B, N) or scalar.
        detuning: omega(t) - Omega on the same grid (or scalar).
        stride: record every `stride` steps.
        seeds: optional per-trajectory seeds, attached to integrator errors.
    """
    match alpha1.kind:
        case "ou":
            gamma1, Gamma1 = alpha1.gamma, alpha1.Gamma
        case "delta":
            gamma1, Gamma1 = np.inf, alpha1.Gamma
        case _:
            raise UnsupportedSpecError(f"Single-excitation solver needs an OU or delta bath, got {alpha1.kind=}")

    n_steps = int(round(T / dt))
    G, detuning = np.asarray(G), np.asarray(detuning)
    batch_shape = np.broadcast_shapes(G.shape[:-1] if G.ndim > 1 else (), detuning.shape[:-1] if detuning.ndim > 1 else ())
    state = Amplitudes.initial(params, batch_shape)
    n_records = n_steps // stride + 1
    records = {name: np.empty((*batch_shape, n_records), dtype=complex) for name in "ABCI"}

    def record(index, state):
        for name in "ABCI":
            records[name][..., index] = getattr(state, name)

    record(0, state)
    for k in range(n_steps):
        try:
            state = step_single_excitation(
                state,
                utils.stage_values(G, k),
                gamma1,
                Gamma1,
                dt,
                detuning=utils.stage_values(detuning, k),
                Omega=params.Omega,
            )
        except IntegratorError as e:
            raise IntegratorError(str(e), seed=failing_seed(seeds, e.index)) from e
        if (k + 1) % stride == 0:
            record((k + 1) // stride, state)
    times = dt * stride * np.arange(n_records)
    return SingleExcitationRun(times, records["A"], records["B"], records["C"], records["I"])


def failing_seed(seeds, index):
    if seeds is None or index is None:
        return None
    seeds = np.asarray(seeds).reshape(-1)
    return int(seeds[index if index < len(seeds) else 0])


def density_from_amplitudes(A, B, C, n_max=1):
    """Atom-cavity density matrix, the bath excitation folded into |g,0>."""
    ops = utils.operators(n_max)
    A, B, C = np.broadcast_arrays(np.asarray(A), np.asarray(B), np.asarray(C))
    e0, g0, g1 = 0, n_max + 1, n_max + 2
    psi = np.zeros((*A.shape, ops.dim), dtype=complex)
    psi[..., e0], psi[..., g1], psi[..., g0] = A, B, C
    rho = psi[..., :, None] * np.conj(psi[..., None, :])
    rho[..., g0, g0] += bath_population(Amplitudes(A, B, C, None))
    return rho
