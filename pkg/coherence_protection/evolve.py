"""Per-trajectory master equation on the truncated atom x cavity space.

The trajectory state is rho' evolving under
    d rho'/dt = -i [H, rho'] + [a, rho' Obar^dag] + [Obar rho', a^dag]
with H the Jaynes-Cummings Hamiltonian at the trajectory's instantaneous G(t), omega(t) and Obar built from
F1..F4, co-evolved with rho' in the same RK4 stages. Averaging rho' over classical noise gives rho.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from coherence_protection import measures, model, o_operator, utils
from coherence_protection.noise_gen import NoisePath
from coherence_protection.utils import Constants, IntegratorError, UnsupportedSpecError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, params, batch_shape=()):
        """(c_e|e> + c_g|g>) x |0> as a pure state."""
        psi = np.zeros(params.dim, dtype=complex)
        psi[0], psi[params.n_max + 1] = params.init_atom
        rho = np.outer(psi, psi.conj())
        return cls(np.broadcast_to(rho, (*batch_shape, *rho.shape)).copy(), 0.0)

    @property
    def dim(self):
        return self.entries.shape[-1]

    @property
    def trace(self):
        return np.trace(self.entries, axis1=-2, axis2=-1)


def hjc_matrix(params, G_t, omega_t):
    ops = utils.operators(params.n_max)
    G_t = np.asarray(G_t)[..., None, None]
    omega_t = np.asarray(omega_t)[..., None, None]
    return (
        omega_t / 2 * ops.sigma_z
        + params.Omega * ops.number
        + G_t * (ops.a @ ops.sigma_plus)
        + np.conj(G_t) * (ops.adag @ ops.sigma_minus)
    )


def meq_half_rhs(rho, H, Obar, ops):
    X = Obar @ rho
    Xd = utils.dagger(X)
    return -1j * (H @ rho - rho @ H) + ops.a @ Xd - Xd @ ops.a + X @ ops.adag - ops.adag @ X


def step_meq_half(rho, H, Obar, dt):
    """RK4 step with H and Obar held fixed over the step."""
    if not (H.shape[-1] == Obar.shape[-1] == rho.dim):
        raise utils.ShapeError(f"Mismatched dimensions: {H.shape=}, {Obar.shape=}, {rho.entries.shape=}")
    ops = utils.operators(rho.dim // 2 - 1)
    stage = ((H, Obar),) * 3
    (entries,) = utils.rk4_step(lambda state, h, o: (meq_half_rhs(state[0], h, o, ops),), (rho.entries,), dt, stage)
    drift = np.max(np.abs(np.trace(entries, axis1=-2, axis2=-1) - rho.trace))
    if drift > Constants.STEP_TRACE_DRIFT:
        raise IntegratorError(f"Trace drifted by {drift:.3g} at t={rho.t + dt:.6g}")
    return DensityMatrix(entries, rho.t + dt)


def accumulated_phase(eta, dt_half):
    """Phi(t) = int_0^t eta on the half-step grid.

    Each step integrates the quadratic through its three samples, the same interpolant RK4 sees in the direct
    frame; paths of even length fall back to the trapezoid rule.
    """
    eta = np.real(np.asarray(eta, dtype=complex))
    if eta.shape[-1] % 2 == 0:
        return integrate.cumulative_trapezoid(eta, dx=dt_half, initial=0.0, axis=-1)
    f0, f1, f2 = eta[..., 0:-1:2], eta[..., 1::2], eta[..., 2::2]
    h = 2 * dt_half
    full = np.cumsum(h / 6 * (f0 + 4 * f1 + f2), axis=-1)
    start = np.concatenate([np.zeros_like(eta[..., :1]), full], axis=-1)
    phase = np.empty_like(eta)
    phase[..., 0::2] = start
    phase[..., 1::2] = start[..., :-1] + h / 24 * (5 * f0 + 8 * f1 - f2)
    return phase


def rotate_frame_eta(noise, G0, dt=None):
    """Coupling G0 exp(i Phi(t)) for use with omega = omega0."""
    dt = noise.grid.dt if dt is None else dt
    phase = accumulated_phase(noise.values, dt)
    return NoisePath(noise.grid, G0 * np.exp(1j * phase), noise.spec_tag)


def corotate_eta(states, phase, n_max):
    """Moves states into the frame rotating with the accumulated eta phase; magnitudes are unchanged."""
    z = utils.operators(n_max).atom_z
    shift = (z[:, None] - z[None, :]) / 2
    return states * np.exp(1j * np.asarray(phase)[..., None, None] * shift)


def coefficient_paths(params, noise_values, channel, dt_half, rotated=False):
    """Maps noise samples on the dt/2 grid to (G, omega, phase).

    phase is the accumulated eta phase for direct-frame eta runs (None otherwise); constant paths are scalars.
    """
    G_static = model.coupling_of(params, 0.0)
    match channel, noise_values:
        case (Constants.CHANNEL_NONE, _) | (_, None):
            return G_static, params.omega0, None
        case (Constants.CHANNEL_XI, xi):
            return model.coupling_of(params, np.real(xi)), params.omega0, None
        case (Constants.CHANNEL_ETA, eta):
            phase = accumulated_phase(eta, dt_half)
            if rotated:
                return G_static * np.exp(1j * phase), params.omega0, None
            return G_static, model.frequency_of(params, np.real(eta)), phase
        case _:
            raise ValueError(f"Unknown noise channel {channel!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    phase: np.ndarray = None

    def observables(self, params):
        return measures.ObservableRecord.from_states(self.times, self.states, params.init_atom[1])


def _check_states(rho, t, seeds):
    trace = np.trace(rho, axis1=-2, axis2=-1)
    bad = ~np.isfinite(trace) | (np.abs(trace - 1) > Constants.TRACE_TOLERANCE)
    if np.any(bad):
        index = int(np.argmax(bad.reshape(-1)))
        seed = None if seeds is None else int(np.asarray(seeds).reshape(-1)[index])
        raise IntegratorError(f"Non-finite state or trace drift at t={t:.6g}", seed=seed, index=index)


def run_trajectories(params, alpha1, noise_values, channel, T, dt, stride=10, rotated=False, seeds=None):
    """Integrates a batch of trajectories, one per row of noise_values (on the dt/2 grid), recording states.

    F1..F4 follow the closed equations for OU and delta baths and the two-time grid otherwise.
    """
    n_steps = int(round(T / dt))
    ops = utils.operators(params.n_max)
    G, omega, phase = coefficient_paths(params, noise_values, channel, dt / 2, rotated)
    batch_shape = () if noise_values is None or channel == Constants.CHANNEL_NONE else np.shape(noise_values)[:-1]

    rho = DensityMatrix.initial(params, batch_shape).entries
    try:
        Gamma1, gamma1 = o_operator.check_closed(alpha1)
        grid = None
        log.debug("closed F equations for %s bath", alpha1.kind)
    except UnsupportedSpecError:
        grid = o_operator.FGrid(alpha1, dt, n_steps, batch_shape)
        log.debug("two-time F grid for %s bath (%d columns)", alpha1.kind, grid.capacity)

    def closed_rhs(state, g, w):
        F, rho = state
        H = hjc_matrix(params, g, w)
        dF = np.zeros_like(F) if np.isinf(gamma1) else o_operator.closed_f_rhs(F, g, w, params.Omega, Gamma1, gamma1)
        return dF, meq_half_rhs(rho, H, o_operator.obar_matrix(F, params.n_max), ops)

    def grid_rhs(state, g, w, half_steps):
        f, rho = state
        (df, _), F, _ = grid.rhs(f, None, g, w, params.Omega, half_steps)
        H = hjc_matrix(params, g, w)
        return df, meq_half_rhs(rho, H, o_operator.obar_matrix(F, params.n_max), ops)

    if grid is None:
        F = (
            o_operator.FCoefficients.markov(Gamma1, batch_shape)
            if np.isinf(gamma1)
            else o_operator.FCoefficients.zeros(batch_shape)
        ).values

    n_records = n_steps // stride + 1
    states = np.empty((*batch_shape, n_records, ops.dim, ops.dim), dtype=complex)
    states[..., 0, :, :] = rho
    for k in range(n_steps):
        G_k, omega_k = utils.stage_values(G, k), utils.stage_values(omega, k)
        if grid is None:
            F, rho = utils.rk4_step(closed_rhs, (F, rho), dt, tuple(zip(G_k, omega_k)))
        else:
            f, rho = utils.rk4_step(grid_rhs, (grid.columns, rho), dt, tuple(zip(G_k, omega_k, (0, 1, 2))))
            grid.advance(f, None)
        if (k + 1) % stride == 0:
            _check_states(rho, (k + 1) * dt, seeds)
            states[..., (k + 1) // stride, :, :] = rho

    times = dt * stride * np.arange(n_records)
    recorded_phase = None if phase is None else phase[..., :: 2 * stride][..., :n_records]
    return Trajectory(times, states, recorded_phase)


def run_trajectory(params, alpha1, noise, channel, T, dt, stride=10, rotated=False, seed=None):
    """Single trajectory; noise is a NoisePath on a dt/2 grid covering [0, T], or None."""
    if noise is not None:
        if noise.grid.n_steps < 2 * int(round(T / dt)) or not np.isclose(noise.grid.dt, dt / 2):
            raise utils.ShapeError(
                f"Noise grid must cover [0, {T}] at dt/2: got dt={noise.grid.dt}, n_steps={noise.grid.n_steps}"
            )
    values = None if noise is None else noise.values
    seeds = None if seed is None else [seed]
    return run_trajectories(params, alpha1, values, channel, T, dt, stride, rotated, seeds)


def lindblad_rhs(rho, H, Gamma1, Gamma3, ops):
    a_rho = ops.a @ rho
    z_rho = ops.sigma_z @ rho
    return (
        -1j * (H @ rho - rho @ H)
        + Gamma1 * (a_rho @ ops.adag - 0.5 * (ops.number @ rho + rho @ ops.number))
        + Gamma3 * (z_rho @ ops.sigma_z - rho)
    )


def run_lindblad(params, Gamma1, Gamma3, T, dt, stride=10):
    """Markovian reference with cavity decay Gamma1 and atomic dephasing Gamma3 at the static coupling."""
    n_steps = int(round(T / dt))
    ops = utils.operators(params.n_max)
    H = hjc_matrix(params, model.coupling_of(params, 0.0), params.omega0)
    rho = DensityMatrix.initial(params).entries
    stage = ((H, Gamma1, Gamma3, ops),) * 3
    n_records = n_steps // stride + 1
    states = np.empty((n_records, ops.dim, ops.dim), dtype=complex)
    states[0] = rho
    for k in range(n_steps):
        (rho,) = utils.rk4_step(lambda state, *args: (lindblad_rhs(state[0], *args),), (rho,), dt, stage)
        if (k + 1) % stride == 0:
            _check_states(rho, (k + 1) * dt, None)
            states[(k + 1) // stride] = rho
    return Trajectory(dt * stride * np.arange(n_records), states)
