"""Memory functionals F1..F4 (and the diagnostic F5) of the effective dissipator Obar = sum_i F_i O_i.

Basis: O1 = a, O2 = sigma_- a a^dag, O3 = sigma_- a^dag a, O4 = sigma_z a. The coefficient functions obey
    d/dt f1 = i Omega f1 + i (G/2)(f2 - f3) + f1 F1 + f4 F4
    d/dt f2 = i omega f2 + i G* (f1 - f4) + (f1 - f4) F2
    d/dt f3 = i omega f3 - i G* (f1 + f4) - (f1 + f4) F2 + 2 f3 F4 + F5'(t, s)
    d/dt f4 = i Omega f4 - i (G/2)(f2 + f3) + f4 F1 + f1 F4
    d/dt f5 = i (omega + Omega) f5 + f5 (F1 + F4) + (f1 - f4) F5'(t, s')
with F_i(t) = int_0^t alpha(t - s) f_i(t, s) ds, f1(t, t) = 1, f2 = f3 = f4 = 0 at s = t, f5(t, t, s') = 0 and
f5(t, s, t) = f3(t, s) - f2(t, s).
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from coherence_protection import model, utils
from coherence_protection.noise_gen import TimeGrid
from coherence_protection.utils import ShapeError, UnsupportedSpecError

log = logging.getLogger(__name__)

BOUNDARY = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)


@dataclass(frozen=True, eq=False)
class FCoefficients:
    t: float
    values: np.ndarray
    F5: np.ndarray = None

    @classmethod
    def zeros(cls, batch_shape=(), t=0.0):
        return cls(t, np.zeros((*batch_shape, 4), dtype=complex))

    @classmethod
    def markov(cls, Gamma1, batch_shape=(), t=0.0):
        values = np.zeros((*batch_shape, 4), dtype=complex)
        values[..., 0] = Gamma1 / 2
        return cls(t, values, np.zeros(batch_shape, dtype=complex))

    @property
    def F1(self):
        return self.values[..., 0]

    @property
    def F2(self):
        return self.values[..., 1]

    @property
    def F3(self):
        return self.values[..., 2]

    @property
    def F4(self):
        return self.values[..., 3]


def closed_f_rhs(F, G, omega, Omega, Gamma1, gamma1):
    F1, F2, F3, F4 = np.moveaxis(F, -1, 0)
    Gc = np.conj(G)
    return np.stack(
        [
            Gamma1 * gamma1 / 2 + (1j * Omega - gamma1) * F1 + 0.5j * G * (F2 - F3) + F1**2 + F4**2,
            (1j * omega - gamma1) * F2 + 1j * Gc * (F1 - F4) + (F1 - F4) * F2,
            (1j * omega - gamma1) * F3 - 1j * Gc * (F1 + F4) - (F1 + F4) * F2 + 2 * F3 * F4,
            (1j * Omega - gamma1) * F4 - 0.5j * G * (F2 + F3) + 2 * F1 * F4,
        ],
        axis=-1,
    )


def step_F_closed(F, G, omega, Omega, Gamma1, gamma1, dt):
    """RK4 step of the closed ODE system for F1..F4 under a single OU kernel.

    G and omega are given at (t, t + dt/2, t + dt) or as constants.
    """
    if np.isinf(gamma1):
        return FCoefficients.markov(Gamma1, F.values.shape[:-1], F.t + dt)
    stages = tuple(
        (g, w, Omega, Gamma1, gamma1) for g, w in zip(_as_stages(G), _as_stages(omega))
    )
    (values,) = utils.rk4_step(lambda state, *args: (closed_f_rhs(state[0], *args),), (F.values,), dt, stages)
    return FCoefficients(F.t + dt, values)


def _as_stages(values):
    match values:
        case (start, mid, end):
            return start, mid, end
        case _:
            return values, values, values


def check_closed(alpha1):
    match alpha1.kind:
        case "ou":
            return alpha1.Gamma, alpha1.gamma
        case "delta":
            return alpha1.Gamma, np.inf
        case _:
            raise UnsupportedSpecError(
                f"Closed F equations hold for a single OU kernel only, got {alpha1.kind=}; use the two-time grid"
            )


class FGrid:
    """Two-time storage f_i(t, s_j) for s_j = j dt <= t, updated in place by step_f_grid.

    Args:
        alpha1: bath correlation.
        dt: step in t and s.
        n_steps: number of steps the grid must hold.
        batch_shape: leading shape for independent trajectories.
        with_f5: also evolve the noise-dependent f5(t, s, s'), O(n_steps^2) memory.
    """

    def __init__(self, alpha1, dt, n_steps, batch_shape=(), with_f5=False):
        self.alpha1 = alpha1
        self.dt = dt
        self.capacity = n_steps + 1
        self.batch_shape = tuple(batch_shape)
        self.with_f5 = with_f5
        self.markov = alpha1.kind == "delta"
        self.n_columns = 1
        self.t = 0.0
        if self.markov:
            self.F = FCoefficients.markov(alpha1.Gamma, self.batch_shape)
            return
        # alpha on the half-step lag grid, index k <-> tau = k dt / 2
        self.alpha_half = np.asarray(model.ou_correlation(alpha1, 0.5 * dt * np.arange(2 * self.capacity + 1)))
        self.f = np.zeros((*self.batch_shape, 4, self.capacity), dtype=complex)
        self.f[..., :, 0] = BOUNDARY
        self.f5 = np.zeros((*self.batch_shape, self.capacity, self.capacity), dtype=complex) if with_f5 else None
        self.F = FCoefficients.zeros(self.batch_shape)
        if with_f5:
            self.F = FCoefficients(0.0, self.F.values, np.zeros(self.batch_shape, dtype=complex))

    @property
    def s_grid(self):
        return TimeGrid(0.0, self.dt, max(self.n_columns - 1, 1))

    @property
    def columns(self):
        return self.f[..., :, : self.n_columns]

    def weights(self, half_steps):
        """Trapezoid weights times alpha(t_stage - s_j) for t_stage = t + half_steps * dt / 2."""
        m = self.n_columns - 1
        lag_index = 2 * (m - np.arange(m + 1)) + half_steps
        w = np.full(m + 1, self.dt)
        w[[0, -1]] = self.dt / 2
        if m == 0:
            w[:] = 0.0
        return self.alpha_half[lag_index] * w

    def quadrature(self, f, f5, half_steps):
        """F_i(t_stage) and F5'(t_stage, s'_j) from stage values, plus the tail [s_m, t_stage] closed by the boundary."""
        weights = self.weights(half_steps)
        F = np.einsum("...ij,j->...i", f, weights)
        h = 0.5 * half_steps * self.dt
        if h > 0:
            F = F + 0.5 * h * (self.alpha_half[half_steps] * f[..., :, -1] + self.alpha_half[0] * BOUNDARY)
        if f5 is None:
            return F, None, None
        F5p = np.einsum("...ij,i->...j", f5, weights)
        if h > 0:
            F5p = F5p + 0.5 * h * self.alpha_half[half_steps] * f5[..., -1, :]
        F5 = np.einsum("...j,j->...", F5p, weights)
        if h > 0:
            F5 = F5 + 0.5 * h * (self.alpha_half[half_steps] * F5p[..., -1] + self.alpha_half[0] * (F[..., 2] - F[..., 1]))
        return F, F5p, F5

    def rhs(self, f, f5, G, omega, Omega, half_steps):
        F, F5p, F5 = self.quadrature(f, f5, half_steps)
        f1, f2, f3, f4 = np.moveaxis(f, -2, 0)
        F1, F2, F3, F4 = (x[..., None] for x in np.moveaxis(F, -1, 0))
        G, omega = np.asarray(G)[..., None], np.asarray(omega)[..., None]
        Gc = np.conj(G)
        df3 = 1j * omega * f3 - 1j * Gc * (f1 + f4) - (f1 + f4) * F2 + 2 * f3 * F4
        df5 = None
        if f5 is not None:
            df3 = df3 + F5p
            df5 = (
                1j * (omega[..., None] + Omega) * f5
                + f5 * (F1 + F4)[..., None]
                + (f1 - f4)[..., :, None] * F5p[..., None, :]
            )
        df = np.stack(
            [
                1j * Omega * f1 + 0.5j * G * (f2 - f3) + f1 * F1 + f4 * F4,
                1j * omega * f2 + 1j * Gc * (f1 - f4) + (f1 - f4) * F2,
                df3,
                1j * Omega * f4 - 0.5j * G * (f2 + f3) + f4 * F1 + f1 * F4,
            ],
            axis=-2,
        )
        return (df, df5), F, F5

    def advance(self, f, f5):
        """Stores the stepped columns and appends the boundary column at the new time."""
        m = self.n_columns - 1
        if m + 1 >= self.capacity:
            raise ShapeError(f"FGrid capacity {self.capacity} exhausted at t={self.t:.6g}")
        self.f[..., :, : m + 1] = f
        self.f[..., :, m + 1] = BOUNDARY
        if self.with_f5:
            self.f5[..., : m + 1, : m + 1] = f5
            self.f5[..., m + 1, :] = 0.0
            self.f5[..., : m + 1, m + 1] = f[..., 2, :] - f[..., 1, :]
        self.n_columns += 1
        self.t += self.dt
        f5_now = self.f5[..., : m + 2, : m + 2] if self.with_f5 else None
        F, _, F5 = self.quadrature(self.f[..., :, : m + 2], f5_now, 0)
        self.F = FCoefficients(self.t, F, F5)
        assert np.all(self.f[..., 0, m + 1] == 1) and np.all(self.f[..., 1:, m + 1] == 0)


def step_f_grid(grid, G, omega, Omega, alpha1, dt):
    """Advances every stored f_i(., s) by one RK4 step in t and recomputes F_i(t + dt).

    G and omega are given at (t, t + dt/2, t + dt) or as constants. The grid is updated in place and returned.
    """
    if alpha1 != grid.alpha1 or not np.isclose(dt, grid.dt):
        raise ValueError(f"Grid was built for {grid.alpha1} at dt={grid.dt}, got {alpha1} at {dt=}")
    if grid.markov:
        grid.n_columns += 1
        grid.t += dt
        grid.F = FCoefficients.markov(alpha1.Gamma, grid.batch_shape, grid.t)
        return grid

    def rhs(state, g, w, half_steps):
        derivatives, _, _ = grid.rhs(state[0], state[1], g, w, Omega, half_steps)
        return derivatives

    stages = tuple((g, w, h) for g, w, h in zip(_as_stages(G), _as_stages(omega), (0, 1, 2)))
    f5 = grid.f5[..., : grid.n_columns, : grid.n_columns] if grid.with_f5 else None
    f, f5 = utils.rk4_step(rhs, (grid.columns, f5), dt, stages)
    grid.advance(f, f5)
    return grid


def obar_matrix(F, n_max):
    values = F.values if isinstance(F, FCoefficients) else np.asarray(F)
    return np.einsum("...i,ijk->...jk", values, utils.operators(n_max).obar_basis)


def f_coefficient_table(params, alpha1, T, dt_f, G=None, with_f5=True):
    """|F1|..|F5| over [0, T] for a constant coupling (default G0 sin(kx0)) on the two-time grid."""
    if G is None:
        G = model.coupling_of(params, 0.0)
    n_steps = int(round(T / dt_f))
    grid = FGrid(alpha1, dt_f, n_steps, with_f5=with_f5)
    rows = [_table_row(grid.F)]
    for _ in range(n_steps):
        step_f_grid(grid, G, params.omega0, params.Omega, alpha1, dt_f)
        rows.append(_table_row(grid.F))
    log.debug("F table: %d rows up to t=%.3g", len(rows), grid.t)
    return pd.DataFrame(rows, columns=["t", "|F1|", "|F2|", "|F3|", "|F4|", "|F5|"])


def _table_row(F):
    F5 = 0.0 if F.F5 is None else abs(F.F5)
    return [F.t, *np.abs(F.values), F5]
