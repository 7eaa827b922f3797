import functools
import hashlib
import json
from dataclasses import dataclass

import numpy as np


@dataclass
class Constants:
    TOOL_NAME = "coherence-protection"
    CHANNEL_NONE = "none"
    CHANNEL_XI = "xi"
    CHANNEL_ETA = "eta"
    SOLVER_EXACT = "exact1x"
    SOLVER_MEQ = "meqhalf"
    SOLVER_LINDBLAD = "lindblad"
    PROTECTION_HORIZON = 100.0
    # recorded states; single RK4 steps may drift by STEP_TRACE_DRIFT before a run is aborted
    TRACE_TOLERANCE = 1e-8
    STEP_TRACE_DRIFT = 1e-6
    HERMITIAN_TOLERANCE = 1e-6
    NEGATIVE_EIGENVALUE = 1e-10
    OBSERVABLES = (
        "coherence",
        "purity",
        "negativity",
        "pop_e",
        "pop_photon",
        "pop_bath_proxy",
    )


class ShapeError(ValueError):
    pass


class UnsupportedSpecError(NotImplementedError):
    pass


class ConfigError(ValueError):
    """Collects every problem found in a configuration document.

    Args:
        problems: list of (key_path, message) pairs, e.g. ("sim.dt", "must be > 0").
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{key}: {message}" for key, message in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class IntegratorError(RuntimeError):
    def __init__(self, message, seed=None, index=None):
        self.seed = seed
        self.index = index
        if seed is not None:
            message = f"{message} ({seed=})"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Operators:
    """Operators on the atom x cavity space, basis index = atom * (n_max + 1) + n with atom 0 = e, 1 = g."""

    n_max: int
    a: np.ndarray
    adag: np.ndarray
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    sigma_z: np.ndarray
    number: np.ndarray
    obar_basis: np.ndarray
    atom_z: np.ndarray
    excitations: np.ndarray

    @property
    def dim(self):
        return 2 * (self.n_max + 1)


@functools.lru_cache(maxsize=None)
def operators(n_max):
    if n_max < 1:
        raise ValueError(f"Cavity truncation must be at least 1, got {n_max=}")
    n_levels = n_max + 1
    eye_atom, eye_cavity = np.eye(2), np.eye(n_levels)
    a_cavity = np.diag(np.sqrt(np.arange(1, n_levels)), k=1)
    lower_atom = np.array([[0.0, 0.0], [1.0, 0.0]])
    z_atom = np.diag([1.0, -1.0])

    a = np.kron(eye_atom, a_cavity).astype(complex)
    adag = a.conj().T
    sigma_minus = np.kron(lower_atom, eye_cavity).astype(complex)
    sigma_plus = sigma_minus.conj().T
    sigma_z = np.kron(z_atom, eye_cavity).astype(complex)
    number = adag @ a
    obar_basis = np.stack(
        [
            a,
            sigma_minus @ a @ adag,
            sigma_minus @ adag @ a,
            sigma_z @ a,
        ]
    )
    atom_z = np.repeat([1.0, -1.0], n_levels)
    excitations = np.tile(np.arange(n_levels), 2) + np.repeat([1, 0], n_levels)

    ops = Operators(
        n_max=n_max,
        a=a,
        adag=adag,
        sigma_minus=sigma_minus,
        sigma_plus=sigma_plus,
        sigma_z=sigma_z,
        number=number,
        obar_basis=obar_basis,
        atom_z=atom_z,
        excitations=excitations,
    )
    for value in vars(ops).values():
        if isinstance(value, np.ndarray):
            value.flags.writeable = False
    return ops


def dagger(matrix):
    return np.conj(np.swapaxes(matrix, -1, -2))


def stage_values(values, index):
    """Picks the (t, t + dt/2, t + dt) samples of a path stored on a dt/2 grid.

    values may be a scalar (constant path), shape (N,) or (B, N); step index selects columns 2k, 2k+1, 2k+2.
    """
    values = np.asarray(values)
    match values.shape:
        case ():
            return values, values, values
        case (n,) | (_, n) if 2 * index + 2 < n:
            return tuple(values[..., 2 * index + j] for j in range(3))
        case _:
            raise ShapeError(
                f"Path does not cover step {index} on the half-step grid: {values.shape=}"
            )


def rk4_step(rhs, state, dt, stage_args):
    """Classical fourth-order Runge-Kutta step for a tuple of arrays.

    Args:
        rhs: callable rhs(state, *args) returning a tuple of derivatives matching state (None entries are skipped).
        state: tuple of arrays.
        dt: step size.
        stage_args: three argument tuples for the times t, t + dt/2 and t + dt.
    """
    start, mid, end = stage_args

    def shifted(k, h):
        return tuple(None if x is None else x + h * dx for x, dx in zip(state, k))

    k1 = rhs(state, *start)
    k2 = rhs(shifted(k1, dt / 2), *mid)
    k3 = rhs(shifted(k2, dt / 2), *mid)
    k4 = rhs(shifted(k3, dt), *end)
    return tuple(
        None if x is None else x + dt / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
        for x, d1, d2, d3, d4 in zip(state, k1, k2, k3, k4)
    )


def config_digest(document):
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_csv(frame, path, config_hash, float_format="%.12g"):
    """Writes a DataFrame preceded by a provenance comment line."""
    from coherence_protection import __version__

    with open(path, "w", newline="") as f:
        f.write(f"# {Constants.TOOL_NAME} {__version__} config_hash={config_hash}\n")
        frame.to_csv(f, index=False, float_format=float_format, lineterminator="\n")
    return path
