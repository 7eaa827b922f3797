from dataclasses import dataclass, fields

import numpy as np
import pandas as pd

from coherence_protection import utils
from coherence_protection.utils import Constants, ShapeError

SIGMA_Y2 = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


def _split(rho):
    """Views a (..., d, d) atom x cavity matrix as (..., 2, n, 2, n)."""
    rho = np.asarray(rho)
    match rho.shape:
        case (*batch, d, d2) if d == d2 and d % 2 == 0 and d >= 4:
            return rho.reshape(*batch, 2, d // 2, 2, d // 2)
        case _:
            raise ShapeError(f"Expected a square atom x cavity matrix of even dimension >= 4, got {rho.shape=}")


def partial_trace_cavity(rho):
    return np.einsum("...ajbj->...ab", _split(rho))


def coherence(rho_a):
    return np.abs(np.asarray(rho_a)[..., 0, 1])


def purity(rho_a):
    return np.sum(np.abs(np.asarray(rho_a)) ** 2, axis=(-2, -1))


def negativity(rho, split="atom"):
    """Sum of |negative eigenvalues| of the partial transpose on the atom (or cavity) index."""
    rho = np.asarray(rho)
    blocks = _split(rho)
    if np.max(np.abs(rho - utils.dagger(rho)), initial=0.0) > Constants.HERMITIAN_TOLERANCE:
        raise ValueError("Negativity needs a Hermitian density matrix")
    match split:
        case "atom":
            transposed = np.swapaxes(blocks, -4, -2)
        case "cavity":
            transposed = np.swapaxes(blocks, -3, -1)
        case _:
            raise ValueError(f"Unknown bipartition {split!r}, expected 'atom' or 'cavity'")
    d = np.shape(rho)[-1]
    eigenvalues = np.linalg.eigvalsh(transposed.reshape(*np.shape(rho)[:-2], d, d))
    negative = np.where(eigenvalues < -Constants.NEGATIVE_EIGENVALUE, -eigenvalues, 0.0)
    return negative.sum(axis=-1)


def concurrence_2x2(rho):
    rho = np.asarray(rho)
    if rho.shape[-2:] != (4, 4):
        raise ShapeError(f"Concurrence needs a two-qubit 4x4 matrix, got {rho.shape=}")
    flipped = SIGMA_Y2 @ np.conj(rho) @ SIGMA_Y2
    eigenvalues = np.linalg.eigvals(rho @ flipped)
    roots = np.sort(np.sqrt(np.clip(eigenvalues.real, 0, None)), axis=-1)[..., ::-1]
    return np.clip(roots[..., 0] - roots[..., 1] - roots[..., 2] - roots[..., 3], 0, None)


@dataclass(frozen=True, eq=False)
class ObservableRecord:
    """Observable time series; pop_bath_proxy is the |g,0> population gained over its initial value."""

    t: np.ndarray
    coherence: np.ndarray
    purity: np.ndarray
    negativity: np.ndarray
    pop_e: np.ndarray
    pop_photon: np.ndarray
    pop_bath_proxy: np.ndarray

    @classmethod
    def from_states(cls, times, rho, c_g):
        rho = np.asarray(rho)
        n_max = rho.shape[-1] // 2 - 1
        rho_a = partial_trace_cavity(rho)
        ops = utils.operators(n_max)
        return cls(
            t=np.asarray(times),
            coherence=coherence(rho_a),
            purity=purity(rho_a),
            negativity=negativity(rho),
            pop_e=rho_a[..., 0, 0].real,
            pop_photon=np.einsum("...ii,i->...", rho, np.diag(ops.number)).real,
            pop_bath_proxy=rho[..., n_max + 1, n_max + 1].real - abs(c_g) ** 2,
        )

    def to_frame(self):
        return pd.DataFrame({f.name: getattr(self, f.name) for f in fields(self)})


def reduced_atom_state_1x(A, C):
    """Atomic reduced state from single-excitation amplitudes; the bath and |g,1> populations fold into |g>."""
    A, C = np.asarray(A), np.asarray(C)
    pop_e = np.abs(A) ** 2
    off = A * np.conj(C)
    return np.stack(
        [np.stack([pop_e, off], axis=-1), np.stack([np.conj(off), 1 - pop_e], axis=-1)],
        axis=-2,
    )
