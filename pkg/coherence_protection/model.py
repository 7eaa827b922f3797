"""Physical parameters, correlation functions and the noise-to-coefficient maps."""
from dataclasses import dataclass

import numpy as np

from coherence_protection.utils import Constants, UnsupportedSpecError

CORRELATION_KINDS = ("ou", "delta", "sum_ou", "tabulated")
NOISE_PROCESSES = ("ou", "telegraph", "constant", "spectral")
NOISE_CHANNELS = (Constants.CHANNEL_NONE, Constants.CHANNEL_XI, Constants.CHANNEL_ETA)


@dataclass(frozen=True)
class ModelParams:
    """Deterministic constants of the atom-cavity-bath system, frequencies in units of the cavity frequency.

    Args:
        omega0: atomic frequency.
        Omega: cavity frequency.
        G0: bare coupling amplitude.
        kx0: balanced phase k*x0 of the standing wave at the atom position.
        n_max: cavity Fock truncation.
        init_atom: amplitudes (c_e, c_g) of the initial atomic state.
    """

    omega0: float = 1.0
    Omega: float = 1.0
    G0: float = 1.0
    kx0: float = 0.08
    n_max: int = 1
    init_atom: tuple = (1 / np.sqrt(2), 1 / np.sqrt(2))

    def __post_init__(self):
        for name in ("omega0", "Omega", "G0", "kx0"):
            value = getattr(self, name)
            if isinstance(value, complex) or not np.isfinite(value):
                raise ValueError(f"{name} must be finite and real, got {value!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max=}")
        c_e, c_g = (complex(c) for c in self.init_atom)
        object.__setattr__(self, "init_atom", (c_e, c_g))
        norm = abs(c_e) ** 2 + abs(c_g) ** 2
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"Initial atomic state must be normalized, got {norm=}")

    @property
    def dim(self):
        return 2 * (self.n_max + 1)


@dataclass(frozen=True)
class CorrelationSpec:
    """Correlation function of a bath or classical noise.

    ou: (Gamma*gamma/2) exp(-gamma|tau|); delta: Gamma delta(tau); sum_ou: weighted sum of OU terms given as
    (weight, Gamma, gamma) triples; tabulated: alpha sampled on a monotone grid of tau >= 0, extended evenly.
    """

    kind: str = "ou"
    Gamma: float = 1.0
    gamma: float = 1.0
    components: tuple = ()
    tau: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in CORRELATION_KINDS:
            raise ValueError(f"Unknown correlation kind {self.kind!r}, expected one of {CORRELATION_KINDS}")
        match self.kind:
            case "ou":
                if self.Gamma < 0 or self.gamma <= 0:
                    raise ValueError(f"OU correlation needs Gamma >= 0 and gamma > 0, got {self.Gamma=}, {self.gamma=}")
            case "delta":
                if self.Gamma < 0:
                    raise ValueError(f"Delta correlation needs Gamma >= 0, got {self.Gamma=}")
            case "sum_ou":
                components = tuple(tuple(float(x) for x in c) for c in self.components)
                object.__setattr__(self, "components", components)
                if not components:
                    raise ValueError("sum_ou correlation needs at least one component")
                for weight, Gamma, gamma in components:
                    if weight < 0 or Gamma < 0 or gamma <= 0:
                        raise ValueError(f"Invalid sum_ou component {(weight, Gamma, gamma)}")
            case "tabulated":
                tau = tuple(float(t) for t in self.tau)
                object.__setattr__(self, "tau", tau)
                object.__setattr__(self, "values", tuple(self.values))
                if len(tau) < 2 or len(tau) != len(self.values):
                    raise ValueError(f"Tabulated correlation needs matching tau/values, got {len(tau)=}, {len(self.values)=}")
                if np.any(np.diff(tau) <= 0) or tau[0] < 0:
                    raise ValueError("Tabulated correlation grid must be non-negative and strictly increasing")

    @classmethod
    def ou(cls, Gamma, gamma):
        return cls("ou", Gamma=float(Gamma), gamma=float(gamma))

    @classmethod
    def delta(cls, Gamma):
        return cls("delta", Gamma=float(Gamma), gamma=np.inf)

    @classmethod
    def sum_ou(cls, components):
        return cls("sum_ou", Gamma=float(sum(w * G for w, G, _ in components)), gamma=0.0, components=tuple(components))

    @classmethod
    def tabulated(cls, tau, values):
        return cls("tabulated", Gamma=0.0, gamma=0.0, tau=tuple(tau), values=tuple(values))

    @property
    def memory_time(self):
        match self.kind:
            case "ou":
                return 1 / self.gamma
            case "delta":
                return 0.0
            case "sum_ou":
                return max(1 / gamma for _, _, gamma in self.components)
            case "tabulated":
                return self.tau[-1]


@dataclass(frozen=True)
class ClassicalNoiseSpec:
    """Classical noise entering either the coupling phase (xi) or the atomic frequency (eta).

    Process parameters are read according to `process`: ou uses Gamma/gamma, telegraph uses p, amplitude and
    flip_interval (None means the simulation step), constant uses offset, spectral samples `correlation`.
    """

    channel: str = Constants.CHANNEL_NONE
    process: str = "ou"
    Gamma: float = 1.0
    gamma: float = 1.0
    p: float = 0.5
    amplitude: float = None
    flip_interval: float = None
    offset: float = 0.0
    correlation: CorrelationSpec = None
    seed_stream: int = 0
    rotated_frame: bool = False

    def __post_init__(self):
        if self.channel not in NOISE_CHANNELS:
            raise ValueError(f"Unknown noise channel {self.channel!r}, expected one of {NOISE_CHANNELS}")
        if self.process not in NOISE_PROCESSES:
            raise ValueError(f"Unknown noise process {self.process!r}, expected one of {NOISE_PROCESSES}")
        if not 0 <= self.p <= 1:
            raise ValueError(f"Telegraph flip probability must lie in [0, 1], got {self.p=}")
        if self.flip_interval is not None and self.flip_interval <= 0:
            raise ValueError(f"Telegraph flip interval must be positive, got {self.flip_interval=}")
        if self.channel == Constants.CHANNEL_NONE:
            return
        match self.process:
            case "ou" if self.gamma <= 0 or self.Gamma < 0:
                raise ValueError(f"OU noise needs Gamma >= 0 and gamma > 0, got {self.Gamma=}, {self.gamma=}")
            case "telegraph" if self.amplitude is None:
                raise ValueError("Telegraph noise needs an explicit amplitude")
            case "spectral" if self.correlation is None:
                raise ValueError("Spectral noise needs a target correlation")
        if self.rotated_frame and self.channel != Constants.CHANNEL_ETA:
            raise ValueError("The rotated frame only applies to frequency (eta) noise")

    @property
    def is_deterministic(self):
        return self.channel == Constants.CHANNEL_NONE or self.process == "constant"


def ou_correlation(spec, tau):
    tau = np.abs(np.asarray(tau, dtype=float))
    match spec.kind:
        case "ou":
            return spec.Gamma * spec.gamma / 2 * np.exp(-spec.gamma * tau)
        case "sum_ou":
            return sum(
                weight * Gamma * gamma / 2 * np.exp(-gamma * tau)
                for weight, Gamma, gamma in spec.components
            )
        case "tabulated":
            if np.any(tau > spec.tau[-1]) or np.any(tau < spec.tau[0]):
                raise ValueError(
                    f"Lag outside tabulated range [{spec.tau[0]}, {spec.tau[-1]}]: max |tau| = {tau.max()}"
                )
            values = np.asarray(spec.values)
            if np.iscomplexobj(values):
                return np.interp(tau, spec.tau, values.real) + 1j * np.interp(tau, spec.tau, values.imag)
            return np.interp(tau, spec.tau, values)
        case "delta":
            raise UnsupportedSpecError("A delta correlation has no pointwise value")


def lorentzian_spectrum(spec, omega):
    if spec.kind != "ou":
        raise UnsupportedSpecError(f"Lorentzian spectrum needs an OU correlation, got {spec.kind=}")
    omega = np.asarray(omega, dtype=float)
    return spec.Gamma * spec.gamma**2 / (2 * np.pi * (omega**2 + spec.gamma**2))


def spectrum(spec, omega):
    """Spectral density of OU, sum_ou and delta correlations in the one-sided convention."""
    omega = np.asarray(omega, dtype=float)
    match spec.kind:
        case "ou":
            return lorentzian_spectrum(spec, omega)
        case "sum_ou":
            return sum(
                weight * lorentzian_spectrum(CorrelationSpec.ou(Gamma, gamma), omega)
                for weight, Gamma, gamma in spec.components
            )
        case "delta":
            return np.full_like(omega, spec.Gamma / (2 * np.pi))
        case _:
            raise UnsupportedSpecError(f"No closed-form spectrum for {spec.kind=}")


def one_over_f_spectrum(Gamma, gammaL, gammaH, omega):
    if gammaL <= 0 or gammaH < gammaL:
        raise ValueError(f"Need 0 < gammaL <= gammaH, got {gammaL=}, {gammaH=}")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega == 0):
        raise ValueError("1/f spectrum is undefined at omega = 0")
    return Gamma / (2 * np.pi * omega) * (np.arctan(gammaH / omega) - np.arctan(gammaL / omega))


def one_over_f_components(Gamma, gammaL, gammaH, n_components=32):
    """Discretizes the 1/f spectrum as a sum of Lorentzians with weights d(gamma)/gamma^2 on a log grid."""
    if gammaL <= 0 or gammaH <= gammaL:
        raise ValueError(f"Need 0 < gammaL < gammaH, got {gammaL=}, {gammaH=}")
    edges = np.geomspace(gammaL, gammaH, n_components + 1)
    centers = np.sqrt(edges[1:] * edges[:-1])
    weights = np.diff(edges) / centers**2
    return CorrelationSpec.sum_ou(
        [(float(w), float(Gamma), float(g)) for w, g in zip(weights, centers)]
    )


def coupling_of(params, xi):
    return params.G0 * np.sin(params.kx0 + np.asarray(xi))


def frequency_of(params, eta):
    return params.omega0 + np.asarray(eta)
