"""Single-qubit Kraus channels used for the noise-robustness experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qsim import I2, X, Y, Z

CPTP_TOL = 1e-12

# Full sweep grid; 0.0 is included so the identity-channel case is testable.
PROBABILITY_GRID = tuple(round(0.1 * k, 1) for k in range(11))
SWEEP_GRID = PROBABILITY_GRID[1:]


@dataclass(frozen=True)
class KrausChannel:
    label: str
    probability: float
    operators: tuple = field(repr=False)

    def cptp(self) -> tuple[bool, float]:
        return validate_cptp(self.operators)


def _check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or not np.isfinite(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def bit_flip(p: float) -> KrausChannel:
    p = _check_probability(p)
    return KrausChannel("bit_flip", p, (np.sqrt(1 - p) * I2, np.sqrt(p) * X))


def phase_flip(p: float) -> KrausChannel:
    p = _check_probability(p)
    return KrausChannel("phase_flip", p, (np.sqrt(1 - p) * I2, np.sqrt(p) * Z))


def phase_damping(gamma: float) -> KrausChannel:
    g = _check_probability(gamma, "gamma")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
    k1 = np.array([[0, 0], [0, np.sqrt(g)]], dtype=complex)
    return KrausChannel("phase_damping", g, (k0, k1))


def amplitude_damping(gamma: float) -> KrausChannel:
    g = _check_probability(gamma, "gamma")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)
    return KrausChannel("amplitude_damping", g, (k0, k1))


def depolarizing(p: float) -> KrausChannel:
    # K2 is the standard Pauli Y. A variant with +1 in the lower-left corner
    # is still unitary but no longer sends p=0.75 to the maximally mixed state.
    p = _check_probability(p)
    s = np.sqrt(p / 3)
    return KrausChannel("depolarizing", p, (np.sqrt(1 - p) * I2, s * X, s * Y, s * Z))


CHANNELS = {
    "bit_flip": bit_flip,
    "phase_flip": phase_flip,
    "phase_damping": phase_damping,
    "amplitude_damping": amplitude_damping,
    "depolarizing": depolarizing,
}


def make_channel(label: str, probability: float) -> KrausChannel:
    try:
        ctor = CHANNELS[label]
    except KeyError:
        raise ValueError(f"unknown channel {label!r}; expected one of {sorted(CHANNELS)}") from None
    return ctor(probability)


def validate_cptp(operators) -> tuple[bool, float]:
    """Check completeness of a Kraus set; returns ``(ok, max deviation)``."""
    ops = [np.asarray(k, dtype=complex) for k in operators]
    if not ops:
        raise ValueError("empty Kraus operator list")
    for k in ops:
        if k.shape != (2, 2):
            raise ValueError(f"Kraus operators must be 2x2, got {k.shape}")
    total = sum(k.conj().T @ k for k in ops)
    dev = float(np.max(np.abs(total - I2)))
    return dev < CPTP_TOL, dev


@dataclass(frozen=True)
class NoiseConfig:
    """A channel appended to every active qubit after the last variational layer."""

    channel: str
    probability: float
    placement: str = "end_of_circuit"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        _check_probability(self.probability)
        if self.placement != "end_of_circuit":
            raise ValueError(f"unsupported placement {self.placement!r}")

    def kraus(self) -> KrausChannel:
        return make_channel(self.channel, self.probability)
