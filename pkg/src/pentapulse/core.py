"""Domain types shared by every other module.

Everything is dimensionless: times in units of a reference pulse duration
``T_ref``, Rabi frequencies and detunings in ``1/T_ref`` and lengths in units
of ``L = omega_ref**2 * T_ref / q``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Relative level below which a pulse counts as "off".
SUPPORT_CUTOFF = 1e-6


class SchemeKind(str, enum.Enum):
    M_TYPE = "M_TYPE"
    EXTENDED_LAMBDA = "EXTENDED_LAMBDA"


# Sign of the energy flow on transition k (levels k, k+1): +1 when level k+1 is
# the upper one (population leaving levels 1..k absorbs the field), -1 when
# level k is the upper one.
UPPER_LEVEL_SIGNS = {
    SchemeKind.M_TYPE: (1, -1, 1, -1),
    SchemeKind.EXTENDED_LAMBDA: (1, 1, -1, -1),
}


@dataclass(frozen=True)
class ScaledUnits:
    """Conversion between physical quantities and the dimensionless ones."""

    T_ref: float
    q: float
    omega_ref: float

    def __post_init__(self) -> None:
        for name in ("T_ref", "q", "omega_ref"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def length_unit(self) -> float:
        return self.omega_ref**2 * self.T_ref / self.q

    def time_to_scaled(self, t):
        return np.asarray(t) / self.T_ref

    def time_from_scaled(self, tau):
        return np.asarray(tau) * self.T_ref

    def rate_to_scaled(self, w):
        return np.asarray(w) * self.T_ref

    def rate_from_scaled(self, w):
        return np.asarray(w) / self.T_ref

    def length_to_scaled(self, x):
        return np.asarray(x) / self.length_unit

    def length_from_scaled(self, x):
        return np.asarray(x) * self.length_unit


class EnvelopeKind(str, enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    TABULATED = "TABULATED"


@dataclass(frozen=True)
class PulseEnvelope:
    """Real, nonnegative Rabi-frequency envelope.

    ``GAUSSIAN`` evaluates ``amplitude * exp(-width * (tau - center)**2)``.
    ``TABULATED`` interpolates linearly between sorted samples and is zero
    outside their range.
    """

    kind: EnvelopeKind
    amplitude: float = 0.0
    width: float = 1.0
    center: float = 0.0
    samples: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind is EnvelopeKind.GAUSSIAN:
            if self.amplitude < 0:
                raise ValueError("amplitude must be >= 0")
            if self.width <= 0:
                raise ValueError("width must be > 0")
        else:
            if len(self.samples) < 2:
                raise ValueError("tabulated envelope needs at least two samples")
            taus = [s[0] for s in self.samples]
            if any(b <= a for a, b in zip(taus, taus[1:])):
                raise ValueError("tabulated samples must be strictly increasing in tau")
            if any(s[1] < 0 for s in self.samples):
                raise ValueError("tabulated values must be >= 0")

    @classmethod
    def gaussian(cls, amplitude: float, width: float = 1.0, center: float = 0.0) -> PulseEnvelope:
        return cls(EnvelopeKind.GAUSSIAN, float(amplitude), float(width), float(center))

    @classmethod
    def tabulated(cls, taus: Sequence[float], values: Sequence[float]) -> PulseEnvelope:
        samples = tuple((float(t), float(v)) for t, v in zip(taus, values))
        return cls(EnvelopeKind.TABULATED, samples=samples)

    @classmethod
    def off(cls) -> PulseEnvelope:
        return cls.gaussian(0.0)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind is EnvelopeKind.GAUSSIAN:
            return self.amplitude * np.exp(-self.width * (tau - self.center) ** 2)
        t, v = np.array(self.samples).T
        return np.interp(tau, t, v, left=0.0, right=0.0)

    @property
    def peak(self) -> float:
        if self.kind is EnvelopeKind.GAUSSIAN:
            return self.amplitude
        return max(s[1] for s in self.samples)

    @property
    def is_off(self) -> bool:
        return self.peak == 0.0

    def fwhm(self) -> float:
        """Full width at half maximum (``inf`` for a switched-off pulse)."""
        if self.is_off:
            return math.inf
        if self.kind is EnvelopeKind.GAUSSIAN:
            return 2.0 * math.sqrt(math.log(2.0) / self.width)
        t, v = np.array(self.samples).T
        half = 0.5 * v.max()
        above = np.nonzero(v >= half)[0]
        i0, i1 = above[0], above[-1]
        left = t[i0] if i0 == 0 else np.interp(half, [v[i0 - 1], v[i0]], [t[i0 - 1], t[i0]])
        right = t[i1] if i1 == len(t) - 1 else np.interp(half, [v[i1 + 1], v[i1]], [t[i1 + 1], t[i1]])
        return float(right - left)

    def scaled(self, factor: float) -> PulseEnvelope:
        if self.kind is EnvelopeKind.GAUSSIAN:
            return PulseEnvelope.gaussian(self.amplitude * factor, self.width, self.center)
        return PulseEnvelope.tabulated([s[0] for s in self.samples], [s[1] * factor for s in self.samples])

    def shifted(self, dt: float) -> PulseEnvelope:
        if self.kind is EnvelopeKind.GAUSSIAN:
            return PulseEnvelope.gaussian(self.amplitude, self.width, self.center + dt)
        return PulseEnvelope.tabulated([s[0] + dt for s in self.samples], [s[1] for s in self.samples])


@dataclass(frozen=True)
class PulseSet:
    """Four envelopes (transitions 1-2, 2-3, 3-4, 4-5), their single-photon
    detunings and the level scheme."""

    envelopes: tuple[PulseEnvelope, PulseEnvelope, PulseEnvelope, PulseEnvelope]
    detunings: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    scheme: SchemeKind = SchemeKind.M_TYPE

    def __post_init__(self) -> None:
        if len(self.envelopes) != 4 or len(self.detunings) != 4:
            raise ValueError("a pulse set has exactly four envelopes and four detunings")
        object.__setattr__(self, "envelopes", tuple(self.envelopes))
        object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))

    @classmethod
    def resonant(cls, envelopes: Sequence[PulseEnvelope], delta: float,
                 scheme: SchemeKind = SchemeKind.M_TYPE) -> PulseSet:
        """Pulse set whose detunings satisfy two-photon resonance with
        ``delta_1 = delta_3 = delta``."""
        return cls(tuple(envelopes), resonant_detunings(scheme, delta), scheme)

    def rabi(self, tau) -> np.ndarray:
        """Rabi frequencies with shape ``tau.shape + (4,)``."""
        tau = np.asarray(tau, dtype=float)
        return np.stack([env(tau) for env in self.envelopes], axis=-1)

    @property
    def multiphoton_detunings(self) -> tuple[float, float, float, float]:
        return compose_multiphoton_detunings(self.scheme, self.detunings)

    @property
    def peak_rabi(self) -> float:
        return max(env.peak for env in self.envelopes)

    def with_envelope(self, index: int, envelope: PulseEnvelope) -> PulseSet:
        envs = list(self.envelopes)
        envs[index] = envelope
        return PulseSet(tuple(envs), self.detunings, self.scheme)

    def shortest_fwhm(self) -> float:
        return min(env.fwhm() for env in self.envelopes)


@dataclass(frozen=True)
class Grid:
    tau_min: float
    tau_max: float
    n_tau: int
    x_max: float = 0.0
    n_x: int = 1

    def __post_init__(self) -> None:
        if not self.tau_min < self.tau_max:
            raise ValueError("tau_min must be < tau_max")
        if self.n_tau < 2:
            raise ValueError("n_tau must be >= 2")
        if self.n_x < 1:
            raise ValueError("n_x must be >= 1")
        if self.x_max < 0:
            raise ValueError("x_max must be >= 0")

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(self.tau_min, self.tau_max, self.n_tau)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_x + 1)

    @property
    def dtau(self) -> float:
        return (self.tau_max - self.tau_min) / (self.n_tau - 1)

    @property
    def dx(self) -> float:
        return self.x_max / self.n_x

    def check_support(self, pulses: PulseSet) -> None:
        """Raise unless every pulse is off at both ends of the time window."""
        for k, env in enumerate(pulses.envelopes, start=1):
            if env.is_off:
                continue
            ends = env(np.array([self.tau_min, self.tau_max]))
            if np.any(ends >= SUPPORT_CUTOFF * env.peak):
                raise ValueError(
                    f"pulse {k} has not decayed below {SUPPORT_CUTOFF:g} of its peak at the grid ends"
                )


def compose_multiphoton_detunings(scheme: SchemeKind, single: Sequence[float]) -> tuple[float, float, float, float]:
    """Multi-photon detunings (delta_1..delta_4) from single-photon ones."""
    d1, d2, d3, d4 = (float(v) for v in single)
    scheme = SchemeKind(scheme)
    if scheme is SchemeKind.M_TYPE:
        m2 = d1 - d2
        m3 = d3 + m2
        m4 = d4 - m3
    else:
        m2 = d1 + d2
        m3 = -d3 + m2
        m4 = -d4 + m3
    return d1, m2, m3, m4


def check_two_photon_resonance(deltas: Sequence[float], tol: float = 1e-12) -> bool:
    d1, d2, d3, d4 = deltas
    return abs(d2) <= tol and abs(d3 - d1) <= tol and abs(d4 - d2) <= tol


# Sign patterns (s1..s4) with detunings s_i * delta that satisfy two-photon
# resonance; fixed by exhaustive enumeration in the tests.
RESONANT_SIGNS = {
    SchemeKind.M_TYPE: (1, 1, 1, 1),
    SchemeKind.EXTENDED_LAMBDA: (1, -1, -1, 1),
}


def resonant_detunings(scheme: SchemeKind, delta: float) -> tuple[float, float, float, float]:
    return tuple(s * float(delta) for s in RESONANT_SIGNS[SchemeKind(scheme)])


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized overlap of two real profiles (1 for identical shapes)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0 if na == nb else 0.0
    return float(np.dot(a, b) / (na * nb))


def best_shift_correlation(tau: np.ndarray, signal: np.ndarray, reference, shifts: np.ndarray) -> tuple[float, float]:
    """Return the shift maximizing ``correlation(signal(tau), reference(tau - shift))``
    and the correlation achieved, refined to sub-grid precision.

    ``reference`` is a callable so shifted copies are evaluated exactly.
    """
    scores = np.array([correlation(signal, reference(tau - s)) for s in shifts])
    i = int(np.argmax(scores))
    lo = shifts[max(i - 1, 0)]
    hi = shifts[min(i + 1, len(shifts) - 1)]
    # golden-section refinement inside the neighbouring bracket
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc = correlation(signal, reference(tau - c))
    fd = correlation(signal, reference(tau - d))
    for _ in range(60):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = correlation(signal, reference(tau - c))
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = correlation(signal, reference(tau - d))
    s = 0.5 * (a + b)
    best = correlation(signal, reference(tau - s))
    if best < scores[i]:
        return float(shifts[i]), float(scores[i])
    return float(s), float(best)
