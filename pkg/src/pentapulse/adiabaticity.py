"""Dimensionless adiabaticity and medium-length margins.

Strong inequalities are operationalized with thresholds: ``>> 1`` means at
least ``threshold`` (default 10) and ``<< 1`` means below ``1 / threshold``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import SUPPORT_CUTOFF, Grid, PulseSet
from .eigen import char_poly_params

DEFAULT_THRESHOLD = 10.0
DEFAULT_SMALL = 0.1


class Verdict(str, enum.Enum):
    ADIABATIC = "ADIABATIC"
    NOT_ADIABATIC = "NOT_ADIABATIC"
    NOT_APPLICABLE = "NOT_APPLICABLE"


NOT_APPLICABLE = None  # margins that would divide by zero are reported as None


@dataclass
class AdiabaticityReport:
    """Single-atom margins (m*, g*), medium factors (f*) and the verdict.

    Any margin may be ``None`` when it is not applicable (division by a zero
    detuning, or no pulse overlap).
    """

    m1: float | None = None
    m2: float | None = None
    m3: float | None = None
    g1: float | None = None
    g2: float | None = None
    g3: float | None = None
    f1: float | None = None
    f2: float | None = None
    f3: float | None = None
    alpha0_x: float | None = None
    x_ad: float | None = None
    T: float | None = None
    tau_overlap: float | None = None
    regime: str = ""
    threshold: float = DEFAULT_THRESHOLD
    verdict: Verdict = Verdict.NOT_APPLICABLE
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.ADIABATIC


def _div(a: float, b: float) -> float | None:
    return None if b == 0 else a / b


def _sample_tau(pulses: PulseSet, grid: Grid | None) -> np.ndarray:
    if grid is not None:
        return grid.tau
    lo, hi = [], []
    for env in pulses.envelopes:
        if env.is_off:
            continue
        if env.kind.value == "GAUSSIAN":
            half = math.sqrt(-math.log(SUPPORT_CUTOFF) / env.width)
            lo.append(env.center - half)
            hi.append(env.center + half)
        else:
            lo.append(env.samples[0][0])
            hi.append(env.samples[-1][0])
    if not lo:
        return np.zeros(1)
    return np.linspace(min(lo), max(hi), 4001)


def single_atom_margins(pulses: PulseSet, T: float | None = None, delta: float | None = None,
                        threshold: float = DEFAULT_THRESHOLD, grid: Grid | None = None) -> AdiabaticityReport:
    """Single-atom margins.

    ``T`` defaults to the FWHM of the narrowest pulse and ``delta`` to the
    first multi-photon detuning.  The m-set (coinciding Omega_1 and Omega_4)
    takes the largest couplings inside the overlap window, i.e. where
    ``V**4`` is not negligible; the general g-set is evaluated at the instant
    of maximal overlap (largest ``V**4``).
    """
    if delta is None:
        delta = pulses.multiphoton_detunings[0]
    if T is None:
        T = pulses.shortest_fwhm()
    rep = AdiabaticityReport(threshold=threshold)
    if not math.isfinite(T) or T <= 0:
        rep.flags.append("ALL_FIELDS_OFF")
        rep.m1 = abs(delta) * T if math.isfinite(T) else None
        rep.m2 = rep.m3 = 0.0
        return rep
    rep.T = float(T)
    tau = _sample_tau(pulses, grid)
    o = pulses.rabi(tau)
    a, b, c, d = (o[:, k] ** 2 for k in range(4))
    p = char_poly_params(o[:, 0], o[:, 1], o[:, 2], o[:, 3])
    rep.m1 = abs(delta) * T
    if np.max(p.v4) <= 0:
        rep.m2 = rep.m3 = 0.0
        rep.flags.append("NO_OVERLAP")
        rep.verdict = Verdict.NOT_APPLICABLE
        return rep
    window = p.v4 >= SUPPORT_CUTOFF * p.v4.max()
    k = int(np.argmax(p.v4))
    rep.tau_overlap = float(tau[k])
    rep.m2 = _div(float(np.max((b + c)[window])) * T, abs(delta))
    rep.m3 = _div(float(np.max(a[window])) * T, abs(delta))
    x1, x2 = float(p.x1[k]), float(p.x2[k])
    rep.g1 = (x2 - x1) * T / math.sqrt(delta**2 + 4.0 * x2)
    rep.g2 = math.sqrt(delta**2 + 4.0 * x1) * T
    rep.g3 = min(x1 * T / math.sqrt(delta**2 + 4.0 * x1), x2 * T / math.sqrt(delta**2 + 4.0 * x2))
    coinciding = np.allclose(o[:, 0], o[:, 3], rtol=0.0, atol=1e-12 * max(1.0, pulses.peak_rabi))
    rep.regime = "special" if coinciding else "general"
    margins = [rep.m1, rep.m2, rep.m3] if coinciding else [rep.g1, rep.g2, rep.g3]
    if any(m is None for m in margins):
        rep.flags.append("ZERO_DETUNING")
        margins = [m for m in margins if m is not None]
    rep.verdict = Verdict.ADIABATIC if all(m >= threshold for m in margins) else Verdict.NOT_ADIABATIC
    return rep


def max_adiabatic_length(q: float, delta: float, T: float, small: float = DEFAULT_SMALL) -> float:
    """Length at which ``(q x / delta) / (delta T)`` reaches ``small``."""
    return small * delta * delta * T / q


def medium_margins(q: float, x: float, delta: float, T: float, omega2: float,
                   gamma: float | None = None, small: float = DEFAULT_SMALL) -> AdiabaticityReport:
    """Medium factors for a length ``x``.

    f1 must stay below ``small``; f2 (pump depletion) and f3 (optical length)
    are advisory scales of order one and only raise flags.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    rep = AdiabaticityReport(threshold=1.0 / small, T=T, regime="medium")
    if delta == 0:
        rep.flags.append("ZERO_DETUNING")
        rep.f2 = _div(q * x, omega2 * T)
        rep.verdict = Verdict.NOT_APPLICABLE
        return rep
    ad = abs(delta)
    rep.f3 = q * x / ad
    rep.f1 = rep.f3 / (ad * T)
    rep.f2 = _div(q * x, omega2 * T)
    rep.x_ad = max_adiabatic_length(q, ad, T, small)
    if gamma is not None:
        rep.alpha0_x = _div(q * x, gamma)
    if rep.f2 is not None and rep.f2 >= 1.0:
        rep.flags.append("PUMP_DEPLETION_SCALE")
    if rep.f3 > 1.0:
        rep.flags.append("OPTICAL_LENGTH_SCALE")
    rep.verdict = Verdict.ADIABATIC if rep.f1 < small else Verdict.NOT_ADIABATIC
    return rep
