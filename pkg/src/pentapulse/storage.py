"""Writing a probe pulse into the medium coherence and reading it back.

Conventions: ``rho_ij = b_i conj(b_j)``; the five-level channel stores the
probe Omega_2 into rho_51 (controls Omega_1 = Omega_4 and Omega_3) and the
three-level 1-2-3 channel stores a weak Omega_1 into rho_31 with Omega_2 as
control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SUPPORT_CUTOFF, Grid, PulseEnvelope, PulseSet, SchemeKind
from .propagation import (
    Cumulative,
    FieldMap,
    MediumParams,
    mixing_theta,
    probe_delay,
    propagate,
    xi_asymptotic,
)

FIVE_LEVEL = "five-level"
LAMBDA_123 = "lambda-123"
CHANNELS = (FIVE_LEVEL, LAMBDA_123)

# (probe transition, stored coherence) per channel, 1-based
_CHANNEL = {FIVE_LEVEL: (2, (5, 1)), LAMBDA_123: (1, (3, 1))}


@dataclass
class StorageRecord:
    x: np.ndarray
    rho51: np.ndarray
    rho31: np.ndarray
    xi: np.ndarray  # xi(x) for tau -> infinity (NaN beyond x_max)
    x_max: float
    residual_fraction: float  # probe energy transmitted at x_max / input energy
    transmitted: np.ndarray  # probe energy at every x / input energy
    predicted_rho51: np.ndarray
    states: np.ndarray  # (n_x+1, 5) atomic amplitudes after the write
    partial: bool
    min_p1_pulses_off: float
    fieldmap: FieldMap | None = field(default=None, repr=False)

    @property
    def mapping_error(self) -> float:
        """L-infinity distance between |rho_51(x)| and |sin cos| of theta_0(xi(x)) inside x_max."""
        ok = np.isfinite(self.predicted_rho51)
        return float(np.max(np.abs(np.abs(self.rho51[ok]) - np.abs(self.predicted_rho51[ok]))))

    @property
    def max_rho31(self) -> float:
        return float(np.max(np.abs(self.rho31)))

    def summary(self) -> dict:
        return {
            "x_max": self.x_max,
            "residual_fraction": self.residual_fraction,
            "partial": self.partial,
            "mapping_error": self.mapping_error,
            "max_abs_rho51": float(np.max(np.abs(self.rho51))),
            "max_abs_rho31": self.max_rho31,
            "min_p1_pulses_off": self.min_p1_pulses_off,
        }


def omega0_cumulative(boundary: PulseSet, tau_min: float, tau_max: float) -> Cumulative:
    return Cumulative.of_pulses(boundary, tau_min, tau_max)


def _support(boundary: PulseSet) -> tuple[float, float]:
    from .dynamics import default_window

    lo, hi = default_window(boundary)
    return lo - 1.0, hi + 1.0


def compute_x_max(boundary: PulseSet, q: float) -> float:
    """Depth with ``q x_max = int Omega_0^2 dtau`` (Omega_0^2 = Omega_2^2 + Omega_3^2)."""
    if q <= 0:
        raise ValueError("q must be > 0")
    return omega0_cumulative(boundary, *_support(boundary)).total / q


def predicted_coherence(boundary: PulseSet, q: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """xi(x) and the adiabatic prediction ``-sin(theta_0) cos(theta_0)`` at xi(x)."""
    cum = omega0_cumulative(boundary, *_support(boundary))
    xi = xi_asymptotic(cum, q * np.asarray(x, dtype=float))
    theta = mixing_theta(boundary, np.nan_to_num(xi, nan=0.0))
    pred = np.where(np.isfinite(xi), -np.sin(theta) * np.cos(theta), np.nan)
    return xi, pred


def pulses_off_mask(pulses: PulseSet, tau: np.ndarray) -> np.ndarray:
    """Time nodes where every pulse is below the support cut-off."""
    r = pulses.rabi(tau)
    mask = np.ones(len(tau), dtype=bool)
    for k, env in enumerate(pulses.envelopes):
        if not env.is_off:
            mask &= r[:, k] < SUPPORT_CUTOFF * env.peak
    return mask


def _record(fm: FieldMap, boundary: PulseSet, medium: MediumParams, probe: int = 2) -> StorageRecord:
    q = medium.q[probe - 1]
    x_max = compute_x_max(boundary, q)
    E = fm.energy(probe)
    transmitted = E / E[0] if E[0] > 0 else np.zeros_like(E)
    x = fm.x
    partial = bool(x[-1] < x_max * (1.0 - 1e-9))
    residual = float(np.interp(x_max, x, transmitted)) if not partial else float(transmitted[-1])
    xi, pred = predicted_coherence(boundary, q, x)
    states = fm.amplitudes[:, -1, :].copy()
    rho51 = states[:, 4] * np.conj(states[:, 0])
    rho31 = states[:, 2] * np.conj(states[:, 0])
    off = pulses_off_mask(boundary, fm.tau)
    p1 = fm.populations[:, :, 0]
    min_p1 = float(p1[:, off].min()) if np.any(off) else math.nan
    return StorageRecord(x, rho51, rho31, xi, x_max, residual, transmitted, pred, states, partial, min_p1, fm)


def write_pulse(boundary: PulseSet, medium: MediumParams, grid: Grid, initial=None) -> StorageRecord:
    """Propagate a weak Omega_2 probe with its controls and record the coherence
    left behind once every pulse is off."""
    fm = propagate(boundary, medium, grid, initial=initial)
    return _record(fm, boundary, medium)


def reconstruct_states(rho51: np.ndarray, rho31: np.ndarray) -> np.ndarray:
    """Pure states with real positive b_1 reproducing the given rho_51 and rho_31.

    With ``s = |rho_51|^2 + |rho_31|^2`` the population of |1> is the larger
    root of ``y^2 - y + s = 0``; for a single write this is the dark
    superposition ``cos(theta)|1> - sin(theta)|5>``.
    """
    s = np.abs(rho51) ** 2 + np.abs(rho31) ** 2
    if np.any(s > 0.25 + 1e-12):
        raise ValueError("coherences too large for a pure state")
    y = 0.5 * (1.0 + np.sqrt(np.maximum(1.0 - 4.0 * s, 0.0)))
    b1 = np.sqrt(y)
    out = np.zeros((len(rho51), 5), dtype=np.complex128)
    out[:, 0] = b1
    out[:, 2] = rho31 / b1
    out[:, 4] = rho51 / b1
    return out


@dataclass
class RetrievalResult:
    channel: str
    tau: np.ndarray
    output: np.ndarray  # complex probe envelope at the exit face
    energy: float
    delay: float
    correlation: float
    states_after: np.ndarray
    fieldmap: FieldMap = field(repr=False)

    def summary(self) -> dict:
        return {"channel": self.channel, "energy": self.energy, "delay": self.delay,
                "correlation": self.correlation}


def retrieve(states: np.ndarray, controls: PulseSet, medium: MediumParams, grid: Grid,
             reference: PulseEnvelope, channel: str = FIVE_LEVEL) -> RetrievalResult:
    """Turn the read-out controls on over a medium prepared in ``states``.

    ``states`` is an ``(n_x+1, 5)`` array, e.g. ``StorageRecord.states`` or
    the output of :func:`reconstruct_states`.  The emitted probe is taken at
    the exit face and compared in shape with ``reference``.
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    k, _ = _CHANNEL[channel]
    if not controls.envelopes[k - 1].is_off:
        raise ValueError("the probe transition must be dark at the entrance during retrieval")
    fm = propagate(controls, medium, grid, initial=states)
    out = fm.fields[-1, :, k - 1]
    energy = float(np.trapezoid(np.abs(out) ** 2, fm.tau))
    if energy > 0:
        delay, corr = probe_delay(fm, controls.with_envelope(k - 1, reference), grid.x_max, k=k)
    else:
        delay, corr = 0.0, 0.0
    return RetrievalResult(channel, fm.tau, out, energy, delay, corr, fm.amplitudes[:, -1, :].copy(), fm)


def coherence_weight(states: np.ndarray, x: np.ndarray, channel: str) -> float:
    """Integral over x of |rho|^2 for the coherence of ``channel``."""
    _, (i, j) = _CHANNEL[channel]
    rho = states[:, i - 1] * np.conj(states[:, j - 1])
    return float(np.trapezoid(np.abs(rho) ** 2, x)) if len(x) > 1 else float(np.abs(rho[0]) ** 2)


# --- double storage --------------------------------------------------------

@dataclass(frozen=True)
class DoubleStorageSchedule:
    """Pulse groups of the two writes and of the two read-outs."""

    write1: PulseSet
    write2: PulseSet
    read1: PulseSet  # five-level read-out (probe transition 2 dark)
    read2: PulseSet  # 1-2-3 read-out (probe transition 1 dark)
    probe1: PulseEnvelope
    probe2: PulseEnvelope


def default_double_schedule(delta: float = 100.0, amplitude: float = 30.0,
                            probe_amplitude: float = 0.1) -> DoubleStorageSchedule:
    """Fig. 8 shapes for the five-level write; the 1-2-3 write reuses the same
    control and probe shapes on transitions 2 and 1."""
    G = PulseEnvelope.gaussian
    off = PulseEnvelope.off()
    pump = G(amplitude, 3.0)
    control = G(amplitude, 1.0)
    probe = G(probe_amplitude, 5.0)
    m = SchemeKind.M_TYPE
    return DoubleStorageSchedule(
        write1=PulseSet.resonant([pump, probe, control, pump], delta, m),
        write2=PulseSet.resonant([probe, control, off, off], delta, m),
        read1=PulseSet.resonant([pump, off, control, pump], delta, m),
        read2=PulseSet.resonant([off, control, off, off], delta, m),
        probe1=probe,
        probe2=probe,
    )


@dataclass
class DoubleStorageResult:
    record1: StorageRecord
    after_write2: np.ndarray  # states
    rho51_after_write2: np.ndarray
    rho31_after_write2: np.ndarray
    retrievals: dict[str, list[RetrievalResult]]
    crosstalk: dict[str, list[float]]

    def summary(self) -> dict:
        return {
            "write1": self.record1.summary(),
            "after_write2": {
                "max_abs_rho51": float(np.max(np.abs(self.rho51_after_write2))),
                "max_abs_rho31": float(np.max(np.abs(self.rho31_after_write2))),
            },
            "retrievals": {k: [r.summary() for r in v] for k, v in self.retrievals.items()},
            "crosstalk": self.crosstalk,
        }


def double_storage_protocol(schedule: DoubleStorageSchedule, medium: MediumParams, grid: Grid) -> DoubleStorageResult:
    """Store Omega_2 into rho_51, then Omega_1 into rho_31, and read both back
    in either order.

    Cross-talk of a read-out is the fraction of the other channel's stored
    coherence weight (integral of |rho|^2 over x) that the read-out destroys,
    relative to the weight of the channel being read.
    """
    if medium.scheme is not SchemeKind.M_TYPE or schedule.write1.scheme is not SchemeKind.M_TYPE:
        raise ValueError("double storage is defined for the M scheme only")
    rec1 = write_pulse(schedule.write1, medium, grid)
    fm2 = propagate(schedule.write2, medium, grid, initial=rec1.states)
    s2 = fm2.amplitudes[:, -1, :].copy()
    x = grid.x
    reads = {FIVE_LEVEL: (schedule.read1, schedule.probe1), LAMBDA_123: (schedule.read2, schedule.probe2)}
    retrievals: dict[str, list[RetrievalResult]] = {}
    crosstalk: dict[str, list[float]] = {}
    for order in ((FIVE_LEVEL, LAMBDA_123), (LAMBDA_123, FIVE_LEVEL)):
        key = "five-level,lambda-123" if order[0] == FIVE_LEVEL else "lambda-123,five-level"
        states = s2
        results, xt = [], []
        for ch in order:
            other = LAMBDA_123 if ch == FIVE_LEVEL else FIVE_LEVEL
            before_t = coherence_weight(states, x, ch)
            before_o = coherence_weight(states, x, other)
            controls, ref = reads[ch]
            res = retrieve(states, controls, medium, grid, ref, ch)
            after_o = coherence_weight(res.states_after, x, other)
            xt.append(abs(before_o - after_o) / before_t if before_t > 0 else math.inf)
            results.append(res)
            states = res.states_after
        retrievals[key] = results
        crosstalk[key] = xt
    rho51 = s2[:, 4] * np.conj(s2[:, 0])
    rho31 = s2[:, 2] * np.conj(s2[:, 0])
    return DoubleStorageResult(rec1, s2, rho51, rho31, retrievals, crosstalk)
