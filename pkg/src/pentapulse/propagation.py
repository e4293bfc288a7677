"""Maxwell-Bloch propagation of the four pulses through a 1-D medium.

Coordinates are the running frame (x, tau = t - x/c).  For fixed tau the
field equation

    dOmega_k/dx = i q_k s_k b_k conj(b_{k+1})

has a right-hand side that depends on the atoms only.  The solver therefore
marches in tau with classical RK4 for the atoms of every x-slice at once.  At
each stage, the fields at all slices are rebuilt from the boundary values by
cumulative trapezoidal quadrature in x, which is second order in dx.
``s_k = -1`` when level k+1 is the upper level of transition k (absorption)
and ``+1`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adiabaticity import AdiabaticityReport, medium_margins, single_atom_margins
from .core import (
    UPPER_LEVEL_SIGNS,
    Grid,
    PulseSet,
    SchemeKind,
    best_shift_correlation,
    check_two_photon_resonance,
    correlation,
)
from .dynamics import STEP_SAFETY

# Abort when the fields inside the medium push dtau*||H|| beyond this value.
GROWTH_LIMIT = 0.5
# Nodes per unit tau used for the xi quadrature.
XI_SAMPLES_PER_UNIT = 2000


class PropagationError(RuntimeError):
    """Numerical failure during propagation; ``slice_index`` locates it."""

    def __init__(self, message: str, slice_index: int | None = None, tau: float | None = None):
        super().__init__(message)
        self.slice_index = slice_index
        self.tau = tau


class RegimeError(ValueError):
    """Preconditions of an analytic regime are not met."""


@dataclass(frozen=True)
class MediumParams:
    q: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    scheme: SchemeKind = SchemeKind.M_TYPE

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in self.q)
        if len(q) != 4:
            raise ValueError("four propagation constants are required")
        if any(v < 0 for v in q):
            raise ValueError("propagation constants must be >= 0")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))

    @classmethod
    def uniform(cls, q: float, scheme: SchemeKind = SchemeKind.M_TYPE) -> MediumParams:
        return cls((q, q, q, q), scheme)

    @property
    def source_signs(self) -> np.ndarray:
        return -np.array(UPPER_LEVEL_SIGNS[self.scheme], dtype=float)


@dataclass
class FieldMap:
    x: np.ndarray
    tau: np.ndarray
    fields: np.ndarray  # (n_x+1, n_tau, 4) complex Rabi frequencies
    amplitudes: np.ndarray  # (n_x+1, n_tau, 5) atomic amplitudes
    diagnostics: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def coherence(self, i: int, j: int) -> np.ndarray:
        """rho_ij(x, tau) = b_i conj(b_j), 1-based levels."""
        return self.amplitudes[..., i - 1] * np.conj(self.amplitudes[..., j - 1])

    def energy(self, k: int) -> np.ndarray:
        """Pulse energy int |Omega_k|^2 dtau at every x (1-based transition)."""
        return np.trapezoid(np.abs(self.fields[:, :, k - 1]) ** 2, self.tau, axis=1)

    def slice_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.x - x)))


def _hamiltonian_bound(rabi_max: np.ndarray, deltas) -> float:
    # Gershgorin bound on ||H|| for couplings up to rabi_max on each transition
    r = np.concatenate([[0.0], np.abs(rabi_max), [0.0]])
    diag = np.concatenate([[0.0], np.abs(deltas)])
    return float(np.max(diag + r[:-1] + r[1:]))


def substeps_for(boundary: PulseSet, grid: Grid, safety: float = STEP_SAFETY) -> int:
    """RK4 substeps per grid interval so that h * ||H|| stays below ``safety``."""
    peaks = np.array([env.peak for env in boundary.envelopes])
    bound = _hamiltonian_bound(peaks, boundary.multiphoton_detunings)
    return max(1, int(math.ceil(grid.dtau * bound / safety)))


def propagate(boundary: PulseSet, medium: MediumParams, grid: Grid, initial=None,
              substeps: int | None = None, check_support: bool = True) -> FieldMap:
    """Full self-consistent solution on ``grid``.

    ``initial`` is the atomic state at ``tau_min``: ``None`` for the ground
    state everywhere, a 5-vector shared by all slices, or an ``(n_x+1, 5)``
    array (one state per slice, e.g. a stored coherence).
    """
    if check_support:
        grid.check_support(boundary)
    if medium.scheme is not boundary.scheme:
        raise ValueError("medium and pulse set use different schemes")
    x = grid.x
    tau = grid.tau
    nxp = len(x)
    dx = grid.dx
    b = np.zeros((nxp, 5), dtype=np.complex128)
    if initial is None:
        b[:, 0] = 1.0
    else:
        init = np.asarray(initial, dtype=np.complex128)
        b[:] = init if init.shape == (nxp, 5) else np.broadcast_to(init, (nxp, 5))
    m = substeps if substeps is not None else substeps_for(boundary, grid)
    h = grid.dtau / m
    qs = np.array(medium.q) * medium.source_signs
    deltas = np.array(boundary.multiphoton_detunings)
    diag = np.concatenate([[0.0], deltas])
    # boundary fields at every RK4 stage time (half steps)
    n_int = len(tau) - 1
    t_half = tau[0] + 0.5 * h * np.arange(2 * m * n_int + 1)
    bnd = boundary.rabi(t_half).astype(np.complex128)

    def fields_of(k_half: int, bb: np.ndarray) -> np.ndarray:
        src = (1j * qs) * bb[:, :4] * np.conj(bb[:, 1:])
        out = np.empty((nxp, 4), dtype=np.complex128)
        out[0] = bnd[k_half]
        if nxp > 1:
            np.cumsum(0.5 * dx * (src[1:] + src[:-1]), axis=0, out=out[1:])
            out[1:] += bnd[k_half]
        return out

    def rhs(k_half: int, bb: np.ndarray) -> np.ndarray:
        O = fields_of(k_half, bb)
        Hb = diag * bb
        Hb[:, :4] -= O * bb[:, 1:]
        Hb[:, 1:] -= np.conj(O) * bb[:, :4]
        return -1j * Hb

    F = np.empty((nxp, len(tau), 4), dtype=np.complex128)
    B = np.empty((nxp, len(tau), 5), dtype=np.complex128)
    F[:, 0] = fields_of(0, b)
    B[:, 0] = b
    for i in range(n_int):
        for j in range(m):
            k0 = 2 * (i * m + j)
            k1 = rhs(k0, b)
            k2 = rhs(k0 + 1, b + 0.5 * h * k1)
            k3 = rhs(k0 + 1, b + 0.5 * h * k2)
            k4 = rhs(k0 + 2, b + h * k3)
            b = b + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Fi = fields_of(2 * m * (i + 1), b)
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(Fi))):
            bad = np.nonzero(~np.all(np.isfinite(b), axis=1) | ~np.all(np.isfinite(Fi), axis=1))[0]
            raise PropagationError("non-finite values", int(bad[0]) if len(bad) else None, float(tau[i + 1]))
        peak = np.max(np.abs(Fi), axis=0)
        if h * _hamiltonian_bound(peak, deltas) > GROWTH_LIMIT:
            j = int(np.argmax(np.max(np.abs(Fi), axis=1)))
            raise PropagationError("field growth exceeds the integration step bound", j, float(tau[i + 1]))
        F[:, i + 1] = Fi
        B[:, i + 1] = b
    fm = FieldMap(x, tau.copy(), F, B)
    fm.diagnostics = field_diagnostics(fm, boundary, medium)
    fm.diagnostics["substeps"] = m
    return fm


def balance_residuals(fm: FieldMap, medium: MediumParams) -> np.ndarray:
    """Relative residual of ``d|Omega_k|^2/dx = q_k sigma_k d(sum_{i<=k}|b_i|^2)/dtau``.

    Both sides are evaluated by second-order finite differences on the stored
    grid; the residual is normalized by the largest magnitude of either side.
    """
    if len(fm.x) < 3:
        return np.zeros(4)
    sigma = UPPER_LEVEL_SIGNS[medium.scheme]
    I = np.abs(fm.fields) ** 2
    P = np.cumsum(fm.populations, axis=2)
    lhs = np.gradient(I, fm.x, axis=0)
    dP = np.gradient(P, fm.tau, axis=1)
    out = np.zeros(4)
    for k in range(4):
        rhs = medium.q[k] * sigma[k] * dP[:, :, k]
        scale = max(np.abs(lhs[:, :, k]).max(), np.abs(rhs).max())
        if scale > 0:
            out[k] = np.abs(lhs[:, :, k] - rhs).max() / scale
    return out


def detuning_shifts(fm: FieldMap) -> np.ndarray:
    """Energy-weighted mean instantaneous frequency of each field, ``(n_x+1, 4)``,
    relative to the entrance face."""
    F = fm.fields
    dF = np.gradient(F, fm.tau, axis=1)
    num = np.trapezoid(np.imag(np.conj(F) * dF), fm.tau, axis=1)
    den = np.trapezoid(np.abs(F) ** 2, fm.tau, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return nu - nu[0]


def field_diagnostics(fm: FieldMap, boundary: PulseSet, medium: MediumParams) -> dict:
    shifts = detuning_shifts(fm)
    mod = np.abs(fm.fields)
    jumps = np.max(np.abs(np.diff(mod, axis=0)), axis=(0, 1)) if len(fm.x) > 1 else np.zeros(4)
    return {
        "balance_residual": balance_residuals(fm, medium).tolist(),
        "max_detuning_shift": np.max(np.abs(shifts), axis=0).tolist(),
        "max_slice_jump": jumps.tolist(),
        "norm_drift": float(np.max(np.abs(fm.populations.sum(axis=2) - 1.0))),
    }


# --- implicit retarded coordinate ------------------------------------------

@dataclass(frozen=True)
class Cumulative:
    """Piecewise-linear omega0^2 samples and their exact running integral."""

    tau: np.ndarray
    values: np.ndarray
    integral: np.ndarray

    @classmethod
    def from_samples(cls, tau: np.ndarray, values: np.ndarray) -> Cumulative:
        tau = np.asarray(tau, dtype=float)
        values = np.asarray(values, dtype=float)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(tau) * (values[1:] + values[:-1]))])
        return cls(tau, values, integral)

    @classmethod
    def of_pulses(cls, pulses: PulseSet, tau_min: float, tau_max: float,
                  samples_per_unit: int = XI_SAMPLES_PER_UNIT) -> Cumulative:
        n = int(math.ceil((tau_max - tau_min) * samples_per_unit)) + 1
        t = np.linspace(tau_min, tau_max, n)
        r = pulses.rabi(t)
        return cls.from_samples(t, r[:, 1] ** 2 + r[:, 2] ** 2)

    @property
    def total(self) -> float:
        return float(self.integral[-1])

    def at(self, tau) -> np.ndarray:
        """Running integral from tau_min to ``tau`` (exact for the linear interpolant)."""
        tau = np.clip(np.asarray(tau, dtype=float), self.tau[0], self.tau[-1])
        i = np.clip(np.searchsorted(self.tau, tau, side="right") - 1, 0, len(self.tau) - 2)
        s = tau - self.tau[i]
        hh = self.tau[i + 1] - self.tau[i]
        f0, f1 = self.values[i], self.values[i + 1]
        return self.integral[i] + f0 * s + 0.5 * (f1 - f0) * s * s / hh

    def invert(self, target) -> np.ndarray:
        """tau with running integral equal to ``target`` (NaN when out of range)."""
        target = np.asarray(target, dtype=float)
        ok = (target >= 0.0) & (target <= self.total)
        tgt = np.where(ok, target, 0.0)
        i = np.clip(np.searchsorted(self.integral, tgt, side="left") - 1, 0, len(self.tau) - 2)
        c = tgt - self.integral[i]
        hh = self.tau[i + 1] - self.tau[i]
        f0, f1 = self.values[i], self.values[i + 1]
        a = 0.5 * (f1 - f0) / hh
        # root of a s^2 + f0 s - c = 0 in [0, hh], written without cancellation
        disc = np.sqrt(np.maximum(f0 * f0 + 4.0 * a * c, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(f0 + disc > 0, 2.0 * c / np.where(f0 + disc > 0, f0 + disc, 1.0), 0.0)
        s = np.clip(s, 0.0, hh)
        return np.where(ok, self.tau[i] + s, np.nan)


NO_ROOT = math.nan


def xi_solve(cum: Cumulative, qx, tau) -> np.ndarray:
    """Solve ``int_xi^tau omega0^2 dt = qx`` for xi (NaN marks NO_ROOT)."""
    qx = np.asarray(qx, dtype=float)
    if np.any(qx < 0):
        raise ValueError("qx must be >= 0")
    tau = np.asarray(tau, dtype=float)
    xi = cum.invert(cum.at(tau) - qx)
    return np.where(qx == 0, tau, xi)


def xi_asymptotic(cum: Cumulative, qx) -> np.ndarray:
    """xi(x) for tau -> +infinity: ``int_xi^inf omega0^2 dt = qx``."""
    qx = np.asarray(qx, dtype=float)
    return cum.invert(cum.total - qx)


@dataclass
class XiMap:
    x: np.ndarray
    tau: np.ndarray
    xi: np.ndarray  # (n_x+1, n_tau); NaN where the probe has not arrived
    xi_inf: np.ndarray  # (n_x+1,)
    x_max: float
    decreasing_in_x: bool


def xi_map(boundary: PulseSet, q: float, grid: Grid, cum: Cumulative | None = None) -> XiMap:
    if cum is None:
        cum = Cumulative.of_pulses(boundary, grid.tau_min, grid.tau_max)
    x = grid.x
    xi = xi_solve(cum, q * x[:, None], grid.tau[None, :])
    xi_inf = xi_asymptotic(cum, q * x)
    with np.errstate(invalid="ignore"):
        d = np.diff(xi, axis=0)
        dec = bool(np.all(d[np.isfinite(d)] <= 0))
    return XiMap(x, grid.tau, xi, xi_inf, cum.total / q if q > 0 else math.inf, dec)


def mixing_theta(pulses: PulseSet, tau) -> np.ndarray:
    r = pulses.rabi(tau)
    return np.arctan2(r[..., 1], r[..., 2])


def analytic_split_solution(boundary: PulseSet, q: float, grid: Grid, check_margins: bool = True,
                            T: float | None = None) -> FieldMap:
    """Closed-form fields in the |lambda_1> regime.

    Omega_1 = Omega_4 keep their boundary envelope, Omega_2^2 + Omega_3^2
    keeps Omega_0^2(tau) and the mixing angle is transported,
    ``theta(x, tau) = theta_0(xi(x, tau))``.
    """
    env = boundary.envelopes
    probe = grid.tau
    if not np.array_equal(env[0](probe), env[3](probe)):
        raise RegimeError("analytic split solution needs Omega_4 = Omega_1 at the boundary")
    if not check_two_photon_resonance(boundary.multiphoton_detunings):
        raise RegimeError("two-photon resonance conditions are not met")
    delta = boundary.multiphoton_detunings[0]
    if check_margins:
        T = boundary.shortest_fwhm() if T is None else T
        rep = medium_margins(q, grid.x_max, delta, T, _omega0_sq(boundary, probe).max())
        if not rep.ok:
            raise RegimeError(f"medium margins fail: f1 = {rep.f1}")
    xm = xi_map(boundary, q, grid)
    r = boundary.rabi(probe)
    omega0 = np.sqrt(r[:, 1] ** 2 + r[:, 2] ** 2)
    theta_far = float(mixing_theta(boundary, grid.tau_min))
    theta = np.where(np.isfinite(xm.xi), mixing_theta(boundary, np.nan_to_num(xm.xi, nan=grid.tau_min)), theta_far)
    nxp = len(grid.x)
    F = np.empty((nxp, len(probe), 4), dtype=np.complex128)
    F[:, :, 0] = r[:, 0]
    F[:, :, 3] = r[:, 3]
    F[:, :, 1] = omega0 * np.sin(theta)
    F[:, :, 2] = omega0 * np.cos(theta)
    fm = FieldMap(grid.x, probe.copy(), F, np.full((nxp, len(probe), 5), np.nan, dtype=np.complex128))
    fm.diagnostics = {"xi_decreasing_in_x": xm.decreasing_in_x, "x_max": xm.x_max}
    return fm


def _omega0_sq(pulses: PulseSet, tau) -> np.ndarray:
    r = pulses.rabi(tau)
    return r[..., 1] ** 2 + r[..., 2] ** 2


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


def compare_fields(numeric: FieldMap, analytic: FieldMap, x: float) -> list[float]:
    """Relative L2 error of |Omega_k| at depth ``x`` for each field."""
    i = numeric.slice_index(x)
    j = analytic.slice_index(x)
    return [relative_l2(np.abs(numeric.fields[i, :, k]), np.abs(analytic.fields[j, :, k])) for k in range(4)]


def conservation_residual(fm: FieldMap) -> float:
    """max over x of ||Omega_2|^2 + |Omega_3|^2 - Omega_0^2|_inf / Omega_0^2(tau = 0)."""
    I = np.abs(fm.fields[:, :, 1]) ** 2 + np.abs(fm.fields[:, :, 2]) ** 2
    i0 = int(np.argmin(np.abs(fm.tau)))
    return float(np.max(np.abs(I - I[0])) / I[0, i0])


def theta_transport_residual(fm: FieldMap, q: float) -> float:
    """Relative residual of ``dtheta/dx + (q / Omega^2) dtheta/dtau = 0`` where Omega^2 is
    not negligible."""
    O2 = np.abs(fm.fields[:, :, 1])
    O3 = np.abs(fm.fields[:, :, 2])
    theta = np.arctan2(O2, O3)
    W = O2**2 + O3**2
    dx = np.gradient(theta, fm.x, axis=0)
    dt = np.gradient(theta, fm.tau, axis=1)
    mask = W > 1e-3 * W.max()
    adv = np.where(mask, q / np.where(mask, W, 1.0) * dt, 0.0)
    scale = max(np.abs(dx[mask]).max(), np.abs(adv[mask]).max())
    return float(np.abs(dx + adv)[mask].max() / scale) if scale > 0 else 0.0


@dataclass
class AdiabatonResult:
    x: list[float]
    delay: list[float]
    correlation: list[float]
    conservation_residual: float
    fieldmap: FieldMap
    margins: AdiabaticityReport

    def summary(self) -> dict:
        return {
            "x": self.x,
            "delay": self.delay,
            "correlation": self.correlation,
            "conservation_residual": self.conservation_residual,
            "diagnostics": self.fieldmap.diagnostics,
            "adiabaticity": self.margins.to_dict(),
        }


def probe_delay(fm: FieldMap, boundary: PulseSet, x: float, k: int = 2,
                max_shift: float | None = None) -> tuple[float, float]:
    """Best-shift delay and correlation of |Omega_k(x, tau)| against the
    boundary envelope."""
    i = fm.slice_index(x)
    signal = np.abs(fm.fields[i, :, k - 1])
    env = boundary.envelopes[k - 1]
    if max_shift is None:
        max_shift = 0.5 * (fm.tau[-1] - fm.tau[0])
    shifts = np.arange(-max_shift, max_shift + 1e-12, max(fm.tau[1] - fm.tau[0], 1e-3))
    if np.linalg.norm(signal) == 0:
        return 0.0, correlation(signal, env(fm.tau))
    return best_shift_correlation(fm.tau, signal, env, shifts)


def adiabaton_experiment(boundary: PulseSet, medium: MediumParams, grid: Grid,
                         at: list[float] | None = None) -> AdiabatonResult:
    """Propagate a weak probe with strong controls and measure its delay at the
    requested depths (default: the exit face)."""
    fm = propagate(boundary, medium, grid)
    xs = [grid.x_max] if at is None else list(at)
    delays, corrs = [], []
    for x in xs:
        d, c = probe_delay(fm, boundary, x)
        delays.append(d)
        corrs.append(c)
    margins = single_atom_margins(boundary)
    return AdiabatonResult(xs, delays, corrs, conservation_residual(fm), fm, margins)


def scaled_length(boundary: PulseSet, q: float, tau0: float = 0.0) -> float:
    """Unit length ``L = Omega_0^2(tau0) T / q`` (T = 1 in scaled units)."""
    return float(_omega0_sq(boundary, tau0)) / q


def group_velocity_profile(omega3_sq, q: float, c: float = 1.0) -> np.ndarray:
    """u/c = 1 / (1 + q c / Omega_3^2); zero where Omega_3 vanishes."""
    w = np.asarray(omega3_sq, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(w > 0, w / (w + q * c), 0.0)


def exit_profiles(boundary: PulseSet, medium: MediumParams, grid: Grid, n_x: int) -> np.ndarray:
    g = Grid(grid.tau_min, grid.tau_max, grid.n_tau, grid.x_max, n_x)
    return propagate(boundary, medium, g).fields[-1]


def convergence_order(boundary: PulseSet, medium: MediumParams, grid: Grid,
                      levels: tuple[int, int, int] | None = None) -> tuple[float, list[float]]:
    """Observed order of accuracy in x from three successively halved dx."""
    levels = levels or (grid.n_x, 2 * grid.n_x, 4 * grid.n_x)
    sols = [exit_profiles(boundary, medium, grid, n) for n in levels]
    e1 = float(np.linalg.norm(sols[0] - sols[1]))
    e2 = float(np.linalg.norm(sols[1] - sols[2]))
    return math.log(e1 / e2, levels[1] / levels[0]), [e1, e2]
