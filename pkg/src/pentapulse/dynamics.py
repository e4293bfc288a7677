"""Single-atom time-dependent Schroedinger equation and transfer experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SUPPORT_CUTOFF, Grid, PulseEnvelope, PulseSet, SchemeKind
from .eigen import (
    build_hamiltonian,
    dressed_state_lambda1,
    dressed_state_lambda2,
    mixing_angles,
    track_eigenvectors,
)

# Largest allowed dtau * max ||H||.
STEP_SAFETY = 0.1

_GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)


class StepSizeError(ValueError):
    def __init__(self, required_n_tau: int, message: str):
        super().__init__(message)
        self.required_n_tau = required_n_tau


@dataclass(frozen=True)
class AtomState:
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.shape != (5,):
            raise ValueError("an atom state has five amplitudes")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def bare(cls, level: int) -> AtomState:
        """Bare state |level> with level in 1..5."""
        a = np.zeros(5, dtype=np.complex128)
        a[level - 1] = 1.0
        return cls(a)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.populations)))


@dataclass(frozen=True)
class Trajectory:
    tau: np.ndarray
    amplitudes: np.ndarray  # (n_tau, 5)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def coherence(self, i: int, j: int) -> np.ndarray:
        """rho_ij = b_i conj(b_j) with 1-based level indices."""
        return self.amplitudes[:, i - 1] * np.conj(self.amplitudes[:, j - 1])

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.sum(self.populations, axis=1) - 1.0)))

    @property
    def final(self) -> AtomState:
        return AtomState(self.amplitudes[-1])


def hamiltonian_norm_bound(pulses: PulseSet, tau: np.ndarray) -> float:
    """Largest spectral norm of H over ``tau``."""
    H = build_hamiltonian(pulses, tau)
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def required_n_tau(pulses: PulseSet, grid: Grid, safety: float = STEP_SAFETY) -> int:
    """Node count satisfying the step-size condition on ``grid``'s window.

    The norm is sampled densely (not only on the grid nodes) and a 1% margin
    is kept so the count also holds on the refined grid itself.
    """
    dense = np.linspace(grid.tau_min, grid.tau_max, 20001)
    hmax = max(hamiltonian_norm_bound(pulses, grid.tau), hamiltonian_norm_bound(pulses, dense))
    span = grid.tau_max - grid.tau_min
    return int(math.ceil(span * hmax / (0.99 * safety))) + 1


def grid_for(pulses: PulseSet, tau_min: float, tau_max: float, safety: float = STEP_SAFETY) -> Grid:
    """Smallest uniform grid satisfying the step-size condition."""
    coarse = Grid(tau_min, tau_max, 2001)
    return Grid(tau_min, tau_max, max(required_n_tau(pulses, coarse, safety), 2))


def _step_propagators(pulses: PulseSet, tau: np.ndarray) -> np.ndarray:
    """Fourth-order Magnus propagators between consecutive nodes of ``tau``."""
    h = np.diff(tau)
    t0 = tau[:-1]
    H1 = build_hamiltonian(pulses, t0 + _GAUSS[0] * h)
    H2 = build_hamiltonian(pulses, t0 + _GAUSS[1] * h)
    hh = h[:, None, None]
    comm = H2 @ H1 - H1 @ H2
    K = 0.5 * hh * (H1 + H2) - 1j * (math.sqrt(3.0) / 12.0) * hh**2 * comm
    w, V = np.linalg.eigh(K)
    return (V * np.exp(-1j * w)[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))


def integrate_tdse(pulses: PulseSet, initial: AtomState, grid: Grid, backward: bool = False,
                   safety: float = STEP_SAFETY) -> Trajectory:
    """Integrate ``i db/dtau = H(tau) b`` on the grid nodes.

    Each step applies the exact exponential of the fourth-order Magnus
    generator, so the scheme is unitary and time-symmetric.  With
    ``backward=True`` the initial state is given at ``tau_max`` and the
    trajectory is integrated down to ``tau_min`` (the result is still ordered
    by increasing tau).
    """
    tau = grid.tau
    hmax = hamiltonian_norm_bound(pulses, tau)
    if grid.dtau * hmax >= safety:
        n = required_n_tau(pulses, grid, safety)
        raise StepSizeError(n, f"dtau*max||H|| = {grid.dtau * hmax:.3g} >= {safety}; use n_tau >= {n}")
    steps_tau = tau[::-1] if backward else tau
    U = _step_propagators(pulses, steps_tau)
    out = np.empty((len(tau), 5), dtype=np.complex128)
    b = initial.amplitudes.copy()
    out[0] = b
    for k in range(len(U)):
        b = U[k] @ b
        out[k + 1] = b
    if backward:
        out = out[::-1].copy()
    return Trajectory(tau.copy(), out)


def default_pulses(delta: float = 20.0, amplitude: float = 30.0, stretch: float = 1.0,
                   scheme: SchemeKind = SchemeKind.M_TYPE) -> PulseSet:
    """Counterintuitive schedule: Omega_3 centred at -stretch precedes Omega_2
    at +stretch, both bridged by Omega_1 = Omega_4.

    ``stretch`` dilates every pulse in time (centres times s, widths divided
    by s**2); ``stretch=1`` is the reference schedule.
    """
    G = PulseEnvelope.gaussian
    s2 = stretch * stretch
    pump = G(amplitude, 0.25 / s2, 0.0)
    return PulseSet.resonant([pump, G(amplitude, 1.0 / s2, stretch), G(amplitude, 1.0 / s2, -stretch), pump],
                             delta, scheme)


DEFAULT_WINDOW = (-8.0, 8.0)


def default_window(pulses: PulseSet) -> tuple[float, float]:
    """Time window in which every pulse rises from and decays to the support cut-off."""
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
        return DEFAULT_WINDOW
    return float(math.floor(min(lo))), float(math.ceil(max(hi)))


@dataclass
class TransferResult:
    fidelity: float
    max_transient: dict[str, float]
    trajectory: Trajectory
    grid: Grid

    def summary(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "max_transients": dict(self.max_transient),
            "norm_drift": self.trajectory.norm_drift,
        }


def _transfer(pulses: PulseSet, start: int, target: int, grid: Grid | None) -> TransferResult:
    if grid is None:
        grid = grid_for(pulses, *default_window(pulses))
    traj = integrate_tdse(pulses, AtomState.bare(start), grid)
    P = traj.populations
    transients = {f"P{k}": float(P[:, k - 1].max()) for k in (2, 3, 4)}
    return TransferResult(float(P[-1, target - 1]), transients, traj, grid)


def stirap_experiment(pulses: PulseSet | None = None, delta: float = 20.0, grid: Grid | None = None) -> TransferResult:
    """Transfer |1> -> |5> along the dark-like state |lambda_1>."""
    return _transfer(pulses if pulses is not None else default_pulses(delta), 1, 5, grid)


def bstirap_experiment(pulses: PulseSet | None = None, delta: float = 20.0, grid: Grid | None = None) -> TransferResult:
    """Transfer |5> -> |1> along the bright-like state |lambda_2>."""
    return _transfer(pulses if pulses is not None else default_pulses(delta), 5, 1, grid)


def round_trip(pulses: PulseSet | None = None, delta: float = 20.0, grid: Grid | None = None) -> float:
    """P_1 after STIRAP followed by b-STIRAP with the same pulse sequence."""
    pulses = pulses if pulses is not None else default_pulses(delta)
    first = stirap_experiment(pulses, grid=grid)
    second = integrate_tdse(pulses, first.trajectory.final, first.grid)
    return float(second.populations[-1, 0])


def dressed_states(pulses: PulseSet, tau: np.ndarray, which: str) -> np.ndarray:
    """Dressed state ``which`` ('lambda1' or 'lambda2') at every node, shape (n, 5).

    Uses the closed forms when Omega_1 and Omega_4 coincide, otherwise the
    continuously tracked numeric eigenvectors.
    """
    if which not in ("lambda1", "lambda2"):
        raise ValueError("which must be 'lambda1' or 'lambda2'")
    rabi = pulses.rabi(tau)
    delta = pulses.multiphoton_detunings[0]
    if np.array_equal(rabi[:, 0], rabi[:, 3]):
        ang = mixing_angles(rabi[:, 0], rabi[:, 1], rabi[:, 2], delta)
        f = dressed_state_lambda1 if which == "lambda1" else dressed_state_lambda2
        return f(ang).astype(np.complex128)
    grid = Grid(float(tau[0]), float(tau[-1]), len(tau))
    track = track_eigenvectors(pulses, grid)
    return track.vectors[:, :, int(which[-1])]


def project_onto_dressed(traj: Trajectory, pulses: PulseSet, which: str) -> np.ndarray:
    """|<lambda_k(tau)|psi(tau)>|**2 at every trajectory node."""
    v = dressed_states(pulses, traj.tau, which)
    return np.abs(np.sum(np.conj(v) * traj.amplitudes, axis=1)) ** 2
