"""Interaction Hamiltonian, closed-form eigenvalues and dressed states.

Basis ordering is |1>..|5>.  The Hamiltonian carries the multi-photon
detunings on its diagonal and ``-Omega_k`` on the (k, k+1) off-diagonals, so
with real Rabi frequencies it is real symmetric.

Dressed-state conventions
-------------------------
Mixing angles follow ``tan(Phi_k) = -lambda_k / Omega_1``.  With the
``-Omega`` sign of the couplings the eigenvectors then carry ``+sin(Phi)`` on
the upper levels |2> and |4>::

    |lambda_1> = cos(theta) (cos Phi1 |1> + sin Phi1 |2>)
               - sin(theta) (cos Phi1 |5> + sin Phi1 |4>)
    |lambda_2> = cos(Phi) sin(theta) (cos Phi2 |1> + sin Phi2 |2>) - sin(Phi) |3>
               + cos(Phi) cos(theta) (cos Phi2 |5> + sin Phi2 |4>)

Both are checked against :func:`jacobi_eigh` in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, PulseSet, check_two_photon_resonance

# Eigenvalue labels in ascending order for delta > 0 (used to seed tracking).
LABELS = ("lambda0", "lambda1", "lambda2", "lambda3", "lambda4")


class DegenerateCrossing(RuntimeError):
    """Two tracked branches met and the overlap matching became ambiguous."""


class NotHermitian(ValueError):
    pass


def hamiltonian_from_rabi(rabi, deltas) -> np.ndarray:
    """Hamiltonian(s) for Rabi frequencies of shape ``(..., 4)`` (real or complex).

    ``H[k, k+1] = -Omega_k`` and ``H[k+1, k] = -conj(Omega_k)``.
    """
    rabi = np.asarray(rabi)
    dtype = np.complex128 if np.iscomplexobj(rabi) else np.float64
    shape = rabi.shape[:-1]
    H = np.zeros(shape + (5, 5), dtype=dtype)
    d = np.asarray(deltas, dtype=float)
    H[..., 1, 1] = d[..., 0]
    H[..., 2, 2] = d[..., 1]
    H[..., 3, 3] = d[..., 2]
    H[..., 4, 4] = d[..., 3]
    for k in range(4):
        H[..., k, k + 1] = -rabi[..., k]
        H[..., k + 1, k] = -np.conj(rabi[..., k])
    return H


def build_hamiltonian(pulses: PulseSet, tau) -> np.ndarray:
    return hamiltonian_from_rabi(pulses.rabi(tau), pulses.multiphoton_detunings)


@dataclass(frozen=True)
class CharPolyParams:
    omega_s2: np.ndarray
    v4: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


def _check_nonnegative(*values) -> None:
    for v in values:
        if np.any(np.asarray(v) < 0):
            raise ValueError("Rabi frequencies must be nonnegative")


def char_poly_params(o1, o2, o3, o4) -> CharPolyParams:
    """Coefficients of ``x**2 - omega_s2 * x + v4 = 0`` with ``x = lam * (lam - delta)``."""
    _check_nonnegative(o1, o2, o3, o4)
    a, b, c, d = (np.asarray(o, dtype=float) ** 2 for o in (o1, o2, o3, o4))
    s = a + b + c + d
    v4 = b * d + a * c + a * d
    # s**2 - 4 v4 rewritten as a sum of squares: never negative, no cancellation
    disc = (a + b - c - d) ** 2 + 4.0 * b * c
    x2 = 0.5 * (s + np.sqrt(disc))
    with np.errstate(invalid="ignore", divide="ignore"):
        x1 = np.where(x2 > 0, v4 / np.where(x2 > 0, x2, 1.0), 0.0)
    return CharPolyParams(s, v4, x1, x2)


def _two_level_roots(delta, x):
    """Return (lower, upper) roots of ``lam**2 - delta*lam - x = 0`` without cancellation."""
    delta = np.asarray(delta, dtype=float)
    x = np.asarray(x, dtype=float)
    r = np.sqrt(delta * delta + 4.0 * x)
    big_pos = 0.5 * (delta + r)
    big_neg = 0.5 * (delta - r)
    with np.errstate(invalid="ignore", divide="ignore"):
        small_from_pos = np.where(big_pos != 0, -x / np.where(big_pos != 0, big_pos, 1.0), 0.0)
        small_from_neg = np.where(big_neg != 0, -x / np.where(big_neg != 0, big_neg, 1.0), 0.0)
    lower = np.where(delta >= 0, small_from_pos, big_neg)
    upper = np.where(delta >= 0, big_pos, small_from_neg)
    return lower, upper


def eigenvalues_general(o1, o2, o3, o4, delta) -> np.ndarray:
    """Eigenvalues ``[lambda0, ..., lambda4]`` (last axis) under two-photon
    resonance with ``delta_1 = delta_3 = delta``."""
    p = char_poly_params(o1, o2, o3, o4)
    l1, l3 = _two_level_roots(delta, p.x1)
    l2, l4 = _two_level_roots(delta, p.x2)
    return np.stack([np.zeros_like(l1), l1, l2, l3, l4], axis=-1)


def eigenvalues_special(o1, o2, o3, delta) -> np.ndarray:
    """Eigenvalues for coinciding pulses ``Omega_4 = Omega_1``."""
    _check_nonnegative(o1, o2, o3)
    o1, o2, o3 = (np.asarray(o, dtype=float) for o in (o1, o2, o3))
    l1, l3 = _two_level_roots(delta, o1**2)
    l2, l4 = _two_level_roots(delta, o1**2 + o2**2 + o3**2)
    return np.stack([np.zeros_like(l1), l1, l2, l3, l4], axis=-1)


def char_poly(lam, delta, omega_s2, v4):
    """Characteristic polynomial (up to sign) ``lam**2 (lam-delta) [lam (lam-delta) - Os2] + V4 lam``."""
    return lam**2 * (lam - delta) * (lam * (lam - delta) - omega_s2) + v4 * lam


@dataclass(frozen=True)
class MixingAngles:
    theta: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi: np.ndarray
    omega: np.ndarray


def mixing_angles(o1, o2, o3, delta) -> MixingAngles:
    """Mixing angles in the ``Omega_4 = Omega_1`` regime.

    theta lies in [0, pi/2]; Phi1 and Phi2 come from ``atan2(-lambda, Omega_1)``
    so they reach +-pi/2 continuously as ``Omega_1 -> 0``.
    """
    _check_nonnegative(o1, o2, o3)
    o1, o2, o3 = (np.asarray(o, dtype=float) for o in (o1, o2, o3))
    lam = eigenvalues_special(o1, o2, o3, delta)
    l1, l2 = lam[..., 1], lam[..., 2]
    omega = np.hypot(o2, o3)
    theta = np.arctan2(o2, o3)
    phi1 = np.arctan2(-l1, o1)
    phi2 = np.arctan2(-l2, o1)
    # tan(Phi) = -(Omega / Omega_1) cos(Phi2) = -Omega / hypot(Omega_1, lambda_2)
    phi = -np.arctan2(omega, np.hypot(o1, l2))
    return MixingAngles(theta, phi1, phi2, phi, omega)


def dressed_state_lambda1(angles: MixingAngles) -> np.ndarray:
    th, p1 = np.asarray(angles.theta), np.asarray(angles.phi1)
    c, s = np.cos(th), np.sin(th)
    cp, sp = np.cos(p1), np.sin(p1)
    zero = np.zeros(np.broadcast(th, p1).shape)
    return np.stack([cp * c, sp * c, zero, -sp * s, -cp * s], axis=-1)


def dressed_state_lambda2(angles: MixingAngles) -> np.ndarray:
    th, p2, p = (np.asarray(v) for v in (angles.theta, angles.phi2, angles.phi))
    c, s = np.cos(th), np.sin(th)
    cp2, sp2 = np.cos(p2), np.sin(p2)
    cP, sP = np.cos(p), np.sin(p)
    return np.stack([cP * s * cp2, cP * s * sp2, -sP * np.ones_like(cp2), cP * c * sp2, cP * c * cp2], axis=-1)


def jacobi_eigh(H, tol: float = 1e-15, max_sweeps: int = 50):
    """Cyclic Jacobi diagonalization of Hermitian matrices.

    Works on a single ``(n, n)`` matrix or a stack ``(..., n, n)``; every
    matrix in the stack is rotated together, so cost is per sweep rather than
    per matrix.  Returns ascending eigenvalues and column eigenvectors.
    """
    A = np.array(H, dtype=np.complex128)
    single = A.ndim == 2
    if single:
        A = A[None]
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape((-1, n, n))
    scale = np.maximum(np.abs(A).max(axis=(1, 2)), np.finfo(float).tiny)
    if np.any(np.abs(A - np.conj(np.swapaxes(A, 1, 2))).max(axis=(1, 2)) > 1e-12 * scale):
        raise NotHermitian("matrix is not Hermitian within 1e-12")
    A = 0.5 * (A + np.conj(np.swapaxes(A, 1, 2)))
    V = np.broadcast_to(np.eye(n, dtype=np.complex128), A.shape).copy()
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    idx = np.arange(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.maximum(np.sum(np.abs(A) ** 2, axis=(1, 2)) - np.sum(np.abs(A[:, idx, idx]) ** 2, axis=1), 0.0))
        if np.all(off <= tol * scale):
            break
        for p, q in pairs:
            apq = A[:, p, q]
            mag = np.abs(apq)
            active = mag > 1e-300
            if not np.any(active):
                continue
            phase = np.where(active, apq / np.where(active, mag, 1.0), 1.0)
            app = A[:, p, p].real
            aqq = A[:, q, q].real
            # real 2x2 rotation annihilating |apq| after removing its phase
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                zeta = np.where(active, (aqq - app) / (2.0 * np.where(active, mag, 1.0)), 0.0)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # G acts on columns p, q:  col_p' = c col_p - s conj(phase) col_q ; col_q' = s phase col_p + c col_q
            gpp = c
            gpq = s * phase
            gqp = -s * np.conj(phase)
            gqq = c
            Ap = A[:, :, p].copy()
            Aq = A[:, :, q].copy()
            A[:, :, p] = Ap * gpp[:, None] + Aq * gqp[:, None]
            A[:, :, q] = Ap * gpq[:, None] + Aq * gqq[:, None]
            Ap = A[:, p, :].copy()
            Aq = A[:, q, :].copy()
            A[:, p, :] = Ap * np.conj(gpp)[:, None] + Aq * np.conj(gqp)[:, None]
            A[:, q, :] = Ap * np.conj(gpq)[:, None] + Aq * np.conj(gqq)[:, None]
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
            Vp = V[:, :, p].copy()
            Vq = V[:, :, q].copy()
            V[:, :, p] = Vp * gpp[:, None] + Vq * gqp[:, None]
            V[:, :, q] = Vp * gpq[:, None] + Vq * gqq[:, None]
    w = A[:, idx, idx].real
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    w = w.reshape(batch_shape + (n,))
    V = V.reshape(batch_shape + (n, n))
    if single:
        return w[0], V[0]
    return w, V


numeric_eigensolve = jacobi_eigh


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Make the first component above 1e-12 of each column real positive."""
    V = np.array(vectors, dtype=np.complex128)
    for k in range(V.shape[-1]):
        col = V[..., :, k]
        nz = np.argmax(np.abs(col) > 1e-12, axis=-1)
        lead = np.take_along_axis(col, nz[..., None], axis=-1)[..., 0]
        ph = np.where(np.abs(lead) > 0, lead / np.where(np.abs(lead) > 0, np.abs(lead), 1.0), 1.0)
        V[..., :, k] = col * np.conj(ph)[..., None]
    return V


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues and eigenvectors (columns) in label order lambda0..lambda4."""

    values: np.ndarray
    vectors: np.ndarray
    angles: MixingAngles | None = None


def eigensystem(pulses: PulseSet, tau: float) -> EigenSystem:
    """Labelled eigensystem of a single Hamiltonian (resonance required)."""
    if not check_two_photon_resonance(pulses.multiphoton_detunings, 1e-12):
        raise ValueError("two-photon resonance conditions are not met")
    rabi = pulses.rabi(tau)
    delta = pulses.multiphoton_detunings[0]
    lam = eigenvalues_general(*rabi, delta)
    w, V = jacobi_eigh(build_hamiltonian(pulses, tau))
    vecs = _assign_by_value(lam, w, V)
    angles = mixing_angles(rabi[0], rabi[1], rabi[2], delta) if rabi[0] == rabi[3] else None
    return EigenSystem(lam, fix_phase(vecs), angles)


def _assign_by_value(labelled: np.ndarray, w: np.ndarray, V: np.ndarray) -> np.ndarray:
    order = np.argsort(labelled, kind="stable")
    out = np.empty_like(V)
    out[..., :, order] = V
    return out


@dataclass(frozen=True)
class EigenTrack:
    tau: np.ndarray
    values: np.ndarray  # (n_tau, 5) labelled
    vectors: np.ndarray  # (n_tau, 5, 5) columns labelled
    angles: MixingAngles | None


def track_eigenvectors(pulses: PulseSet, grid: Grid, degeneracy_tol: float = 1e-12) -> EigenTrack:
    """Eigenvalue curves and continuously tracked eigenvectors on the grid.

    Labels are assigned by value at the node with the widest spectral gap,
    then carried to both ends by maximal overlap with the previous node
    (sign chosen so the overlap is real positive).
    """
    if not check_two_photon_resonance(pulses.multiphoton_detunings, 1e-12):
        raise ValueError("two-photon resonance conditions are not met")
    tau = grid.tau
    rabi = pulses.rabi(tau)
    delta = pulses.multiphoton_detunings[0]
    lam = eigenvalues_general(rabi[:, 0], rabi[:, 1], rabi[:, 2], rabi[:, 3], delta)
    w, V = jacobi_eigh(build_hamiltonian(pulses, tau))
    gaps = np.diff(np.sort(lam, axis=1), axis=1).min(axis=1)
    anchor = int(np.argmax(gaps))
    out = np.empty_like(V)
    out[anchor] = fix_phase(_assign_by_value(lam[anchor], w[anchor], V[anchor]))
    for direction in (1, -1):
        k = anchor + direction
        while 0 <= k < len(tau):
            out[k] = _match(out[k - direction], w[k], V[k], degeneracy_tol)
            k += direction
    angles = None
    if np.array_equal(rabi[:, 0], rabi[:, 3]):
        angles = mixing_angles(rabi[:, 0], rabi[:, 1], rabi[:, 2], delta)
    return EigenTrack(tau, lam, out, angles)


def _match(prev: np.ndarray, w: np.ndarray, V: np.ndarray, tol: float) -> np.ndarray:
    """Carry the previous labelled vectors onto the new eigenbasis.

    Near-degenerate eigenvalues are clustered; each label goes to the cluster
    holding most of its weight and the projected vectors of a cluster are
    Loewdin-orthonormalized, which keeps them as close as possible to the
    previous ones.
    """
    n = len(w)
    scale = max(1.0, np.abs(w).max())
    clusters: list[list[int]] = [[0]]
    for i in range(1, n):
        if w[i] - w[clusters[-1][-1]] <= 1e-9 * scale:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    weights = np.abs(np.conj(V).T @ prev) ** 2  # (eigenvector, label)
    cluster_w = np.array([weights[c].sum(axis=0) for c in clusters])  # (cluster, label)
    members: dict[int, list[int]] = {ci: [] for ci in range(len(clusters))}
    for label in np.argsort(-cluster_w.max(axis=0), kind="stable"):
        ranked = [ci for ci in np.argsort(-cluster_w[:, label], kind="stable")
                  if len(members[ci]) < len(clusters[ci])]
        if len(ranked) > 1 and cluster_w[ranked[0], label] - cluster_w[ranked[1], label] < tol:
            raise DegenerateCrossing(f"ambiguous overlap for branch {LABELS[label]}")
        members[ranked[0]].append(int(label))
    out = np.empty_like(prev)
    for ci, labels in members.items():
        if not labels:
            continue
        basis = V[:, clusters[ci]]
        P = basis @ (np.conj(basis).T @ prev[:, labels])
        u, sv, vh = np.linalg.svd(P, full_matrices=False)
        if sv.min() < 1e-12:
            raise DegenerateCrossing("tracked branch lost its eigenspace")
        Q = u @ vh
        for j, label in enumerate(labels):
            v = Q[:, j]
            ov = np.vdot(prev[:, label], v)
            out[:, label] = v * (np.conj(ov) / abs(ov)) if abs(ov) > 0 else v
    return out
