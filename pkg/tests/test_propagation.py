from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from pentapulse.core import Grid, PulseEnvelope, PulseSet, SchemeKind
from pentapulse.propagation import (
    Cumulative,
    MediumParams,
    PropagationError,
    RegimeError,
    analytic_split_solution,
    balance_residuals,
    compare_fields,
    conservation_residual,
    convergence_order,
    group_velocity_profile,
    mixing_theta,
    probe_delay,
    propagate,
    scaled_length,
    substeps_for,
    theta_transport_residual,
    xi_asymptotic,
    xi_map,
    xi_solve,
)

G = PulseEnvelope.gaussian
EL, M = SchemeKind.EXTENDED_LAMBDA, SchemeKind.M_TYPE


def fig6(scheme=EL) -> PulseSet:
    c = G(30, 0.2)
    return PulseSet.resonant([c, G(0.1, 5), c, c], 100.0, scheme)


def plateau_controls(amplitude: float = 30.0) -> PulseEnvelope:
    t = np.linspace(-12, 12, 4801)
    ramp = np.where(t < -8, 0, np.where(t < -5, np.sin(np.pi / 2 * (t + 8) / 3) ** 2,
                    np.where(t < 5, 1, np.where(t < 8, np.cos(np.pi / 2 * (t - 5) / 3) ** 2, 0))))
    return PulseEnvelope.tabulated(t, amplitude * ramp)


def test_vacuum_is_constant_in_x():
    p = fig6()
    fm = propagate(p, MediumParams.uniform(0.0, EL), Grid(-9, 9, 400, 100.0, 4))
    assert np.allclose(fm.fields, fm.fields[0][None], atol=0, rtol=0)
    d, c = probe_delay(fm, p, 100.0)
    assert d == pytest.approx(0.0, abs=1e-6) and c == pytest.approx(1.0)


def test_boundary_is_reproduced_at_entrance():
    p = fig6()
    g = Grid(-9, 9, 400, 100.0, 4)
    fm = propagate(p, MediumParams.uniform(1.0, EL), g)
    assert np.array_equal(fm.fields[0].real, p.rabi(g.tau))
    a = analytic_split_solution(p, 1.0, g)
    assert np.allclose(np.abs(a.fields[0]), p.rabi(g.tau), atol=1e-12)


def test_linear_response_oracle():
    """Weak probe on a control plateau against the frequency-domain linear
    response of atoms in the dressed state, computed independently."""
    D, A, q, X = 100.0, 30.0, 1.0, 100.0
    c = plateau_controls(A)
    probe = G(0.1, 5.0)
    p = PulseSet.resonant([c, probe, c, c], D, EL)
    g = Grid(-10, 10, 2400, X, 20)
    fm = propagate(p, MediumParams.uniform(q, EL), g)

    lam1 = 0.5 * (D - math.sqrt(D * D + 4 * A * A))
    s2 = math.sin(math.atan2(-lam1, A)) ** 2
    H0 = np.array([[0, -A, 0], [-A, D, -A], [0, -A, 0]], dtype=float)
    tau = g.tau
    n = 8 * len(tau)  # zero padding keeps the periodic response from wrapping around
    nu = 2 * np.pi * np.fft.fftfreq(n, g.dtau)
    resp = np.linalg.inv((-nu[:, None, None] + lam1) * np.eye(3) - H0)[:, 0, 0]
    out = np.fft.ifft(np.fft.fft(probe(tau), n) * np.exp(-1j * q * s2 * np.conj(resp) * X))[: len(tau)]
    window = np.abs(tau) <= 4
    num = np.abs(fm.fields[-1, window, 1])
    ref = np.abs(out[window])
    assert np.linalg.norm(num - ref) / np.linalg.norm(ref) < 5e-3
    assert abs(tau[window][np.argmax(num)] - tau[window][np.argmax(ref)]) <= 2 * g.dtau


def test_balance_law_holds():
    p = fig6()
    fm = propagate(p, MediumParams.uniform(1.0, EL), Grid(-9, 9, 1000, 200.0, 40))
    r = balance_residuals(fm, MediumParams.uniform(1.0, EL))
    assert np.all(r[[0, 2, 3]] < 0.05)
    assert conservation_residual(fm) < 1e-4
    assert fm.diagnostics["norm_drift"] < 1e-8


def test_substeps_bound():
    p = fig6()
    g = Grid(-9, 9, 400, 1.0, 1)
    m = substeps_for(p, g)
    assert g.dtau / m * (100 + 2 * 30) <= 0.1 + 1e-12


def test_nan_guard_reports_slice():
    p = fig6()
    g = Grid(-9, 9, 200, 10.0, 4)
    init = np.zeros((5, 5), dtype=complex)
    init[:, 0] = 1.0
    init[3, 0] = np.nan
    with pytest.raises(PropagationError) as info:
        propagate(p, MediumParams.uniform(1.0, EL), g, initial=init)
    assert info.value.slice_index == 3


# --- retarded coordinate ----------------------------------------------------------

def test_xi_zero_length():
    cum = Cumulative.of_pulses(fig6(), -9, 9)
    tau = np.linspace(-3, 3, 7)
    assert np.array_equal(xi_solve(cum, 0.0, tau), tau)


def test_xi_rectangle_exact():
    A, T0 = 4.0, 3.0
    t = np.array([-1.0, 0.0, T0, T0 + 1.0])
    cum = Cumulative.from_samples(np.linspace(0, T0, 31), np.full(31, A))
    tau = np.array([1.5, 2.0, 2.9])
    xi = xi_solve(cum, 2.0, tau)
    assert np.allclose(xi, tau - 2.0 / A)
    assert math.isnan(float(xi_solve(cum, 20.0, 2.0)))
    assert t.size == 4


def test_xi_against_quadrature():
    pump, control = G(30, 3), G(30, 1)
    p = PulseSet.resonant([pump, G(0.1, 5), control, pump], 100.0, EL)
    cum = Cumulative.of_pulses(p, -6, 6)

    def w(t):
        return float(np.sum(p.rabi(t)[1:3] ** 2))

    for qx, tau in ((100.0, 1.0), (500.0, 0.5), (1000.0, 2.0)):
        def f(xi):
            return quad(w, xi, tau, epsabs=1e-12, limit=200)[0] - qx
        ref = brentq(f, -6.0, tau, xtol=1e-13)
        assert float(xi_solve(cum, qx, tau)) == pytest.approx(ref, abs=1e-6)


def test_xi_monotone_and_asymptote():
    p = fig6()
    g = Grid(-9, 9, 400, 1200.0, 12)
    xm = xi_map(p, 1.0, g)
    assert xm.decreasing_in_x
    assert np.all(np.diff(xi_asymptotic(Cumulative.of_pulses(p, -9, 9), g.x)[np.isfinite(xm.xi_inf)]) < 0)


def test_group_velocity():
    assert group_velocity_profile(1.0, 1.0) == pytest.approx(0.5)
    assert group_velocity_profile(1e12, 1.0) == pytest.approx(1.0)
    assert group_velocity_profile(0.0, 1.0) == 0.0


def test_scaled_length():
    assert scaled_length(fig6(), 1.0) == pytest.approx(900.01)


def test_analytic_regime_refusals():
    p = PulseSet.resonant([G(30, 0.2), G(0.1, 5), G(30, 0.2), G(20, 0.2)], 100.0, EL)
    with pytest.raises(RegimeError):
        analytic_split_solution(p, 1.0, Grid(-9, 9, 200, 100.0, 4))
    with pytest.raises(RegimeError):
        analytic_split_solution(fig6(), 1.0, Grid(-9, 9, 200, 5000.0, 4), T=1.0)


def test_analytic_solution_transports_theta():
    p = fig6()
    g = Grid(-9, 9, 1200, 900.0, 60)
    a = analytic_split_solution(p, 1.0, g, T=1.0)
    assert conservation_residual(a) < 1e-12
    assert theta_transport_residual(a, 1.0) < 0.05
    # the mixing-angle maximum (xi = 0) sits where the Omega_0^2 integral from 0 reaches q x
    i = a.slice_index(900.0)
    ref = brentq(lambda t: quad(lambda u: float(np.sum(p.rabi(u)[1:3] ** 2)), 0.0, t)[0] - 900.0, 0.5, 2.0)
    theta = np.arctan2(np.abs(a.fields[i, :, 1]), np.abs(a.fields[i, :, 2]))
    assert g.tau[np.argmax(theta)] == pytest.approx(ref, abs=2 * g.dtau)


def test_full_solver_close_to_analytic_for_controls():
    p = fig6()
    g = Grid(-9, 9, 1200, 50.0, 10)
    fm = propagate(p, MediumParams.uniform(1.0, EL), g)
    err = compare_fields(fm, analytic_split_solution(p, 1.0, g), 50.0)
    assert max(err[0], err[2], err[3]) < 1e-2


def test_mixing_theta():
    assert float(mixing_theta(fig6(), 0.0)) == pytest.approx(math.atan2(0.1, 30.0))


def test_second_order_in_x():
    p = fig6()
    order, errs = convergence_order(p, MediumParams.uniform(1.0, EL), Grid(-9, 9, 600, 300.0, 6))
    assert 1.7 <= order <= 2.3
