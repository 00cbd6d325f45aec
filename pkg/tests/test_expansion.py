import math

import numpy as np
import pytest

from magnuspulse import (
    resolve_pulse,
    angles_from_state,
    build_pulse,
    calibrate,
    expansion_rhs,
    extract_omega,
    integrate_expansion,
    list_catalog,
    omega_hat_quadrature,
    propagate_interaction,
    reconstruct_propagator,
)
from magnuspulse.expansion import _legacy_expansion_rhs, reconstruct_blocks
from magnuspulse.magnus import angles_from_omega

TWO_PI = 2.0 * math.pi


class TestRhs:
    def test_initial_slope(self):
        df, dg = expansion_rhs(1.0, np.zeros(3), np.array([1.0, 0.0, 0.0]), 800.0)
        assert df == 0.0
        assert np.allclose(dg, [400.0, 0.0, 0.0])

    def test_parallel_field_and_state(self):
        g = np.array([0.0, 0.3, 0.0])
        h = np.array([0.0, 1.0, 0.0])
        df, dg = expansion_rhs(0.5, g, h, 1000.0)
        assert df == pytest.approx(-500.0 * 0.3)
        assert np.allclose(dg, [0.0, 250.0, 0.0])  # cross term vanishes

    def test_zero_amplitude(self):
        df, dg = expansion_rhs(0.2, np.ones(3), np.array([1.0, 0.0, 0.0]), 0.0)
        assert df == 0.0
        assert np.allclose(dg, 0.0)

    def test_norm_derivative_vanishes_identically(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            f = rng.normal()
            g = rng.normal(size=3)
            h = rng.normal(size=3)
            amp = rng.normal() * 1000
            df, dg = expansion_rhs(f, g, h, amp)
            assert abs(2 * f * df + 2 * float(g @ dg)) < 1e-9 * (1 + abs(amp))

    def test_legacy_variant_breaks_norm_conservation(self):
        f, g = 0.8, np.array([0.6, 0.0, 0.0])
        h = np.array([1.0, 0.0, 0.0])
        df, dg = _legacy_expansion_rhs(f, g, h, 1000.0)
        assert abs(2 * f * df + 2 * float(g @ dg)) > 1.0


class TestIntegrate:
    def test_zero_pulse(self, sax_system):
        pulse = build_pulse("constant", 1e-3, amplitude=0.0)
        state = integrate_expansion(sax_system, pulse, n_steps=16, tol=None)
        assert np.array_equal(state.f, np.ones_like(state.f))
        assert np.array_equal(state.g, np.zeros_like(state.g))

    def test_initial_condition(self, sa_system, gaussian90):
        state = integrate_expansion(sa_system, gaussian90, n_steps=64, tol=None)
        assert np.array_equal(state.f[:, 0], [1.0, 1.0])
        assert np.array_equal(state.g[:, 0], np.zeros((2, 3)))

    def test_constant_on_resonance_closed_form(self, s_only_system):
        pulse = calibrate(build_pulse("constant", 1e-3), 1.2 * math.pi)
        state = integrate_expansion(s_only_system, pulse, n_steps=256, tol=1e-10)
        w1 = 1.2 * math.pi / 1e-3
        t = state.times
        assert np.allclose(state.f[0], np.cos(w1 * t / 2), atol=1e-9)
        assert np.allclose(state.g[0, :, 0], np.sin(w1 * t / 2), atol=1e-9)
        assert np.allclose(state.g[0, :, 1:], 0.0, atol=1e-9)

    def test_constraint_conserved(self, sax_system, gaussian90):
        state = integrate_expansion(sax_system, gaussian90, n_steps=4096, tol=None)
        assert float(state.constraint_residual().max()) < 1e-8

    def test_matches_exact_propagator(self, sax_system, gaussian90):
        state = integrate_expansion(sax_system, gaussian90, n_steps=1024, tol=1e-9)
        traj = propagate_interaction(sax_system, gaussian90, n_steps=1024, tol=1e-9)
        rebuilt = reconstruct_blocks(state)[:, -1]
        diff = np.linalg.norm(rebuilt - traj.endpoint_blocks(), axis=(-2, -1))
        assert float(diff.max()) < 1e-6

    def test_commuting_scale_symmetry(self, s_only_system):
        state1 = integrate_expansion(
            s_only_system, calibrate(build_pulse("gaussian", 1e-3), math.pi / 2),
            n_steps=512, tol=None,
        )
        state2 = integrate_expansion(
            s_only_system, calibrate(build_pulse("gaussian", 2e-3), math.pi / 2),
            n_steps=512, tol=None,
        )
        assert np.allclose(state1.f, state2.f, atol=1e-12)
        assert np.allclose(state1.g, state2.g, atol=1e-12)

    def test_legacy_rhs_violates_constraint(self, sa_system, gaussian90):
        state = integrate_expansion(
            sa_system, gaussian90, n_steps=512, tol=None, _rhs=_legacy_expansion_rhs
        )
        assert float(state.constraint_residual().max()) > 1e-2


class TestOmegaHatQuadrature:
    def test_constant_on_resonance(self, s_only_system):
        pulse = calibrate(build_pulse("constant", 1e-3), math.pi / 2)
        state = integrate_expansion(s_only_system, pulse, n_steps=256, tol=None)
        ohat = omega_hat_quadrature(state, pulse, s_only_system)
        w1 = math.pi / 2 / 1e-3
        assert np.allclose(ohat[0], w1 * state.times, rtol=1e-10, atol=1e-12)

    def test_zero_pulse(self, sax_system):
        pulse = build_pulse("constant", 1e-3, amplitude=0.0)
        state = integrate_expansion(sax_system, pulse, n_steps=16, tol=None)
        assert np.array_equal(
            omega_hat_quadrature(state, pulse, sax_system), np.zeros((4, 17))
        )

    def test_matches_log_extraction(self, sa_system, gaussian90):
        state = integrate_expansion(sa_system, gaussian90, n_steps=2048, tol=None)
        ohat = omega_hat_quadrature(state, gaussian90, sa_system)
        traj = propagate_interaction(sa_system, gaussian90, n_steps=2048, tol=None)
        sol = extract_omega(traj)
        assert np.allclose(ohat, sol.omega_hat, atol=1e-6)


class TestReconstruct:
    def test_identity(self):
        assert np.array_equal(reconstruct_propagator(1.0, np.zeros(3)), np.eye(2))

    def test_pi_x_rotation(self):
        u = reconstruct_propagator(0.0, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(u, np.array([[0, -1j], [-1j, 0]]))

    def test_z_rotation(self):
        theta = 0.9
        u = reconstruct_propagator(math.cos(theta / 2), np.array([0, 0, math.sin(theta / 2)]))
        expected = np.diag([np.exp(-1j * theta / 2), np.exp(1j * theta / 2)])
        assert np.allclose(u, expected, atol=1e-12)

    def test_norm_violation_rejected(self):
        with pytest.raises(ValueError, match="constraint"):
            reconstruct_propagator(1.0, np.array([0.5, 0.0, 0.0]))


class TestAnglesFromState:
    def test_identity_state(self, sax_system):
        pulse = build_pulse("constant", 1e-3, amplitude=0.0)
        state = integrate_expansion(sax_system, pulse, n_steps=8, tol=None)
        alpha, beta, omega = angles_from_state(state)
        assert np.array_equal(alpha, np.zeros_like(alpha))
        assert np.array_equal(beta, np.zeros_like(beta))
        assert np.array_equal(omega, np.zeros_like(omega))

    def test_z_state_point(self):
        from magnuspulse.expansion import ExpansionState

        state = ExpansionState(
            times=np.array([0.0, 1.0]),
            f=np.array([[1.0, 0.0]]),
            g=np.array([[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]]),
            s_count=1, n_steps=1, refinement_levels=0, error_estimate=0.0,
        )
        _, beta, omega = angles_from_state(state)
        assert beta[0, 1] == pytest.approx(0.0)
        assert omega[0, 1] == pytest.approx(math.pi)

    def test_unwraps_past_two_pi(self, s_only_system):
        pulse = calibrate(build_pulse("constant", 1e-3), 3.0 * math.pi)
        state = integrate_expansion(s_only_system, pulse, n_steps=256, tol=None)
        _, _, omega = angles_from_state(state)
        assert omega[0, -1] == pytest.approx(3.0 * math.pi, abs=1e-8)
        assert np.all(np.diff(omega[0]) > 0)

    def test_angle_derivative_matches_quadrature_integrand(self, sa_system, gaussian90):
        state = integrate_expansion(sa_system, gaussian90, n_steps=2048, tol=None)
        _, _, omega = angles_from_state(state)
        ohat = omega_hat_quadrature(state, gaussian90, sa_system)
        g_norm = np.linalg.norm(state.g, axis=-1)
        interior = (g_norm[:, :-1] > 1e-6) & (g_norm[:, 1:] > 1e-6)
        d_angle = np.diff(omega, axis=1)[interior]
        d_quad = np.diff(ohat, axis=1)[interior]
        assert np.allclose(d_angle, d_quad, atol=1e-7)

    def test_agrees_with_magnus_angles_when_criterion_met(self, sax_system, gaussian90):
        state = integrate_expansion(sax_system, gaussian90, n_steps=1024, tol=None)
        alpha, beta, omega = angles_from_state(state)
        traj = propagate_interaction(sax_system, gaussian90, n_steps=1024, tol=None)
        sol = extract_omega(traj)
        a_ref, b_ref, o_ref = angles_from_omega(
            sol.omega[..., 0], sol.omega[..., 1], sol.omega[..., 2]
        )
        # skip the t=0 sample where the axis is undefined on both sides
        assert np.allclose(omega[:, 1:], o_ref[:, 1:], atol=1e-6)
        assert np.allclose(beta[:, 1:], b_ref[:, 1:], atol=1e-5)
        assert np.allclose(alpha[:, 1:], a_ref[:, 1:], atol=1e-5)


class TestCatalogEquivalence:
    def test_every_catalog_pulse_including_violators(self, sax_system):
        for entry in list_catalog():
            pulse = entry.build_calibrated()
            state = integrate_expansion(sax_system, pulse, n_steps=1024, tol=1e-8)
            traj = propagate_interaction(sax_system, pulse, n_steps=1024, tol=1e-8)
            rebuilt = reconstruct_blocks(state)[:, -1]
            diff = np.linalg.norm(rebuilt - traj.endpoint_blocks(), axis=(-2, -1))
            assert float(diff.max()) < 1e-6, entry.name
            assert float(state.constraint_residual().max()) < 1e-8, entry.name

    def test_shared_grid_agreement_along_trajectory(self, sax_system):
        pulse = resolve_pulse("g4").build_calibrated()
        state = integrate_expansion(sax_system, pulse, n_steps=4096, tol=None)
        traj = propagate_interaction(sax_system, pulse, n_steps=4096, tol=None)
        diff = np.linalg.norm(reconstruct_blocks(state) - traj.blocks, axis=(-2, -1))
        assert float(diff.max()) < 1e-6
