import numpy as np
import pytest
from dataclasses import replace

from branchfit.duffing import DuffingParams, duffing_model
from branchfit.dynamics import integrate_ode
from branchfit.errors import SingularMassMatrixError
from branchfit.flutter import (
    FlutterParams,
    assemble_quasisteady_matrices,
    assemble_unsteady_matrices,
    flutter_diffusion,
    quasisteady_model,
    unsteady_model,
)

P = FlutterParams()


def nonlinear_force(p, alpha):
    return p.s_t2 * alpha**2 + p.s_t3 * alpha**3


class TestUnsteadyMatrices:
    def test_vacuum_strips_airloads(self):
        p = replace(P, rho=0.0)
        M, B, S = assemble_unsteady_matrices(p)
        assert M[0, 0] == p.m and M[1, 1] == p.I_A and M[2, 2] == 1.0
        assert M[0, 1] == M[1, 0] == p.m_w * (p.b - p.x_f)
        # first two rows of the airload damping/stiffness vanish
        assert np.all(B[:2] == np.diag([p.d, p.d_t, 0.0])[:2])
        assert np.all(S[:2] == np.diag([p.s, p.s_t1, 0.0])[:2])

    def test_zero_airspeed_kills_speed_terms(self):
        p = replace(P, V=0.0)
        M, B, S = assemble_unsteady_matrices(p)
        assert B[0, 2] == 0.0 and B[1, 2] == 0.0 and B[2, 2] == 0.0
        assert np.all(S[:, 1] == [0.0, p.s_t1, 0.0])
        assert S[2, 2] == 0.0

    def test_mass_matrix_structure(self):
        M, _, _ = assemble_unsteady_matrices(P)
        coupling = P.m_w * (P.b - P.x_f) - P.rho * P.b**3 * np.pi * P.a
        assert M[0, 1] == pytest.approx(coupling, rel=1e-14)
        assert M[1, 0] == M[0, 1]
        assert M[2, 2] == 1.0
        assert M[0, 2] == M[1, 2] == 0.0

    def test_structural_blocks_match_reduction(self):
        p = replace(P, rho=0.0)
        M3, B3, S3 = assemble_unsteady_matrices(p)
        M2, B2, S2 = assemble_quasisteady_matrices(p)
        assert np.array_equal(M3[:2, :2], M2)
        assert np.array_equal(B3[:2, :2], B2)
        assert np.array_equal(S3[:2, :2], S2)

    def test_airloads_scale_linearly_with_density(self):
        M1, B1, S1 = assemble_unsteady_matrices(replace(P, rho=1.0))
        M2, B2, S2 = assemble_unsteady_matrices(replace(P, rho=2.0))
        M0, B0, S0 = assemble_unsteady_matrices(replace(P, rho=0.0))
        assert np.allclose(M2[:2] - M0[:2], 2.0 * (M1[:2] - M0[:2]), rtol=1e-12)
        assert np.allclose(B2[:2] - B0[:2], 2.0 * (B1[:2] - B0[:2]), rtol=1e-12)
        assert np.allclose(S2[:2] - S0[:2], 2.0 * (S1[:2] - S0[:2]), rtol=1e-12)

    def test_singular_mass_matrix_detected(self):
        p = replace(P, rho=0.0, m=1.0, I_A=1.0, m_w=10.0, b=0.15, x_f=0.05)
        with pytest.raises(SingularMassMatrixError):
            quasisteady_model(p)


class TestUnsteadyRhs:
    def test_origin_is_equilibrium(self):
        model = unsteady_model(P)
        for v in (0.1, 10.0, 25.0):
            out = model.rhs(np.zeros(6), 0.0, P.at(v))
            assert np.all(out == 0.0)

    def test_odd_symmetry_without_quadratic_term(self):
        p = replace(P, s_t2=0.0)
        model = unsteady_model(p)
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = 0.1 * rng.normal(size=6)
            assert np.allclose(model.rhs(-x, 0.0, p), -model.rhs(x, 0.0, p),
                               rtol=1e-12, atol=1e-14)

    def test_matches_independent_linear_solve(self):
        model = unsteady_model(P)
        M, B, S = assemble_unsteady_matrices(P)
        rng = np.random.default_rng(3)
        x = 0.2 * rng.normal(size=6)
        y, v = x[:3], x[3:]
        f_nl = np.array([0.0, nonlinear_force(P, x[1]), 0.0])
        acc = np.linalg.solve(M, -(B @ v + S @ y + f_nl))
        out = model.rhs(x, 0.0, P)
        assert np.max(np.abs(out[:3] - v)) == 0.0
        assert np.max(np.abs(out[3:] - acc)) < 1e-10

    def test_analytic_jacobian_matches_finite_differences(self):
        model = unsteady_model(P)
        rng = np.random.default_rng(4)
        x = 0.1 * rng.normal(size=6)
        J = model.jac(x, 0.0, P)
        eps = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = eps
            col = (model.rhs(x + e, 0.0, P) - model.rhs(x - e, 0.0, P)) / (2 * eps)
            assert np.max(np.abs(J[:, j] - col)) < 1e-4 * max(1.0, np.max(np.abs(col)))


class TestQuasisteady:
    def test_origin_is_equilibrium(self):
        model = quasisteady_model(P)
        assert np.all(model.rhs(np.zeros(4), 0.0, P) == 0.0)

    def test_vacuum_reduces_to_structural_oscillators(self):
        p = replace(P, rho=0.0)
        M, B, S = assemble_quasisteady_matrices(p)
        assert np.array_equal(B, np.diag([p.d, p.d_t]))
        assert np.array_equal(S, np.diag([p.s, p.s_t1]))

    def test_pitch_damping_entry_as_printed(self):
        M, B, S = assemble_quasisteady_matrices(P)
        expected = P.d_t - 2.0 * P.a * P.rho * P.b**3 * P.V * np.pi * (0.5 - P.a)
        assert B[1, 1] == pytest.approx(expected, rel=1e-14)

    def test_matches_independent_linear_solve(self):
        model = quasisteady_model(P)
        M, B, S = assemble_quasisteady_matrices(P)
        rng = np.random.default_rng(5)
        x = 0.2 * rng.normal(size=4)
        f_nl = np.array([0.0, nonlinear_force(P, x[1])])
        acc = np.linalg.solve(M, -(B @ x[2:] + S @ x[:2] + f_nl))
        out = model.rhs(x, 0.0, P)
        assert np.max(np.abs(out[2:] - acc)) < 1e-10


class TestFlutterDiffusion:
    def test_zero_noise_gives_zero_vector(self):
        assert np.all(flutter_diffusion(replace(P, sigma=0.0)) == 0.0)

    def test_linear_in_sigma(self):
        d1 = flutter_diffusion(replace(P, sigma=0.01))
        d2 = flutter_diffusion(replace(P, sigma=0.02))
        assert np.allclose(d2, 2.0 * d1, rtol=1e-14)

    def test_equals_scaled_inverse_mass_column(self):
        p = replace(P, sigma=0.03)
        M, _, _ = assemble_unsteady_matrices(p)
        expected = np.zeros(6)
        expected[3:] = -p.sigma * np.linalg.solve(M, np.eye(3))[:, 1]
        assert np.allclose(flutter_diffusion(p), expected, atol=1e-14)

    def test_reduced_variant(self):
        p = replace(P, sigma=0.05)
        M, _, _ = assemble_quasisteady_matrices(p)
        expected = np.zeros(4)
        expected[2:] = -p.sigma * np.linalg.solve(M, np.eye(2))[:, 1]
        assert np.allclose(flutter_diffusion(p, reduced=True), expected, atol=1e-14)


class TestDuffing:
    def test_unforced_equilibrium(self):
        p = DuffingParams(Phi=0.0)
        model = duffing_model(p)
        assert np.all(model.rhs(np.zeros(2), 0.0, p) == 0.0)

    def test_odd_symmetry_unforced(self):
        p = DuffingParams(Phi=0.0)
        model = duffing_model(p)
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = rng.normal(size=2)
            assert np.allclose(model.rhs(-x, 1.3, p), -model.rhs(x, 1.3, p),
                               rtol=1e-12, atol=1e-14)

    def test_hand_evaluated_point(self):
        p = DuffingParams(b=0.0, alpha=1.0, c3=1.0, c5=0.0, c7=0.0, Phi=0.0)
        model = duffing_model(p)
        out = model.rhs(np.array([1.0, 0.0]), 0.0, p)
        assert np.allclose(out, [0.0, -2.0], atol=1e-14)

    def test_jacobian_matches_finite_differences(self):
        p = DuffingParams()
        model = duffing_model(p)
        x = np.array([0.4, -0.3])
        J = model.jac(x, 0.2, p)
        eps = 1e-6
        for j in range(2):
            e = np.zeros(2)
            e[j] = eps
            col = (model.rhs(x + e, 0.2, p) - model.rhs(x - e, 0.2, p)) / (2 * eps)
            assert np.max(np.abs(J[:, j] - col)) < 1e-5

    def test_energy_conserved_without_damping_or_forcing(self):
        p = DuffingParams(b=0.0, alpha=1.0, c3=1.0, c5=0.2, c7=0.05, Phi=0.0)
        model = duffing_model(p)

        def energy(state):
            x, y = state
            return (y**2 / 2 + p.alpha**2 * x**2 / 2 + p.c3 * x**4 / 4
                    + p.c5 * x**6 / 6 + p.c7 * x**8 / 8)

        x0 = np.array([1.0, 0.0])
        t_end = 10 * 2 * np.pi / p.alpha
        n = int(round(t_end / 1e-4))
        traj = integrate_ode(model, x0, 0.0, n * 1e-4, 1e-4)
        drift = abs(energy(traj.final_state) - energy(x0))
        assert drift < 1e-6

    def test_forcing_amplitude_relation(self):
        p = DuffingParams(c_A=2.0, omega_n=3.0, Phi=0.5)
        assert p.forcing_amplitude == pytest.approx(2.0 * 9.0 * 0.5)
        q = p.at_forcing(4.5)
        assert q.forcing_amplitude == pytest.approx(4.5)
