"""Student-teacher error dynamics: closed forms against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalinglab import linear_double_descent as ldd
from scalinglab.errors import DomainError

dims = st.integers(1, 20)


def scalar_instance(x=2.0, y=3.0, eta=1.0):
    return ldd.instance_from_arrays([[x]], [y / x], [0.0], eta)


class TestInstance:
    def test_noise_free_labels(self):
        inst = ldd.make_instance(7, 4, ldd.PriorSpec(1.0, 0.0), 1.0, 3)
        assert np.array_equal(inst.Y, inst.X @ inst.w)

    def test_svd_reconstructs(self):
        inst = ldd.make_instance(9, 5, ldd.PriorSpec(1.0, 0.3), 1.0, 3)
        S = np.zeros((9, 5))
        S[:5, :5] = np.diag(inst.sigma)
        assert np.linalg.norm(inst.U @ S @ inst.V.T - inst.X) / np.linalg.norm(inst.X) < 1e-8
        assert np.all(np.diff(inst.sigma) <= 0)
        assert np.max(np.abs(inst.Y - inst.X @ inst.w - inst.noise)) < 1e-12

    def test_tall_column_norm(self):
        inst = ldd.make_instance(200, 1, ldd.PriorSpec(), 1.0, 12)
        assert abs(inst.sigma[0] ** 2 / 200 - 1) < 0.3

    def test_deterministic(self):
        a = ldd.make_instance(5, 6, ldd.PriorSpec(1, 1), 1.0, 9)
        b = ldd.make_instance(5, 6, ldd.PriorSpec(1, 1), 1.0, 9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)


class TestTheta:
    def test_zero_at_start(self):
        inst = ldd.make_instance(6, 4, ldd.PriorSpec(1, 1), 1.0, 0)
        assert np.array_equal(ldd.theta_at(inst, 0.0), np.zeros(4))

    @pytest.mark.parametrize("t", [0.01, 0.1, 0.5, 2.0])
    def test_scalar_closed_form(self, t):
        inst = scalar_instance()
        assert ldd.theta_at(inst, t)[0] == pytest.approx(1.5 * (1 - math.exp(-4 * t)), rel=1e-12)

    def test_long_time_is_pseudoinverse(self):
        inst = ldd.make_instance(12, 5, ldd.PriorSpec(1, 0.5), 0.7, 4)
        t = 1e3 / (inst.eta * inst.sigma.min() ** 2)
        assert np.allclose(ldd.theta_at(inst, t), np.linalg.pinv(inst.X) @ inst.Y, rtol=0, atol=1e-6)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            ldd.theta_at(scalar_instance(), -1.0)

    def test_null_directions_stay_zero(self):
        inst = ldd.make_instance(3, 8, ldd.PriorSpec(1, 1), 1.0, 2)
        theta = ldd.theta_at(inst, 5.0)
        assert np.allclose(inst.V[:, 3:].T @ theta, 0.0, atol=1e-12)

    def test_euler_oracle(self):
        inst = ldd.make_instance(10, 6, ldd.PriorSpec(1, 0.5), 1.0, 6)
        dt = 1e-3 / (inst.eta * inst.sigma.max() ** 2)
        times = np.array([0.05, 0.2, 1.0])
        brute = ldd.euler_theta(inst, times, dt)
        exact = np.array([ldd.theta_at(inst, t) for t in times])
        assert np.all(np.linalg.norm(brute - exact, axis=1) / np.linalg.norm(exact, axis=1) < 1e-3)


class TestPredictionError:
    def test_start_is_minus_teacher(self):
        inst = ldd.make_instance(6, 4, ldd.PriorSpec(1, 1), 1.0, 0)
        x = np.arange(4.0)
        assert ldd.prediction_error_at(inst, x, 0.0) == pytest.approx(-x @ inst.w)

    def test_noise_free_limit_vanishes(self):
        inst = ldd.make_instance(15, 6, ldd.PriorSpec(1, 0), 1.0, 1)
        x = np.random.default_rng(0).standard_normal(6)
        t = 1e3 / (inst.eta * inst.sigma.min() ** 2)
        assert abs(ldd.prediction_error_at(inst, x, t)) < 1e-6

    @settings(max_examples=60, deadline=None)
    @given(n=dims, m=dims, seed=st.integers(0, 2**20), t=st.floats(0.0, 5.0))
    def test_paths_agree(self, n, m, seed, t):
        inst = ldd.make_instance(n, m, ldd.PriorSpec(1.0, 0.7), 0.3, seed)
        x = np.random.default_rng(seed + 1).standard_normal(m)
        direct = ldd.prediction_error_at(inst, x, t)
        expanded = ldd.prediction_error_expansion(inst, x, t)
        assert abs(direct - expanded) <= 1e-9 * max(1.0, abs(direct))

    def test_dimension_mismatch(self):
        inst = ldd.make_instance(4, 3, ldd.PriorSpec(), 1.0, 0)
        with pytest.raises(DomainError):
            ldd.prediction_error_at(inst, np.ones(4), 1.0)


class TestCoefficients:
    def test_zero_test_point(self):
        inst = ldd.make_instance(5, 5, ldd.PriorSpec(1, 1), 1.0, 0)
        c = ldd.signal_noise_coeffs(inst, np.zeros(5))
        assert not c.S.any() and not c.N.any()

    def test_noise_free(self):
        inst = ldd.make_instance(5, 3, ldd.PriorSpec(1, 0), 1.0, 0)
        assert not ldd.signal_noise_coeffs(inst, np.ones(3)).N.any()

    def test_noise_projection_uses_left_vectors(self):
        # n != m makes the left and right projections differ in length
        inst = ldd.make_instance(7, 3, ldd.PriorSpec(1, 1), 1.0, 5)
        x = np.ones(3)
        c = ldd.signal_noise_coeffs(inst, x)
        assert np.allclose(c.N, (x @ inst.V) * (inst.U[:, :3].T @ inst.noise))
        assert np.allclose(c.S, -(x @ inst.V) * (inst.V.T @ inst.w))

    def test_zero_modes_have_no_noise(self):
        inst = ldd.make_instance(2, 6, ldd.PriorSpec(1, 1), 1.0, 5)
        c = ldd.signal_noise_coeffs(inst, np.ones(6))
        assert not c.N[2:].any()
        assert np.array_equal(c.sigma_ext[2:], np.zeros(4))


class TestClosedForm:
    def test_at_zero(self):
        prior = ldd.PriorSpec(1.5, 0.7)
        xv = np.array([0.3, 2.0, 1.0])
        total, signal, noise = ldd.expected_error_closed_form([3.0, 1.0, 0.2], xv, prior, 1.0, 0.0)
        assert signal == pytest.approx(1.5**2 * xv.sum())
        assert noise == 0.0 and total == signal

    @pytest.mark.parametrize("t", [0.0, 0.3, 2.0])
    def test_single_mode(self, t):
        s, eta, sw, se = 0.8, 0.6, 1.2, 0.4
        got = ldd.expected_error_closed_form([s], [1.0], ldd.PriorSpec(sw, se), eta, t)
        a = math.exp(-eta * s * s * t)
        assert got.total == pytest.approx(sw**2 * a * a + se**2 * (1 - a) ** 2 / s**2, rel=1e-12)

    def test_single_mode_limit(self):
        got = ldd.expected_error_closed_form([0.5], [1.0], ldd.PriorSpec(1.0, 0.3), 1.0, 1e4)
        assert got.total == pytest.approx(0.3**2 / 0.25, rel=1e-12)

    def test_zero_singular_values(self):
        got = ldd.expected_error_closed_form([1.0, 0.0], [0.0, 2.0], ldd.PriorSpec(1.0, 5.0), 1.0, 1e3)
        assert got.signal_sq == pytest.approx(2.0)
        assert got.noise_sq == 0.0

    def test_negative_t(self):
        with pytest.raises(DomainError):
            ldd.expected_error_closed_form([1.0], [1.0], ldd.PriorSpec(), 1.0, -1)

    @settings(max_examples=40, deadline=None)
    @given(n=dims, m=dims, seed=st.integers(0, 2**20), sw=st.floats(0, 3), se=st.floats(0, 3))
    def test_monotone_terms(self, n, m, seed, sw, se):
        inst = ldd.make_instance(n, m, ldd.PriorSpec(sw, se), 1.0, seed)
        sig, xv = ldd.closed_form_inputs(inst, ldd.PriorSpec(sw, se))
        t = np.geomspace(1e-4, 1e4, 200)
        out = ldd.expected_error_closed_form(sig, xv, ldd.PriorSpec(sw, se), 1.0, t)
        assert np.all(np.diff(out.noise_sq) >= 0)
        assert np.all(np.diff(out.signal_sq) <= 0)
        assert np.allclose(out.total, out.signal_sq + out.noise_sq, rtol=1e-14, atol=0)


class TestMonteCarlo:
    def test_zero_prior(self):
        assert ldd.expected_error_monte_carlo(4, 3, ldd.PriorSpec(0, 0), 1.0, 1.0, 100, 0) == (0.0, 0.0)

    def test_fixed_point_agrees(self):
        x = np.array([1.0, -2.0, 0.5, 0.0])
        prior = ldd.PriorSpec(1.0, 0.8, test_point=x)
        inst = ldd.make_instance(6, 4, prior, 1.0, 21)
        mean, se = ldd.expected_error_monte_carlo(6, 4, prior, 1.0, 0.7, 10_000, 21)
        closed = ldd.expected_error_closed_form(*ldd.closed_form_inputs(inst, prior), prior, 1.0, 0.7).total
        assert abs(mean - closed) <= 3 * se
        assert mean >= 0


class TestUnified:
    def test_p_one_is_closed_form(self):
        sig, xv = np.array([2.0, 0.5]), np.ones(2)
        prior = ldd.PriorSpec(1, 1)
        assert ldd.unified_error(sig, xv, prior, 1.0, 1, 0.4) == ldd.expected_error_closed_form(sig, xv, prior, 1.0, 0.4)

    def test_depends_on_product(self):
        sig, xv = np.array([2.0, 0.5, 0.1]), np.ones(3)
        prior = ldd.PriorSpec(1, 1)
        a, b, c = (ldd.unified_error(sig, xv, prior, 0.3, p, t) for p, t in ((2, 3), (3, 2), (6, 1)))
        assert a == b == c

    @given(p=st.floats(1e-3, 1e3), t=st.floats(0, 1e3))
    def test_bit_exact_pt(self, p, t):
        sig, xv = np.array([3.0, 1.0, 0.05, 0.0]), np.array([1.0, 0.5, 2.0, 1.0])
        prior = ldd.PriorSpec(1.0, 0.5)
        assert ldd.unified_error(sig, xv, prior, 1.0, p, t) == ldd.unified_error(sig, xv, prior, 1.0, 1, p * t)

    def test_noise_grows_with_p(self):
        sig, xv = np.array([3.0, 1.0, 0.05]), np.ones(3)
        out = ldd.unified_error(sig, xv, ldd.PriorSpec(1.0, 0.5), 1.0, np.geomspace(0.01, 100, 50), 1.0)
        assert np.all(np.diff(out.noise_sq) >= 0)

    def test_nonpositive_p(self):
        with pytest.raises(DomainError):
            ldd.unified_error([1.0], [1.0], ldd.PriorSpec(), 1.0, 0.0, 1.0)


class TestScan:
    def test_time_axis_noise_free_decreases(self):
        curve = ldd.scan_curve("time", np.geomspace(1e-3, 1e3, 100), prior=ldd.PriorSpec(1, 0), n=20, m=10)
        assert np.all(np.diff(curve.total_sq_error) <= 0)
        assert curve.axis == "time"

    def test_scale_axis_peak_near_interpolation_threshold(self):
        grid = np.arange(5, 201)
        curve = ldd.scan_curve("scale", grid, prior=ldd.PriorSpec(1, 0.5), n=50, t=1e4,
                               scale_param="m", spectrum_seeds=(101,))
        y = curve.total_sq_error
        interior = [k for k in range(1, len(y) - 1) if y[k] > y[k - 1] and y[k] > y[k + 1]]
        top = max(interior, key=lambda k: y[k])
        assert abs(grid[top] - 50) <= 10

    def test_data_axis_more_data_helps(self):
        m = 20
        curve = ldd.scan_curve("data", [m // 2, m, 2 * m], prior=ldd.PriorSpec(1, 0), m=m, t=100.0)
        assert curve.total_sq_error[2] < curve.total_sq_error[0]

    def test_rejects_bad_grid(self):
        with pytest.raises(DomainError):
            ldd.scan_curve("time", [], prior=ldd.PriorSpec(), n=2, m=2)
        with pytest.raises(DomainError):
            ldd.scan_curve("time", [2.0, 1.0], prior=ldd.PriorSpec(), n=2, m=2)

    def test_supplied_spectrum(self):
        curve = ldd.scan_curve("time", [1.0, 2.0], prior=ldd.PriorSpec(1, 1), spectrum=[1.0, 0.5])
        direct = ldd.expected_error_closed_form([1.0, 0.5], [1, 1], ldd.PriorSpec(1, 1), 1.0, np.array([1.0, 2.0]))
        assert np.array_equal(curve.total_sq_error, direct.total)


class TestTrajectory:
    def test_starts_at_origin_and_ends_at_pinv(self):
        inst = ldd.make_instance(6, 2, ldd.PriorSpec(1, 0.5), 1.0, 0)
        big = 1e3 / inst.sigma.min() ** 2
        path = ldd.trajectory_2d(inst, [0.0, 1.0, big])
        assert np.array_equal(path[0], [0.0, 0.0])
        assert np.allclose(path[-1], np.linalg.pinv(inst.X) @ inst.Y, atol=1e-6)

    def test_fast_mode_first(self):
        X = np.diag([10.0, 0.5])
        inst = ldd.instance_from_arrays(X, [1.0, 1.0], [0.0, 0.0], 1.0)
        t = np.geomspace(1e-4, 100, 2000)
        path = ldd.trajectory_2d(inst, t)
        fast90 = t[np.argmax(path[:, 0] >= 0.9)]
        slow50 = t[np.argmax(path[:, 1] >= 0.5)]
        assert fast90 < slow50

    def test_needs_two_parameters(self):
        with pytest.raises(DomainError):
            ldd.trajectory_2d(ldd.make_instance(3, 3, ldd.PriorSpec(), 1.0, 0), [1.0])


class TestGradientStep:
    def test_matches_flow_derivative(self):
        inst = ldd.make_instance(5, 3, ldd.PriorSpec(1, 1), 0.1, 2)
        theta = np.ones(3)
        step = ldd.gradient_step(inst.X, inst.Y, theta, 1e-3)
        assert np.allclose((theta - step) / 1e-3, inst.X.T @ (inst.X @ theta - inst.Y))
