import numpy as np
import pytest

from pxlaplace.constants import (
    AdmissibilityError,
    ConstantSet,
    ExponentWindow,
    beta_star,
    constant_set,
    eta_star,
)


class TestBetaStar:
    def test_two_dimensional_value_is_minus_one(self):
        for t in (1.1, 2.0, 5.0, 10.0):
            assert beta_star(2, t) == -1.0

    def test_zero_exactly_at_threshold_exponent(self):
        for n in (3, 4, 5):
            t = 3.0 + 2.0 / (n - 2)
            assert abs(beta_star(n, t)) <= 1e-15

    def test_direct_evaluation(self):
        assert beta_star(4, 2.0) == pytest.approx(-2.0 / 3.0, abs=1e-15)

    def test_strictly_increasing_in_t_for_higher_dimensions(self):
        ts = np.linspace(1.05, 12.0, 40)
        for n in (3, 4, 5):
            values = [beta_star(n, t) for t in ts]
            assert all(b > a for a, b in zip(values, values[1:]))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            beta_star(2, 1.0)
        with pytest.raises(ValueError):
            beta_star(1, 2.0)


class TestExponentWindow:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExponentWindow(1.0, 2.0)
        with pytest.raises(ValueError):
            ExponentWindow(2.5, 2.0)
        ExponentWindow(1.5, 1.5)


class TestEtaStar:
    def test_cap_rule_at_p_two(self):
        # t- = t+ = 2 makes the quadratic constraint vacuous
        assert eta_star(ExponentWindow(2.0, 2.0), 2, 0.0) == 0.25

    def test_negative_beta_ceiling(self):
        # beta = -1/2 at n = 2: ceiling min(1/2, 1/2)/2 = 1/4, returned half
        assert eta_star(ExponentWindow(2.0, 2.0), 2, -0.5) == 0.125

    def test_zero_slack_rejected(self):
        with pytest.raises(AdmissibilityError):
            eta_star(ExponentWindow(5.0, 5.0), 3, beta_star(3, 5.0))
        with pytest.raises(AdmissibilityError):
            eta_star(ExponentWindow(2.0, 2.5), 2, -1.0)

    def test_constraints_hold_strictly_on_random_tuples(self):
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 1000:
            n = int(rng.integers(2, 4))
            t_minus = float(rng.uniform(1.01, 5.0))
            t_plus = float(rng.uniform(t_minus, 6.0))
            critical = beta_star(n, t_plus)
            beta = float(critical + rng.uniform(1e-6, 3.0))
            window = ExponentWindow(t_minus, t_plus)
            eta = eta_star(window, n, beta)
            # (a) below the cap for the sign of beta, strictly
            if beta >= 0:
                assert 0.0 < eta < 0.5
            else:
                ceiling = 0.5 * min(1.0 + beta, (n - 1.0) / (-2.0 * beta) * (beta - critical))
                assert 0.0 < eta < ceiling
            # (b) the quadratic constraint, strictly
            mq = max((t_minus - 2.0) ** 2, (t_plus - 2.0) ** 2)
            slack = 0.5 * (n - 1.0) * (t_minus - 1.0) * (beta - critical)
            assert eta * mq < slack
            checked += 1


class TestConstantSet:
    def test_reference_point(self):
        consts = constant_set(ExponentWindow(2.0, 2.0), 2, 0.0)
        assert consts.beta_star == -1.0
        assert consts.eta_star == 0.25
        assert consts.c_star == pytest.approx(20.0, abs=1e-12)

    def test_wider_window_does_not_shrink_c_star(self):
        narrow = constant_set(ExponentWindow(2.0, 2.0), 2, 0.0)
        wide = constant_set(ExponentWindow(1.5, 2.5), 2, 0.0)
        assert narrow.c_star <= wide.c_star

    def test_zero_slack_rejected(self):
        with pytest.raises(AdmissibilityError):
            constant_set(ExponentWindow(5.0, 5.0), 3, 0.0)

    def test_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 4))
            t_minus = float(rng.uniform(1.05, 4.0))
            t_plus = float(rng.uniform(t_minus, 5.0))
            beta = float(beta_star(n, t_plus) + rng.uniform(1e-4, 2.0))
            consts = constant_set(ExponentWindow(t_minus, t_plus), n, beta)
            assert consts.eta_star > 0
            assert consts.c_star >= 1.0
            assert consts.c_tilde_star >= 1.0
            assert consts.c_sharp >= 1.0

    def test_constant_set_validation(self):
        with pytest.raises(ValueError):
            ConstantSet(beta_star=-1.0, eta_star=0.0, c_star=2.0, c_tilde_star=2.0, c_sharp=2.0)
        with pytest.raises(ValueError):
            ConstantSet(beta_star=-1.0, eta_star=0.1, c_star=0.5, c_tilde_star=2.0, c_sharp=2.0)
