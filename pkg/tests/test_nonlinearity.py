import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_functions.errors import (
    InfiniteInfimum,
    InvalidParameter,
    NonIntegrableSingularity,
    RangeExceeded,
    UnsupportedKind,
)
from singular_functions.nonlinearity import (
    ApproxFamily,
    ApproxKind,
    IntegrabilityClass,
    antiderivative_psi,
    cap_at,
    check_reasonable_family,
    constant,
    exponent_drift,
    from_callable,
    homographic,
    infimum_of,
    integrability_class,
    l1_norm_on,
    make_approx,
    eval_phi,
    mirror,
    mollify,
    plus_shift_and_zeta,
    power,
    reflect,
    shifted,
    sup_outside,
    tabulated,
    truncate,
)


class TestPowerModel:
    def test_values_on_both_sides(self, phi_third):
        assert phi_third(8.0) == pytest.approx(0.5)
        assert phi_third(-8.0) == pytest.approx(0.5)

    def test_plus_infinity_at_zero(self, phi_third):
        assert phi_third(0.0) == math.inf
        assert phi_third.singular_at_zero

    def test_eval_phi(self, phi_third):
        assert eval_phi(phi_third, 27.0) == pytest.approx(1.0 / 3.0)
        assert eval_phi(phi_third, 0.0) == math.inf

    def test_vectorized_matches_scalar(self, phi_third):
        s = np.array([-2.0, -0.5, 0.0, 0.25, 3.0])
        out = phi_third(s)
        assert out[2] == math.inf
        np.testing.assert_allclose(out[[0, 1, 3, 4]], [phi_third(float(x)) for x in s[[0, 1, 3, 4]]])

    def test_smooth_part_agrees_between_scalar_and_array(self):
        phi = power(1.0, 0.5, smooth_part=(1.0, -2.0, 0.5))
        s = np.array([-3.0, -0.25, 0.5, 4.0])
        expected = 1.0 / np.sqrt(np.abs(s)) + 1.0 - 2.0 * s + 0.5 * s * s
        np.testing.assert_allclose(phi(s), expected)
        np.testing.assert_allclose([phi(float(x)) for x in s], expected)

    def test_piecewise_exponents(self):
        phi = power(1.0, gamma_left=0.25, gamma_right=0.5)
        assert phi(4.0) == pytest.approx(0.5)
        assert phi(-16.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("c,gamma", [(0.0, 0.5), (1.0, 0.0), (1.0, -0.5)])
    def test_rejects_bad_parameters(self, c, gamma):
        with pytest.raises(InvalidParameter):
            power(c, gamma)

    def test_needs_an_exponent(self):
        with pytest.raises(InvalidParameter):
            power(1.0, gamma_left=0.5)

    def test_negative_amplitude_is_minus_infinity_at_zero(self):
        phi = power(-1.0, 0.5)
        assert phi(0.0) == -math.inf
        assert not phi.singular_at_zero


class TestTransforms:
    def test_cap_freezes_outside_radius(self, phi_third):
        capped = cap_at(phi_third, 2.0)
        assert capped(5.0) == phi_third(2.0)
        assert capped(-5.0) == phi_third(-2.0)
        assert capped(1.0) == phi_third(1.0)

    def test_cap_needs_positive_radius(self, phi_third):
        with pytest.raises(InvalidParameter):
            cap_at(phi_third, 0.0)

    def test_reflect_turns_minus_infinity_into_plus_infinity(self):
        phi = power(-1.0, gamma_left=0.25, gamma_right=0.5)
        reflected = reflect(phi)
        assert reflected.singular_at_zero
        assert reflected(0.0) == math.inf
        for s in (2.0, -3.0, 0.1):
            assert reflected(s) == pytest.approx(-phi(-s))

    @given(st.floats(min_value=-50.0, max_value=50.0).filter(lambda s: abs(s) > 1e-6))
    @settings(max_examples=50, deadline=None)
    def test_reflect_is_an_involution(self, s):
        phi = power(-1.0, gamma_left=0.25, gamma_right=0.5, smooth_part=(0.5, 1.0))
        assert reflect(reflect(phi))(s) == pytest.approx(phi(s), rel=1e-12)

    def test_mirror(self):
        phi = tabulated([-1.0, 0.0, 1.0], [3.0, 1.0, 2.0])
        assert mirror(phi)(0.5) == pytest.approx(phi(-0.5))

    def test_shifted_model_keeps_the_model(self, phi_third):
        moved = shifted(phi_third, 2.0)
        assert moved.model is not None
        assert moved(1.0) == pytest.approx(3.0)

    def test_tabulated_is_constant_outside_the_table(self):
        phi = tabulated([-1.0, 0.0, 1.0], [3.0, -2.0, 5.0])
        assert phi(10.0) == pytest.approx(5.0)
        assert phi(-10.0) == pytest.approx(3.0)
        assert phi(0.5) == pytest.approx(1.5)
        assert phi.bound == 5.0

    def test_tabulated_rejects_unsorted_points(self):
        with pytest.raises(InvalidParameter):
            tabulated([0.0, -1.0], [1.0, 2.0])


class TestApproximations:
    def test_truncation(self, phi_third):
        t = truncate(phi_third, 10.0)
        assert t(0.0) == 10.0
        assert t(1.0) == pytest.approx(1.0)
        assert t.bound == 10.0

    def test_homographic(self, phi_third):
        h = homographic(phi_third, 10.0)
        assert h(0.0) == 10.0
        assert h(1.0) == pytest.approx(1.0 / 1.1)

    @settings(max_examples=50, deadline=None)
    @given(s=st.floats(min_value=1e-9, max_value=1e6), n=st.floats(min_value=1.0, max_value=1e6))
    def test_truncation_never_exceeds_phi_or_n(self, s, n):
        phi = power(1.0, 1.0 / 3.0)
        value = truncate(phi, n)(s)
        assert value == pytest.approx(min(phi(s), n))

    @settings(max_examples=50, deadline=None)
    @given(s=st.floats(min_value=-1e6, max_value=1e6), n=st.floats(min_value=1.0, max_value=1e6))
    def test_homographic_stays_below_n(self, s, n):
        value = homographic(power(1.0, 0.5), n)(s)
        assert 0.0 < value <= n * (1.0 + 1e-12)

    def test_exponent_drift_moves_toward_the_base(self, phi_third):
        member = exponent_drift(phi_third, 1000.0)
        assert member.model.gamma_right == pytest.approx(1.0 / 3.0, rel=2e-3)
        assert member(2.0) == pytest.approx(phi_third(2.0), rel=1e-2)

    def test_exponent_drift_needs_a_model(self):
        with pytest.raises(UnsupportedKind):
            exponent_drift(constant(1.0), 10.0)

    def test_mollify_keeps_constants(self):
        assert mollify(constant(2.0), 10.0)(0.3) == pytest.approx(2.0)

    def test_mollify_rejects_singular_phi(self, phi_third):
        with pytest.raises(UnsupportedKind):
            mollify(phi_third, 10.0)

    def test_make_approx_requires_scheduled_index(self, phi_third):
        family = ApproxFamily(ApproxKind.TRUNCATION, phi_third, (10.0, 100.0))
        assert make_approx(family, 100.0)(0.0) == 100.0
        with pytest.raises(InvalidParameter):
            make_approx(family, 50.0)

    def test_identity_member_is_the_base(self, phi_third):
        family = ApproxFamily(ApproxKind.IDENTITY, phi_third, (1.0,))
        assert make_approx(family, 1.0) is phi_third

    def test_custom_family_needs_a_builder(self, phi_third):
        family = ApproxFamily(ApproxKind.CUSTOM, phi_third, (1.0,))
        with pytest.raises(UnsupportedKind):
            make_approx(family, 1.0)

    def test_schedule_must_be_positive(self, phi_third):
        with pytest.raises(InvalidParameter):
            ApproxFamily(ApproxKind.TRUNCATION, phi_third, (0.0, 1.0))


class TestReasonableFamily:
    def test_truncation_is_reasonable(self, phi_third):
        family = ApproxFamily(ApproxKind.TRUNCATION, phi_third, (10.0, 100.0, 1000.0))
        report = check_reasonable_family(family, eta=0.1, R=10.0, tol=1e-6)
        assert report.converges_off_zero
        assert report.diverges_near_zero
        assert report.verdict

    def test_alternating_shift_is_not(self, phi_third):
        family = ApproxFamily(
            ApproxKind.CUSTOM,
            phi_third,
            (1.0, 2.0, 3.0, 4.0),
            builder=lambda base, n: shifted(base, (-1.0) ** n),
        )
        report = check_reasonable_family(family, eta=0.1, R=10.0, tol=1e-6)
        assert not report.converges_off_zero
        assert not report.verdict
        assert report.to_dict()["verdict"] is False

    def test_a_dipping_member_fails_near_zero(self, phi_third):
        family = ApproxFamily(
            ApproxKind.CUSTOM,
            phi_third,
            (1.0, 2.0, 3.0),
            builder=lambda base, n: truncate(base, 0.5 if n == 2.0 else n),
        )
        report = check_reasonable_family(family, eta=0.1, R=10.0, tol=1e-6)
        assert report.converges_off_zero
        assert not report.diverges_near_zero
        assert not report.verdict

    def test_eta_must_be_below_R(self, phi_third):
        family = ApproxFamily(ApproxKind.TRUNCATION, phi_third, (10.0,))
        with pytest.raises(InvalidParameter):
            check_reasonable_family(family, eta=2.0, R=1.0, tol=1e-6)


class TestAntiderivative:
    def test_closed_form(self, phi_third):
        assert antiderivative_psi(phi_third, 1.0) == pytest.approx(1.5)
        assert antiderivative_psi(phi_third, -8.0) == pytest.approx(-6.0)
        assert antiderivative_psi(phi_third, 0.0) == 0.0

    def test_array_input(self, phi_third):
        out = antiderivative_psi(phi_third, np.array([1.0, -1.0]))
        np.testing.assert_allclose(out, [1.5, -1.5])

    def test_non_integrable_model(self):
        with pytest.raises(NonIntegrableSingularity):
            antiderivative_psi(power(1.0, 1.0), 1.0)

    def test_graded_quadrature_for_general_phi(self):
        phi = from_callable(
            lambda s: math.inf if s == 0 else abs(s) ** -0.5,
            label="inv-sqrt",
            singular_at_zero=True,
        )
        assert antiderivative_psi(phi, 1.0) == pytest.approx(2.0, rel=1e-4)

    def test_continuous_phi_uses_plain_quadrature(self):
        phi = tabulated([-1.0, 1.0], [0.0, 2.0])
        assert antiderivative_psi(phi, 1.0) == pytest.approx(1.5)


class TestIntegrability:
    @pytest.mark.parametrize(
        "phi,expected",
        [
            (power(1.0, 1.0 / 3.0), IntegrabilityClass.BOTH),
            (power(1.0, gamma_left=1.0, gamma_right=0.5), IntegrabilityClass.RIGHT_ONLY),
            (power(1.0, gamma_left=0.5, gamma_right=1.5), IntegrabilityClass.LEFT_ONLY),
            (power(1.0, 2.0), IntegrabilityClass.NONE),
            (constant(1.0), IntegrabilityClass.BOTH),
        ],
    )
    def test_classes(self, phi, expected):
        assert integrability_class(phi) is expected

    def test_l1_norm_and_sup_outside(self, phi_third):
        assert l1_norm_on(phi_third, 1.0) == pytest.approx(3.0)
        assert sup_outside(phi_third, 1.0) == pytest.approx(1.0)


class TestZeta:
    def test_zeta_of_inverse_square_root(self):
        table = plus_shift_and_zeta(power(1.0, 0.5), 1.0)
        # phi_plus = s^(-1/2) + 1, so zeta(1) = 2 (ln 2 - 1/2)
        assert table.zeta(1.0) == pytest.approx(2.0 * (math.log(2.0) - 0.5), rel=1e-6)
        assert table.infimum == 0.0

    def test_inverse(self, phi_third):
        table = plus_shift_and_zeta(phi_third, 2.0)
        for s in (1e-6, 0.5, 1.7):
            assert table.zeta_inv(table.zeta(s)) == pytest.approx(s, rel=1e-9)
        assert table.zeta(0.0) == 0.0
        assert table.zeta_inv(0.0) == 0.0

    def test_strictly_increasing(self, phi_third):
        table = plus_shift_and_zeta(phi_third, 1.0)
        values = table.zeta(np.linspace(0.0, 1.0, 101))
        assert np.all(np.diff(values) > 0)

    def test_range_is_enforced(self, phi_third):
        table = plus_shift_and_zeta(phi_third, 1.0)
        with pytest.raises(RangeExceeded):
            table.zeta(2.0)
        with pytest.raises(RangeExceeded):
            table.zeta_inv(2.0 * table.zeta_max)

    def test_s_max_must_be_positive(self, phi_third):
        with pytest.raises(InvalidParameter):
            plus_shift_and_zeta(phi_third, 0.0)


class TestInfimum:
    def test_analytic_infimum(self):
        assert infimum_of(tabulated([-1.0, 0.0, 1.0], [3.0, -2.0, 5.0])) == (-2.0, 0.0)

    def test_minus_infinity_at_zero(self):
        phi = from_callable(lambda s: -math.inf if s == 0 else -abs(s) ** -0.5, label="neg")
        with pytest.raises(InfiniteInfimum):
            infimum_of(phi)

    def test_unbounded_tail(self):
        phi = from_callable(lambda s: -abs(s), label="-|s|", vectorized=False)
        with pytest.raises(InfiniteInfimum):
            infimum_of(phi)
