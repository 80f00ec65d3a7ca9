import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptest import irt
from adaptest.irt import GridSpec, ItemParams

from .conftest import simpson_posterior_oracle

sane_a = st.floats(min_value=0.1, max_value=4.0, allow_nan=False)
sane_b = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
sane_theta = st.floats(min_value=-4.0, max_value=4.0, allow_nan=False)


class TestProbCorrect:
    def test_symmetry_point(self):
        # theta + b = 0 puts the response exactly at chance-of-half
        assert irt.prob_correct(0.7, ItemParams(1.2, -0.7)) == pytest.approx(0.5)
        assert irt.prob_correct(0.0, ItemParams(1.0, 0.0)) == 0.5

    def test_known_value(self):
        assert irt.prob_correct(1.0, ItemParams(1.0, 0.0)) == pytest.approx(
            0.7310585786300049, abs=1e-15
        )

    def test_extreme_arguments_no_overflow(self):
        hard = irt.prob_correct(-350.0, ItemParams(2.0, 0.0))
        easy = irt.prob_correct(350.0, ItemParams(2.0, 0.0))
        assert 0.0 <= hard < 1e-100
        assert easy == 1.0  # saturates cleanly, never overflows

    @given(theta=sane_theta, a=sane_a, b=sane_b)
    def test_strictly_increasing_in_theta_and_b(self, theta, a, b):
        p0 = irt.prob_correct(theta, ItemParams(a, b))
        assert irt.prob_correct(theta + 0.25, ItemParams(a, b)) > p0
        assert irt.prob_correct(theta, ItemParams(a, b + 0.25)) > p0

    @given(theta=sane_theta, a=sane_a, b=sane_b)
    def test_increasing_in_a_above_symmetry(self, theta, a, b):
        if theta + b <= 0.01:
            theta = -b + 0.5
        p0 = irt.prob_correct(theta, ItemParams(a, b))
        assert irt.prob_correct(theta, ItemParams(a + 0.5, b)) > p0

    def test_invalid_params(self):
        with pytest.raises(ValueError, match="discrimination"):
            ItemParams(-0.3, 0.0)
        with pytest.raises(ValueError, match="finite"):
            ItemParams(1.0, math.inf)


class TestInformation:
    def test_peak_value(self):
        # p = 0.5 at theta = -b, so information is a^2 / 4
        assert irt.item_information(-1.7, ItemParams(2.0, 1.7)) == pytest.approx(1.0)
        assert irt.item_information(0.0, ItemParams(1.0, 0.0)) == pytest.approx(0.25)

    def test_known_value(self):
        assert irt.item_information(1.0, ItemParams(1.0, 0.0)) == pytest.approx(
            0.19661193324148185, abs=1e-15
        )

    @given(a=sane_a, b=sane_b)
    @settings(max_examples=50)
    def test_peak_location_on_dense_grid(self, a, b):
        grid = np.linspace(-6, 6, 4801)
        info = [irt.item_information(t, ItemParams(a, b)) for t in grid]
        peak = grid[int(np.argmax(info))]
        step = grid[1] - grid[0]
        assert abs(peak - (-b)) <= step + 1e-12
        assert irt.item_information(-b, ItemParams(a, b)) == pytest.approx(
            a * a / 4.0, abs=1e-9
        )

    def test_test_information_additive(self):
        p = ItemParams(2.0, 0.3)
        single = irt.item_information(-0.3, p)
        assert irt.test_information(-0.3, [p, p]) == pytest.approx(2.0)
        assert irt.test_information(-0.3, [p]) == single

    def test_three_item_sum(self):
        items = [ItemParams(1, 0), ItemParams(1.5, 0.5), ItemParams(0.8, -1)]
        assert irt.test_information(0.0, items) == pytest.approx(
            0.8771659417370700, abs=1e-12
        )

    def test_empty_items(self):
        with pytest.raises(ValueError, match="empty item set"):
            irt.test_information(0.0, [])


class TestStandardError:
    def test_unit_cases(self):
        # I = 4 -> SE = 0.5, via two a=2 items at their peak
        items = [ItemParams(2.0, 0.0)] * 4
        assert irt.standard_error(0.0, items) == pytest.approx(0.5)
        assert irt.standard_error(0.0, [ItemParams(2.0, 0.0)]) == pytest.approx(1.0)

    def test_three_item_case(self):
        items = [ItemParams(1, 0), ItemParams(1.5, 0.5), ItemParams(0.8, -1)]
        assert irt.standard_error(0.0, items) == pytest.approx(
            1.0677242823884090, abs=1e-12
        )

    def test_degenerate_information(self):
        with pytest.raises(ValueError, match="degenerate information"):
            irt.standard_error(0.0, [ItemParams(50.0, 20.0)])

    @given(theta=sane_theta, a=sane_a, b=sane_b)
    def test_se_times_sqrt_info_is_one(self, theta, a, b):
        items = [ItemParams(a, b), ItemParams(a * 0.7 + 0.1, -b)]
        se = irt.standard_error(theta, items)
        info = irt.test_information(theta, items)
        assert abs(se * math.sqrt(info) - 1.0) < 1e-12


class TestGridPosterior:
    def test_empty_responses_returns_prior(self):
        post = irt.posterior_from_responses(0.0, 1.0, [])
        assert post.mean == pytest.approx(0.0, abs=1e-6)
        assert post.sd == pytest.approx(1.0, abs=1e-4)
        # prior edge exactly 5 sd from the grid boundary: truncation shifts the
        # mean by phi(5) ~ 1.5e-6, the attainable floor for this coverage
        post = irt.posterior_from_responses(-1.0, 1.0, [])
        assert post.mean == pytest.approx(-1.0, abs=2e-6)
        assert post.sd == pytest.approx(1.0, abs=1e-4)

    def test_symmetric_responses_center_at_zero(self):
        p = ItemParams(1.0, 0.0)
        post = irt.posterior_from_responses(0.0, 1.0, [(p, True), (p, False)])
        assert post.mean == pytest.approx(0.0, abs=1e-12)

    def test_against_quadrature_oracle(self):
        responses = [(ItemParams(1.5, 0.0), True)]
        post = irt.posterior_from_responses(0.0, 1.0, responses)
        oracle_mean, oracle_sd = simpson_posterior_oracle(
            0.0, 1.0, [((1.5, 0.0), True)]
        )
        assert post.mean == pytest.approx(oracle_mean, abs=1e-4)
        assert post.sd == pytest.approx(oracle_sd, abs=1e-4)

    def test_density_normalized(self):
        post = irt.posterior_from_responses(
            0.0, 1.0, [(ItemParams(2.0, 0.5), True), (ItemParams(1.0, -0.5), False)]
        )
        dens = post.density()
        assert np.trapezoid(dens, dx=post.grid.step) == pytest.approx(1.0, abs=1e-9)

    @given(
        a=sane_a,
        b=st.floats(min_value=-2.0, max_value=2.0),
        correct=st.booleans(),
    )
    @settings(max_examples=40)
    def test_shift_direction_and_sd_shrink(self, a, b, correct):
        base = [(ItemParams(1.2, 0.1), True), (ItemParams(0.9, -0.4), False)]
        before = irt.posterior_from_responses(0.0, 1.0, base)
        after = irt.posterior_from_responses(0.0, 1.0, base + [(ItemParams(a, b), correct)])
        if correct:
            assert after.mean >= before.mean
        else:
            assert after.mean <= before.mean
        assert after.sd <= before.sd + 1e-6

    def test_grid_convergence_on_doubling(self):
        responses = [(ItemParams(1.3, 0.2), True), (ItemParams(0.8, -0.7), False)]
        coarse = irt.posterior_from_responses(0.0, 1.0, responses)
        fine = irt.posterior_from_responses(
            0.0, 1.0, responses, grid=GridSpec(-6.0, 6.0, 2401)
        )
        assert abs(coarse.mean - fine.mean) < 1e-6

    def test_grid_truncation_error(self):
        pushed = [(ItemParams(3.0, -6.0), True)] * 40
        with pytest.raises(ValueError, match="grid truncation"):
            irt.posterior_from_responses(0.0, 1.0, pushed)

    def test_grid_must_cover_prior(self):
        with pytest.raises(ValueError, match="grid must cover"):
            irt.posterior_from_responses(0.0, 2.0, [])

    def test_prior_sd_must_be_positive(self):
        with pytest.raises(ValueError, match="prior_sd"):
            irt.posterior_from_responses(0.0, 0.0, [])

    def test_long_sequences_do_not_underflow(self):
        responses = [(ItemParams(2.0, (-1) ** k * 0.5), k % 2 == 0) for k in range(200)]
        post = irt.posterior_from_responses(0.0, 1.0, responses)
        assert math.isfinite(post.mean) and post.sd > 0
