import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from edml.softest import SoftObservations, d2_log_objective, d_log_objective, log_objective, solve_mode, solve_modes
from edml.verify import grid_mode_oracle, random_soft_observations

INF = math.inf


class TestObjective:
    @pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
    def test_uniform(self, p):
        assert log_objective(p, SoftObservations([])) == 0.0

    def test_infinite_factor_contributes_p(self):
        assert log_objective(0.25, SoftObservations([INF])) == pytest.approx(math.log(0.25))

    def test_zero_factor_contributes_one_minus_p(self):
        assert log_objective(0.25, SoftObservations([0.0])) == pytest.approx(math.log(0.75))

    def test_substitution(self):
        assert log_objective(0.5, SoftObservations([3.0])) == pytest.approx(math.log(2.0))

    def test_boundaries(self):
        assert log_objective(0.0, SoftObservations([INF])) == -INF
        assert log_objective(1.0, SoftObservations([0.0], 2.0, 1.0)) == -INF

    def test_weights_equal_repetition(self):
        a = SoftObservations([2.0, 0.5], 2.0, 3.0, weights=[3, 1])
        b = SoftObservations([2.0, 2.0, 2.0, 0.5], 2.0, 3.0)
        assert log_objective(0.4, a) == pytest.approx(log_objective(0.4, b))
        assert solve_mode(a) == pytest.approx(solve_mode(b), abs=1e-12)

    def test_rejects_negative_factor(self):
        with pytest.raises(ValueError):
            SoftObservations([-1.0])


class TestDerivatives:
    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_flat(self, p):
        obs = SoftObservations([1.0, 1.0])
        assert d_log_objective(p, obs) == 0.0
        assert d2_log_objective(p, obs) == 0.0

    def test_substitution(self):
        obs = SoftObservations([2.0])
        assert d_log_objective(0.5, obs) == pytest.approx(2 / 3)
        assert d2_log_objective(0.5, obs) == pytest.approx(-4 / 9)

    def test_special_factors(self):
        obs = SoftObservations([INF, 0.0])
        assert d_log_objective(0.2, obs) == pytest.approx(1 / 0.2 - 1 / 0.8)
        assert d2_log_objective(0.2, obs) == pytest.approx(-1 / 0.04 - 1 / 0.64)

    def test_central_differences(self, rng):
        h = 1e-6
        for _ in range(30):
            obs = random_soft_observations(rng)
            for p in rng.uniform(0.01, 0.99, size=10):
                fd = (log_objective(p + h, obs) - log_objective(p - h, obs)) / (2 * h)
                d1 = d_log_objective(p, obs)
                assert abs(fd - d1) <= 1e-5 * max(abs(d1), 1.0)
                fd2 = (d_log_objective(p + h, obs) - d_log_objective(p - h, obs)) / (2 * h)
                assert abs(fd2 - d2_log_objective(p, obs)) <= 1e-5 * max(abs(fd2), 1.0)


class TestSolveMode:
    def test_flat_returns_half(self):
        assert solve_mode(SoftObservations([])) == 0.5
        assert solve_mode(SoftObservations([1.0, 1.0])) == 0.5

    @pytest.mark.parametrize("n, nx", [(1, 0), (1, 1), (5, 2), (7, 7), (10, 3)])
    def test_hard_observations_ml(self, n, nx):
        obs = SoftObservations([INF] * nx + [0.0] * (n - nx))
        assert solve_mode(obs) == pytest.approx(nx / n, abs=1e-9)

    @pytest.mark.parametrize("alpha, beta", [(2, 2), (3, 1), (1.5, 4)])
    def test_hard_observations_map(self, alpha, beta):
        n, nx = 9, 4
        obs = SoftObservations([INF] * nx + [0.0] * (n - nx), alpha, beta)
        assert solve_mode(obs) == pytest.approx((nx + alpha - 1) / (n + alpha + beta - 2), abs=1e-9)

    def test_by_hand(self):
        assert solve_mode(SoftObservations([INF, 0.0])) == pytest.approx(0.5, abs=1e-11)
        assert solve_mode(SoftObservations([INF])) == 1.0
        assert solve_mode(SoftObservations([0.0])) == 0.0

    def test_grid_oracle(self, rng):
        for _ in range(100):
            obs = random_soft_observations(rng)
            assert abs(solve_mode(obs) - grid_mode_oracle(obs)) <= 1e-6

    def test_batch_matches_scalar(self, rng):
        rows = [random_soft_observations(rng, max_obs=10) for _ in range(20)]
        width = max(len(o.kappas) for o in rows)
        k = np.ones((20, width))
        w = np.zeros((20, width))
        for i, o in enumerate(rows):
            k[i, : len(o.kappas)] = o.kappas
            w[i, : len(o.kappas)] = 1.0
        batch = solve_modes(k, w, [o.alpha for o in rows], [o.beta for o in rows])
        assert batch.tolist() == [solve_mode(o) for o in rows]


kappa = st.one_of(
    st.floats(1e-3, 1e3),
    st.just(0.0),
    st.just(INF),
    st.just(1.0),
)
exponent = st.floats(1.0, 5.0)


@st.composite
def soft_observations(draw, min_size=0):
    return SoftObservations(draw(st.lists(kappa, min_size=min_size, max_size=12)), draw(exponent), draw(exponent))


@settings(max_examples=200)
@given(soft_observations(), st.floats(0.001, 0.999))
def test_strictly_log_concave(obs, p):
    assume(not obs.is_flat())
    assume(obs.alpha > 1 or obs.beta > 1 or np.any(obs.kappas != 1.0))
    assert d2_log_objective(p, obs) < 0.0


@settings(max_examples=200)
@given(soft_observations())
def test_mode_is_stationary_or_boundary(obs):
    p = solve_mode(obs)
    if obs.is_flat():
        assert p == 0.5
    elif 0.0 < p < 1.0:
        # the derivative changes sign within 1e-8 of the returned point
        lo, hi = max(p - 1e-8, 1e-15), min(p + 1e-8, 1 - 1e-15)
        assert d_log_objective(lo, obs) >= 0.0 >= d_log_objective(hi, obs)
    elif p == 0.0:
        assert d_log_objective(1e-12, obs) <= 0.0
    else:
        assert d_log_objective(1 - 1e-12, obs) >= 0.0


@settings(max_examples=100)
@given(soft_observations(), st.randoms(use_true_random=False))
def test_permutation_invariance(obs, random):
    k = list(obs.kappas)
    random.shuffle(k)
    shuffled = SoftObservations(k, obs.alpha, obs.beta)
    assert solve_mode(shuffled) == solve_mode(obs)
    assert log_objective(0.37, shuffled) == pytest.approx(log_objective(0.37, obs), abs=1e-12)


@settings(max_examples=100)
@given(soft_observations())
def test_neutral_observation_changes_nothing(obs):
    extra = SoftObservations([*obs.kappas, 1.0], obs.alpha, obs.beta)
    assert solve_mode(extra) == solve_mode(obs)
    assert log_objective(0.61, extra) == pytest.approx(log_objective(0.61, obs), rel=1e-14, abs=1e-14)


@settings(max_examples=200)
@given(soft_observations(min_size=1), st.integers(0, 11), st.floats(1.0, 100.0))
def test_monotone_in_each_factor(obs, i, scale):
    i = i % len(obs.kappas)
    assume(not obs.is_flat())
    k = obs.kappas.copy()
    k[i] = INF if k[i] == 0.0 and scale > 50 else k[i] * scale + (scale - 1.0)
    larger = SoftObservations(k, obs.alpha, obs.beta)
    assert solve_mode(larger) >= solve_mode(obs) - 1e-12
