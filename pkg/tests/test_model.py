import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edml.model import (
    MISSING,
    BetaPriors,
    Dataset,
    ModelError,
    Network,
    choose_hidden,
    distinct_examples,
    hide_at_random,
    parse_dataset,
    parse_network,
    random_network,
    serialize_dataset,
    serialize_network,
    simulate_dataset,
)
from edml.verify import count_families

FORK_TEXT = """
# base network S <- H -> E
var S
var H
var E
parents S H
parents E H
cpt H 0.5
cpt S 0 0.5
cpt S 1 0.5
cpt E 0 0.5
cpt E 1 0.5
"""


class TestParseNetwork:
    def test_single_node(self):
        net = parse_network("var X\ncpt X  0.6\n")
        assert net.variables == ("X",)
        assert net.theta[0].tolist() == [0.6]

    def test_fork_parameter_count(self):
        net = parse_network(FORK_TEXT)
        assert net.n_parameters == 5
        assert net.parents == ((1,), (), (1,))

    def test_cycle(self):
        text = "var X\nvar Y\nparents X Y\nparents Y X\ncpt X 0 0.5\ncpt X 1 0.5\ncpt Y 0 0.5\ncpt Y 1 0.5\n"
        with pytest.raises(ModelError, match="cycle"):
            parse_network(text)

    @pytest.mark.parametrize(
        "text, match",
        [
            ("var X\nparents X Z\ncpt X 0 0.5\ncpt X 1 0.5\n", "undeclared parent"),
            ("var X\nvar Y\nparents Y X\ncpt X 0.5\ncpt Y 1 0.5\n", "missing CPT entry"),
            ("var X\ncpt X 1.5\n", "outside"),
            ("var X\nvar X\ncpt X 0.5\n", "duplicate"),
            ("var X\ncpt X 0 0.5\n", "width"),
            ("var X\nwhat X\n", "unknown directive"),
        ],
    )
    def test_errors(self, text, match):
        with pytest.raises(ModelError, match=match):
            parse_network(text)

    def test_parents_may_be_declared_after_child(self):
        net = parse_network("var Y\nvar X\nparents Y X\ncpt X 0.2\ncpt Y 0 0.1\ncpt Y 1 0.9\n")
        assert net.order == (1, 0)

    def test_theta_is_read_only(self):
        net = parse_network("var X\ncpt X 0.6\n")
        with pytest.raises(ValueError):
            net.theta[0][0] = 0.1


class TestDatasetFormat:
    def test_three_row_table(self):
        data = parse_dataset("X,Y,Z\n1,0,?\n?,0,?\n0,?,1\n")
        assert len(data) == 3
        assert data.rows[2].tolist() == [0, MISSING, 1]

    def test_empty_body(self):
        data = parse_dataset("X,Y,Z\n")
        assert len(data) == 0
        assert data.header == ("X", "Y", "Z")

    def test_arity(self):
        with pytest.raises(ModelError, match="expected 3 cells"):
            parse_dataset("X,Y,Z\n1,0\n")

    def test_unknown_token(self):
        with pytest.raises(ModelError, match="unknown token"):
            parse_dataset("X\n2\n")


cells = st.sampled_from([0, 1, MISSING])


@st.composite
def datasets(draw):
    n_vars = draw(st.integers(1, 6))
    rows = draw(st.lists(st.lists(cells, min_size=n_vars, max_size=n_vars), max_size=20))
    header = tuple(f"V{i}" for i in range(n_vars))
    return Dataset(header, np.array(rows, dtype=np.int8).reshape(len(rows), n_vars))


@given(datasets())
def test_dataset_round_trip(data):
    assert parse_dataset(serialize_dataset(data)) == data


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_network_round_trip(n_vars, seed):
    net = random_network(n_vars, np.random.default_rng(seed))
    assert parse_network(serialize_network(net)) == net


class TestDistinct:
    def test_counts_in_first_occurrence_order(self):
        data = Dataset(("A", "B"), [[1, 0], [1, 0], [0, MISSING]])
        assert distinct_examples(data) == [((1, 0), 2), ((0, MISSING), 1)]

    def test_all_distinct(self):
        data = Dataset(("A", "B"), [[0, 0], [0, 1], [1, 0], [1, 1]])
        assert [c for _, c in distinct_examples(data)] == [1, 1, 1, 1]

    def test_all_equal(self):
        data = Dataset(("A",), [[1]] * 7)
        assert distinct_examples(data) == [((1,), 7)]

    def test_order_is_by_first_occurrence_not_sorted(self):
        data = Dataset(("A",), [[1], [0], [1]])
        assert distinct_examples(data) == [((1,), 2), ((0,), 1)]


class TestSimulate:
    def test_all_hidden(self, fork):
        data = simulate_dataset(fork, 50, hidden=fork.variables, seed=1)
        assert np.all(data.rows == MISSING)

    def test_deterministic_root(self):
        net = parse_network("var X\ncpt X 1\n")
        assert np.all(simulate_dataset(net, 100, seed=3).rows == 1)

    def test_law_of_large_numbers(self):
        net = parse_network("var X\ncpt X 0.7\n")
        data = simulate_dataset(net, 10**5, seed=11)
        assert abs(data.rows.mean() - 0.7) <= 0.01

    def test_reproducible_and_seed_sensitive(self, fork):
        a = simulate_dataset(fork, 40, hidden=["H"], seed=5)
        b = simulate_dataset(fork, 40, hidden=["H"], seed=5)
        c = simulate_dataset(fork, 40, hidden=["H"], seed=6)
        assert a == b
        assert a != c

    def test_rows_independent_of_sample_size(self, fork):
        small = simulate_dataset(fork, 10, seed=9)
        large = simulate_dataset(fork, 30, seed=9)
        assert np.array_equal(small.rows, large.rows[:10])

    def test_unknown_hidden(self, fork):
        with pytest.raises(ModelError, match="unknown variable"):
            simulate_dataset(fork, 5, hidden=["Q"])

    def test_count_ratio_converges(self):
        # parameters whose parent instantiation occurs often enough
        truth = random_network(6, np.random.default_rng(3), max_parents=2)
        data = simulate_dataset(truth, 2**16, seed=4)
        counts = count_families(data, truth)
        checked = 0
        for t, n_xu, n_u in zip(truth.theta, counts.n_xu, counts.n_u):
            ok = n_u >= 1000
            checked += int(ok.sum())
            assert np.all(np.abs(n_xu[ok] / n_u[ok] - t[ok]) <= 0.02)
        assert checked >= 6


def test_hide_at_random_only_touches_given_columns(fork):
    data = simulate_dataset(fork, 200, seed=2)
    hidden = hide_at_random(data, [2], 0.5, seed=1)
    assert np.array_equal(hidden.rows[:, :2], data.rows[:, :2])
    assert 0 < np.sum(hidden.rows[:, 2] == MISSING) < 200


def test_choose_hidden_quarter():
    net = random_network(20, np.random.default_rng(0))
    assert len(choose_hidden(net, 0.25, seed=1)) == 5
    assert choose_hidden(net, 0.25, seed=1) == choose_hidden(net, 0.25, seed=1)


def test_priors_reject_small_exponents(fork):
    with pytest.raises(ModelError):
        BetaPriors.uniform(fork, 0.5, 1.0)


def test_network_rejects_bad_cpt_shape():
    with pytest.raises(ModelError):
        Network(("A",), ((),), (np.array([0.1, 0.2]),))
