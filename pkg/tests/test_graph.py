import math

import numpy as np
import pytest

from graphsmc.graph import (
    Angle,
    Discrete,
    DomainTooLargeError,
    FactorGraph,
    FunctionFactor,
    GaussianObsFactor,
    GaussianPairFactor,
    GraphFormatError,
    LatticeInfo,
    MissingVariableError,
    RealLine,
    TableFactor,
    UnsupportedDomainError,
    XYPairFactor,
    brute_force_log_partition,
    eval_log_factor,
    eval_log_unnorm_density,
    graph_from_dict,
    graph_to_dict,
    load_graph,
    save_graph,
    wrap_angle,
)
from graphsmc.lattice import grid_edges
from graphsmc.models.discrete import random_binary_mrf

# 3x3 Ising grid at coupling 0.5, frozen from brute_force_log_partition itself
ISING_3X3_BETA_05_LOGZ = 7.891524502190666


def ising_graph(rows, cols, beta):
    factors = [
        TableFactor((i, j), np.array([[beta, -beta], [-beta, beta]]))
        for i, j in grid_edges(rows, cols)
    ]
    return FactorGraph([Discrete(2)] * (rows * cols), factors, LatticeInfo(rows, cols, False))


class TestEvalLogFactor:
    def test_constant_unit_potential(self):
        f = TableFactor((0,), np.zeros(3))
        assert eval_log_factor(f, {0: 1}) == 0.0

    def test_xy_pair_equal_angles(self):
        f = XYPairFactor(0, 1, 1.1)
        assert eval_log_factor(f, {0: 0.37, 1: 0.37}) == pytest.approx(1.1, abs=1e-15)

    def test_table_lookup(self):
        f = TableFactor((0, 1), np.log([[2.0, 1.0], [1.0, 2.0]]))
        assert eval_log_factor(f, {0: 0, 1: 0}) == pytest.approx(math.log(2.0))

    def test_missing_variable(self):
        f = TableFactor((0, 1), np.zeros((2, 2)))
        with pytest.raises(MissingVariableError):
            eval_log_factor(f, {0: 1})

    def test_clique_must_be_duplicate_free(self):
        with pytest.raises(ValueError):
            TableFactor((0, 0), np.zeros((2, 2)))


class TestEvalLogDensity:
    def test_two_constant_factors(self):
        g = FactorGraph([Discrete(2)], [TableFactor((0,), np.zeros(2))] * 2)
        assert eval_log_unnorm_density(g, {0: 1}) == 0.0

    def test_single_factor_graph(self):
        f = TableFactor((0,), np.log([0.3, 0.7]))
        g = FactorGraph([Discrete(2)], [f])
        a = {0: 1}
        assert eval_log_unnorm_density(g, a) == eval_log_factor(f, a)

    def test_ising_pair_aligned(self):
        # single coupling term at J=1: states (+1,+1) encoded (1,1) -> 1.0
        g = FactorGraph(
            [Discrete(2)] * 2, [TableFactor((0, 1), np.array([[1.0, -1.0], [-1.0, 1.0]]))]
        )
        assert eval_log_unnorm_density(g, {0: 1, 1: 1}) == pytest.approx(1.0)
        states = [(a, b) for a in (0, 1) for b in (0, 1)]
        brute = math.log(sum(math.exp(eval_log_unnorm_density(g, dict(zip((0, 1), s)))) for s in states))
        assert brute == pytest.approx(brute_force_log_partition(g), rel=1e-12)

    def test_partial_assignment_rejected(self):
        g = FactorGraph([Discrete(2)] * 2, [])
        with pytest.raises(MissingVariableError):
            eval_log_unnorm_density(g, {0: 1})

    def test_matches_product_of_factors(self):
        rng = np.random.default_rng(11)
        g = random_binary_mrf(3, 3, rng)
        for _ in range(20):
            a = {i: int(rng.integers(2)) for i in range(g.n_vars)}
            total = sum(eval_log_factor(f, a) for f in g.factors)
            assert math.exp(eval_log_unnorm_density(g, a)) == pytest.approx(
                math.exp(total), rel=1e-12
            )


class TestBruteForce:
    def test_single_binary_unit(self):
        g = FactorGraph([Discrete(2)], [TableFactor((0,), np.zeros(2))])
        assert brute_force_log_partition(g) == pytest.approx(math.log(2.0))

    def test_two_binary_no_factors(self):
        g = FactorGraph([Discrete(2)] * 2, [])
        assert brute_force_log_partition(g) == pytest.approx(math.log(4.0))

    def test_ising_3x3_regression(self):
        g = ising_graph(3, 3, 0.5)
        assert brute_force_log_partition(g) == pytest.approx(
            ISING_3X3_BETA_05_LOGZ, rel=1e-12
        )

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        g = random_binary_mrf(2, 3, rng)
        base = brute_force_log_partition(g)
        perm = rng.permutation(len(g.factors))
        g2 = FactorGraph([v.domain for v in g.variables], [g.factors[p] for p in perm])
        assert brute_force_log_partition(g2) == pytest.approx(base, rel=1e-12)

    def test_constant_factor_shifts_by_log_c(self):
        rng = np.random.default_rng(4)
        g = random_binary_mrf(2, 2, rng)
        base = brute_force_log_partition(g)
        c = 3.7
        g2 = FactorGraph(
            [v.domain for v in g.variables],
            list(g.factors) + [TableFactor((0,), np.full(2, math.log(c)))],
        )
        assert brute_force_log_partition(g2) - base == pytest.approx(math.log(c), rel=1e-12)

    def test_cap(self):
        g = FactorGraph([Discrete(2)] * 5, [])
        with pytest.raises(DomainTooLargeError):
            brute_force_log_partition(g, cap=2**4)

    def test_continuous_rejected(self):
        g = FactorGraph([Angle()], [])
        with pytest.raises(UnsupportedDomainError):
            brute_force_log_partition(g)

    def test_chunked_streaming_matches_single_block(self):
        g = ising_graph(2, 3, 0.3)
        assert brute_force_log_partition(g, chunk=5) == pytest.approx(
            brute_force_log_partition(g, chunk=2**20), rel=1e-14
        )

    def test_zero_potential_states(self):
        table = np.array([-np.inf, 0.0])
        g = FactorGraph([Discrete(2)], [TableFactor((0,), table)])
        assert brute_force_log_partition(g) == pytest.approx(0.0)


class TestDomains:
    def test_discrete_contains(self):
        d = Discrete(3)
        assert d.contains(2) and not d.contains(3) and not d.contains(0.5)

    def test_cardinality_positive(self):
        with pytest.raises(ValueError):
            Discrete(0)

    def test_angle_half_open(self):
        a = Angle()
        assert a.contains(math.pi) and not a.contains(-math.pi)

    def test_wrap_angle(self):
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
        x = np.array([0.1, 2 * math.pi + 0.1])
        np.testing.assert_allclose(wrap_angle(x), [0.1, 0.1], atol=1e-12)

    def test_real(self):
        assert RealLine().contains(-1e30) and not RealLine().contains(float("inf"))

    def test_ids_contiguous(self):
        from graphsmc.graph import VariableSpec

        with pytest.raises(ValueError):
            FactorGraph([VariableSpec(1, Discrete(2))], [])

    def test_unknown_factor_variable(self):
        with pytest.raises(ValueError):
            FactorGraph([Discrete(2)], [TableFactor((0, 1), np.zeros((2, 2)))])


class TestSerialization:
    def roundtrip(self, g, tmp_path):
        path = tmp_path / "graph.json"
        save_graph(g, path)
        return load_graph(path)

    def test_roundtrip_discrete(self, tmp_path):
        rng = np.random.default_rng(9)
        g = random_binary_mrf(3, 2, rng)
        g2 = self.roundtrip(g, tmp_path)
        assert g2.n_vars == g.n_vars
        assert g2.lattice == g.lattice
        for f, f2 in zip(g.factors, g2.factors):
            assert f.clique == f2.clique
            np.testing.assert_array_equal(f.log_table, f2.log_table)

    def test_roundtrip_parametric(self, tmp_path):
        g = FactorGraph(
            [Angle(), Angle(), RealLine()],
            [XYPairFactor(0, 1, 1.1), GaussianObsFactor(2, 0.25, 1.0), GaussianPairFactor(1, 2, 0.1)],
        )
        g2 = self.roundtrip(g, tmp_path)
        assert graph_to_dict(g2) == graph_to_dict(g)

    def test_roundtrip_preserves_floats_exactly(self, tmp_path):
        val = 0.1 + 0.2  # not representable in short decimal
        g = FactorGraph([Discrete(2)], [TableFactor((0,), np.array([val, -val]))])
        g2 = self.roundtrip(g, tmp_path)
        assert g2.factors[0].log_table[0] == val

    def test_function_factor_not_serializable(self):
        g = FactorGraph([RealLine()], [FunctionFactor((0,), lambda x: -x * x)])
        with pytest.raises(GraphFormatError):
            graph_to_dict(g)

    def test_bad_format(self):
        with pytest.raises(GraphFormatError):
            graph_from_dict({"format": "something-else"})

    def test_bad_table_size(self):
        data = {
            "format": "graphsmc-graph",
            "version": 1,
            "variables": [{"id": 0, "domain": {"type": "discrete", "cardinality": 2}}],
            "factors": [{"type": "table", "clique": [0], "log_values": [0.0, 0.0, 0.0]}],
        }
        with pytest.raises(GraphFormatError):
            graph_from_dict(data)
