from fractions import Fraction

import numpy as np
import pytest

from streamfit import fixedpoint as fp
from streamfit.agreement import (
    AgreementParams,
    ClusterInvariantError,
    Clustering,
    ExactView,
    SketchView,
    agreement_query,
    heaviness_query,
    s_structural_clustering,
)
from streamfit.sketches import ContractViolation, SketchConfig, SketchPools
from streamfit.streams import GeneratorSpec, StreamSource, generate

U = fp.SCALE


def two_clique_matrix(n1, n2, flip=()):
    n = n1 + n2
    D = np.full((n, n), 3 * U, dtype=np.int64)
    D[:n1, :n1] = 1 * U
    D[n1:, n1:] = 1 * U
    np.fill_diagonal(D, 0)
    for u, v in flip:
        D[u, v] = D[v, u] = (1 if D[u, v] == 3 * U else 3) * U
    return D


def hub_matrix(k):
    """A hub adjacent to two k-cliques that are far from each other."""
    n = 2 * k + 1
    D = np.full((n, n), 5 * U, dtype=np.int64)
    D[:k, :k] = 1 * U
    D[k : 2 * k, k : 2 * k] = 1 * U
    D[2 * k, :] = 1 * U
    D[:, 2 * k] = 1 * U
    np.fill_diagonal(D, 0)
    return D


class TestParams:
    def test_beta_formula(self):
        p = AgreementParams(epsilon=Fraction(1, 100))
        assert p.beta == Fraction(5, 100) * Fraction(101, 100)
        assert p.gamma("3beta") == 3 * p.beta

    def test_epsilon_range_enforced(self):
        with pytest.raises(ValueError):
            AgreementParams(epsilon=Fraction(1, 90))
        with pytest.raises(ValueError):
            AgreementParams(epsilon=0)
        AgreementParams(epsilon=Fraction(1, 95))

    def test_mode_validated(self):
        with pytest.raises(ValueError):
            AgreementParams(mode="fuzzy")


class TestExactQueries:
    def setup_method(self):
        self.D = two_clique_matrix(8, 8)
        self.view = ExactView(self.D)
        self.params = AgreementParams()
        self.S = list(range(16))

    def test_same_clique_agrees(self):
        assert agreement_query(
            self.view, 0, 1, self.S, "beta", 1 * U, self.params
        )

    def test_cross_clique_disagrees(self):
        assert not agreement_query(
            self.view, 0, 8, self.S, "beta", 1 * U, self.params
        )
        assert not agreement_query(
            self.view, 0, 8, self.S, "3beta", 1 * U, self.params
        )

    def test_clique_members_are_heavy(self):
        for v in (0, 5, 8):
            assert heaviness_query(self.view, v, self.S, 1 * U, self.params)

    def test_hub_is_not_heavy(self):
        D = hub_matrix(8)
        view = ExactView(D)
        S = list(range(D.shape[0]))
        assert not heaviness_query(view, 16, S, 1 * U, self.params)
        # clique members fail too: one disagreeing neighbor out of nine
        # already exceeds the epsilon fraction at this degree
        assert not heaviness_query(view, 0, S, 1 * U, self.params)

    def test_subset_discounts_outside_common_neighbors(self):
        # restricting S to one clique: vertices of the other clique share
        # all their neighbors, but those fall outside S and count double
        S = list(range(8))
        stat_full, du, dv = self.view.subset_statistic(
            8, 9, np.ones(16, dtype=bool), 1 * U
        )
        mask = np.zeros(16, dtype=bool)
        mask[S] = True
        stat_sub, _, _ = self.view.subset_statistic(8, 9, mask, 1 * U)
        assert stat_full == 0
        assert stat_sub == 2 * du


class TestExactClustering:
    def test_two_cliques_recovered(self):
        D = two_clique_matrix(8, 8)
        result = s_structural_clustering(
            range(16), 1 * U, AgreementParams(), ExactView(D)
        )
        got = sorted(tuple(sorted(c)) for c in result.to_lists())
        assert got == [tuple(range(8)), tuple(range(8, 16))]

    def test_subset_yields_single_cluster(self):
        D = two_clique_matrix(8, 8)
        result = s_structural_clustering(
            range(8), 1 * U, AgreementParams(), ExactView(D)
        )
        assert result.to_lists() == [list(range(8))]

    def test_large_threshold_merges_everything(self):
        D = two_clique_matrix(6, 6)
        result = s_structural_clustering(
            range(12), 3 * U, AgreementParams(), ExactView(D)
        )
        assert result.to_lists() == [list(range(12))]

    def test_clusters_partition_ground_set(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            n = int(rng.integers(6, 20))
            src, _ = generate(
                GeneratorSpec(kind="uniform_random", n=n, seed=trial)
            )
            D = src.dense()
            w = int(np.median(D[D > 0]))
            result = s_structural_clustering(
                range(n), w, AgreementParams(), ExactView(D)
            )
            merged = sorted(x for c in result.to_lists() for x in c)
            assert merged == list(range(n))

    def test_empty_s_rejected(self):
        with pytest.raises(ValueError):
            s_structural_clustering(
                [], 1 * U, AgreementParams(), ExactView(two_clique_matrix(3, 3))
            )

    def test_partition_invariant_raised_on_bad_clustering(self):
        bad = Clustering(
            ground_set=np.arange(4), clusters=[np.array([0, 1]), np.array([1, 2, 3])]
        )
        with pytest.raises(ClusterInvariantError):
            bad.assert_partition()


def make_sketch_view(D, seed=0, instance=0, **overrides):
    n = D.shape[0]
    cfg = SketchConfig.scaled(n, seed=seed, **overrides)
    pools = SketchPools(cfg, n)
    u, v, d = StreamSource.from_square(D, order_seed=seed).arrays(0)
    pools.bulk_ingest(u, v, d)
    pools.finalize()
    return SketchView(pools, instance)


class TestSketchQueries:
    def test_matches_exact_on_two_cliques(self):
        D = two_clique_matrix(10, 10)
        view = make_sketch_view(D, seed=1)
        params = AgreementParams(mode="sketch")
        S = list(range(20))
        assert agreement_query(view, 0, 1, S, "beta", 1 * U, params)
        assert not agreement_query(view, 0, 10, S, "beta", 1 * U, params)
        assert heaviness_query(view, 0, S, 1 * U, params)

    def test_clustering_recovers_cliques(self):
        D = two_clique_matrix(12, 12)
        view = make_sketch_view(D, seed=2)
        result = s_structural_clustering(
            range(24), 1 * U, AgreementParams(mode="sketch"), view
        )
        got = sorted(tuple(sorted(c)) for c in result.to_lists())
        assert got == [tuple(range(12)), tuple(range(12, 24))]

    def test_decisions_match_exact_mode(self):
        rng = np.random.default_rng(5)
        agree_total = agree_match = 0
        for trial in range(6):
            n = 24
            src, _ = generate(
                GeneratorSpec(kind="uniform_random", n=n, seed=100 + trial)
            )
            D = src.dense()
            w = int(np.median(D[D > 0]))
            exact = ExactView(D)
            sketch = make_sketch_view(D, seed=trial)
            params = AgreementParams()
            S = list(range(n))
            for _ in range(40):
                u, v = rng.integers(0, n, size=2)
                if u == v:
                    continue
                a = agreement_query(exact, int(u), int(v), S, "beta", w, params)
                b = agreement_query(sketch, int(u), int(v), S, "beta", w, params)
                agree_total += 1
                agree_match += a == b
        assert agree_match / agree_total >= 0.9

    def test_instance_consumed_once(self):
        D = two_clique_matrix(6, 6)
        view = make_sketch_view(D, seed=3)
        s_structural_clustering(
            range(12), 1 * U, AgreementParams(mode="sketch"), view
        )
        with pytest.raises(ContractViolation):
            s_structural_clustering(
                range(12), 1 * U, AgreementParams(mode="sketch"), view
            )
