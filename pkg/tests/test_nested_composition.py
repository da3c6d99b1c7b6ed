from fractions import Fraction

import numpy as np
import pytest

from metric_outliers import (
    BoundQuery,
    BourgainParams,
    CompositionInputs,
    PointSet,
    bourgain_embed,
    compose_deterministic,
    compose_once,
    compose_strong,
    estimate_expected_expansion,
    expansion_bound,
    expansion_coefficients,
    from_matrix,
    harmonic_number,
    nearest_anchors,
    restrict,
    sample_transcript,
)
from metric_outliers.errors import (
    CallbackNotExpanding,
    EmptyS,
    InconsistentTranscript,
    InvalidCase,
    KappaOutOfRange,
    NotExpanding,
)
from metric_outliers.lp_geometry import pairwise_distances
from metric_outliers.nested_composition import (
    CompositionTranscript,
    _greedy_clusters,
    close_pair_split_bound,
    pair_distance,
    table_case,
)

from conftest import (
    close_pair_instance,
    composition_instance,
    composition_instance_with_s,
    integer_metric,
)


def tiny_inputs(d_su=1.0, d_sv=1.0, d_uv=0.5, p=2.0, seed=3):
    m = from_matrix([[0, d_su, d_sv], [d_su, 0, d_uv], [d_sv, d_uv, 0]])
    alpha_s = PointSet(points=np.zeros((1, 1)), p=p)
    alpha_x, _ = bourgain_embed(m, BourgainParams(seed=seed, p=p))
    return CompositionInputs(m=m, s=(0,), p=p, alpha_s=alpha_s, alpha_x=alpha_x)


class TestAnchors:
    def test_unique_nearest(self):
        m = from_matrix([[0, 1, 5], [1, 0, 4], [5, 4, 0]])
        assert nearest_anchors(m, (0, 1)) == {2: 1}

    def test_tie_breaks_to_lowest_index(self):
        m = from_matrix([[0, 2, 1], [2, 0, 1], [1, 1, 0]])
        assert nearest_anchors(m, (0, 1))[2] == 0

    def test_claw_single_candidate(self, claw_metric):
        gamma = nearest_anchors(claw_metric, (0,))
        assert gamma == {1: 0, 2: 0, 3: 0}

    def test_empty_s_rejected(self, claw_metric):
        with pytest.raises(EmptyS):
            nearest_anchors(claw_metric, ())


class TestTranscripts:
    def test_no_outliers_means_no_clusters(self, line_metric):
        alpha, _ = bourgain_embed(line_metric, BourgainParams(seed=0))
        inputs = CompositionInputs(m=line_metric, s=(0, 1, 2), p=2.0,
                                   alpha_s=alpha, alpha_x=alpha)
        tr = sample_transcript(inputs, np.random.default_rng(0))
        assert tr.clusters == () and tr.pi == ()

    def test_forced_single_cluster(self):
        # b = 2.5 grabs both outliers into the first center's cluster
        inputs = tiny_inputs(d_uv=0.5)
        tr = _greedy_clusters(inputs.m, inputs.gamma, b=2.5, pi=(1, 2))
        assert tr.clusters == ((1, (1, 2)),)

    def test_forced_two_clusters(self):
        # d(s,u)=3, d(s,v)=2, d(u,v)=5: at b=2 the pair 5 > 2*2 splits
        inputs = tiny_inputs(d_su=3.0, d_sv=2.0, d_uv=5.0)
        tr = _greedy_clusters(inputs.m, inputs.gamma, b=2.0, pi=(1, 2))
        assert tr.clusters == ((1, (1,)), (2, (2,)))

    def test_b_range_and_partition(self):
        rng = np.random.default_rng(7)
        m = integer_metric(rng, 10)
        inputs = composition_instance(rng, m, k=4, p=2.0, seed=1)
        for _ in range(50):
            tr = sample_transcript(inputs, rng)
            assert 2.0 <= tr.b <= 2.0 + inputs.tau
            members = [v for _, ms in tr.clusters for v in ms]
            assert sorted(members) == sorted(inputs.outliers)
            assert len(set(members)) == len(members)
            centers = tuple(c for c, _ in tr.clusters)
            assert centers == tr.pi[:len(centers)]

    def test_roundtrip_dict(self):
        inputs = tiny_inputs()
        tr = sample_transcript(inputs, np.random.default_rng(5))
        assert CompositionTranscript.from_dict(tr.to_dict()) == tr

    def test_inconsistent_transcript_rejected(self):
        inputs = tiny_inputs(d_su=3.0, d_sv=2.0, d_uv=5.0)
        bad = CompositionTranscript(b=2.0, pi=(1, 2), clusters=((1, (1, 2)),),
                                    gamma=inputs.gamma)
        with pytest.raises(InconsistentTranscript):
            compose_once(inputs, bad)

    def test_non_expanding_alpha_rejected(self, line_metric):
        shrunk = PointSet(points=0.5 * np.array([[0.0], [1.0], [2.0]]), p=2.0)
        with pytest.raises(NotExpanding):
            CompositionInputs(m=line_metric, s=(0, 1, 2), p=2.0,
                              alpha_s=shrunk, alpha_x=shrunk)


class TestComposeOnce:
    def test_s_pairs_keep_alpha_s_distance(self):
        rng = np.random.default_rng(13)
        m = integer_metric(rng, 9)
        inputs = composition_instance(rng, m, k=3, p=2.0, seed=5)
        tr = sample_transcript(inputs, rng)
        composed = compose_once(inputs, tr)
        full = pairwise_distances(composed.embedding)
        alpha_s_d = pairwise_distances(inputs.alpha_s)
        s = inputs.s
        for i, x in enumerate(s):
            for j in range(i + 1, len(s)):
                assert full[x, s[j]] == pytest.approx(alpha_s_d[i, j], rel=1e-12)

    def test_same_cluster_pairs_get_alpha_x_distance(self):
        inputs = tiny_inputs(d_uv=0.5)
        tr = _greedy_clusters(inputs.m, inputs.gamma, b=2.5, pi=(1, 2))
        composed = compose_once(inputs, tr)
        full = pairwise_distances(composed.embedding)
        ax = pairwise_distances(inputs.alpha_x)
        assert full[1, 2] == pytest.approx(ax[1, 2], rel=1e-12)

    def test_dims_formula(self):
        rng = np.random.default_rng(17)
        m = integer_metric(rng, 8)
        inputs = composition_instance(rng, m, k=4, p=1.5, seed=2)
        tr = sample_transcript(inputs, rng)
        composed = compose_once(inputs, tr)
        assert composed.embedding.dims == inputs.alpha_s.dims + tr.t * inputs.alpha_x.dims

    def test_pair_distance_matches_full_materialization(self):
        rng = np.random.default_rng(19)
        m = integer_metric(rng, 8)
        for p in (1.0, 1.5, 2.0):
            inputs = composition_instance(rng, m, k=3, p=p, seed=4)
            tr = sample_transcript(inputs, rng)
            full = pairwise_distances(compose_once(inputs, tr).embedding)
            for x in range(8):
                for y in range(x + 1, 8):
                    assert pair_distance(inputs, tr, x, y) == pytest.approx(full[x, y], rel=1e-10)


class TestContraction:
    def test_lower_bounds_hold_per_sample(self):
        rng = np.random.default_rng(23)
        for trial in range(12):
            n = int(rng.integers(6, 14))
            k = int(rng.integers(1, min(5, n - 1)))
            p = (1.0, 1.5, 2.0)[trial % 3]
            inputs = composition_instance(rng, integer_metric(rng, n), k, p, seed=trial)
            floor = 3.0 ** (-1.0 + 1.0 / p)
            for _ in range(8):
                tr = sample_transcript(inputs, rng)
                full = pairwise_distances(compose_once(inputs, tr).embedding)
                for x in range(n):
                    for y in range(x + 1, n):
                        d = inputs.m.dist[x, y]
                        assert full[x, y] >= floor * d - 1e-9
                        if x in inputs.s_row and y in inputs.s_row:
                            assert full[x, y] >= d - 1e-9


class TestCaseBounds:
    def test_cases_a_to_d_hold_per_sample(self):
        rng = np.random.default_rng(29)
        seen = set()
        for trial in range(12):
            n = int(rng.integers(6, 14))
            k = int(rng.integers(1, min(6, n - 1)))
            p = (1.0, 1.5, 2.0)[trial % 3]
            inputs = composition_instance(rng, integer_metric(rng, n), k, p, seed=100 + trial)
            for _ in range(8):
                tr = sample_transcript(inputs, rng)
                full = pairwise_distances(compose_once(inputs, tr).embedding)
                for x in range(n):
                    for y in range(x + 1, n):
                        case = table_case(inputs, tr, x, y)
                        seen.add(case)
                        if case == "e":
                            continue
                        bound = expansion_bound(BoundQuery(
                            case=case, c_s=inputs.c_s, c_x=inputs.c_x, k=inputs.k))
                        d = inputs.m.dist[x, y]
                        assert full[x, y] <= bound * d * (1.0 + 1e-9) + 1e-12
        assert {"a", "b", "c"} <= seen

    def test_close_pair_expectation(self):
        rng = np.random.default_rng(31)
        m, s, pair = close_pair_instance(123)
        inputs = composition_instance_with_s(rng, m, s, 2.0, seed=9)
        x, y = pair
        d = m.dist[x, y]
        assert inputs.m.dist[x, inputs.gamma[x]] > 2 * d
        assert inputs.m.dist[y, inputs.gamma[y]] > 2 * d
        mean, stderr = estimate_expected_expansion(inputs, pair, trials=500, rng=rng)
        bound = expansion_bound(BoundQuery(case="e", c_s=inputs.c_s, c_x=inputs.c_x, k=inputs.k))
        assert mean <= bound * d + 3 * stderr

    def test_split_probability_bound(self):
        rng = np.random.default_rng(37)
        m, s, (x, y) = close_pair_instance(321)
        inputs = composition_instance_with_s(rng, m, s, 2.0, seed=11)
        bound = close_pair_split_bound(inputs, x, y)
        trials = 3000
        splits = 0
        for _ in range(trials):
            tr = sample_transcript(inputs, rng)
            owner = tr.cluster_of()
            splits += owner[x] != owner[y]
        freq = splits / trials
        sigma = np.sqrt(max(freq * (1 - freq), 1.0 / trials) / trials)
        assert freq <= bound + 3 * sigma


class TestEstimate:
    def test_pair_in_s_is_deterministic(self):
        rng = np.random.default_rng(41)
        m = integer_metric(rng, 7)
        inputs = composition_instance(rng, m, k=2, p=2.0, seed=8)
        s = inputs.s
        mean, stderr = estimate_expected_expansion(inputs, (s[0], s[1]), trials=50, rng=rng)
        expected = pairwise_distances(inputs.alpha_s)[0, 1]
        assert stderr == pytest.approx(0.0, abs=1e-12)
        assert mean == pytest.approx(expected, rel=1e-12)

    def test_single_outlier_transcript_is_forced(self):
        # k=1: u always centers its own cluster; distance to its anchor is fixed
        rng = np.random.default_rng(43)
        m = integer_metric(rng, 6)
        inputs = composition_instance(rng, m, k=1, p=2.0, seed=3)
        u = inputs.outliers[0]
        anchor = inputs.gamma[u]
        mean, stderr = estimate_expected_expansion(inputs, (u, anchor), trials=40, rng=rng)
        expected = pairwise_distances(inputs.alpha_x)[u, anchor]
        assert stderr == pytest.approx(0.0, abs=1e-12)
        assert mean == pytest.approx(expected, rel=1e-12)


class TestDeterministicComposition:
    def test_single_sample_is_one_draw(self):
        inputs = tiny_inputs()
        rng = np.random.default_rng(47)
        det = compose_deterministic(inputs, 1, rng)
        assert len(det.transcripts) == 1
        full = pairwise_distances(det.embedding)
        re_once = compose_once(inputs, det.transcripts[0])
        np.testing.assert_allclose(full, pairwise_distances(re_once.embedding), rtol=1e-12)

    def test_s_pairs_exact_for_every_p(self):
        rng = np.random.default_rng(53)
        m = integer_metric(rng, 9)
        for p in (1.0, 1.5, 2.0):
            inputs = composition_instance(rng, m, k=3, p=p, seed=6)
            det = compose_deterministic(inputs, 16, rng)
            full = pairwise_distances(det.embedding)
            alpha_s_d = pairwise_distances(inputs.alpha_s)
            s = inputs.s
            for i, x in enumerate(s):
                for j in range(i + 1, len(s)):
                    assert full[x, s[j]] == pytest.approx(alpha_s_d[i, j], rel=1e-9)

    def test_l1_distance_equals_sample_mean(self):
        rng = np.random.default_rng(59)
        m = integer_metric(rng, 8)
        inputs = composition_instance(rng, m, k=3, p=1.0, seed=7)
        det = compose_deterministic(inputs, 32, rng)
        full = pairwise_distances(det.embedding)
        for x in range(8):
            for y in range(x + 1, 8):
                mean = np.mean([pair_distance(inputs, tr, x, y) for tr in det.transcripts])
                assert full[x, y] == pytest.approx(mean, abs=1e-9)
                assert full[x, y] >= inputs.m.dist[x, y] - 1e-9

    def test_p_above_one_within_twice_the_mean(self):
        rng = np.random.default_rng(61)
        m = integer_metric(rng, 8)
        for p in (1.5, 2.0):
            inputs = composition_instance(rng, m, k=3, p=p, seed=12)
            det = compose_deterministic(inputs, 32, rng)
            full = pairwise_distances(det.embedding)
            for x in range(8):
                for y in range(x + 1, 8):
                    mean = np.mean([pair_distance(inputs, tr, x, y) for tr in det.transcripts])
                    assert full[x, y] <= 2.0 * mean + 1e-9


class TestBoundCalculator:
    def test_case_c_example(self):
        assert expansion_bound(BoundQuery(case="c", c_s=1.0, c_x=2.0)) == pytest.approx(25.0)

    def test_case_e_k1_unit_distortions(self):
        value = expansion_bound(BoundQuery(case="e", c_s=1.0, c_x=1.0, k=1))
        assert value == pytest.approx(155.0 / 2.0 + 225.0 / 2.0 + 1.0)

    def test_general_constants_reduce_to_fixed_tau(self):
        assert expansion_coefficients("c", tau=2) == (Fraction(7), Fraction(9))
        assert expansion_coefficients("d", tau=2, kappa=2) == (Fraction(31), Fraction(45))
        coef_s, coef_x = expansion_coefficients("e", k=3, tau=2, kappa=2)
        h3 = harmonic_number(3)
        assert coef_s == Fraction(155, 2) * h3
        assert coef_x == Fraction(225, 2) * h3 + 1

    def test_invalid_case(self):
        with pytest.raises(InvalidCase):
            expansion_bound(BoundQuery(case="z", c_s=1.0, c_x=1.0))

    def test_kappa_out_of_range(self):
        with pytest.raises(KappaOutOfRange):
            expansion_coefficients("e", k=1, kappa=1)

    def test_harmonic(self):
        assert harmonic_number(0) == 0
        assert harmonic_number(3) == Fraction(11, 6)


class TestComposeStrong:
    def test_no_outliers_reduces_to_alpha_s(self, line_metric):
        alpha, _ = bourgain_embed(line_metric, BourgainParams(seed=1))
        rng = np.random.default_rng(2)
        composed = compose_strong(line_metric, (0, 1, 2), 2.0, alpha, rng)
        np.testing.assert_allclose(pairwise_distances(composed.embedding),
                                   pairwise_distances(alpha), rtol=1e-12)

    def test_restriction_callback_matches_compose_once(self):
        rng = np.random.default_rng(67)
        m = integer_metric(rng, 9)
        inputs = composition_instance(rng, m, k=3, p=2.0, seed=14)
        tr = sample_transcript(inputs, rng)

        def restriction(sub, indices, i):
            return PointSet(points=inputs.alpha_x.points[list(indices)], p=2.0)

        strong = compose_strong(m, inputs.s, 2.0, inputs.alpha_s, rng,
                                cluster_embedder=restriction, transcript=tr)
        once = compose_once(inputs, tr)
        np.testing.assert_allclose(pairwise_distances(strong.embedding),
                                   pairwise_distances(once.embedding), rtol=1e-10)

    def test_default_bourgain_callback_obeys_subset_bound(self):
        # expansion over all pairs stays under 382 * H_{k+1} * (max cluster
        # distortion) with Monte Carlo headroom
        rng = np.random.default_rng(71)
        m = integer_metric(rng, 12)
        inputs = composition_instance(rng, m, k=4, p=2.0, seed=15)
        h = float(harmonic_number(5))
        worst_seen = {}
        zeta_max = 1.0
        for _ in range(20):
            from metric_outliers import distortion_stats as dstats

            def measuring(sub, indices, i, _z=[zeta_max]):
                seed = int(rng.integers(0, 2 ** 31))
                emb, stats = bourgain_embed(sub, BourgainParams(seed=seed, p=2.0))
                _z[0] = max(_z[0], stats.distortion)
                measuring.zeta = _z[0]
                return emb

            composed = compose_strong(m, inputs.s, 2.0, inputs.alpha_s, rng,
                                      cluster_embedder=measuring)
            zeta_max = max(zeta_max, getattr(measuring, "zeta", 1.0))
            full = pairwise_distances(composed.embedding)
            for x in range(m.n):
                for y in range(x + 1, m.n):
                    r = full[x, y] / m.dist[x, y]
                    worst_seen[(x, y)] = max(worst_seen.get((x, y), 0.0), r)
        assert max(worst_seen.values()) <= 382.0 * h * zeta_max

    def test_non_expanding_callback_rejected(self):
        rng = np.random.default_rng(73)
        m = integer_metric(rng, 8)
        inputs = composition_instance(rng, m, k=3, p=2.0, seed=16)

        def collapsing(sub, indices, i):
            return PointSet(points=np.zeros((sub.n, 1)), p=2.0)

        with pytest.raises(CallbackNotExpanding):
            compose_strong(m, inputs.s, 2.0, inputs.alpha_s, rng,
                           cluster_embedder=collapsing)


class TestDegenerateSubset:
    def test_s_equals_x_deterministic(self, line_metric):
        alpha, _ = bourgain_embed(line_metric, BourgainParams(seed=0))
        inputs = CompositionInputs(m=line_metric, s=(0, 1, 2), p=2.0,
                                   alpha_s=alpha, alpha_x=alpha)
        det = compose_deterministic(inputs, 4, np.random.default_rng(0))
        assert det.transcripts[0].clusters == ()
        np.testing.assert_allclose(pairwise_distances(det.embedding),
                                   pairwise_distances(alpha), rtol=1e-12)

    def test_mismatched_p_rejected(self, line_metric):
        a2, _ = bourgain_embed(line_metric, BourgainParams(seed=0, p=2.0))
        a1, _ = bourgain_embed(line_metric, BourgainParams(seed=0, p=1.0))
        from metric_outliers.errors import SizeMismatch
        with pytest.raises(SizeMismatch):
            CompositionInputs(m=line_metric, s=(0, 1, 2), p=2.0, alpha_s=a1, alpha_x=a2)
