import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardlabel.boundary import SearchConfig
from hardlabel.extraction import (AttackConfig, ExtractionCandidate, ExtractionState, FilterConfig,
                                  InsufficientDataError, count_max_patterns, count_reachable_patterns,
                                  enumerate_patterns, plan_for, plan_sets, pmr, recover_biases,
                                  recover_layer1, recover_layer_weights, run_attack, sign_filter,
                                  signature_filter, signs_consistent)
from hardlabel.linalg import CompareConfig, DegenerateSystemError
from hardlabel.model import (Architecture, HardLabelOracle, ModelParameters, affine_for_pattern, forward_batch,
                             normalize_tuple)
from hardlabel.recovery import RecoveredTuple
from hardlabel.verification import align, permute_hidden

from oracles import closed_form_parameters, pattern_bound_bruteforce


def exact_tuple(params, pattern, count=1):
    """Noise-free tuple for ``pattern`` with a point on its zero set."""
    gamma, beta = affine_for_pattern(params, pattern)
    g, b = normalize_tuple(gamma, beta)
    point = -b * g / float(g @ g)
    return RecoveredTuple(gamma=g, beta=b, anchor_index=int(np.flatnonzero(np.abs(g) > 1e-10)[0]),
                          occurrence_count=count, point=point)


def true_sign(params, plan, anchor=0):
    """Sign of the plan's gradient factor from the un-normalized tuple and the victim's row product."""
    gamma, _ = affine_for_pattern(params, plan.pattern)
    c = params.weights[0]
    for w in params.weights[1:plan.layer]:
        c = w @ c
    return int(np.sign(gamma[anchor] / c[plan.neuron, anchor]))


def extract_with_plans(params, anchor=0):
    """Run weight and bias recovery on exact tuples, using the correct plan and signs.

    Signs are supplied per neuron so victims whose neurons disagree in sign
    still exercise the linear algebra.
    """
    arch = params.arch
    plans = plan_sets(arch)[0]
    tuples = [exact_tuple(params, p.pattern) for p in plans]
    state = ExtractionState.initial(arch.input_dim)
    pos = 0
    for layer in range(1, arch.depth + 2):
        width = arch.dims[layer]
        ts = tuples[pos:pos + width]
        rows = []
        for j, t in enumerate(ts):
            sign = true_sign(params, plans[pos + j]) if layer <= arch.depth else 1
            if layer == 1:
                rows.append(recover_layer1([t], sign, anchor)[0])
            else:
                rows.append(recover_layer_weights([t], state, sign, anchor)[0])
        w = np.array(rows)
        state = state.push(w)
        pos += width
    biases = recover_biases([t.point for t in tuples], [p.pattern for p in plans], state.weights)
    return ModelParameters(state.weights, biases), tuples, plans


class TestPatternCounts:
    @pytest.mark.parametrize("hidden,expected", [((2,), 3), ((2, 2), 12), ((2, 2, 2), 39)])
    def test_formula(self, hidden, expected):
        assert count_max_patterns(hidden) == expected
        assert count_max_patterns(Architecture((4,) + hidden + (1,))) == expected

    @pytest.mark.parametrize("hidden", [(1,), (3,), (2, 3), (3, 1, 2), (1, 1, 1, 1)])
    def test_matches_bruteforce(self, hidden):
        assert count_max_patterns(hidden) == pattern_bound_bruteforce(hidden)

    def test_big_integers(self):
        assert count_max_patterns((100,)) == 2**100 - 1

    def test_reachable_adds_first_layer_off(self):
        assert count_reachable_patterns((2,)) == 4
        assert count_reachable_patterns((2, 2)) == 13
        assert count_reachable_patterns(()) == 1

    def test_enumeration_size_and_budget(self):
        arch = Architecture.parse("3-2-2-1")
        pats = enumerate_patterns(arch)
        assert len(pats) == 12
        assert len({tuple(tuple(p) for p in pat) for pat in pats}) == 12
        assert enumerate_patterns(arch, budget=11) is None

    def test_observed_within_reachable(self, rng):
        p = ModelParameters.random("3-3-2-1", rng)
        xs = rng.uniform(-1, 1, (20000, 3))
        _, pats = forward_batch(p, xs, return_pattern=True)
        seen = set()
        for row in zip(*[np.packbits(q, axis=1, bitorder="little")[:, 0] for q in pats]):
            first_off = next((i for i, c in enumerate(row) if c == 0), None)
            seen.add(row if first_off is None else row[:first_off + 1])
        assert len(seen) <= count_reachable_patterns(p.arch)


class TestPlans:
    def test_layer_one_plan(self):
        arch = Architecture.parse("4-3-2-1")
        assert plan_for(arch, 1, 2).codes() == (0b100, 0b11)
        assert plan_for(arch, 2, 0).codes() == (0b111, 0b01)
        assert plan_for(arch, 3, 0).codes() == (0b111, 0b11)

    def test_relaxed_downstream(self):
        arch = Architecture.parse("4-2-2-1")
        assert plan_for(arch, 1, 0, downstream=(0b10,)).codes() == (0b01, 0b10)
        assert len(plan_sets(arch)) == 1
        assert len(plan_sets(arch, relaxed=True)) == 3
        assert plan_sets(arch, relaxed=True)[0][0].codes() == (0b01, 0b11)


class TestWeights:
    def test_layer_one_examples(self):
        t = RecoveredTuple(gamma=np.array([1.0, -2.0]), beta=0.0, anchor_index=0)
        np.testing.assert_array_equal(recover_layer1([t], 1), [[1.0, -2.0]])
        np.testing.assert_array_equal(recover_layer1([t], -1), [[-1.0, 2.0]])

    def test_layer_one_from_victim(self):
        victim = ModelParameters([np.array([[3.0, -6.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        t = exact_tuple(victim, plan_for(victim.arch, 1, 0).pattern)
        np.testing.assert_allclose(recover_layer1([t], 1), [[1.0, -2.0]])

    def test_two_two_one_rows(self, golden_victim):
        plans = plan_sets(golden_victim.arch)[0]
        ts = [exact_tuple(golden_victim, p.pattern) for p in plans]
        w1 = recover_layer1(ts[:2], 1)
        np.testing.assert_allclose(w1, [[1.0, 2.0], [1.0, -1.0 / 3.0]], atol=1e-15)
        w2 = recover_layer_weights(ts[2:], ExtractionState.initial(2).push(w1), 1)
        np.testing.assert_allclose(w2, [[0.4, 0.6]], atol=1e-15)

    def test_identity_chain(self):
        ws = [np.eye(3) + 0.5, 2 * np.eye(3), np.ones((1, 3))]
        victim = ModelParameters(ws, [np.full(3, -0.1), np.full(3, -0.1), np.full(1, -0.2)])
        got, _, _ = extract_with_plans(victim)
        expected, _ = closed_form_parameters(ws, victim.biases)
        for a, b in zip(got.weights, expected):
            np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(got.weights[1], np.eye(3), atol=1e-12)

    def test_anchor_zero_rejected(self):
        t = RecoveredTuple(gamma=np.array([0.0, 1.0]), beta=0.0, anchor_index=1)
        with pytest.raises(DegenerateSystemError):
            recover_layer1([t], 1, anchor=0)

    def test_rank_deficient_layer(self):
        state = ExtractionState.initial(2).push(np.array([[1.0, 1.0], [1.0, 1.0]]))
        t = RecoveredTuple(gamma=np.array([1.0, 1.0]), beta=0.0, anchor_index=0)
        with pytest.raises(DegenerateSystemError):
            recover_layer_weights([t], state, 1)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), arch=st.sampled_from(["4-2-1", "5-3-1", "4-2-2-1", "6-3-2-1",
                                                                  "6-2-2-2-1"]))
    def test_closed_form(self, seed, arch):
        victim = ModelParameters.random(arch, seed)
        got, _, _ = extract_with_plans(victim)
        ew, eb = closed_form_parameters(victim.weights, victim.biases)
        cond = max(np.max(np.abs(w)) for w in ew)
        for a, b in zip(got.weights, ew):
            assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, cond)
        for a, b in zip(got.biases, eb):
            assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, cond)


class TestBiases:
    def test_zero_deep(self):
        w = np.array([[1.0, -2.0]])
        (b,) = recover_biases([np.array([3.0, 0.0])], [()], [w])
        assert b[0] == pytest.approx(-3.0)

    def test_two_two_one(self, golden_victim):
        got, _, _ = extract_with_plans(golden_victim)
        np.testing.assert_allclose(got.biases[0], [0.25, -0.5 / 3.0], atol=1e-14)
        np.testing.assert_allclose(got.biases[1], [-1.0 / 5.0], atol=1e-14)

    def test_zero_biases(self, rng):
        victim = ModelParameters.random("5-3-1", rng)
        victim = ModelParameters(victim.weights, [np.zeros(3), np.zeros(1)])
        got, _, _ = extract_with_plans(victim)
        assert all(np.max(np.abs(b)) <= 1e-11 for b in got.biases)

    def test_singular(self):
        w = [np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 1.0]])]
        pats = [(np.array([True, True]),)] * 3
        with pytest.raises(DegenerateSystemError):
            recover_biases([np.zeros(2)] * 3, pats, w)


class TestFilters:
    def test_equivalent_passes(self, golden_victim):
        pats = enumerate_patterns(golden_victim.arch)
        recovered = [exact_tuple(golden_victim, p, count=3) for p in pats]
        got, _, _ = extract_with_plans(golden_victim)
        assert signature_filter(got, recovered, FilterConfig()) is True

    def test_negated_row_fails(self, golden_victim):
        pats = enumerate_patterns(golden_victim.arch)
        recovered = [exact_tuple(golden_victim, p, count=3) for p in pats]
        got, _, _ = extract_with_plans(golden_victim)
        ws = [w.copy() for w in got.weights]
        ws[0][1] *= -1
        assert signature_filter(ModelParameters(ws, got.biases), recovered, FilterConfig()) is False

    def _threshold_case(self, matches):
        model = ModelParameters([np.array([[1.0, 0.0]])], [np.zeros(1)])
        good = RecoveredTuple(gamma=np.array([1.0, 0.0]), beta=0.0, anchor_index=0, occurrence_count=2)
        bad = RecoveredTuple(gamma=np.array([1.0, 5.0]), beta=7.0, anchor_index=0, occurrence_count=2)
        recovered = [good] * matches + [bad] * (20 - matches)
        return signature_filter(model, recovered, FilterConfig(), CompareConfig(1e-6, 0))

    def test_adaptive_threshold(self):
        assert self._threshold_case(19) is True
        assert self._threshold_case(18) is False

    def test_singletons_ignored(self):
        model = ModelParameters([np.array([[1.0, 0.0]])], [np.zeros(1)])
        bad = RecoveredTuple(gamma=np.array([1.0, 5.0]), beta=7.0, anchor_index=0)
        assert signature_filter(model, [bad], FilterConfig()) is True

    def test_over_budget_unfiltered(self, golden_victim):
        t = exact_tuple(golden_victim, enumerate_patterns(golden_victim.arch)[0], count=2)
        assert signature_filter(golden_victim, [t], FilterConfig(pattern_budget=2)) is None

    def test_sign_filter(self, golden_victim):
        got, _, plans = extract_with_plans(golden_victim)
        assert true_sign(golden_victim, plans[0]) == 1
        cand = ExtractionCandidate(index=0, slots=(0, 1, 2), sign_guesses=(1,), plans=plans, params=got)
        assert sign_filter(cand)
        assert not signs_consistent(got, (-1,), plans)

    def test_random_sign_agreement_rate(self, rng):
        # one neuron per layer: every guess agrees independently with probability 1/2
        plans = plan_sets(Architecture.parse("3-1-1-1"))[0]
        hits, trials = 0, 4000
        for _ in range(trials):
            p = ModelParameters.random("3-1-1-1", rng)
            hits += signs_consistent(p, tuple(rng.choice([-1, 1], 2)), plans)
        assert abs(hits / trials - 0.25) < 0.03


class TestPmr:
    def test_self_and_negated(self, golden_victim):
        assert pmr(golden_victim, golden_victim, 5000) == 1.0
        ws = list(golden_victim.weights)
        ws[-1] = -ws[-1]
        neg = ModelParameters(ws, list(golden_victim.biases[:-1]) + [-golden_victim.biases[-1]])
        assert pmr(golden_victim, neg, 5000) == 0.0

    def test_deterministic(self, rng):
        a, b = ModelParameters.random("3-2-1", rng), ModelParameters.random("3-2-1", rng)
        assert pmr(a, b, 3000, rng_seed=4) == pmr(a, b, 3000, rng_seed=4)

    def test_dimension_mismatch(self, golden_victim, affine_victim):
        with pytest.raises(ValueError):
            pmr(golden_victim, affine_victim, 10)


class TestRunAttack:
    def test_zero_deep(self, affine_victim):
        oracle = HardLabelOracle(affine_victim)
        res = run_attack(oracle, affine_victim.arch, AttackConfig(search=SearchConfig(epsilon=1e-12)))
        assert res.status == "success"
        assert res.report["candidates"]["enumerated"] == 1
        assert res.best.pmr == 1.0
        np.testing.assert_allclose(res.best.params.weights[0], [[1.0, -4.0, 0.0, 2.5]], atol=1e-10)
        assert res.best.params.biases[0][0] == pytest.approx(0.6, abs=1e-10)
        assert res.report["query_count"] == oracle.query_count

    def test_golden(self, golden_victim):
        oracle = HardLabelOracle(golden_victim)
        res = run_attack(oracle, golden_victim.arch)
        assert res.status == "success"
        assert res.best.pmr == 1.0
        ew, eb = closed_form_parameters(golden_victim.weights, golden_victim.biases)
        al = align(golden_victim, res.best.params)
        for a, b in zip(al.extracted.weights, al.theoretical.weights):
            assert np.max(np.abs(a - b)) < 1e-8
        assert pmr(golden_victim, res.best.params, 100_000) == 1.0

    def test_pattern_agreement(self, golden_victim, rng):
        res = run_attack(HardLabelOracle(golden_victim), golden_victim.arch)
        al = align(golden_victim, res.best.params)
        victim = permute_hidden(golden_victim, al.permutations)
        xs = rng.uniform(-1, 1, (10_000, 2))
        _, pv = forward_batch(victim, xs, return_pattern=True)
        _, pe = forward_batch(res.best.params, xs, return_pattern=True)
        for a, b in zip(pv, pe):
            np.testing.assert_array_equal(a, b)

    def test_insufficient_data(self):
        p = ModelParameters([np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([[1.0, 1.0]])],
                            [np.zeros(2), np.array([1e30])])
        with pytest.raises(InsufficientDataError, match="short by 3"):
            run_attack(HardLabelOracle(p), p.arch,
                       AttackConfig(search=SearchConfig(max_expansions=8)))

    def test_zero_candidates(self, golden_victim):
        res = run_attack(HardLabelOracle(golden_victim), golden_victim.arch, AttackConfig(max_candidates=0))
        assert res.status == "no-survivor"
        assert res.best is None

    def test_threads_deterministic(self, golden_victim):
        one = run_attack(HardLabelOracle(golden_victim), golden_victim.arch, AttackConfig(threads=1))
        three = run_attack(HardLabelOracle(golden_victim), golden_victim.arch, AttackConfig(threads=3))
        assert one.best.index == three.best.index
        np.testing.assert_array_equal(one.best.params.flat(), three.best.params.flat())
        assert one.report["candidates"] == three.report["candidates"]

    def test_early_exit(self, golden_victim):
        full = run_attack(HardLabelOracle(golden_victim), golden_victim.arch)
        fast = run_attack(HardLabelOracle(golden_victim), golden_victim.arch, AttackConfig(early_exit=True))
        assert fast.best.pmr == 1.0
        assert fast.report["candidates"]["enumerated"] <= full.report["candidates"]["enumerated"]

    def test_report_counts(self, golden_victim):
        res = run_attack(HardLabelOracle(golden_victim), golden_victim.arch)
        r = res.report
        c = r["candidates"]
        assert r["points_requested"] == 8 * 2**2
        assert c["enumerated"] >= c["signature_pass"] >= c["sign_pass"] == r["survivors"]
        assert r["query_count"] == r["queries_collect"] + r["queries_recover"] + r["queries_pmr"]
