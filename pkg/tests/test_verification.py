import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardlabel.boundary import SearchConfig
from hardlabel.extraction import run_attack
from hardlabel.model import HardLabelOracle, ModelParameters, forward_batch, hard_label_of
from hardlabel.verification import (AmbiguousAlignmentWarning, EquivalenceReport, IndeterminateScaleError,
                                    align, error_bound, estimate_scale, expected_scale, find_extractable_seed,
                                    greedy_match, infer_anchor, max_param_error, permute_hidden,
                                    plans_covered, theoretical_parameters, verify)

from oracles import closed_form_parameters


def perturbed(params, rng, size):
    return ModelParameters([w + rng.uniform(-size, size, w.shape) for w in params.weights],
                           [b + rng.uniform(-size, size, b.shape) for b in params.biases])


@pytest.fixture(scope="module")
def golden_extraction():
    victim = ModelParameters([np.array([[1.0, 2.0], [3.0, -1.0]]), np.array([[2.0, 1.0]])],
                             [np.array([0.25, -0.5]), np.array([-1.0])])
    res = run_attack(HardLabelOracle(victim), victim.arch)
    return victim, res.best.params


class TestNormalForm:
    def test_matches_loop_oracle(self, rng):
        for arch in ("4-3-1", "5-3-2-1", "3-2-2-2-1"):
            victim = ModelParameters.random(arch, rng)
            theo = theoretical_parameters(victim)
            ew, eb = closed_form_parameters(victim.weights, victim.biases)
            for a, b in zip(theo.weights, ew):
                np.testing.assert_allclose(a, b, rtol=1e-12)
            for a, b in zip(theo.biases, eb):
                np.testing.assert_allclose(a, b, rtol=1e-12)
            assert infer_anchor(theo) == 0

    def test_normal_form_is_scaled_victim(self, rng):
        victim = ModelParameters.random("4-3-2-1", rng)
        theo = theoretical_parameters(victim)
        xs = rng.uniform(-1, 1, (200, 4))
        np.testing.assert_allclose(forward_batch(theo, xs), expected_scale(victim) * forward_batch(victim, xs),
                                   rtol=1e-10, atol=1e-14)

    def test_zero_anchor_weight(self):
        victim = ModelParameters([np.array([[0.0, 1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        with pytest.raises(ZeroDivisionError):
            theoretical_parameters(victim, anchor=0)
        assert infer_anchor(theoretical_parameters(victim, anchor=1)) == 1


class TestAlign:
    def test_swapped_neurons(self, golden_victim):
        swapped = permute_hidden(golden_victim, [np.array([1, 0])])
        al = align(golden_victim, swapped)
        np.testing.assert_array_equal(al.permutations[0], [1, 0])
        assert al.canonicalized
        assert max_param_error(al) == 0.0

    def test_theoretical_identity(self, golden_victim):
        al = align(golden_victim, theoretical_parameters(golden_victim))
        np.testing.assert_array_equal(al.permutations[0], [0, 1])
        assert not al.canonicalized
        assert max_param_error(al) == 0.0

    def test_single_perturbation(self, golden_victim):
        theo = theoretical_parameters(golden_victim)
        ws = [w.copy() for w in theo.weights]
        ws[1][0, 1] += 1e-5
        al = align(golden_victim, ModelParameters(ws, theo.biases))
        assert max_param_error(al) == pytest.approx(1e-5, rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_permutation_inverse(self, seed):
        rng = np.random.default_rng(seed)
        victim = ModelParameters.random("5-4-3-1", rng)
        perms = [rng.permutation(4), rng.permutation(3)]
        al = align(victim, theoretical_parameters(permute_hidden(victim, perms)))
        for got, p in zip(al.permutations, perms):
            np.testing.assert_array_equal(got, p)
        assert max_param_error(al) <= 1e-12

    def test_ambiguity_warning(self):
        sim = np.array([[1.0, 1.0], [0.2, 0.3]])
        with pytest.warns(AmbiguousAlignmentWarning):
            greedy_match(sim)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            np.testing.assert_array_equal(greedy_match(np.array([[1.0, 0.1], [0.1, 1.0]])), [0, 1])

    def test_architecture_mismatch(self, golden_victim, affine_victim):
        with pytest.raises(ValueError):
            align(golden_victim, affine_victim)


class TestErrorBound:
    def test_exact_is_zero(self, golden_victim):
        assert error_bound(align(golden_victim, theoretical_parameters(golden_victim))) == 0.0

    def test_affine_interval(self, affine_victim):
        theo = theoretical_parameters(affine_victim)
        ext = ModelParameters([theo.weights[0] + 1e-6], theo.biases)
        assert error_bound(align(affine_victim, ext), 1.0) == pytest.approx(4e-6, rel=1e-9)
        assert error_bound(align(affine_victim, ext), 2.0) == pytest.approx(8e-6, rel=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), size=st.sampled_from([1e-9, 1e-6, 1e-3]),
           arch=st.sampled_from(["3-2-1", "4-3-2-1", "2-2-2-2-1"]))
    def test_sound(self, seed, size, arch):
        rng = np.random.default_rng(seed)
        victim = ModelParameters.random(arch, rng)
        theo = theoretical_parameters(victim)
        ext = perturbed(theo, rng, size)
        al = align(victim, ext)
        bound = error_bound(al)
        xs = rng.uniform(-1, 1, (20_000, victim.arch.input_dim))
        gap = np.abs(forward_batch(al.extracted, xs) - forward_batch(al.theoretical, xs))
        assert gap.max() <= bound * (1 + 1e-9) + 1e-15

    def test_sound_on_extraction(self, golden_extraction, rng):
        victim, extracted = golden_extraction
        al = align(victim, extracted)
        bound = error_bound(al)
        c = estimate_scale(victim, extracted).median
        xs = rng.uniform(-1, 1, (100_000, 2))
        fv = forward_batch(victim, xs)
        fe = forward_batch(extracted, xs)
        assert np.max(np.abs(fe - c * fv)) <= bound + 1e-15
        assert c == pytest.approx(expected_scale(victim), rel=1e-6)
        # hard labels agree wherever the victim is clear of the bound
        clear = np.abs(fv) > bound / c
        np.testing.assert_array_equal(hard_label_of(fe[clear]), hard_label_of(fv[clear]))


class TestScale:
    def test_self(self, golden_victim):
        est = estimate_scale(golden_victim, golden_victim)
        assert est.median == 1.0 and est.spread == 0.0 and est.max_spread == 0.0

    def test_half_last_layer(self, golden_victim):
        assert estimate_scale(golden_victim, golden_victim.scaled_output(0.5)).median == pytest.approx(0.5)

    def test_closed_form_scale(self, golden_extraction):
        victim, extracted = golden_extraction
        est = estimate_scale(victim, extracted)
        # 1 / |2*1 + 1*3|
        assert est.median == pytest.approx(0.2, rel=1e-6)
        assert est.spread < 1e-6

    def test_indeterminate(self):
        zero = ModelParameters([np.array([[0.0, 0.0]])], [np.zeros(1)])
        with pytest.raises(IndeterminateScaleError):
            estimate_scale(zero, zero, 100)


class TestVerify:
    def test_report(self, golden_extraction):
        victim, extracted = golden_extraction
        rep = verify(victim, extracted, pmr_samples=50_000, query_count=123)
        assert rep.pmr == 1.0
        assert rep.expected_scale == pytest.approx(0.2)
        assert rep.max_param_error < 1e-8
        d = rep.to_dict()
        assert d["query_count"] == 123
        assert d["log2_max_param_error"] < -26

    def test_validation(self):
        with pytest.raises(ValueError):
            EquivalenceReport(-1.0, 0.0, 1.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            EquivalenceReport(0.0, 0.0, 1.0, 0.0, 1.0, 1.5)
        assert EquivalenceReport(0.0, 0.0, 1.0, 0.0, 1.0, 1.0).to_dict()["log2_epsilon_bound"] is None


class TestScreening:
    def test_extractable_seed_is_covered(self):
        from hardlabel.boundary import collect_boundary_points
        seed = find_extractable_seed("3-2-1", search=SearchConfig())
        victim = ModelParameters.random("3-2-1", seed)
        points = collect_boundary_points(HardLabelOracle(victim), 32, SearchConfig())
        assert plans_covered(victim, points)
        w2, b2 = victim.weights[1][0], victim.biases[1][0]
        assert np.sign(w2[0]) == np.sign(w2[1]) == -np.sign(b2)

    def test_exhausted(self):
        with pytest.raises(LookupError):
            find_extractable_seed("3-2-1", low=1.0, high=2.0, limit=3)
