import math
import random

import pytest

from chared.core import EOS_ATOM
from chared.decoder import DecoderConfig, decode
from chared.errors import (
    CombinatorialBudgetExceeded,
    HorizonMismatch,
    UnknownContext,
    ZeroMass,
)
from chared.fixtures import (
    _toy,
    looping_pair,
    two_tokenization_pair,
    walkthrough_pair,
)
from chared.oracle import (
    EnumerationTrace,
    StringDistribution,
    char_level_conditional,
    characterize_toy_lm,
    exact_chared_distribution,
    exact_lm_string_distribution,
    prefix_mass,
    total_variation,
)
from chared.providers import ToyProvider


class TestExactLm:
    def test_two_tokenizations_sum(self):
        # by hand: P(ab) = P(tok "ab") + P(tok "a") * P(tok "b" | "a") = 0.5 + 0.5*1
        m1, _ = two_tokenization_pair()
        dist = exact_lm_string_distribution(m1, "", 3)
        assert dist.mass == {"ab": pytest.approx(1.0, abs=1e-12)}
        assert dist.truncated_mass == 0.0

    def test_immediate_eos_is_the_empty_string(self):
        m = _toy("a", {"": {EOS_ATOM: 1.0}})
        dist = exact_lm_string_distribution(m, "", 4)
        assert dist.mass == {"": 1.0}

    def test_short_horizon_reports_truncated_mass(self):
        m, _ = looping_pair()  # "ab" with 0.6, stop with 0.4, at every context
        dist = exact_lm_string_distribution(m, "", 3)
        # by hand: P("") = .4, P("ab") = .6*.4; "abab" needs 4 atoms -> truncated .36
        assert dist.mass[""] == pytest.approx(0.4, abs=1e-12)
        assert dist.mass["ab"] == pytest.approx(0.24, abs=1e-12)
        assert dist.truncated_mass == pytest.approx(0.36, abs=1e-12)

    def test_walkthrough_masses(self):
        # by hand: cat = .9*.4; cats = .9*.6 + .1
        m1, m2 = walkthrough_pair()
        d1 = exact_lm_string_distribution(m1, "", 5)
        assert d1.mass["cat"] == pytest.approx(0.36, abs=1e-12)
        assert d1.mass["cats"] == pytest.approx(0.64, abs=1e-12)
        d2 = exact_lm_string_distribution(m2, "", 5)
        # cats = .85 + .15*.8*.85 + .15*.2; cat = .15*.8*.15
        assert d2.mass["cats"] == pytest.approx(0.982, abs=1e-12)
        assert d2.mass["cat"] == pytest.approx(0.018, abs=1e-12)

    def test_missing_context_surfaces(self):
        m = _toy("ab", {"": {"a": 1.0}})
        with pytest.raises(UnknownContext):
            exact_lm_string_distribution(m, "", 3)


class TestExactEnsemble:
    def test_disjoint_singletons_split_by_weight(self):
        # by hand: step 1 picks 'a' or 'b' with mass 1/2 each; the losing
        # model force-refreshes into its fallback and both stop immediately.
        m1 = _toy("ab", {"": {"a": 1.0}, "a": {EOS_ATOM: 1.0}}, default={EOS_ATOM: 1.0})
        m2 = _toy("ab", {"": {"b": 1.0}, "b": {EOS_ATOM: 1.0}}, default={EOS_ATOM: 1.0})
        trace = EnumerationTrace()
        dist = exact_chared_distribution(m1, m2, 0.5, horizon=3, trace=trace)
        assert dist.mass["a"] == pytest.approx(0.5, abs=1e-12)
        assert dist.mass["b"] == pytest.approx(0.5, abs=1e-12)
        assert trace.forced_refreshes == [1, 1]

    def test_identical_models_reduce_to_the_lm(self):
        m = _toy(
            "a",
            {
                "": {"aa": 0.5, "a": 0.5},
                "a": {"a": 1.0},
                "aa": {EOS_ATOM: 1.0},
            },
        )
        dist = exact_chared_distribution(m, m, 0.5, horizon=4)
        lm = exact_lm_string_distribution(m, "", 4)
        assert total_variation(dist, lm) <= 1e-12
        assert dist.mass["aa"] == pytest.approx(1.0, abs=1e-12)

    def test_boundaries_equal_each_lm(self):
        m1, m2 = walkthrough_pair()
        for alpha, target in ((1.0, m1), (0.0, m2)):
            ens = exact_chared_distribution(m1, m2, alpha, horizon=5)
            lm = exact_lm_string_distribution(target, "", 5)
            assert total_variation(ens, lm) <= 1e-9

    def test_walkthrough_regression_masses(self, test_fixtures_dir):
        # frozen from this enumerator; guarded structurally by the
        # boundary equalities above and the sampling consistency test
        m1, m2 = walkthrough_pair()
        dist = exact_chared_distribution(m1, m2, 0.5, horizon=6)
        assert set(dist.mass) == {"cat", "cats"}
        assert dist.truncated_mass == 0.0
        assert dist.total() == pytest.approx(1.0, abs=1e-9)
        assert dist.mass["cat"] == pytest.approx(0.189, abs=1e-12)
        assert dist.mass["cats"] == pytest.approx(0.811, abs=1e-12)

        import json

        from chared.oracle import (
            string_distribution_from_array,
            string_distribution_to_array,
        )

        frozen = json.loads(
            (test_fixtures_dir / "catcats_alpha05_frozen.json").read_text()
        )
        stored = string_distribution_from_array(frozen, horizon=6)
        assert total_variation(dist, stored) <= 1e-12
        assert string_distribution_to_array(dist) == frozen

    def test_greedy_mode_is_a_point_mass(self):
        m1, m2 = walkthrough_pair()
        dist = exact_chared_distribution(m1, m2, 0.5, horizon=6, mode="greedy")
        assert dist.mass == {"cats": 1.0}

    def test_deterministic_across_runs(self):
        m1, m2 = walkthrough_pair()
        a = exact_chared_distribution(m1, m2, 0.37, horizon=5)
        b = exact_chared_distribution(m1, m2, 0.37, horizon=5)
        assert list(a.mass.items()) == list(b.mass.items())
        assert a.truncated_mass == b.truncated_mass

    def test_budget_cap(self):
        m1, m2 = looping_pair()
        with pytest.raises(CombinatorialBudgetExceeded):
            exact_chared_distribution(m1, m2, 0.5, horizon=8, node_cap=3)

    def test_mass_conservation_per_depth(self):
        m1, m2 = walkthrough_pair()
        trace = EnumerationTrace()
        exact_chared_distribution(m1, m2, 0.45, horizon=5, trace=trace)
        for depth, live, emitted, truncated in trace.depth_mass:
            assert live + emitted + truncated == pytest.approx(1.0, abs=1e-9)

    def test_truncation_tracked_on_looping_models(self):
        m1, m2 = looping_pair()
        dist = exact_chared_distribution(m1, m2, 0.5, horizon=4)
        assert dist.truncated_mass > 0.0
        assert dist.total() == pytest.approx(1.0, abs=1e-9)

    def test_equivalence_holds_with_truncated_mass(self):
        # infinite-support models: the horizon cut must agree on both routes
        m1, m2 = looping_pair()
        ens = exact_chared_distribution(m1, m2, 1.0, horizon=5)
        lm = exact_lm_string_distribution(m1, "", 5)
        assert lm.truncated_mass > 0.0
        assert total_variation(ens, lm) <= 1e-9


class TestCharacterize:
    def test_two_tokenization_model_collapses_to_chars(self):
        m1, _ = two_tokenization_pair()
        flat = characterize_toy_lm(m1, 3)
        assert flat.conditional("").entries == {"a": pytest.approx(1.0, abs=1e-12)}
        assert flat.conditional("a").entries == {"b": pytest.approx(1.0, abs=1e-12)}
        assert flat.conditional("ab").entries == {EOS_ATOM: pytest.approx(1.0, abs=1e-12)}
        assert all(len(t) == 1 for t in flat.vocab)

    def test_char_model_is_a_fixed_point(self):
        _, m2 = two_tokenization_pair()
        again = characterize_toy_lm(m2, 3)
        for ctx, dist in m2.contexts.items():
            rebuilt = again.conditional(ctx)
            for token, p in dist.entries.items():
                assert rebuilt.entries[token] == pytest.approx(p, abs=1e-9)

    def test_string_distribution_preserved(self):
        m1, _ = walkthrough_pair()
        flat = characterize_toy_lm(m1, 5)
        lm_a = exact_lm_string_distribution(m1, "", 5)
        lm_b = exact_lm_string_distribution(flat, "", 5)
        assert total_variation(lm_a, lm_b) <= 1e-9

    def test_unreachable_prefix_is_zero_mass(self):
        m1, _ = walkthrough_pair()
        with pytest.raises(ZeroMass):
            char_level_conditional(m1, "", "dog")

    def test_prefix_masses_by_hand(self):
        m1, m2 = walkthrough_pair()
        assert prefix_mass(m1, "", "cat") == pytest.approx(1.0, abs=1e-12)
        assert prefix_mass(m1, "", "cats") == pytest.approx(0.64, abs=1e-12)
        assert prefix_mass(m2, "", "ca") == pytest.approx(1.0, abs=1e-12)
        assert prefix_mass(m2, "", "cats") == pytest.approx(0.982, abs=1e-12)


class TestTotalVariation:
    def test_identical_is_zero(self):
        d = StringDistribution({"x": 1.0}, 4)
        assert total_variation(d, d) == 0.0

    def test_disjoint_point_masses(self):
        a = StringDistribution({"x": 1.0}, 4)
        b = StringDistribution({"y": 1.0}, 4)
        assert total_variation(a, b) == 1.0

    def test_direct_arithmetic(self):
        a = StringDistribution({"x": 0.6, "y": 0.4}, 4)
        b = StringDistribution({"x": 0.5, "y": 0.5}, 4)
        assert total_variation(a, b) == pytest.approx(0.1, abs=1e-12)

    def test_horizon_mismatch(self):
        with pytest.raises(HorizonMismatch):
            total_variation(StringDistribution({}, 4), StringDistribution({}, 5))

    def test_truncated_mass_counts(self):
        a = StringDistribution({"x": 0.5}, 4, truncated_mass=0.5)
        b = StringDistribution({"x": 1.0}, 4)
        assert total_variation(a, b) == pytest.approx(0.5, abs=1e-12)


class TestDecoderAgreement:
    def test_sampled_frequencies_track_the_enumeration(self):
        m1, m2 = walkthrough_pair()
        oracle = exact_chared_distribution(m1, m2, 0.5, horizon=6)
        providers = (ToyProvider(m1), ToyProvider(m2))
        rng = random.Random(11)
        n = 4000
        counts: dict[str, int] = {}
        for _ in range(n):
            record = decode(
                DecoderConfig(alpha=0.5, mode="sample", max_atoms=6),
                providers=providers,
                rng=rng,
            )
            counts[record.text] = counts.get(record.text, 0) + 1
        assert set(counts) <= set(oracle.mass)
        for text, p in oracle.mass.items():
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts.get(text, 0) / n - p) <= 4 * se
