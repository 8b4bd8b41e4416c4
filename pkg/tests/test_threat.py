"""Unit tests for the perturbation spec grammar and interval queries."""

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from robtree.threat import (
    CategoricalPerturbation,
    NumericPerturbation,
    ThreatSpecError,
    UNBOUNDED,
    dump_threat,
    effective_threat,
    emit_tokens,
    load_threat_file,
    null_threat,
    parse_threat_spec,
    perturbation_interval,
    reachable_categories,
    split_token_list,
    threat_digest,
)


class TestParse:
    def test_direction_tokens(self):
        model = parse_threat_spec([">", "<"])
        assert model.perturbations[0] == NumericPerturbation(0.0, UNBOUNDED)
        assert model.perturbations[1] == NumericPerturbation(UNBOUNDED, 0.0)

    def test_empty_tokens_are_null(self):
        model = parse_threat_spec(["", ""])
        assert model.perturbations == (
            NumericPerturbation(0.0, 0.0),
            NumericPerturbation(0.0, 0.0),
        )
        assert model.is_null()

    def test_symmetric_and_pair(self):
        model = parse_threat_spec(["0.1", "(0.7, 0.3)"])
        assert model.perturbations[0] == NumericPerturbation(0.1, 0.1)
        assert model.perturbations[1] == NumericPerturbation(0.7, 0.3)

    def test_anything_token(self):
        model = parse_threat_spec(["<>"])
        assert model.perturbations[0] == NumericPerturbation(UNBOUNDED, UNBOUNDED)

    def test_default_attacked_classes(self):
        assert parse_threat_spec(["0.1"]).attacked_classes == frozenset({0, 1})

    def test_single_class_attacker(self):
        model = parse_threat_spec(["0.1"], attacked_classes=[1])
        assert model.attacked_classes == frozenset({1})
        assert not model.is_null()

    def test_unknown_token_names_feature(self):
        with pytest.raises(ThreatSpecError, match="feature 1"):
            parse_threat_spec(["0.1", "sideways"])

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ThreatSpecError, match="feature 0"):
            parse_threat_spec(["-0.1"])

    def test_negative_pair_side_rejected(self):
        with pytest.raises(ThreatSpecError, match="feature 0"):
            parse_threat_spec(["(0.1, -0.2)"])

    def test_non_finite_rejected(self):
        with pytest.raises(ThreatSpecError, match="finite"):
            parse_threat_spec(["inf"])

    def test_token_count_mismatch(self):
        with pytest.raises(ThreatSpecError, match="expected 3"):
            parse_threat_spec(["0.1"], n_features=3)

    def test_bad_attacked_classes(self):
        with pytest.raises(ThreatSpecError, match="subset"):
            parse_threat_spec(["0.1"], attacked_classes=[2])

    def test_empty_attacked_with_active_threat(self):
        with pytest.raises(ThreatSpecError, match="non-empty"):
            parse_threat_spec(["0.1"], attacked_classes=[])

    def test_empty_attacked_with_null_threat(self):
        model = parse_threat_spec([""], attacked_classes=[])
        assert model.is_null()

    def test_categorical_tokens(self):
        model = parse_threat_spec(["", "{1,3}", "<>"], categorical=[1, 2])
        assert model.perturbations[1] == CategoricalPerturbation(frozenset({1, 3}))
        assert model.perturbations[2] == CategoricalPerturbation(None)

    def test_categorical_empty_set_rejected(self):
        with pytest.raises(ThreatSpecError, match="feature 0"):
            parse_threat_spec(["{}"], categorical=[0])

    def test_categorical_non_integer_rejected(self):
        with pytest.raises(ThreatSpecError, match="integers"):
            parse_threat_spec(["{a}"], categorical=[0])

    def test_categorical_index_out_of_range(self):
        with pytest.raises(ThreatSpecError, match="out of range"):
            parse_threat_spec(["0.1"], categorical=[5])


class TestTokenSplitting:
    def test_plain(self):
        assert split_token_list("0.1,>,<") == ["0.1", ">", "<"]

    def test_nested_pair(self):
        assert split_token_list("0.1,(0.7, 0.3),{1,2}") == [
            "0.1", "(0.7, 0.3)", "{1,2}"
        ]

    def test_empty_tokens(self):
        assert split_token_list(",0.1,") == ["", "0.1", ""]

    def test_single_empty(self):
        assert split_token_list("") == [""]

    def test_unbalanced(self):
        with pytest.raises(ThreatSpecError):
            split_token_list("(0.1, 0.2")


class TestInterval:
    def test_symmetric(self):
        model = parse_threat_spec(["0.1"])
        lo, hi = perturbation_interval(model, 0, 0.45)
        assert (lo, hi) == pytest.approx((0.35, 0.55), abs=1e-15)

    def test_null_is_a_point(self):
        model = parse_threat_spec([""])
        assert perturbation_interval(model, 0, 0.45) == (0.45, 0.45)

    def test_clamped_pair(self):
        model = parse_threat_spec(["(0.7, 0.3)"])
        assert perturbation_interval(model, 0, 0.5) == (0.0, 0.8)

    def test_unbounded_maps_to_range(self):
        model = parse_threat_spec(["<>"])
        assert perturbation_interval(model, 0, 0.5, feature_range=(0.2, 0.9)) == (0.2, 0.9)

    def test_increase_only(self):
        model = parse_threat_spec([">"])
        assert perturbation_interval(model, 0, 0.3) == (0.3, 1.0)

    def test_index_out_of_range(self):
        model = parse_threat_spec(["0.1"])
        with pytest.raises(IndexError):
            perturbation_interval(model, 1, 0.5)

    def test_categorical_rejected(self):
        model = parse_threat_spec(["{1}"], categorical=[0])
        with pytest.raises(ThreatSpecError, match="categorical"):
            perturbation_interval(model, 0, 0.5)

    @given(st.floats(0, 1), st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 0.5))
    def test_monotone_in_epsilon(self, value, eps_l, eps_r, grow):
        small = parse_threat_spec(["(%r, %r)" % (eps_l, eps_r)])
        big = parse_threat_spec(["(%r, %r)" % (eps_l + grow, eps_r + grow)])
        lo_s, hi_s = perturbation_interval(small, 0, value)
        lo_b, hi_b = perturbation_interval(big, 0, value)
        assert lo_b <= lo_s and hi_b >= hi_s


class TestReachableCategories:
    def test_own_category_always_reachable(self):
        model = parse_threat_spec(["{2}"], categorical=[0])
        assert reachable_categories(model, 0, 1, 4) == frozenset({1, 2})

    def test_not_perturbable(self):
        model = parse_threat_spec([""], categorical=[0])
        assert reachable_categories(model, 0, 3, 5) == frozenset({3})

    def test_free(self):
        model = parse_threat_spec(["<>"], categorical=[0])
        assert reachable_categories(model, 0, 0, 3) == frozenset({0, 1, 2})

    def test_ids_beyond_cardinality_dropped(self):
        model = parse_threat_spec(["{1,9}"], categorical=[0])
        assert reachable_categories(model, 0, 0, 3) == frozenset({0, 1})

    def test_numeric_rejected(self):
        model = parse_threat_spec(["0.1"])
        with pytest.raises(ThreatSpecError, match="numerical"):
            reachable_categories(model, 0, 0, 3)


numeric_tokens = st.one_of(
    st.sampled_from(["", ">", "<", "<>"]),
    st.floats(0, 10).map(repr),
    st.tuples(st.floats(0, 10), st.floats(0, 10)).map(lambda t: "(%r, %r)" % t),
)


class TestRoundTrip:
    @given(st.lists(numeric_tokens, min_size=1, max_size=6))
    def test_emit_then_parse_is_identity(self, tokens):
        model = parse_threat_spec(tokens)
        assert parse_threat_spec(emit_tokens(model)) == model

    def test_categorical_round_trip(self):
        model = parse_threat_spec(["", "{3,1}", "<>"], categorical=[1, 2])
        tokens = emit_tokens(model)
        assert tokens == ["", "{1,3}", "<>"]
        assert parse_threat_spec(tokens, categorical=[1, 2]) == model

    def test_zero_emits_empty_token(self):
        model = parse_threat_spec(["0", "0.0"])
        assert emit_tokens(model) == ["", ""]


class TestEffectiveThreat:
    def test_identity_for_active_model(self):
        model = parse_threat_spec(["0.1"])
        assert effective_threat(model, 1.0) is model

    def test_rho_zero_collapses(self):
        model = parse_threat_spec(["0.1", "{1}"], categorical=[1])
        eff = effective_threat(model, 0.0)
        assert eff.is_null()
        assert eff == null_threat(2, categorical=[1])

    def test_null_tokens_collapse(self):
        model = parse_threat_spec(["", ""])
        assert effective_threat(model, 1.0) == null_threat(2)

    def test_digest_identical_for_equivalent_nulls(self):
        a = effective_threat(parse_threat_spec(["", ""]), 1.0)
        b = effective_threat(parse_threat_spec(["0.5", "0.5"]), 0.0)
        assert threat_digest(a) == threat_digest(b)

    def test_digest_differs_for_active_models(self):
        a = parse_threat_spec(["0.1"])
        b = parse_threat_spec(["0.2"])
        assert threat_digest(a) != threat_digest(b)


class TestThreatFile:
    def test_load(self, tmp_path):
        path = tmp_path / "threat.json"
        path.write_text(json.dumps(
            {"perturbations": ["0.1", ">"], "attacked_classes": [1]}
        ))
        model = load_threat_file(path)
        assert model.perturbations[0] == NumericPerturbation(0.1, 0.1)
        assert model.attacked_classes == frozenset({1})

    def test_default_attacked(self, tmp_path):
        path = tmp_path / "threat.json"
        path.write_text(json.dumps({"perturbations": ["0.1"]}))
        assert load_threat_file(path).attacked_classes == frozenset({0, 1})

    def test_missing_key(self, tmp_path):
        path = tmp_path / "threat.json"
        path.write_text("[]")
        with pytest.raises(ThreatSpecError):
            load_threat_file(path)

    def test_dump_round_trips(self, tmp_path):
        model = parse_threat_spec(["(0.2, 0.4)", "<"], attacked_classes=[0, 1])
        path = tmp_path / "threat.json"
        path.write_text(json.dumps(dump_threat(model)))
        assert load_threat_file(path) == model
