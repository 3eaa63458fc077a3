from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from stampsy.stsp import (
    Evidence,
    ExtractionRule,
    Location,
    Season,
    SpatioTemporalState,
    TimeOfDay,
    Weather,
    extract_state,
    load_impacts,
    load_rules,
    make_stamp,
    merge_states,
    stamp_nll_loss,
    stsp_accuracy,
    stsp_field_accuracy,
)

from conftest import load_stsp_fixture


class TestState:
    def test_non_null_field_requires_evidence(self):
        with pytest.raises(ValueError):
            SpatioTemporalState(time_of_day=TimeOfDay.MORNING)
        SpatioTemporalState(
            time_of_day=TimeOfDay.MORNING, evidence=(Evidence("time_of_day", "早上"),)
        )

    def test_from_dict_synthesizes_evidence(self):
        state = SpatioTemporalState.from_dict({"weather": "rainy"})
        assert state.weather is Weather.RAINY
        assert any(ev.field == "weather" for ev in state.evidence)

    def test_from_dict_rejects_unknown_value(self):
        with pytest.raises(ValueError):
            SpatioTemporalState.from_dict({"weather": "snowy"})


class TestExtractState:
    def test_getting_up_means_morning(self):
        assert extract_state(["我刚起床"]).time_of_day is TimeOfDay.MORNING
        assert extract_state(["I just got up"]).time_of_day is TimeOfDay.MORNING

    def test_rain_and_home(self):
        state = extract_state(["今天下雨，我在家里"])
        assert state.weather is Weather.RAINY
        assert state.location is Location.HOME

    def test_no_cue_yields_all_null(self):
        state = extract_state(["你好"])
        assert state.is_empty and state.evidence == ()

    def test_most_recent_mention_wins(self):
        state = extract_state(["早上心情不好。", "现在是晚上，更难受了。"])
        assert state.time_of_day is TimeOfDay.EVENING

    def test_explicit_beats_inference_within_one_utterance(self):
        # "morning" inference from getting up loses to the explicit late-night word.
        state = extract_state(["凌晨四点才睡，刚起床还是很累。"])
        assert state.time_of_day is TimeOfDay.LATE_NIGHT

    def test_prior_persists_unless_contradicted(self):
        prior = extract_state(["我在公司加班。"])
        assert prior.location is Location.COMPANY
        state = extract_state(["今天下雨了。"], prior=prior)
        assert state.location is Location.COMPANY
        assert state.weather is Weather.RAINY

    def test_monotone_no_cue_appension(self):
        base = extract_state(["早上下雨，我在家里发呆。"])
        extended = extract_state(["早上下雨，我在家里发呆。", "嗯。", "我也说不清。"])
        assert base.to_dict() == extended.to_dict()

    def test_every_non_null_field_has_evidence(self):
        state = extract_state(["夏天的晚上我还在公司加班。"])
        covered = {ev.field for ev in state.evidence}
        for field_name, value in state.non_null_fields().items():
            assert field_name in covered

    def test_empty_context_rejected(self):
        with pytest.raises(ValueError):
            extract_state([])

    def test_rule_round_trip_all_literal_triggers(self):
        # Every literal alternative in the bundled table must fire on a
        # sentence that embeds it.
        rules = load_rules()
        checked = 0
        for rule in rules:
            if any(ch in rule.pattern.pattern for ch in "\\()[]?+*"):
                continue  # regex rule; its triggers are covered by the fixture
            for alternative in rule.pattern.pattern.split("|"):
                state = extract_state([f"{alternative}，想聊聊。"], rules=rules)
                assert getattr(state, rule.field) is not None, alternative
                assert getattr(state, rule.field).value == rule.value, alternative
                checked += 1
        assert checked >= 40

    def test_custom_rules_file(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(
            '[{"pattern": "blizzard", "field": "season", "value": "winter", "priority": 1}]',
            "utf-8",
        )
        rules = load_rules(path)
        assert extract_state(["a blizzard outside"], rules=rules).season is Season.WINTER

    def test_fixture_accuracy_is_high(self):
        rows = load_stsp_fixture()
        gold = [SpatioTemporalState.from_dict(r["state"]) for r in rows]
        pred = [extract_state([r["text"]]) for r in rows]
        assert stsp_accuracy(gold, pred) >= 0.95

    def test_every_rule_fires_on_fixture_or_roundtrip_sentence(self):
        rules = load_rules()
        texts = [r["text"] for r in load_stsp_fixture()]
        for rule in rules:
            if not any(ch in rule.pattern.pattern for ch in "\\()[]?+*"):
                texts.extend(f"{alt}，想聊聊。" for alt in rule.pattern.pattern.split("|"))
        for rule in rules:
            assert any(rule.pattern.search(t) for t in texts), rule.pattern.pattern


class TestMakeStamp:
    def test_late_night_fragment(self):
        state = SpatioTemporalState.from_dict({"time_of_day": "late_night"})
        stamp = make_stamp(state)
        assert "tend to be more emotional, with fragile and sensitive emotions" in stamp.text

    def test_morning_fragment(self):
        state = SpatioTemporalState.from_dict({"time_of_day": "morning"})
        assert "more awake and energetic" in make_stamp(state).text

    def test_all_null_state_empty_stamp(self):
        stamp = make_stamp(SpatioTemporalState())
        assert stamp.text == "" and stamp.sources == ()

    def test_fixed_field_order(self):
        state = SpatioTemporalState.from_dict(
            {"location": "home", "time_of_day": "evening", "weather": "sunny"}
        )
        stamp = make_stamp(state)
        assert stamp.sources == ("time_of_day", "weather", "location")
        impacts = load_impacts()
        assert stamp.text == " ".join(
            [impacts["evening"], impacts["sunny"], impacts["home"]]
        )

    def test_impact_table_covers_every_enum_value(self):
        impacts = load_impacts()
        for enum_cls in (TimeOfDay, Weather, Season, Location):
            for member in enum_cls:
                assert member.value in impacts

    def test_deterministic_composition(self):
        texts = ["早上下雨，我在家里发呆。"]
        a = make_stamp(extract_state(texts))
        b = make_stamp(extract_state(texts))
        assert a == b


class TestNllLoss:
    def test_perfect_prediction_zero_loss(self):
        dists = [{"a": 1.0}, {"b": 1.0}]
        assert stamp_nll_loss(dists, ["a", "b"]) == 0.0

    def test_half_probability_ln2(self):
        loss = stamp_nll_loss([{"a": 0.5, "b": 0.5}], ["a"])
        assert abs(loss - math.log(2)) < 1e-12

    def test_uniform_vocab4_ln4(self):
        dist = {t: 0.25 for t in "abcd"}
        loss = stamp_nll_loss([dist], ["c"])
        assert abs(loss - math.log(4)) < 1e-12

    def test_vector_form(self):
        loss = stamp_nll_loss([[0.25, 0.75]], [1])
        assert abs(loss - (-math.log(0.75))) < 1e-12

    def test_zero_probability_inf_with_index(self):
        loss = stamp_nll_loss([{"a": 1.0}, {"a": 1.0}], ["a", "b"])
        assert math.isinf(loss)
        assert loss.zero_prob_indices == (1,)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            stamp_nll_loss([{"a": 1.0}], ["a", "b"])

    def test_unnormalized_distribution_rejected(self):
        with pytest.raises(ValueError):
            stamp_nll_loss([{"a": 0.7}], ["a"])

    @given(
        st.lists(
            st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6),
            min_size=1,
            max_size=8,
        ),
        st.randoms(use_true_random=False),
    )
    def test_loss_nonnegative_and_zero_iff_certain(self, raw, rng):
        dists = []
        targets = []
        for weights in raw:
            total = sum(weights)
            dist = [w / total for w in weights]
            dists.append(dist)
            targets.append(rng.randrange(len(dist)))
        loss = stamp_nll_loss(dists, targets)
        assert loss >= 0.0
        if loss == 0.0:
            assert all(abs(d[t] - 1.0) < 1e-9 for d, t in zip(dists, targets))


class TestAccuracy:
    def test_identical_states(self):
        states = [extract_state(["早上下雨"])] * 3
        assert stsp_accuracy(states, states) == 1.0

    def test_half_match(self):
        gold = [
            SpatioTemporalState.from_dict({"time_of_day": "morning"}),
            SpatioTemporalState.from_dict({"time_of_day": "evening"}),
        ]
        pred = [gold[0], SpatioTemporalState.from_dict({"time_of_day": "morning"})]
        assert stsp_accuracy(gold, pred) == 0.5

    def test_null_gold_fields_are_ignored(self):
        gold = [SpatioTemporalState.from_dict({"weather": "rainy"})]
        pred = [SpatioTemporalState.from_dict({"weather": "rainy", "location": "home"})]
        assert stsp_accuracy(gold, pred) == 1.0

    def test_field_accuracy(self):
        gold = [SpatioTemporalState.from_dict({"weather": "rainy", "location": "home"})]
        pred = [SpatioTemporalState.from_dict({"weather": "rainy", "location": "school"})]
        assert stsp_field_accuracy(gold, pred) == 0.5
        assert stsp_field_accuracy([SpatioTemporalState()], [SpatioTemporalState()]) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            stsp_accuracy([SpatioTemporalState()], [])


class TestMergeStates:
    def test_update_wins(self):
        base = SpatioTemporalState.from_dict({"weather": "sunny", "location": "home"})
        update = SpatioTemporalState.from_dict({"weather": "rainy"})
        merged = merge_states(base, update)
        assert merged.weather is Weather.RAINY
        assert merged.location is Location.HOME
