from __future__ import annotations

import math
import random
import re

import pytest

from stampsy.backends import MockEmbeddingBackend
from stampsy.corpus import HelpingSkill
from stampsy.evalharness import (
    EvalReport,
    RubricScore,
    aggregate_rubric,
    bleu,
    cohen_kappa,
    corpus_bleu,
    embed_sim,
    load_ghsc_transcript,
    rouge_l,
    score_ghsc,
    slot_value_scores,
)
from stampsy.kstore import Domain, KnowledgeQuadruple


# ---------------------------------------------------------------------------
# Independent oracles (deliberately written from scratch: per-character
# tokens, dict-based n-gram counting, recursive LCS)
# ---------------------------------------------------------------------------


def oracle_tokens(text):
    return [ch for ch in text if not ch.isspace()]


def oracle_bleu(candidate, references, n):
    cand = oracle_tokens(candidate)
    refs = [oracle_tokens(r) for r in references]
    product = 1.0
    for k in range(1, n + 1):
        counts = {}
        for i in range(len(cand) - k + 1):
            g = tuple(cand[i : i + k])
            counts[g] = counts.get(g, 0) + 1
        if not counts:
            return 0.0
        clipped = 0
        for g, c in counts.items():
            best = 0
            for ref in refs:
                rc = 0
                for i in range(len(ref) - k + 1):
                    if tuple(ref[i : i + k]) == g:
                        rc += 1
                best = max(best, rc)
            clipped += min(c, best)
        total = sum(counts.values())
        if clipped == 0:
            return 0.0
        product *= (clipped / total) ** (1.0 / n)
    c_len = len(cand)
    best_ref = None
    for ref in refs:
        if best_ref is None or (abs(len(ref) - c_len), len(ref)) < (abs(best_ref - c_len), best_ref):
            best_ref = len(ref)
    bp = 1.0 if c_len > best_ref else math.exp(1 - best_ref / c_len)
    return bp * product


def oracle_lcs(a, b):
    import functools

    @functools.lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


def oracle_rouge_l(candidate, reference):
    cand = tuple(oracle_tokens(candidate))
    ref = tuple(oracle_tokens(reference))
    lcs = oracle_lcs(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


_ZH = "我你他她的了在是有不这那天气心情很好难过想要说话朋友工作学习压力睡眠放松咖啡音乐散步公园家里学校春夏秋冬雨晴"
_EN = ["sleep", "rain", "mood", "stress", "walk", "coffee", "book", "talk", "help", "calm"]


def random_sentence_pairs(count=50, seed=20240817):
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        def sentence():
            n = rng.randint(1, 24)
            parts = []
            for _ in range(n):
                if rng.random() < 0.75:
                    parts.append(rng.choice(_ZH))
                else:
                    parts.append(" " + rng.choice(_EN) + " ")
            return "".join(parts).strip() or "好"

        base = sentence()
        if rng.random() < 0.4:
            # Perturb the base so some pairs share long spans.
            chars = list(base)
            for _ in range(rng.randint(0, 4)):
                pos = rng.randrange(len(chars))
                chars[pos] = rng.choice(_ZH)
            pairs.append(("".join(chars), base))
        else:
            pairs.append((sentence(), base))
    return pairs


class TestBleu:
    def test_identity_scores_one(self):
        assert bleu("今天天气很好", ["今天天气很好"], n=2) == pytest.approx(1.0)

    def test_disjoint_scores_zero(self):
        assert bleu("abc def", ["xyz uvw"], n=1) == 0.0

    def test_empty_candidate_rejected(self):
        with pytest.raises(ValueError):
            bleu("  ", ["ref"], n=1)

    def test_agrees_with_oracle_on_random_pairs(self):
        for cand, ref in random_sentence_pairs(50):
            for n in (1, 2):
                ours = bleu(cand, [ref], n=n)
                theirs = oracle_bleu(cand, [ref], n=n)
                assert abs(ours - theirs) < 1e-9, (cand, ref, n)

    def test_clipping_hand_case(self):
        # candidate 雨,雨,下 vs reference 雨,下: clipped 2 of 3, no brevity
        # penalty since the candidate is longer.
        assert bleu("雨雨下", ["雨下"], n=1) == pytest.approx(2 / 3)

    def test_brevity_penalty_hand_case(self):
        # perfect unigram precision, candidate 2 tokens vs reference 3.
        assert bleu("今天", ["今天好"], n=1) == pytest.approx(math.exp(1 - 3 / 2))

    def test_multi_reference_uses_closest_length(self):
        # closest reference length to the 2-token candidate is 2, so BP = 1.
        assert bleu("今天", ["今天很好", "今天"], n=1) == pytest.approx(1.0)

    def test_corpus_level_pools_counts(self):
        pairs = [("今天下雨", ["今天下雨"]), ("他们都很好", ["我们都很好"])]
        score = corpus_bleu(pairs, n=1)
        # 4/4 + 4/5 clipped unigrams over 9 candidate tokens, no BP (c == r).
        assert score == pytest.approx(8 / 9)

    def test_deletion_rarely_increases_scores(self):
        # Candidates are exact or lightly perturbed copies of the reference;
        # deleting a random candidate token should almost never raise the
        # score (provably never for exact copies).
        rng = random.Random(3)
        trials = 0
        bleu_ok = rouge_ok = 0
        for _ in range(300):
            n = rng.randint(4, 24)
            ref = "".join(rng.choice(_ZH) for _ in range(n))
            chars = list(ref)
            if rng.random() < 0.3:
                chars[rng.randrange(len(chars))] = rng.choice(_ZH)
            cand = "".join(chars)
            base_bleu = bleu(cand, [ref], n=2)
            base_rouge = rouge_l(cand, ref)
            kept = list(cand)
            del kept[rng.randrange(len(kept))]
            pruned = "".join(kept)
            if not pruned.strip():
                continue
            trials += 1
            if bleu(pruned, [ref], n=2) <= base_bleu + 1e-12:
                bleu_ok += 1
            if rouge_l(pruned, ref) <= base_rouge + 1e-12:
                rouge_ok += 1
        assert trials >= 250
        assert bleu_ok / trials >= 0.95
        assert rouge_ok / trials >= 0.95


class TestRougeL:
    def test_identity(self):
        assert rouge_l("同一句话", "同一句话") == pytest.approx(1.0)

    def test_no_common_characters(self):
        assert rouge_l("abc", "xyz") == 0.0

    def test_hand_case_abcde_ace(self):
        assert rouge_l("abcde", "ace") == pytest.approx(0.75)

    def test_agrees_with_oracle_on_random_pairs(self):
        for cand, ref in random_sentence_pairs(50, seed=4242):
            assert abs(rouge_l(cand, ref) - oracle_rouge_l(cand, ref)) < 1e-9

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            rouge_l("", "x")


class TestEmbedSim:
    def test_identical_strings_cosine_one(self):
        embedder = MockEmbeddingBackend(dimension=32, seed=11)
        assert embed_sim("一样的", "一样的", embedder) == pytest.approx(1.0, abs=1e-6)

    def test_matches_external_dot_product(self):
        embedder = MockEmbeddingBackend(dimension=32, seed=11)
        a, b = embedder.embed(["早上喝咖啡", "晚上看书"])
        expected = sum(x * y for x, y in zip(a, b)) / (
            math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
        )
        assert embed_sim("早上喝咖啡", "晚上看书", embedder) == pytest.approx(expected, abs=1e-9)

    def test_bounded(self):
        embedder = MockEmbeddingBackend(dimension=16, seed=2)
        for cand, ref in random_sentence_pairs(10, seed=5):
            assert -1.0 - 1e-9 <= embed_sim(cand, ref, embedder) <= 1.0 + 1e-9


class TestGhsc:
    def test_fixture_shape(self):
        transcript = load_ghsc_transcript()
        units = transcript.units()
        assert len(units) == 55
        assert len(transcript.exchanges) == 21
        skills = {u.gold_skill for u in units}
        assert HelpingSkill.CHALLENGE in skills

    def test_gold_self_score(self, ghsc_gold):
        transcript = load_ghsc_transcript()
        assert score_ghsc(transcript, ghsc_gold) == pytest.approx(1.0)

    def test_all_others_baseline_counts_fixture(self):
        transcript = load_ghsc_transcript()
        gold = transcript.gold_skills()
        others_count = sum(1 for g in gold if g is HelpingSkill.OTHERS)
        predictions = [HelpingSkill.OTHERS] * len(gold)
        assert score_ghsc(transcript, predictions) == pytest.approx(others_count / len(gold))
        assert others_count == 6

    def test_length_mismatch(self):
        transcript = load_ghsc_transcript()
        with pytest.raises(ValueError):
            score_ghsc(transcript, [HelpingSkill.OTHERS])


def quad(slot, value, stamp=None):
    return KnowledgeQuadruple(Domain.PSYCHOLOGICAL_KNOWLEDGE, slot, value, stamp)


class TestSlotValueScores:
    def test_perfect(self):
        quads = [quad("a", "喝咖啡", "morning"), quad("b", "看书", "night")]
        scores = slot_value_scores(quads, quads)
        assert scores.slot_accuracy == 1.0
        assert scores.value_rouge_l == pytest.approx(1.0)
        assert scores.stamp_accuracy == 1.0

    def test_one_of_two_slots_wrong_stampless(self):
        gold = [quad("a", "v1"), quad("b", "v2")]
        pred = [quad("a", "v1"), quad("c", "v2")]
        scores = slot_value_scores(gold, pred)
        assert scores.slot_accuracy == 0.5
        assert scores.value_rouge_l == pytest.approx(1.0)
        assert scores.stamp_accuracy is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            slot_value_scores([quad("a", "v")], [])


class TestCohenKappa:
    def test_identical_with_two_labels(self):
        assert cohen_kappa([1, 0, 1, 0], [1, 0, 1, 0]) == pytest.approx(1.0)

    def test_hand_computed_zero(self):
        assert cohen_kappa([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.0)

    def test_constant_identical_defined_as_one(self):
        assert cohen_kappa(["x", "x"], ["x", "x"]) == 1.0

    def test_monte_carlo_independence(self):
        rng = random.Random(123)
        n = 10_000
        a = [rng.randint(0, 1) for _ in range(n)]
        b = [rng.randint(0, 1) for _ in range(n)]
        assert abs(cohen_kappa(a, b)) < 0.05

    def test_kappa_never_exceeds_one(self):
        rng = random.Random(9)
        for _ in range(200):
            n = rng.randint(1, 20)
            labels = [0, 1, 2]
            a = [rng.choice(labels) for _ in range(n)]
            b = [rng.choice(labels) for _ in range(n)]
            assert cohen_kappa(a, b) <= 1.0 + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cohen_kappa([1], [1, 2])


class TestRubric:
    def score(self, rater, item, value):
        return RubricScore(
            relevance=value,
            informativeness=value,
            human_likeness=value,
            helpfulness=value,
            empathy=value,
            rater_id=rater,
            item_id=item,
        )

    def test_all_twos(self):
        agg = aggregate_rubric([self.score("r1", "i1", 2), self.score("r2", "i1", 2)])
        assert all(v == 2.0 for v in agg.means.values())

    def test_mean_of_one_and_two(self):
        agg = aggregate_rubric([self.score("r1", "i1", 1), self.score("r2", "i1", 2)])
        assert agg.means["empathy"] == pytest.approx(1.5)

    def test_pairwise_kappa_per_dimension(self):
        scores = [
            self.score("a", "i1", 2),
            self.score("a", "i2", 0),
            self.score("b", "i1", 2),
            self.score("b", "i2", 0),
        ]
        agg = aggregate_rubric(scores)
        assert agg.pairwise_kappa[("a", "b")]["relevance"] == pytest.approx(1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            self.score("r", "i", 3)


class TestEvalReport:
    def test_range_validation(self):
        with pytest.raises(ValueError):
            EvalReport(ghsc_accuracy=1.5)
        with pytest.raises(ValueError):
            EvalReport(rubric_means={"empathy": 2.5})

    def test_table_render_has_columns(self):
        report = EvalReport(
            ghsc_accuracy=0.7091,
            stsp_accuracy=0.5608,
            bleu1=0.4248,
            bleu2=0.2894,
            rouge_l=0.4475,
            embed_sim=0.8763,
            rubric_means={"relevance": 1.85, "empathy": 1.82},
        )
        table = report.render_table()
        assert "GHSC" in table and "BLEU-1/2" in table
        assert "70.91" in table and "42.48/28.94" in table
