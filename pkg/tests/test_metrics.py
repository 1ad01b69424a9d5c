import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_backends
from visinstruct.errors import BackendUnavailableError
from visinstruct.evaluation.metrics import (
    CLIP_SCALE,
    bert_score,
    clip_score,
    clip_similarity,
    dino_mean,
    dino_ratio,
    dino_score,
    greedy_f1,
)
from visinstruct.evaluation.rating import mllm_rate, parse_rating

E = np.eye(4)

# -- dino ----------------------------------------------------------------------


def test_dino_hand_arithmetic():
    emb = [np.array([0.0, 0]), np.array([1.0, 0]), np.array([0.0, 5]), np.array([0.0, 7])]
    r = dino_ratio(emb, (0, 1), (2, 3))
    assert (r.coherent_distance, r.independent_distance) == (1.0, 2.0)
    assert r.value == 0.5


def test_dino_zero_numerator():
    emb = [np.ones(3), np.ones(3), np.zeros(3), np.ones(3)]
    assert dino_ratio(emb, (0, 1), (2, 3)).value == 0.0


def test_dino_undefined_and_excluded():
    same = [np.ones(3)] * 4
    r = dino_ratio(same, (0, 1), (2, 3))
    assert r.value is None and not r.defined
    m = dino_mean([r, dino_ratio([np.zeros(1), np.ones(1), np.zeros(1), 2 * np.ones(1)], (0, 1), (2, 3))])
    assert m.mean == 0.5 and m.n == 1 and m.skipped == 1


def test_dino_scale_invariance_hand_case():
    emb = [np.array([0.0, 0]), np.array([1.0, 0]), np.array([0.0, 5]), np.array([0.0, 7])]
    assert dino_ratio([3.7 * e for e in emb], (0, 1), (2, 3)).value == pytest.approx(0.5, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(1e-3, 1e3))
def test_dino_scale_invariance_property(seed, s):
    emb = list(np.random.default_rng(seed).standard_normal((6, 5)))
    a = dino_ratio(emb, (1, 2), (3, 4)).value
    b = dino_ratio([s * e for e in emb], (1, 2), (3, 4)).value
    assert b == pytest.approx(a, rel=1e-9)


def test_dino_score_embeds_only_the_pairs():
    seen = []
    imgs = ["a", "b", "c", "d", "e", "f"]

    def embed(img):
        seen.append(img)
        return np.array([float(ord(img))])

    r = dino_score(imgs, (1, 2), (4, 5), embed)
    assert sorted(seen) == ["b", "c", "e", "f"] and r.value == 1.0


# -- clip ----------------------------------------------------------------------


def test_clip_identical_and_orthogonal():
    assert clip_similarity(E[0], E[0]) == CLIP_SCALE == 2.5
    assert clip_similarity(E[0], E[1]) == 0.0
    assert clip_similarity(E[0], -E[0]) == 0.0  # clamped
    assert clip_similarity(np.zeros(4), E[0]) is None


def test_clip_score_mean_and_skips():
    lookup = {"i0": E[0], "i1": E[1], "i2": E[2]}
    res = clip_score(["i0", "i1", None], ["x", "y", "z"], lookup.get, lambda ts: [E[0], E[0], E[0]])
    assert res.items == [2.5, 0.0, None] and res.mean == 1.25 and res.n == 2 and res.skipped == 1


def test_clip_text_embedder_failure_skips_all():
    def boom(_):
        raise BackendUnavailableError("down", 3)

    res = clip_score(["i"], ["x"], lambda i: E[0], boom)
    assert res.mean is None and res.skipped == 1


# -- bert ----------------------------------------------------------------------


def token_vectors(text):
    """One-hot per distinct word over a small vocabulary."""
    vocab = ["egg", "pan", "oil", "hot", "tire", "pump", "wheel", "bike"]
    return np.array([np.eye(len(vocab))[vocab.index(w)] for w in text.split()])


def embed_tokens(texts):
    return [token_vectors(t) for t in texts]


def test_greedy_f1_cases():
    assert greedy_f1(token_vectors("egg pan"), token_vectors("egg pan")) == pytest.approx(1.0)
    assert greedy_f1(token_vectors("egg pan"), token_vectors("tire pump")) == 0.0
    # precision 1, recall 0.5
    assert greedy_f1(token_vectors("egg"), token_vectors("egg pan")) == pytest.approx(2 * 0.5 / 1.5)
    assert greedy_f1(np.zeros((0, 8)), token_vectors("egg")) == 0.0


def test_bert_exact_match_and_disjoint():
    caps = {"a": "egg pan oil", "b": "tire pump"}
    res = bert_score(["a"], ["egg pan oil"], caps.get, embed_tokens)
    assert res.mean == pytest.approx(1.0)
    res = bert_score(["b"], ["egg pan"], caps.get, embed_tokens)
    assert res.mean == 0.0


def test_bert_empty_caption_scores_zero():
    res = bert_score(["a"], ["egg"], lambda img: "  ", embed_tokens)
    assert res.items == [0.0] and res.n == 1


@settings(max_examples=100, deadline=None)
@given(st.permutations(range(5)))
def test_metrics_permutation_equivariant(perm):
    r = np.random.default_rng(0)
    ivec = {f"i{k}": r.standard_normal(4) for k in range(5)}
    tvec = {f"x{k}": r.standard_normal(4) for k in range(5)}
    caps = {f"i{k}": w for k, w in enumerate(["egg pan", "oil", "tire pump", "bike wheel", "hot egg"])}
    exprs = {f"x{k}": w for k, w in enumerate(["egg", "oil hot", "tire", "wheel", "pan"])}
    imgs, xs = [f"i{k}" for k in range(5)], [f"x{k}" for k in range(5)]
    pi, px = [imgs[k] for k in perm], [xs[k] for k in perm]

    def clip(a, b):
        return clip_score(a, b, ivec.get, lambda ts: [tvec[t] for t in ts]).mean

    def bert(a, b):
        return bert_score(a, [exprs[x] for x in b], caps.get, embed_tokens).mean

    assert clip(pi, px) == pytest.approx(clip(imgs, xs), rel=1e-12)
    assert bert(pi, px) == pytest.approx(bert(imgs, xs), rel=1e-12)


# -- ratings -------------------------------------------------------------------


@pytest.mark.parametrize("reply,val", [("4", 4), ("Score: 5/5", 5), ("7", None), ("0", None), ("great", None),
                                       ("I'd say 3.", 3), ("-2", None)])
def test_parse_rating(reply, val):
    assert parse_rating(reply) == val


def rate_entries(replies):
    return [{"capability": "TextGenerator", "match": {"purpose": "rate"}, "response": r} for r in replies]


def test_rating_reprompt_takes_second_answer(small_runtime):
    backends, _ = make_backends(small_runtime, rate_entries(["7", "4"]))
    ratings = mllm_rate(["img"], ["Fry the egg."], "Eggs", backends, series=False)
    assert ratings.semantic == [4]
    purposes = [r.purpose for r in backends.log.records]
    assert purposes == ["rate", "rate"]


def test_rating_all_fives(small_runtime):
    backends, _ = make_backends(small_runtime, rate_entries(["5"] * 5))
    r = mllm_rate(["a", "b", "c"], ["s1", "s2", "s3"], "T", backends)
    assert r.semantic_mean == 5.0 and r.logic == 5 and r.illustrative == 5


def test_rating_backend_failure_is_noted(small_runtime):
    backends, _ = make_backends(small_runtime, [
        {"capability": "TextGenerator", "match": {"purpose": "rate"}, "response": {"error": "quota"}}])
    r = mllm_rate(["a"], ["s"], "T", backends, series=False)
    assert r.semantic == [] or r.semantic_mean is None
    assert r.note and "quota" in r.note
