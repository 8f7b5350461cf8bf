"""Seed derivation, negative corruption, epoch batching, label smoothing."""

import numpy as np
import pytest

from kgembed.datasets import FilterIndex, TripleStore
from kgembed.sampling import (
    LCWATask,
    NegativeSampler,
    derive_seed,
    lcwa_batches,
    rng_for,
    slcwa_batches,
    smooth_labels,
)


def toy_store():
    train = [
        ("a", "r0", "b"), ("a", "r0", "c"), ("a", "r0", "d"),
        ("b", "r1", "e"), ("c", "r1", "e"), ("d", "r1", "e"),
    ]
    return TripleStore.from_labeled_triples(train, valid=[("a", "r2", "e")])


# ---------------------------------------------------------------------------
# seeds
# ---------------------------------------------------------------------------

def test_derive_seed_is_deterministic_and_stage_dependent():
    assert derive_seed(42, "init") == derive_seed(42, "init")
    assert derive_seed(42, "init") != derive_seed(42, "shuffle")
    assert derive_seed(42, "init") != derive_seed(43, "init")
    assert 0 <= derive_seed(2**63, "x") < 2**64


def test_rng_for_streams_are_reproducible():
    a = rng_for(7, "trial-0/config").random(5)
    b = rng_for(7, "trial-0/config").random(5)
    c = rng_for(7, "trial-1/config").random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------

def test_sampler_rejects_unknown_kind_and_missing_filter():
    s = toy_store()
    with pytest.raises(ValueError, match="unknown sampler kind"):
        NegativeSampler(s, kind="importance")
    with pytest.raises(ValueError, match="filter index"):
        NegativeSampler(s, filtered=True)


def test_corrupt_changes_exactly_one_side():
    s = toy_store()
    sampler = NegativeSampler(s, kind="uniform")
    rng = np.random.default_rng(0)
    pos = s.triples["train"]
    neg = sampler.corrupt(rng, pos, 7)
    assert neg.shape == (pos.shape[0], 7, 3)
    for b in range(pos.shape[0]):
        for k in range(7):
            h, r, t = neg[b, k]
            assert r == pos[b, 1]  # relation is never corrupted
            head_changed = h != pos[b, 0]
            tail_changed = t != pos[b, 2]
            assert head_changed != tail_changed  # exactly one side


def test_replacement_never_reproduces_the_original():
    s = toy_store()
    sampler = NegativeSampler(s, kind="uniform")
    rng = np.random.default_rng(1)
    pos = np.tile(s.triples["train"][:1], (200, 1))
    neg = sampler.corrupt(rng, pos, 5)
    changed_heads = neg[neg[:, :, 0] != pos[0, 0]][:, 0]
    changed_tails = neg[neg[:, :, 2] != pos[0, 2]][:, 2]
    assert pos[0, 0] not in changed_heads
    assert pos[0, 2] not in changed_tails


def test_replacement_is_uniform_over_other_entities():
    s = toy_store()
    sampler = NegativeSampler(s, kind="uniform")
    rng = np.random.default_rng(2)
    pos = np.array([[0, 0, 1]])
    neg = sampler.corrupt(rng, np.tile(pos, (4000, 1)), 4)
    tails = neg[:, :, 2][neg[:, :, 2] != 1]
    counts = np.bincount(tails, minlength=s.num_entities)
    assert counts[1] == 0
    others = counts[np.arange(s.num_entities) != 1]
    # the four remaining entities should split the draws about evenly
    expect = tails.size / others.size
    assert np.all(np.abs(others - expect) < 4 * np.sqrt(expect))


def test_uniform_sampler_halves_sides():
    s = toy_store()
    sampler = NegativeSampler(s, kind="uniform")
    assert sampler.head_probability(0) == 0.5
    rng = np.random.default_rng(3)
    pos = np.tile(s.triples["train"][:1], (20000, 1))
    neg = sampler.corrupt(rng, pos, 1)
    frac_head = np.mean(neg[:, 0, 0] != pos[0, 0])
    assert abs(frac_head - 0.5) < 0.01


def test_bernoulli_probabilities_follow_relation_stats():
    s = toy_store()
    sampler = NegativeSampler(s, kind="bernoulli")
    r0 = s.relation_to_id["r0"]  # tph 3, hpt 1 -> corrupt head 3/4
    r1 = s.relation_to_id["r1"]  # tph 1, hpt 3 -> corrupt head 1/4
    r2 = s.relation_to_id["r2"]  # untrained -> 1/2
    assert sampler.head_probability(r0) == pytest.approx(0.75)
    assert sampler.head_probability(r1) == pytest.approx(0.25)
    assert sampler.head_probability(r2) == pytest.approx(0.5)


def test_bernoulli_empirical_frequency_matches_probability():
    s = toy_store()
    sampler = NegativeSampler(s, kind="bernoulli")
    rng = np.random.default_rng(4)
    r0 = s.relation_to_id["r0"]
    pos = np.array([[s.entity_to_id["a"], r0, s.entity_to_id["b"]]])
    neg = sampler.corrupt(rng, np.tile(pos, (30000, 1)), 1)
    frac_head = np.mean(neg[:, 0, 0] != pos[0, 0])
    assert abs(frac_head - 0.75) < 0.01


def test_corruption_side_redrawn_per_negative():
    # with K negatives from one positive, both sides must show up within a row
    s = toy_store()
    sampler = NegativeSampler(s, kind="uniform")
    rng = np.random.default_rng(5)
    pos = s.triples["train"][:1]
    neg = sampler.corrupt(rng, np.tile(pos, (50, 1)), 16)
    head_changed = neg[:, :, 0] != pos[0, 0]
    rows_with_both = np.mean(np.any(head_changed, axis=1) & np.any(~head_changed, axis=1))
    assert rows_with_both > 0.9


def test_filtered_sampling_avoids_known_true_triples():
    # "a" r0 connects to b, c, d out of six entities, so unfiltered tail
    # corruption collides often; filtering must avoid all of b, c, d
    s = toy_store()
    fi = FilterIndex(s, splits=("train",))
    sampler = NegativeSampler(s, kind="uniform", filtered=True, filter_index=fi)
    rng = np.random.default_rng(6)
    a, r0 = s.entity_to_id["a"], s.relation_to_id["r0"]
    b = s.entity_to_id["b"]
    pos = np.array([[a, r0, b]])
    neg = sampler.corrupt(rng, np.tile(pos, (300, 1)), 4)
    for row in neg.reshape(-1, 3):
        assert not fi.contains(*row)


def test_unfiltered_sampling_does_produce_false_negatives():
    s = toy_store()
    fi = FilterIndex(s, splits=("train",))
    sampler = NegativeSampler(s, kind="uniform")
    rng = np.random.default_rng(7)
    a, r0 = s.entity_to_id["a"], s.relation_to_id["r0"]
    pos = np.array([[a, r0, s.entity_to_id["b"]]])
    neg = sampler.corrupt(rng, np.tile(pos, (300, 1)), 4)
    hits = sum(fi.contains(*row) for row in neg.reshape(-1, 3))
    assert hits > 0


# ---------------------------------------------------------------------------
# epoch batching
# ---------------------------------------------------------------------------

def test_slcwa_batches_partition_the_training_split():
    s = toy_store()
    rng = np.random.default_rng(8)
    batches = list(slcwa_batches(s, batch_size=4, rng=rng))
    assert [b.shape[0] for b in batches] == [4, 2]
    seen = np.concatenate(batches)
    train = s.triples["train"]
    assert sorted(map(tuple, seen)) == sorted(map(tuple, train))


def test_slcwa_batches_shuffle_differs_by_rng_state():
    s = toy_store()
    a = np.concatenate(list(slcwa_batches(s, 6, np.random.default_rng(1))))
    b = np.concatenate(list(slcwa_batches(s, 6, np.random.default_rng(1))))
    c = np.concatenate(list(slcwa_batches(s, 6, np.random.default_rng(2))))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_lcwa_task_groups_pairs_and_tails():
    s = toy_store()
    task = LCWATask(s)
    a, r0 = s.entity_to_id["a"], s.relation_to_id["r0"]
    assert len(task) == 4  # (a,r0), (b,r1), (c,r1), (d,r1)
    i = [tuple(p) for p in task.pairs].index((a, r0))
    want = sorted(s.entity_to_id[x] for x in ("b", "c", "d"))
    assert task.tails[i].tolist() == want
    labels = task.label_matrix([i])
    assert labels.shape == (1, s.num_entities)
    assert labels[0].sum() == 3
    assert np.all(labels[0, want] == 1.0)


def test_lcwa_batches_cover_every_pair_once():
    s = toy_store()
    task = LCWATask(s)
    rng = np.random.default_rng(9)
    seen = []
    for h_ids, r_ids, labels in lcwa_batches(task, batch_size=3, rng=rng):
        assert labels.shape == (len(h_ids), s.num_entities)
        seen.extend(zip(h_ids.tolist(), r_ids.tolist()))
    assert sorted(seen) == sorted(map(tuple, task.pairs.tolist()))


def test_lcwa_batches_apply_smoothing_and_normalization():
    s = toy_store()
    task = LCWATask(s)
    rng = np.random.default_rng(10)
    for _, _, labels in lcwa_batches(task, 10, rng, epsilon=0.1, normalize=True):
        assert np.allclose(labels.sum(axis=1), 1.0)
        assert np.all(labels > 0)


# ---------------------------------------------------------------------------
# label smoothing
# ---------------------------------------------------------------------------

def test_smooth_labels_values():
    labels = np.array([[1.0, 0.0, 0.0, 0.0]])
    out = smooth_labels(labels, 0.3, 4)
    assert out[0, 0] == pytest.approx(0.7)
    assert np.all(out[0, 1:] == pytest.approx(0.3 / 3))


def test_smooth_labels_epsilon_zero_is_identity():
    labels = np.array([[1.0, 0.0], [1.0, 1.0]])
    assert np.array_equal(smooth_labels(labels, 0.0, 2), labels)


def test_smooth_labels_normalize_for_cross_entropy():
    labels = np.array([[1.0, 1.0, 0.0]])
    out = smooth_labels(labels, 0.0, 3, normalize=True)
    assert np.allclose(out, [[0.5, 0.5, 0.0]])
    out2 = smooth_labels(labels, 0.1, 3, normalize=True)
    assert out2.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError, match="all-zero"):
        smooth_labels(np.zeros((1, 3)), 0.0, 3, normalize=True)


def test_smooth_labels_range_check():
    with pytest.raises(ValueError, match="label smoothing"):
        smooth_labels(np.ones((1, 2)), 1.0, 2)
    with pytest.raises(ValueError, match="label smoothing"):
        smooth_labels(np.ones((1, 2)), -0.1, 2)
