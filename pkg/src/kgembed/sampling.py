"""Seed derivation, negative sampling and batch iteration.

One master seed drives everything; child seeds are the master XORed with a
stage constant derived from a stage name, so independent stages (parameter
init, corruption, shuffling, each HPO trial) get decorrelated but fully
reproducible streams from numpy's seeded PCG64 generator.

Negative sampling corrupts exactly one side of a positive triple. The side
is an even coin under uniform sampling; under Bernoulli sampling the head is
corrupted with probability tph / (tph + hpt), which corrupts the dense side
of skewed relations less often and so produces fewer false negatives. The
replacement entity is uniform over all entities except the original one.
The corrupted side is redrawn per negative, never once per positive.
"""

import zlib

import numpy as np

from .datasets import relation_stats


def derive_seed(master, stage):
    """Child seed for a named stage: master XOR crc32(stage name)."""
    return (int(master) ^ zlib.crc32(stage.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


def rng_for(master, stage):
    return np.random.default_rng(derive_seed(master, stage))


class NegativeSampler:
    """Vectorized one-side corruption of positive triple batches.

    kind: "uniform" corrupts head or tail with equal probability;
    "bernoulli" uses per-relation tph/hpt statistics from the training split.
    With filtered=True, negatives that collide with known true triples are
    redrawn a bounded number of times (default off: the occasional false
    negative is part of the training signal).
    """

    MAX_REDRAWS = 20

    def __init__(self, store, kind="uniform", filtered=False, filter_index=None):
        if kind not in ("uniform", "bernoulli"):
            raise ValueError(f"unknown sampler kind {kind!r}")
        self.kind = kind
        self.num_entities = store.num_entities
        self.filtered = filtered
        self._filter = filter_index
        if filtered and filter_index is None:
            raise ValueError("filtered sampling needs a filter index")
        if kind == "bernoulli":
            tph, hpt = relation_stats(store)
            self.head_prob = tph / (tph + hpt)
        else:
            self.head_prob = None

    def head_probability(self, r):
        """Probability that a positive with relation r gets its head corrupted."""
        if self.kind == "uniform":
            return 0.5
        return float(self.head_prob[r])

    def _replacement(self, rng, original):
        # uniform over all entities except the original: draw from E-1 slots
        # and shift draws at or above the original up by one
        draw = rng.integers(0, self.num_entities - 1, size=original.shape)
        return draw + (draw >= original)

    def corrupt(self, rng, positives, num_negatives):
        """(B, 3) positives -> (B, K, 3) negatives."""
        positives = np.asarray(positives, dtype=np.intp).reshape(-1, 3)
        B = positives.shape[0]
        K = int(num_negatives)
        neg = np.repeat(positives[:, None, :], K, axis=1)
        if self.kind == "uniform":
            corrupt_head = rng.random((B, K)) < 0.5
        else:
            p = self.head_prob[positives[:, 1]]
            corrupt_head = rng.random((B, K)) < p[:, None]

        originals = np.where(corrupt_head, neg[:, :, 0], neg[:, :, 2])
        replacement = self._replacement(rng, originals)
        neg[:, :, 0] = np.where(corrupt_head, replacement, neg[:, :, 0])
        neg[:, :, 2] = np.where(corrupt_head, neg[:, :, 2], replacement)

        if self.filtered:
            self._redraw_true(rng, neg, corrupt_head)
        return neg

    def _redraw_true(self, rng, neg, corrupt_head):
        fi = self._filter
        B, K, _ = neg.shape
        for b in range(B):
            for k in range(K):
                h, r, t = neg[b, k]
                tries = 0
                while fi.contains(h, r, t) and tries < self.MAX_REDRAWS:
                    original = h if corrupt_head[b, k] else t
                    repl = int(self._replacement(rng, np.asarray(original)))
                    if corrupt_head[b, k]:
                        h = repl
                    else:
                        t = repl
                    tries += 1
                neg[b, k, 0], neg[b, k, 2] = h, t


def slcwa_batches(store, batch_size, rng):
    """Shuffled contiguous batches of training triples, one epoch's worth.

    The epoch is a permutation partition: every positive appears exactly
    once; the final batch may be short.
    """
    train = store.triples["train"]
    order = rng.permutation(train.shape[0])
    for start in range(0, train.shape[0], batch_size):
        yield train[order[start : start + batch_size]]


class LCWATask:
    """Training-split (h, r) groups with their sets of true tails.

    Under 1-N scoring every distinct (head, relation) pair is one example
    whose label vector marks all tails observed in the training split.
    """

    def __init__(self, store):
        groups = {}
        for h, r, t in store.triples["train"]:
            groups.setdefault((int(h), int(r)), []).append(int(t))
        self.pairs = np.array(sorted(groups), dtype=np.intp).reshape(-1, 2)
        self.tails = [np.array(sorted(set(groups[tuple(p)])), dtype=np.intp)
                      for p in self.pairs]
        self.num_entities = store.num_entities

    def __len__(self):
        return self.pairs.shape[0]

    def label_matrix(self, indices):
        """Multi-hot {0,1} label rows for the given group indices."""
        labels = np.zeros((len(indices), self.num_entities))
        for row, i in enumerate(indices):
            labels[row, self.tails[i]] = 1.0
        return labels


def smooth_labels(labels, epsilon, num_entities, normalize=False):
    """Label smoothing for 1-N training.

    Maps 1 -> 1 - epsilon and 0 -> epsilon / (E - 1). With normalize=True
    (cross entropy) each row is then rescaled to sum to exactly 1; the
    cross entropy requires a distribution, so rows are normalized even when
    epsilon is 0.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("label smoothing must be in [0, 1)")
    out = np.asarray(labels, dtype=np.float64)
    if epsilon > 0.0:
        out = out * (1.0 - epsilon) + (1.0 - out) * (epsilon / (num_entities - 1))
    if normalize:
        sums = out.sum(axis=1, keepdims=True)
        if np.any(sums == 0):
            raise ValueError("cannot normalize an all-zero label row")
        out = out / sums
    return out


def lcwa_batches(task, batch_size, rng, epsilon=0.0, normalize=False):
    """Shuffled (head_ids, relation_ids, labels) batches for one epoch."""
    order = rng.permutation(len(task))
    for start in range(0, len(task), batch_size):
        idx = order[start : start + batch_size]
        pairs = task.pairs[idx]
        labels = task.label_matrix(idx)
        labels = smooth_labels(labels, epsilon, task.num_entities, normalize=normalize)
        yield pairs[:, 0], pairs[:, 1], labels
