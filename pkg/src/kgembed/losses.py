"""The eight training losses, all mean-reduced.

Pointwise losses consume (score, label) pairs; labels are {0, 1} for the
square error and binary cross entropy, and are mapped to {-1, +1} signs for
the softplus and hinge variants (smoothed labels map to soft signs).
Pairwise losses consume a positive score and its block of negative scores,
one pair per negative. The self-adversarial loss weights each negative by a
softmax over the current negative scores, with the weights detached from the
gradient. The cross entropy treats every (h, r) group as a single softmax
over all entities against a normalized label distribution.

Everything is written in terms of softplus / logsumexp so large scores do
not overflow: log sigmoid(x) = -softplus(-x).
"""

from dataclasses import dataclass

import numpy as np

POINTWISE_KINDS = ("square_error", "bcel", "spl", "pointwise_hinge")
PAIRWISE_KINDS = ("mrl", "pairwise_logistic")
KINDS = POINTWISE_KINDS + PAIRWISE_KINDS + ("nssal", "cel")

# which losses make sense under which training approach
SLCWA_KINDS = POINTWISE_KINDS + PAIRWISE_KINDS + ("nssal",)
LCWA_KINDS = POINTWISE_KINDS + ("cel",)


@dataclass
class LossSpec:
    """Loss kind plus its hyperparameters.

    margin is the hinge / self-adversarial margin (lambda or gamma);
    adversarial_temperature is the softmax temperature of the
    self-adversarial weights. Both are ignored by kinds that do not use them.
    """

    kind: str
    margin: float = 1.0
    adversarial_temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.adversarial_temperature <= 0:
            raise ValueError("adversarial_temperature must be positive")

    def to_dict(self):
        return {
            "kind": self.kind,
            "margin": self.margin,
            "adversarial_temperature": self.adversarial_temperature,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def _sign_labels(labels):
    # {0,1} -> {-1,+1}; smoothed labels become soft signs in (-1, 1)
    return 2.0 * np.asarray(labels, dtype=np.float64) - 1.0


def pointwise_loss(g, spec, scores, labels):
    """Mean pointwise loss of a score node against fixed labels.

    scores: node of any shape; labels: array broadcastable to it.
    """
    labels = np.broadcast_to(np.asarray(labels, dtype=np.float64), scores.shape)
    if spec.kind == "square_error":
        lab = g.constant(labels)
        return (0.5 * g.square(scores - lab)).mean()
    if spec.kind == "bcel":
        lab = g.constant(labels)
        one_minus = g.constant(1.0 - labels)
        return (lab * g.softplus(-scores) + one_minus * g.softplus(scores)).mean()
    if spec.kind == "spl":
        sign = g.constant(_sign_labels(labels))
        return g.softplus(-(sign * scores)).mean()
    if spec.kind == "pointwise_hinge":
        sign = g.constant(_sign_labels(labels))
        return g.relu(spec.margin - sign * scores).mean()
    raise ValueError(f"{spec.kind!r} is not a pointwise loss")


def pairwise_loss(g, spec, pos_scores, neg_scores):
    """Mean pairwise loss; each positive is paired with each of its negatives.

    pos_scores: (B,) node; neg_scores: (B, K) node. The margin ranking loss
    is relu(margin + f(neg) - f(pos)); the logistic variant is
    softplus(f(neg) - f(pos)).
    """
    B = pos_scores.shape[0]
    delta = neg_scores - pos_scores.reshape((B, 1))
    if spec.kind == "mrl":
        return g.relu(spec.margin + delta).mean()
    if spec.kind == "pairwise_logistic":
        return g.softplus(delta).mean()
    raise ValueError(f"{spec.kind!r} is not a pairwise loss")


def nssal_loss(g, spec, pos_scores, neg_scores):
    """Self-adversarial negative sampling loss.

    L = softplus(-(margin + f(pos))) + sum_k w_k softplus(margin + f(neg_k)),
    averaged over the batch, where w = softmax(temperature * f(neg)) is
    computed from the current negative scores and detached from the gradient.
    Requires at least one negative per positive.
    """
    if neg_scores.value.ndim != 2 or neg_scores.shape[1] < 1:
        raise ValueError("self-adversarial loss needs at least one negative per positive")
    B = pos_scores.shape[0]
    logits = spec.adversarial_temperature * neg_scores.value
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    weights = g.constant(w)  # detached
    pos_term = g.softplus(-(spec.margin + pos_scores))
    neg_term = (weights * g.softplus(spec.margin + neg_scores)).sum(axis=1)
    return (pos_term + neg_term).mean()


def cel_loss(g, spec, scores, labels):
    """Softmax cross entropy over each row of an all-entities score matrix.

    scores: (B, E) node; labels: (B, E) array of nonnegative rows summing
    to 1 (rows of all zeros are rejected). Equals
    mean_b [ logsumexp(scores_b) - sum_e labels_be * scores_be ].
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError(f"labels shape {labels.shape} != scores shape {scores.shape}")
    if np.any(labels < 0):
        raise ValueError("cross-entropy labels must be nonnegative")
    sums = labels.sum(axis=1)
    if np.any(sums == 0):
        raise ValueError("cross-entropy labels must not be all-zero rows")
    if not np.allclose(sums, 1.0, atol=1e-9):
        raise ValueError("cross-entropy labels must sum to 1 per row")
    lse = g.logsumexp(scores, axis=1)
    dot = (g.constant(labels) * scores).sum(axis=1)
    return (lse - dot).mean()


def slcwa_loss(g, spec, pos_scores, neg_scores):
    """Dispatch for the negative-sampling training approach.

    pos_scores: (B,) node; neg_scores: (B, K) node. Pointwise kinds see the
    positives with label 1 and the negatives with label 0, averaged over all
    B * (K + 1) scored triples.
    """
    if spec.kind in POINTWISE_KINDS:
        B, K = neg_scores.shape
        flat = g.concat([pos_scores, neg_scores.reshape((B * K,))], axis=0)
        labels = np.concatenate([np.ones(B), np.zeros(B * K)])
        return pointwise_loss(g, spec, flat, labels)
    if spec.kind in PAIRWISE_KINDS:
        return pairwise_loss(g, spec, pos_scores, neg_scores)
    if spec.kind == "nssal":
        return nssal_loss(g, spec, pos_scores, neg_scores)
    raise ValueError(f"loss {spec.kind!r} is not usable with negative sampling")


def lcwa_loss(g, spec, scores, labels):
    """Dispatch for the 1-N training approach.

    scores: (B, E) node; labels: (B, E) array (multi-hot, possibly smoothed;
    already normalized for the cross entropy).
    """
    if spec.kind in POINTWISE_KINDS:
        return pointwise_loss(g, spec, scores, labels)
    if spec.kind == "cel":
        return cel_loss(g, spec, scores, labels)
    raise ValueError(f"loss {spec.kind!r} is not usable with 1-N scoring")
