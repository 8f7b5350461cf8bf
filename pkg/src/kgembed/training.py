"""Training loops: Adam and Adadelta, the two training approaches, and
checkpoint-based early stopping.

A training step builds one graph: gather embeddings, score, loss, backward,
then a dense optimizer update per parameter tensor. Steps whose gradients
contain non-finite values are skipped and counted rather than letting one
overflow poison the parameters; a run whose epoch loss itself goes non-finite
raises DivergenceError.
"""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph
from .losses import LossSpec, slcwa_loss, lcwa_loss, SLCWA_KINDS, LCWA_KINDS
from .sampling import NegativeSampler, LCWATask, slcwa_batches, lcwa_batches, rng_for

log = logging.getLogger(__name__)

APPROACHES = ("slcwa", "lcwa")


class DivergenceError(RuntimeError):
    """Training produced non-finite losses or lost every step of an epoch."""


@dataclass
class OptimizerSpec:
    kind: str = "adam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.95
    eps: float = None  # resolved per kind below

    def __post_init__(self):
        if self.kind not in ("adam", "adadelta"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.eps is None:
            self.eps = 1e-8 if self.kind == "adam" else 1e-6

    def to_dict(self):
        return {"kind": self.kind, "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "rho": self.rho, "eps": self.eps}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


class Adam:
    """Adam with bias correction; state is dense per parameter tensor."""

    def __init__(self, spec, params):
        self.spec = spec
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        s = self.spec
        self.t += 1
        c1 = 1.0 - s.beta1 ** self.t
        c2 = 1.0 - s.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            params[k] -= s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)


class Adadelta:
    """Adadelta: running averages of squared gradients and squared updates."""

    def __init__(self, spec, params):
        self.spec = spec
        self.sq_grad = {k: np.zeros_like(v) for k, v in params.items()}
        self.sq_delta = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        s = self.spec
        for k, g in grads.items():
            sq = self.sq_grad[k]
            acc = self.sq_delta[k]
            sq *= s.rho
            sq += (1.0 - s.rho) * (g * g)
            delta = np.sqrt((acc + s.eps) / (sq + s.eps)) * g
            acc *= s.rho
            acc += (1.0 - s.rho) * (delta * delta)
            params[k] -= s.lr * delta


def make_optimizer(spec, params):
    cls = Adam if spec.kind == "adam" else Adadelta
    return cls(spec, params)


@dataclass
class TrainingConfig:
    """Everything train() needs beyond model and store."""

    approach: str = "slcwa"
    loss: LossSpec = field(default_factory=lambda: LossSpec("mrl"))
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    batch_size: int = 256
    num_epochs: int = 1000
    num_negatives: int = 32          # negatives per positive (slcwa)
    sampler: str = "uniform"         # "uniform" or "bernoulli"
    filtered_sampling: bool = False
    label_smoothing: float = 0.0     # lcwa only
    seed: int = 0
    eval_frequency: int = 50         # epochs between validation evaluations
    patience: int = 100              # epochs without improvement before stopping
    stopper_metric: str = "hits_at_10"

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"unknown training approach {self.approach!r}")
        allowed = SLCWA_KINDS if self.approach == "slcwa" else LCWA_KINDS
        if self.loss.kind not in allowed:
            raise ValueError(
                f"loss {self.loss.kind!r} cannot be trained under {self.approach}"
            )
        if self.approach == "slcwa" and self.num_negatives < 1:
            raise ValueError("need at least one negative per positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.patience < self.eval_frequency:
            raise ValueError("patience shorter than the evaluation frequency never fires")
        if self.stopper_metric not in ("hits_at_10", "mrr"):
            raise ValueError("stopper metric must be 'hits_at_10' or 'mrr'")


def _clamped(g, model, scores):
    lo_hi = model.score_clamp
    if lo_hi is None:
        return scores
    return g.clip(scores, lo_hi[0], lo_hi[1])


def _finite(grads):
    return all(np.all(np.isfinite(v)) for v in grads.values())


def train_epoch(model, params, store, config, optimizer, rng, sampler=None, task=None):
    """One pass over the training split. Returns (mean loss, skipped steps)."""
    losses = []
    skipped = 0

    def run_step(build):
        nonlocal skipped
        g = Graph()
        P = model.leaves(g, params, trainable=True)
        loss = build(g, P)
        g.backward(loss)
        grads = {k: node.grad for k, node in P.items() if node.grad is not None}
        if not _finite(grads) or not np.isfinite(loss.value):
            skipped += 1
            log.warning("skipping optimizer step: non-finite gradient or loss")
            return
        optimizer.step(params, grads)
        model.project_parameters(params)
        losses.append(float(loss.value))

    if config.approach == "slcwa":
        for pos in slcwa_batches(store, config.batch_size, rng):
            neg = sampler.corrupt(rng, pos, config.num_negatives)
            B, K = neg.shape[0], neg.shape[1]
            flat = neg.reshape(-1, 3)

            def build(g, P, pos=pos, flat=flat, B=B, K=K):
                pos_scores = model.score_triples(g, P, pos[:, 0], pos[:, 1], pos[:, 2])
                neg_scores = model.score_triples(g, P, flat[:, 0], flat[:, 1], flat[:, 2])
                pos_scores = _clamped(g, model, pos_scores)
                neg_scores = _clamped(g, model, neg_scores).reshape((B, K))
                return slcwa_loss(g, config.loss, pos_scores, neg_scores)

            run_step(build)
    else:
        normalize = config.loss.kind == "cel"
        for h_ids, r_ids, labels in lcwa_batches(
            task, config.batch_size, rng,
            epsilon=config.label_smoothing, normalize=normalize,
        ):
            def build(g, P, h_ids=h_ids, r_ids=r_ids, labels=labels):
                scores = _clamped(g, model, model.score_tails(g, P, h_ids, r_ids))
                return lcwa_loss(g, config.loss, scores, labels)

            run_step(build)

    if not losses:
        raise DivergenceError("every step of the epoch was skipped")
    mean_loss = float(np.mean(losses))
    if not np.isfinite(mean_loss):
        raise DivergenceError(f"epoch loss is not finite: {mean_loss}")
    return mean_loss, skipped


class EarlyStopper:
    """Patience-based stopping on a higher-is-better validation metric.

    Evaluations happen every `frequency` epochs; the run stops once
    (current epoch - best epoch) >= patience, and the caller takes the
    parameters checkpointed at the best evaluation.
    """

    def __init__(self, frequency=50, patience=100):
        if patience < frequency:
            raise ValueError("patience shorter than the evaluation frequency never fires")
        self.frequency = frequency
        self.patience = patience
        self.best_metric = -np.inf
        self.best_epoch = 0
        self.best_params = None

    def should_evaluate(self, epoch):
        return epoch % self.frequency == 0

    def update(self, epoch, metric, params):
        """Record an evaluation; returns True when training should stop."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.best_params = {k: v.copy() for k, v in params.items()}
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainResult:
    params: dict
    epochs_run: int
    best_epoch: int
    best_metric: float
    losses: list
    skipped_steps: int
    trace: list
    stopped: str = "epoch_cap"  # epoch_cap | early_stop | deadline


def train(model, params, store, config, evaluate_fn=None, trace_path=None,
          deadline=None):
    """Full training run with optional early stopping.

    evaluate_fn(params) -> float is called on the schedule in `config`; when
    provided, the result carries the best-checkpoint parameters, otherwise
    the final ones. The trace is one JSON-able record per epoch:
    {"epoch", "loss", "metric", "timestamp"}.

    deadline is a time.monotonic() timestamp; once an epoch finishes past
    it, training stops at that boundary (an epoch is never cut short).
    """
    rng = rng_for(config.seed, "training")
    optimizer = make_optimizer(config.optimizer, params)
    sampler = task = None
    if config.approach == "slcwa":
        from .datasets import FilterIndex

        fi = FilterIndex(store, splits=("train",)) if config.filtered_sampling else None
        sampler = NegativeSampler(
            store, kind=config.sampler, filtered=config.filtered_sampling, filter_index=fi
        )
    else:
        task = LCWATask(store)

    stopper = EarlyStopper(config.eval_frequency, config.patience) if evaluate_fn else None
    losses, trace = [], []
    skipped_total = 0
    trace_file = open(trace_path, "w", encoding="utf-8") if trace_path else None
    epochs_run = 0
    stopped = "epoch_cap"
    try:
        for epoch in range(1, config.num_epochs + 1):
            epochs_run = epoch
            loss, skipped = train_epoch(
                model, params, store, config, optimizer, rng, sampler=sampler, task=task
            )
            losses.append(loss)
            skipped_total += skipped

            metric = None
            stop = False
            if stopper and stopper.should_evaluate(epoch):
                metric = float(evaluate_fn(params))
                stop = stopper.update(epoch, metric, params)

            record = {
                "epoch": epoch,
                "loss": loss,
                "metric": metric,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            }
            trace.append(record)
            if trace_file:
                trace_file.write(json.dumps(record) + "\n")
                trace_file.flush()
            if stop:
                stopped = "early_stop"
                log.info("early stop at epoch %d (best %.4f at epoch %d)",
                         epoch, stopper.best_metric, stopper.best_epoch)
                break
            if deadline is not None and time.monotonic() >= deadline:
                stopped = "deadline"
                log.info("stopping at epoch %d: wall-time budget reached", epoch)
                break
    finally:
        if trace_file:
            trace_file.close()

    if stopper and stopper.best_params is not None:
        final_params = stopper.best_params
        best_epoch, best_metric = stopper.best_epoch, stopper.best_metric
    else:
        # no validation ever ran, so there is no metric to report
        final_params = params
        best_epoch, best_metric = epochs_run, float("nan")
    return TrainResult(
        params=final_params,
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_metric=float(best_metric),
        losses=losses,
        skipped_steps=skipped_total,
        trace=trace,
        stopped=stopped,
    )
