"""Random-search hyper-parameter optimization.

A study draws full training configurations from a SearchSpace, trains each
one with early stopping on the validation split, and keeps the configuration
with the best validation metric. The final step obtains a model for that
configuration (reusing the winning trial's parameters when they are still in
memory, retraining otherwise, which is the same deterministic computation)
and reports its test-split metrics.

Trial i is a pure function of (space, dataset, master seed, i): its
configuration comes from a per-trial child generator and its training seed
from the same derivation, so reruns and resumed studies see the identical
sequence. Records stream to a JSON-lines file and are flushed after every
trial; a rerun over the same file skips trials that already finished and
re-runs those that were cut by the wall-time budget.
"""

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .datasets import add_inverse_relations
from .evaluation import compute_ranks, make_validation_callback
from .losses import LossSpec, SLCWA_KINDS, LCWA_KINDS
from .models import KINDS, InteractionSpec, build_interaction, init_parameters
from .sampling import derive_seed, rng_for
from .training import OptimizerSpec, TrainingConfig, train

log = logging.getLogger(__name__)

MRL_MARGINS = tuple(0.5 * i for i in range(1, 20))            # 0.5, 1.0, ..., 9.5
NSSAL_MARGINS = tuple(float(m) for m in range(1, 30, 2))      # 1, 3, ..., 29
ADVERSARIAL_TEMPERATURES = tuple(i / 10 for i in range(1, 11))  # 0.1, ..., 1.0


class StudyError(RuntimeError):
    """The study as a whole cannot produce a result."""


@dataclass
class SearchSpace:
    """What random search may draw from.

    Categorical fields are drawn uniformly; learning rate and label
    smoothing are drawn uniformly in log space over [lo, hi). The loss pool
    depends on the drawn training approach, so every sample satisfies the
    approach/loss compatibility matrix by construction. num_epochs is a cap,
    not a draw; early stopping usually ends a trial well before it.
    """

    models: tuple = ("distmult",)
    approaches: tuple = ("slcwa", "lcwa")
    embedding_dims: tuple = (64, 128, 256)
    optimizers: tuple = ("adam", "adadelta")
    learning_rate_range: tuple = (0.001, 0.1)
    batch_sizes: tuple = (128, 256, 512)
    inverse_choices: tuple = (False, True)
    num_epochs: int = 1000
    slcwa_losses: tuple = ("bcel", "mrl", "nssal", "spl")
    lcwa_losses: tuple = ("bcel", "cel", "spl")
    mrl_margins: tuple = MRL_MARGINS
    nssal_margins: tuple = NSSAL_MARGINS
    adversarial_temperatures: tuple = ADVERSARIAL_TEMPERATURES
    negatives_range: tuple = (1, 100)            # inclusive on both ends
    label_smoothing_range: tuple = (0.001, 1.0)
    samplers: tuple = ("uniform",)

    def __post_init__(self):
        for name in ("models", "approaches", "embedding_dims", "optimizers",
                     "batch_sizes", "inverse_choices", "slcwa_losses",
                     "lcwa_losses", "mrl_margins", "nssal_margins",
                     "adversarial_temperatures", "samplers"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"search space field {name} is empty")
            setattr(self, name, value)
        self.learning_rate_range = tuple(self.learning_rate_range)
        self.label_smoothing_range = tuple(self.label_smoothing_range)
        self.negatives_range = tuple(int(v) for v in self.negatives_range)
        unknown = set(self.models) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown interaction kinds {sorted(unknown)}")
        if set(self.approaches) - {"slcwa", "lcwa"}:
            raise ValueError("approaches must be a subset of {'slcwa', 'lcwa'}")
        if set(self.slcwa_losses) - set(SLCWA_KINDS):
            raise ValueError("slcwa_losses contains a loss the approach cannot train")
        if set(self.lcwa_losses) - set(LCWA_KINDS):
            raise ValueError("lcwa_losses contains a loss the approach cannot train")
        if set(self.optimizers) - {"adam", "adadelta"}:
            raise ValueError("optimizers must be a subset of {'adam', 'adadelta'}")
        if set(self.samplers) - {"uniform", "bernoulli"}:
            raise ValueError("samplers must be a subset of {'uniform', 'bernoulli'}")
        for name in ("learning_rate_range", "label_smoothing_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise ValueError(f"{name} needs 0 < lo < hi")
        lo, hi = self.negatives_range
        if not (1 <= lo <= hi):
            raise ValueError("negatives_range needs 1 <= lo <= hi")
        if self.num_epochs < 1:
            raise ValueError("num_epochs must be positive")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def _choice(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_config(space, rng):
    """Draw one full trial configuration.

    The draw order is fixed (model, dim, approach, loss, optimizer, lr,
    batch, inverse, sampler, then approach-specific fields) so a given
    generator state always yields the same configuration.
    """
    cfg = {
        "model": _choice(rng, space.models),
        "embedding_dim": int(_choice(rng, space.embedding_dims)),
        "approach": _choice(rng, space.approaches),
    }
    pool = space.slcwa_losses if cfg["approach"] == "slcwa" else space.lcwa_losses
    cfg["loss"] = _choice(rng, pool)
    cfg["optimizer"] = _choice(rng, space.optimizers)
    cfg["learning_rate"] = _log_uniform(rng, *space.learning_rate_range)
    cfg["batch_size"] = int(_choice(rng, space.batch_sizes))
    cfg["inverse"] = bool(_choice(rng, space.inverse_choices))
    cfg["sampler"] = _choice(rng, space.samplers)
    cfg["num_epochs"] = int(space.num_epochs)
    cfg["margin"] = None
    cfg["adversarial_temperature"] = None
    cfg["num_negatives"] = None
    cfg["label_smoothing"] = 0.0
    if cfg["approach"] == "slcwa":
        if cfg["loss"] == "mrl":
            cfg["margin"] = float(_choice(rng, space.mrl_margins))
        elif cfg["loss"] == "nssal":
            cfg["margin"] = float(_choice(rng, space.nssal_margins))
            cfg["adversarial_temperature"] = float(
                _choice(rng, space.adversarial_temperatures))
        lo, hi = space.negatives_range
        cfg["num_negatives"] = int(rng.integers(lo, hi + 1))
    else:
        cfg["label_smoothing"] = _log_uniform(rng, *space.label_smoothing_range)
    return cfg


@dataclass
class Budget:
    """Trial-count and wall-time limits for a study.

    max_seconds bounds the whole study: no new trial starts past it and a
    running trial stops at its next epoch boundary. trial_seconds optionally
    caps each single trial the same way.
    """

    max_trials: int = 20
    max_seconds: float = None
    trial_seconds: float = None

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be positive")
        for name in ("max_seconds", "trial_seconds"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive when set")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    seed: int
    status: str          # completed | budget-exhausted | failed
    metric: float        # best validation metric, None if never evaluated
    best_epoch: int
    epochs_run: int
    wall_seconds: float
    error: str = None

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)


def trial_spec(cfg, store):
    """InteractionSpec for a sampled configuration on a given store."""
    return InteractionSpec(
        kind=cfg["model"],
        num_entities=store.num_entities,
        num_relations=store.num_relations,
        d_e=cfg["embedding_dim"],
    )


def trial_training_config(cfg, *, seed, eval_frequency=50, patience=100,
                          metric="hits_at_10"):
    """TrainingConfig for a sampled configuration.

    The evaluation frequency is clamped to the epoch cap so even very short
    trials get at least one validation measurement.
    """
    frequency = min(eval_frequency, cfg["num_epochs"])
    loss = LossSpec(
        cfg["loss"],
        margin=1.0 if cfg["margin"] is None else cfg["margin"],
        adversarial_temperature=(1.0 if cfg["adversarial_temperature"] is None
                                 else cfg["adversarial_temperature"]),
    )
    return TrainingConfig(
        approach=cfg["approach"],
        loss=loss,
        optimizer=OptimizerSpec(kind=cfg["optimizer"], lr=cfg["learning_rate"]),
        batch_size=cfg["batch_size"],
        num_epochs=cfg["num_epochs"],
        num_negatives=cfg["num_negatives"] or 32,
        sampler=cfg["sampler"],
        label_smoothing=cfg["label_smoothing"],
        seed=seed,
        eval_frequency=frequency,
        patience=max(patience, frequency),
        stopper_metric=metric,
    )


def run_trial(trial_id, cfg, stores, *, seed, metric="hits_at_10",
              eval_frequency=50, patience=100, deadline=None):
    """Train one configuration; returns (TrialRecord, trained params or None).

    Exceptions become a failed record so the surrounding search continues.
    """
    t0 = time.monotonic()
    try:
        store = stores[bool(cfg["inverse"])]
        model = build_interaction(trial_spec(cfg, store))
        params = init_parameters(model, derive_seed(seed, "init"))
        tconf = trial_training_config(cfg, seed=seed, eval_frequency=eval_frequency,
                                      patience=patience, metric=metric)
        callback = make_validation_callback(model, store, split="valid", metric=metric)
        result = train(model, params, store, tconf,
                       evaluate_fn=callback, deadline=deadline)
    except Exception as e:  # a failed trial must not kill the study
        log.warning("trial %d failed: %s", trial_id, e)
        record = TrialRecord(trial_id, cfg, seed, "failed", None, None, 0,
                             time.monotonic() - t0,
                             error=f"{type(e).__name__}: {e}")
        return record, None
    best = float(result.best_metric) if np.isfinite(result.best_metric) else None
    status = "budget-exhausted" if result.stopped == "deadline" else "completed"
    record = TrialRecord(
        trial_id, cfg, seed, status, best,
        result.best_epoch if best is not None else None,
        result.epochs_run, time.monotonic() - t0,
    )
    return record, result.params


@dataclass
class StudyResult:
    records: list            # all TrialRecords in trial-id order
    best: TrialRecord
    best_params: dict
    best_spec: dict           # InteractionSpec fields of the winning model
    test_metrics: dict        # {"filtered"/"unfiltered": RankingResult.metrics()}
    retrained: bool           # False when the winning trial's params were reused
    wall_seconds: float


def _load_records(path):
    records = {}
    if path and os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rec = TrialRecord.from_json(json.loads(line))
                    records[rec.trial_id] = rec  # last write per id wins
    return records


def _check_manifest(path, manifest):
    if not path:
        return
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            existing = json.load(f)
        if existing != manifest:
            raise StudyError(
                f"{path} belongs to a different study; "
                "refusing to resume with a changed space, budget or seed")
    else:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")


def random_search(space, store, *, budget=None, master_seed=0,
                  metric="hits_at_10", eval_frequency=50, patience=100,
                  records_path=None, manifest_path=None, retrain="auto",
                  workers=1):
    """Run a study and return its StudyResult.

    store must be the un-augmented TripleStore; trials that model inverse
    relations explicitly get the augmented variant, built once here. The
    best record is the one with the highest validation metric (earlier trial
    wins ties); trials that were cut by the wall budget still compete when
    they managed at least one evaluation. Zero completed trials is a
    StudyError.

    With workers > 1 trials run in threads and are submitted eagerly, so the
    wall-time budget acts through each trial's own deadline instead of
    between trials. Results per trial are unchanged; only the cut point
    moves.
    """
    if store.inverse_augmented:
        raise ValueError("random_search wants the un-augmented store")
    if retrain not in ("auto", "full"):
        raise ValueError("retrain must be 'auto' or 'full'")
    budget = budget or Budget()
    t_start = time.monotonic()
    study_deadline = t_start + budget.max_seconds if budget.max_seconds else None

    stores = {False: store, True: add_inverse_relations(store)}
    records = _load_records(records_path)
    finished = {i for i, r in records.items() if r.status in ("completed", "failed")}
    manifest = {
        "space": space.to_dict(),
        "budget": budget.to_dict(),
        "master_seed": master_seed,
        "metric": metric,
        "eval_frequency": eval_frequency,
        "patience": patience,
    }
    _check_manifest(manifest_path, manifest)

    lock = threading.Lock()
    memo = {"metric": -np.inf, "record": None, "params": None}
    records_file = open(records_path, "a", encoding="utf-8") if records_path else None

    def launch(i):
        cfg = sample_config(space, rng_for(master_seed, f"trial-{i}/config"))
        seed = derive_seed(master_seed, f"trial-{i}/train")
        deadline = study_deadline
        if budget.trial_seconds:
            cap = time.monotonic() + budget.trial_seconds
            deadline = cap if deadline is None else min(deadline, cap)
        record, params = run_trial(
            i, cfg, stores, seed=seed, metric=metric,
            eval_frequency=eval_frequency, patience=patience, deadline=deadline)
        with lock:
            records[i] = record
            if records_file:
                records_file.write(json.dumps(record.to_json()) + "\n")
                records_file.flush()
            if record.metric is not None and record.metric > memo["metric"]:
                memo.update(metric=record.metric, record=record, params=params)
        log.info("trial %d (%s/%s/%s) %s: metric=%s in %.1fs",
                 i, cfg["model"], cfg["loss"], cfg["approach"],
                 record.status, record.metric, record.wall_seconds)

    try:
        pending = [i for i in range(budget.max_trials) if i not in finished]
        if workers <= 1:
            for i in pending:
                if study_deadline and time.monotonic() >= study_deadline:
                    log.info("wall-time budget exhausted before trial %d", i)
                    break
                launch(i)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(launch, pending))
    finally:
        if records_file:
            records_file.close()

    ordered = [records[i] for i in sorted(records)]
    if not any(r.status == "completed" for r in ordered):
        raise StudyError("no trial completed; the study has no result")
    scored = [r for r in ordered if r.metric is not None]
    best = max(scored, key=lambda r: (r.metric, -r.trial_id))

    best_store = stores[bool(best.config["inverse"])]
    spec = trial_spec(best.config, best_store)
    model = build_interaction(spec)
    reused = (retrain == "auto" and memo["record"] is not None
              and memo["record"].trial_id == best.trial_id
              and best.status == "completed")
    if reused:
        best_params = memo["params"]
    else:
        # deterministic re-run of the winning configuration, this time
        # without a deadline so a budget-cut winner trains fully
        record, best_params = run_trial(
            best.trial_id, best.config, stores, seed=best.seed, metric=metric,
            eval_frequency=eval_frequency, patience=patience)
        if best_params is None:
            raise StudyError(f"retraining the best configuration failed: {record.error}")
    test_metrics = {
        name: compute_ranks(model, best_params, best_store, split="test",
                            filtered=flag).metrics()
        for name, flag in (("filtered", True), ("unfiltered", False))
    }
    return StudyResult(
        records=ordered,
        best=best,
        best_params=best_params,
        best_spec=spec.to_dict(),
        test_metrics=test_metrics,
        retrained=not reused,
        wall_seconds=time.monotonic() - t_start,
    )
