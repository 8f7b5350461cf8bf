"""Train a model on Nations end to end with the library API.

The pipeline: load the store, build the model, pick a training approach and
loss, attach a validation callback for early stopping, train, evaluate on the
test split in the filtered setting.
"""

import time
from pathlib import Path

from kgembed.datasets import TripleStore
from kgembed.evaluation import compute_ranks, make_validation_callback
from kgembed.losses import LossSpec
from kgembed.models import InteractionSpec, build_interaction, init_parameters
from kgembed.training import OptimizerSpec, TrainingConfig, train

DATA = Path(__file__).resolve().parents[1] / "data"

store = TripleStore.from_directory(DATA / "nations")
print(f"nations: {store.num_entities} entities, {store.num_relations} relations, "
      f"{store.num_triples('train')} training triples")

spec = InteractionSpec(kind="distmult", num_entities=store.num_entities,
                       num_relations=store.num_relations, d_e=32)
model = build_interaction(spec)
params = init_parameters(model, seed=0)

config = TrainingConfig(
    approach="lcwa",                 # score every (h, r) row against all tails
    loss=LossSpec("cel"),            # softmax cross entropy over entities
    optimizer=OptimizerSpec(kind="adam", lr=0.05),
    batch_size=256,
    num_epochs=200,
    label_smoothing=0.01,
    eval_frequency=10,               # check validation hits@10 every 10 epochs
    patience=40,                     # stop after 40 epochs without improvement
    seed=0,
)
validate = make_validation_callback(model, store)

t0 = time.monotonic()
result = train(model, params, store, config, evaluate_fn=validate)
print(f"\ntrained {result.epochs_run} epochs in {time.monotonic() - t0:.1f}s, "
      f"stopped by {result.stopped}")
print(f"best validation hits@10 {result.best_metric:.4f} at epoch {result.best_epoch}")
print(f"loss went {result.losses[0]:.4f} -> {result.losses[-1]:.4f}")

# result.params holds the best checkpoint, not the last epoch
for filtered in (False, True):
    ranks = compute_ranks(model, result.params, store, split="test", filtered=filtered)
    m = ranks.metrics()["both"]["realistic"]
    label = "filtered " if filtered else "unfiltered"
    print(f"{label} test: hits@10 {m['hits_at_10']:.4f}  mrr {m['mrr']:.4f}  "
          f"mr {m['mr']:.2f}  amr {m['amr']:.4f}")
