"""A small random-search study on Nations.

random_search samples full configurations (model, approach, loss, optimizer,
learning rate, ...) from a SearchSpace, trains each with early stopping,
ranks them by validation hits@10, and evaluates the winner once on test.
Records stream to a JSONL file, so an interrupted study resumes where it
stopped.
"""

import tempfile
import time
from pathlib import Path

from kgembed.datasets import TripleStore
from kgembed.hpo import Budget, SearchSpace, random_search

DATA = Path(__file__).resolve().parents[1] / "data"

store = TripleStore.from_directory(DATA / "nations")

space = SearchSpace(
    models=("distmult", "complex"),
    approaches=("slcwa", "lcwa"),
    embedding_dims=(16, 32),
    optimizers=("adam",),
    learning_rate_range=(0.005, 0.1),
    batch_sizes=(256,),
    negatives_range=(1, 16),
    num_epochs=60,
)

out = Path(tempfile.mkdtemp(prefix="hpo_demo_"))
t0 = time.monotonic()
result = random_search(
    space, store,
    budget=Budget(max_trials=6),
    master_seed=4,
    eval_frequency=10,
    patience=20,
    records_path=out / "trials.jsonl",
    manifest_path=out / "manifest.json",
)
print(f"6 trials in {time.monotonic() - t0:.1f}s "
      f"(records stream to {out / 'trials.jsonl'})\n")

print("trial  model     approach  loss   dim  lr       valid hits@10")
for r in sorted(result.records, key=lambda r: -(r.metric or 0)):
    c = r.config
    print(f"{r.trial_id:5d}  {c['model']:9s} {c['approach']:9s} {c['loss']:6s} "
          f"{c['embedding_dim']:3d}  {c['learning_rate']:.4f}  {r.metric:.4f}")

best = result.best
print(f"\nbest: trial {best.trial_id}, "
      f"{best.config['model']}/{best.config['loss']}/{best.config['approach']}"
      f"{'/inverse' if best.config['inverse'] else ''}")
m = result.test_metrics["filtered"]["both"]["realistic"]
print(f"test filtered realistic: hits@10 {m['hits_at_10']:.4f}  mrr {m['mrr']:.4f}")
print("\nrerunning the same call against the same records file would skip all")
print("six finished trials; changing the space, budget or seed refuses to resume.")
