"""The interaction model zoo: scoring triples nineteen different ways.

Every model maps (head, relation, tail) ids to a plausibility score through
its own geometry: translations, bilinear forms, complex rotations,
convolutions. They all share one interface.
"""

import numpy as np

from kgembed.models import (
    KINDS,
    InteractionSpec,
    build_interaction,
    init_parameters,
    parameter_count,
)

E, R, D = 20, 6, 16

# --- 1. same interface, different geometry ---------------------------------

for kind in ("transe", "distmult", "complex", "rotate"):
    spec = InteractionSpec(kind=kind, num_entities=E, num_relations=R, d_e=D)
    model = build_interaction(spec)
    params = init_parameters(model, seed=1)
    print(f"{kind:10s} score(0, 0, 1) = {model.score(params, 0, 0, 1):9.4f}   "
          f"parameters = {parameter_count(spec)}")

# --- 2. translation in a picture: transe scores peak at h + r = t ----------

spec = InteractionSpec(kind="transe", num_entities=3, num_relations=1, d_e=2)
model = build_interaction(spec)
params = init_parameters(model, seed=0)
params["entity"][0] = [0.0, 0.0]
params["relation"][0] = [1.0, 1.0]
params["entity"][1] = [1.0, 1.0]   # exactly head + relation
params["entity"][2] = [3.0, -2.0]  # far away
print("\ntranse with entity1 = entity0 + relation0:")
print(f"  score(0, 0, 1) = {model.score(params, 0, 0, 1):.4f}  (perfect translation)")
print(f"  score(0, 0, 2) = {model.score(params, 0, 0, 2):.4f}  (off target)")

# --- 3. one-against-all scoring is a single call ---------------------------

spec = InteractionSpec(kind="distmult", num_entities=E, num_relations=R, d_e=D)
model = build_interaction(spec)
params = init_parameters(model, seed=2)
tails = model.score_all_tails(params, h=0, r=0)
one_by_one = np.array([model.score(params, 0, 0, t) for t in range(E)])
print(f"\nscore_all_tails agrees with {E} scalar calls: "
      f"{np.allclose(tails, one_by_one, atol=1e-12)}")
print(f"best tail for (0, 0, ?): entity {int(np.argmax(tails))}")

# --- 4. parameter budgets differ by orders of magnitude --------------------

print(f"\nparameter count at |E|={E}, |R|={R}, dim={D}:")
counts = {kind: parameter_count(InteractionSpec(
    kind=kind, num_entities=E, num_relations=R,
    d_e=32 if kind == "conve" else D)) for kind in KINDS}
for kind in sorted(counts, key=counts.get):
    print(f"  {kind:10s} {counts[kind]:7d}")
