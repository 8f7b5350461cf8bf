"""Triple stores: TSV loading, dense id vocabularies, inverse-relation
augmentation, per-relation corruption statistics and filter indices.

A triple file is UTF-8, tab-separated, three columns (head, relation, tail),
no header. Ids are dense integers assigned in order of first appearance while
scanning train, then valid, then test, so the same files always produce the
same vocabulary.
"""

import json
import logging
from collections import OrderedDict

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

# appended to a relation label to name its inverse; input labels must not use it
INVERSE_SUFFIX = "_inverse"


def load_tsv(path):
    """Read labeled triples from a TSV file.

    Returns a list of (head, relation, tail) label triples. Raises ValueError
    naming the offending line number when a line does not have exactly three
    tab-separated fields. Blank lines are skipped.
    """
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            triples.append((parts[0], parts[1], parts[2]))
    return triples


class TripleStore:
    """Dense-id view of a train/valid/test triple corpus.

    Attributes:
        entity_to_id, relation_to_id: label -> dense id
        entity_labels, relation_labels: id -> label
        triples: dict split name -> (N, 3) int array of (h, r, t) ids
        num_base_relations: relation count before inverse augmentation;
            equals num_relations when the store is not augmented
        inverse_augmented: True once add_inverse_relations produced this store
    """

    def __init__(self, entity_to_id, relation_to_id, triples,
                 inverse_augmented=False, num_base_relations=None):
        self.entity_to_id = dict(entity_to_id)
        self.relation_to_id = dict(relation_to_id)
        self.entity_labels = [None] * len(self.entity_to_id)
        for label, i in self.entity_to_id.items():
            self.entity_labels[i] = label
        self.relation_labels = [None] * len(self.relation_to_id)
        for label, i in self.relation_to_id.items():
            self.relation_labels[i] = label
        self.triples = {
            split: np.asarray(arr, dtype=np.intp).reshape(-1, 3) for split, arr in triples.items()
        }
        for split in SPLITS:
            self.triples.setdefault(split, np.empty((0, 3), dtype=np.intp))
        self.inverse_augmented = inverse_augmented
        self.num_base_relations = (
            num_base_relations if num_base_relations is not None else len(self.relation_to_id)
        )

    @property
    def num_entities(self):
        return len(self.entity_to_id)

    @property
    def num_relations(self):
        return len(self.relation_to_id)

    def num_triples(self, split):
        return self.triples[split].shape[0]

    def all_triples(self, splits=SPLITS):
        """Concatenated id triples over the given splits."""
        return np.concatenate([self.triples[s] for s in splits], axis=0)

    @classmethod
    def from_labeled_triples(cls, train, valid=(), test=()):
        """Build vocabulary and id arrays from labeled triple lists.

        The vocabulary covers the union of all three splits. Exact duplicate
        triples within a split are dropped (keeping first occurrence) and the
        drop count is logged. Entities appearing only outside the training
        split are kept but logged, since nothing can be learned for them.
        """
        splits = OrderedDict([("train", train), ("valid", valid), ("test", test)])
        entity_to_id, relation_to_id = {}, {}
        for rows in splits.values():
            for h, r, t in rows:
                if h not in entity_to_id:
                    entity_to_id[h] = len(entity_to_id)
                if r not in relation_to_id:
                    relation_to_id[r] = len(relation_to_id)
                if t not in entity_to_id:
                    entity_to_id[t] = len(entity_to_id)

        id_triples = {}
        for split, rows in splits.items():
            seen = set()
            kept = []
            for h, r, t in rows:
                key = (h, r, t)
                if key in seen:
                    continue
                seen.add(key)
                kept.append((entity_to_id[h], relation_to_id[r], entity_to_id[t]))
            dropped = len(rows) - len(kept)
            if dropped:
                log.warning("%s split: dropped %d duplicate triples", split, dropped)
            id_triples[split] = np.asarray(kept, dtype=np.intp).reshape(-1, 3)

        train_entities = set(id_triples["train"][:, :1].ravel()) | set(
            id_triples["train"][:, 2:].ravel()
        )
        unseen = [
            label
            for label, i in entity_to_id.items()
            if i not in train_entities
        ]
        if unseen:
            log.warning(
                "%d entities appear only in valid/test and are never trained: %s%s",
                len(unseen), ", ".join(unseen[:5]), "..." if len(unseen) > 5 else "",
            )
        return cls(entity_to_id, relation_to_id, id_triples)

    @classmethod
    def from_files(cls, train_path, valid_path=None, test_path=None):
        train = load_tsv(train_path)
        valid = load_tsv(valid_path) if valid_path else []
        test = load_tsv(test_path) if test_path else []
        return cls.from_labeled_triples(train, valid, test)

    @classmethod
    def from_directory(cls, path):
        """Load <path>/train.txt, valid.txt, test.txt."""
        import os

        return cls.from_files(
            os.path.join(path, "train.txt"),
            os.path.join(path, "valid.txt"),
            os.path.join(path, "test.txt"),
        )

    # ----- serialization ----------------------------------------------------

    def to_json(self):
        return {
            "entities": self.entity_labels,
            "relations": self.relation_labels,
            "inverse_augmented": self.inverse_augmented,
            "num_base_relations": self.num_base_relations,
            "triples": {split: self.triples[split].tolist() for split in SPLITS},
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def from_json(cls, doc):
        return cls(
            {label: i for i, label in enumerate(doc["entities"])},
            {label: i for i, label in enumerate(doc["relations"])},
            {split: np.asarray(rows, dtype=np.intp).reshape(-1, 3)
             for split, rows in doc["triples"].items()},
            inverse_augmented=doc["inverse_augmented"],
            num_base_relations=doc["num_base_relations"],
        )

    @classmethod
    def load_json(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def add_inverse_relations(store):
    """Return a new store whose training split also contains inverse triples.

    For every training triple (h, r, t) an inverse triple (t, r', h) is added,
    where r' = r + R and R is the original relation count. Validation and test
    splits are left untouched; their inverse forms are derived on the fly
    during evaluation. Augmenting twice is an error.
    """
    if store.inverse_augmented:
        raise ValueError("store already contains inverse relations")
    base = store.num_relations
    relation_to_id = dict(store.relation_to_id)
    for label, i in store.relation_to_id.items():
        inv_label = label + INVERSE_SUFFIX
        if inv_label in relation_to_id:
            raise ValueError(
                f"relation label {inv_label!r} already exists; {INVERSE_SUFFIX!r} is reserved"
            )
        relation_to_id[inv_label] = base + i

    train = store.triples["train"]
    inverse = np.stack([train[:, 2], train[:, 1] + base, train[:, 0]], axis=1)
    triples = dict(store.triples)
    triples["train"] = np.concatenate([train, inverse], axis=0)
    return TripleStore(
        store.entity_to_id,
        relation_to_id,
        triples,
        inverse_augmented=True,
        num_base_relations=base,
    )


def relation_stats(store):
    """Per-relation mean tails-per-head and heads-per-tail on the train split.

    Returns (tph, hpt) as float arrays of length num_relations. Relations
    absent from the training split fall back to tph = hpt = 1, which makes
    the Bernoulli corruption probability an even split.
    """
    R = store.num_relations
    tph = np.ones(R)
    hpt = np.ones(R)
    train = store.triples["train"]
    for r in range(R):
        rows = train[train[:, 1] == r]
        if rows.shape[0] == 0:
            continue
        n_heads = len(np.unique(rows[:, 0]))
        n_tails = len(np.unique(rows[:, 2]))
        tph[r] = rows.shape[0] / n_heads
        hpt[r] = rows.shape[0] / n_tails
    return tph, hpt


class FilterIndex:
    """True-triple lookups for filtered negative sampling and evaluation.

    Maps (h, r) to the sorted array of known true tails and (r, t) to the
    sorted array of known true heads, over whichever splits it was built from.
    """

    def __init__(self, store, splits=SPLITS):
        self._tails = {}
        self._heads = {}
        for h, r, t in store.all_triples(splits):
            self._tails.setdefault((int(h), int(r)), set()).add(int(t))
            self._heads.setdefault((int(r), int(t)), set()).add(int(h))
        self._tails = {k: np.array(sorted(v), dtype=np.intp) for k, v in self._tails.items()}
        self._heads = {k: np.array(sorted(v), dtype=np.intp) for k, v in self._heads.items()}
        self._empty = np.empty(0, dtype=np.intp)

    def tails(self, h, r):
        """All known true tails t such that (h, r, t) is a stored triple."""
        return self._tails.get((int(h), int(r)), self._empty)

    def heads(self, r, t):
        """All known true heads h such that (h, r, t) is a stored triple."""
        return self._heads.get((int(r), int(t)), self._empty)

    def contains(self, h, r, t):
        return int(t) in self._tails.get((int(h), int(r)), ())
