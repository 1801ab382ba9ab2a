"""Text features and the category correlation graph.

Items are embedded as smoothed TF-IDF vectors over a corpus vocabulary; a
category's vector is the arithmetic mean of its member items' vectors, and
category correlation is the cosine of those vectors. The graph is complete
over categories with nonzero vectors and is updated incrementally as users
accept items.
"""

import math
import re
from dataclasses import dataclass, field

TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [t for t in TOKEN_RE.findall(text.lower()) if len(t) >= 2]


@dataclass
class Vocabulary:
    term_ids: dict          # term -> int id
    idf: dict               # term id -> idf weight
    n_docs: int

    def terms(self) -> list:
        out = [None] * len(self.term_ids)
        for term, tid in self.term_ids.items():
            out[tid] = term
        return out


def build_vocabulary(items) -> Vocabulary:
    """Vocabulary over item titles+abstracts with smoothed idf.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, always positive.
    """
    df: dict = {}
    n_docs = 0
    for item in items:
        n_docs += 1
        for term in set(tokenize(item.text())):
            df[term] = df.get(term, 0) + 1
    term_ids = {term: i for i, term in enumerate(sorted(df))}
    idf = {term_ids[t]: math.log((1 + n_docs) / (1 + c)) + 1.0 for t, c in df.items()}
    return Vocabulary(term_ids=term_ids, idf=idf, n_docs=n_docs)


@dataclass
class FeatureVector:
    entries: dict           # term id -> weight
    norm: float

    @classmethod
    def from_entries(cls, entries: dict) -> "FeatureVector":
        entries = {k: v for k, v in entries.items() if v != 0.0}
        return cls(entries=entries, norm=math.sqrt(sum(v * v for v in entries.values())))

    def dot(self, other: "FeatureVector") -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b[t] for t, w in a.items() if t in b)

    def is_zero(self) -> bool:
        return self.norm == 0.0


def featurize(item, vocab: Vocabulary) -> FeatureVector:
    """TF-IDF vector; tf is raw count over document token length.

    Tokens outside the vocabulary are ignored. Empty or fully-unknown text
    gives the zero vector.
    """
    tokens = tokenize(item.text())
    if not tokens:
        return FeatureVector.from_entries({})
    counts: dict = {}
    for t in tokens:
        tid = vocab.term_ids.get(t)
        if tid is not None:
            counts[tid] = counts.get(tid, 0) + 1
    length = len(tokens)
    return FeatureVector.from_entries(
        {tid: (c / length) * vocab.idf[tid] for tid, c in counts.items()})


def correlation(a: FeatureVector, b: FeatureVector) -> float:
    """Cosine similarity; zero if either vector has zero norm."""
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    value = a.dot(b) / (a.norm * b.norm)
    return min(1.0, max(-1.0, value))


def _mean_vector(vectors: list) -> FeatureVector:
    if not vectors:
        return FeatureVector.from_entries({})
    acc: dict = {}
    for vec in vectors:
        for tid, w in vec.entries.items():
            acc[tid] = acc.get(tid, 0.0) + w
    n = len(vectors)
    return FeatureVector.from_entries({tid: w / n for tid, w in acc.items()})


@dataclass
class CategoryGraph:
    vocab: Vocabulary
    categories: tuple
    members: dict                       # category -> list of item ids
    item_vectors: dict                  # item id -> FeatureVector
    vectors: dict = field(default_factory=dict)   # category -> FeatureVector
    edges: dict = field(default_factory=dict)     # sorted (a, b) -> correlation

    @classmethod
    def build(cls, corpus, vocab: Vocabulary = None,
              item_vectors: dict = None) -> "CategoryGraph":
        if vocab is None:
            vocab = build_vocabulary(corpus.items.values())
        if item_vectors is None:
            item_vectors = {it.id: featurize(it, vocab) for it in corpus.items.values()}
        else:
            # the graph mutates its vector cache, so take a copy
            item_vectors = dict(item_vectors)
        members = {c: [] for c in corpus.categories()}
        for item in corpus.items.values():
            for cat, w in item.category_weights.items():
                if w > 0.0:
                    members[cat].append(item.id)
        graph = cls(vocab=vocab, categories=corpus.categories(),
                    members=members, item_vectors=item_vectors)
        for cat in graph.categories:
            graph._recompute_vector(cat)
        graph.rebuild_edges()
        return graph

    def _recompute_vector(self, category: str) -> None:
        vecs = [self.item_vectors[i] for i in self.members[category]]
        self.vectors[category] = _mean_vector(vecs)

    def rebuild_edges(self) -> None:
        cats = self.categories
        self.edges = {}
        for i, a in enumerate(cats):
            for b in cats[i + 1:]:
                self.edges[(a, b)] = correlation(self.vectors[a], self.vectors[b])

    def rho(self, a: str, b: str) -> float:
        if a == b:
            return 1.0 if not self.vectors[a].is_zero() else 0.0
        key = (a, b) if a < b else (b, a)
        return self.edges[key]

    def accept_item_update(self, item) -> "CategoryGraph":
        """Fold an accepted item into its categories' vectors and edges.

        The affected category vectors are recomputed from their full member
        lists, so the incremental result is bit-identical to a rebuild.
        """
        if item.id not in self.item_vectors:
            self.item_vectors[item.id] = featurize(item, self.vocab)
        touched = []
        for cat, w in item.category_weights.items():
            if w <= 0.0:
                continue
            if cat not in self.members:
                raise ValueError(f"accepted item {item.id} references unknown "
                                 f"category {cat!r}")
            self.members[cat].append(item.id)
            touched.append(cat)
        for cat in touched:
            self._recompute_vector(cat)
        for cat in touched:
            for other in self.categories:
                if other == cat:
                    continue
                key = (cat, other) if cat < other else (other, cat)
                self.edges[key] = correlation(self.vectors[cat], self.vectors[other])
        return self

    def to_json_dict(self) -> dict:
        terms = self.vocab.terms()
        nodes = []
        for cat in self.categories:
            vec = self.vectors[cat]
            nodes.append({
                "category": cat,
                "members": len(self.members[cat]),
                "vector": {terms[tid]: w for tid, w in sorted(vec.entries.items())},
            })
        edges = [{"a": a, "b": b, "rho": r} for (a, b), r in sorted(self.edges.items())]
        return {"nodes": nodes, "edges": edges}


class GraphUpdateBuffer:
    """Batches accept_item_update calls so a step sees a frozen graph.

    Reads delegate to the underlying graph; updates queue until flush. Used by
    the simulation loop to give every user in a step the same snapshot no
    matter the execution order.
    """

    def __init__(self, graph: CategoryGraph):
        self.graph = graph
        self.pending = []

    def accept_item_update(self, item):
        self.pending.append(item)
        return self

    def rho(self, a, b):
        return self.graph.rho(a, b)

    @property
    def categories(self):
        return self.graph.categories

    @property
    def vectors(self):
        return self.graph.vectors

    @property
    def vocab(self):
        return self.graph.vocab

    @property
    def item_vectors(self):
        return self.graph.item_vectors

    def flush(self) -> int:
        count = len(self.pending)
        for item in self.pending:
            self.graph.accept_item_update(item)
        self.pending = []
        return count
