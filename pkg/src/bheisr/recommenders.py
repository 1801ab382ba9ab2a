"""Baseline recommenders and mixed feed assembly.

Three baselines: seeded random (RD), content-based cosine against the mean of
the user's accepted items (CB), and user-coincidence weighted by belief share
(UC). Feeds mix round(w*k) generated items from the user's nudge session with
k - n_gen baseline items; accepted items never reappear.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import nudge
from .features import FeatureVector, correlation, featurize
from .rng import substream


@dataclass
class CandidateIndex:
    """Frozen matrix view of the corpus for batch scoring."""
    ids: list
    pos: dict
    matrix: "sparse.csr_matrix"
    norms: np.ndarray
    categories: list                 # primary category per item
    vectors: dict                    # item id -> FeatureVector

    @classmethod
    def build(cls, corpus, vocab) -> "CandidateIndex":
        ids = list(corpus.items)
        vectors = {i: featurize(corpus.items[i], vocab) for i in ids}
        n_terms = len(vocab.term_ids)
        rows, cols, data = [], [], []
        for r, item_id in enumerate(ids):
            for tid, w in vectors[item_id].entries.items():
                rows.append(r)
                cols.append(tid)
                data.append(w)
        matrix = sparse.csr_matrix((data, (rows, cols)),
                                   shape=(len(ids), max(1, n_terms)))
        norms = np.array([vectors[i].norm for i in ids])
        return cls(ids=ids, pos={i: r for r, i in enumerate(ids)}, matrix=matrix,
                   norms=norms, categories=[corpus.items[i].category for i in ids],
                   vectors=vectors)

    def vector_of(self, item_id: str, extra: dict = None):
        if item_id in self.vectors:
            return self.vectors[item_id]
        if extra is not None and item_id in extra:
            return extra[item_id]
        return None


def _profile_vector(network, index: CandidateIndex, extra_vectors: dict = None):
    """Mean feature vector over the user's accepted items (occurrences)."""
    acc: dict = {}
    n = 0
    for item_id in network.accepted:
        vec = index.vector_of(item_id, extra_vectors)
        if vec is None:
            continue
        n += 1
        for tid, w in vec.entries.items():
            acc[tid] = acc.get(tid, 0.0) + w
    if n == 0:
        return None
    return FeatureVector.from_entries({tid: w / n for tid, w in acc.items()})


def cb_score(item, network, index: CandidateIndex, extra_vectors: dict = None) -> float:
    """Cosine between the item and the mean of the user's accepted items.

    Cold users (empty history) score 0 for every item.
    """
    profile = _profile_vector(network, index, extra_vectors)
    if profile is None:
        return 0.0
    vec = index.vector_of(item.id, extra_vectors)
    if vec is None:
        raise ValueError(f"no feature vector for item {item.id!r}")
    return correlation(vec, profile)


def acceptance_share(item, network) -> float:
    """Belief share of the item's categories: sum of w_C * B(C) / sum B."""
    total = sum(network.belief.values())
    if total <= 0.0:
        return 0.0
    share = 0.0
    for cat, w in item.category_weights.items():
        if w > 0.0:
            share += w * network.belief_degree(cat) / total
    return share


def _category_count_vector(network) -> dict:
    return network.mass_by_category()


def _dict_cosine(a: dict, b: dict) -> float:
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def uc_score(item, user_id: str, networks: dict) -> float:
    """Sum over other users who accepted the item of their history cosine with
    this user, weighted by this user's belief share for the item."""
    me = networks[user_id]
    share = acceptance_share(item, me)
    if share == 0.0:
        return 0.0
    my_hist = _category_count_vector(me)
    total = 0.0
    for other_id, other in networks.items():
        if other_id == user_id:
            continue
        if item.id in other.accepted_ids:
            total += _dict_cosine(my_hist, _category_count_vector(other))
    return total * share


def rd_candidates(corpus, user_id: str, k: int, seed: int, exclude: set = None) -> list:
    """Seeded uniform sample of k item ids the user has not accepted."""
    exclude = exclude or set()
    eligible = [i for i in corpus.items if i not in exclude]
    rng = substream(seed, "rd", user_id)
    order = rng.permutation(len(eligible))
    return [eligible[i] for i in order[:k]]


@dataclass
class Feed:
    user_id: str
    step: int
    items: list
    original_count: int
    generated_count: int
    w: float

    def item_ids(self) -> list:
        return [it.id for it in self.items]


def n_generated(w: float, k: int) -> int:
    return int(math.floor(w * k + 0.5))


@dataclass
class FeedContext:
    """Everything assemble_feed needs to score candidates for one user.

    The optional acceleration arrays (enable_acceleration) replace the
    per-item reference loops with matrix ops; they are kept in sync by
    calling note_accept for every accepted item and refresh_mass once per
    step barrier. Without them scoring falls back to the reference ops.
    """
    corpus: object
    index: CandidateIndex
    networks: dict
    graph: object = None
    accept_index: dict = field(default_factory=dict)   # item id -> set of users
    generator: object = None
    user_ids: list = None
    user_pos: dict = None
    cats: list = None
    accept_matrix: np.ndarray = None     # users x items, 0/1
    mass_matrix: np.ndarray = None       # users x categories, history masses
    cat_index: np.ndarray = None         # per item, category row in cats
    profile_sums: np.ndarray = None      # users x terms, running accept sums
    profile_counts: np.ndarray = None

    def enable_acceleration(self) -> None:
        index = self.index
        self.user_ids = sorted(self.networks)
        self.user_pos = {u: r for r, u in enumerate(self.user_ids)}
        self.cats = list(self.corpus.categories())
        cat_pos = {c: j for j, c in enumerate(self.cats)}
        self.cat_index = np.array([cat_pos[c] for c in index.categories],
                                  dtype=np.intp)
        n_users = len(self.user_ids)
        self.accept_matrix = np.zeros((n_users, len(index.ids)))
        self.profile_sums = np.zeros((n_users, index.matrix.shape[1]))
        self.profile_counts = np.zeros(n_users, dtype=np.intp)
        extra = self.graph.item_vectors if self.graph is not None else None
        for u in self.user_ids:
            row = self.user_pos[u]
            network = self.networks[u]
            for item_id in network.accepted:
                pos = index.pos.get(item_id)
                if pos is not None:
                    self.accept_matrix[row, pos] = 1.0
                vec = index.vector_of(item_id, extra)
                if vec is None:
                    continue
                for tid, w in vec.entries.items():
                    self.profile_sums[row, tid] += w
                self.profile_counts[row] += 1
        self.refresh_mass()

    def refresh_mass(self) -> None:
        """Re-snapshot every user's per-category history mass."""
        rows = []
        for u in self.user_ids:
            mass = self.networks[u].mass_by_category()
            rows.append([mass.get(c, 0.0) for c in self.cats])
        self.mass_matrix = np.array(rows)

    def note_accept(self, user_id: str, item) -> None:
        """Fold one accepted item into the shared scoring state."""
        self.accept_index.setdefault(item.id, set()).add(user_id)
        row = self.user_pos[user_id]
        pos = self.index.pos.get(item.id)
        if pos is not None:
            self.accept_matrix[row, pos] = 1.0
        extra = self.graph.item_vectors if self.graph is not None else None
        vec = self.index.vector_of(item.id, extra)
        if vec is None:
            vec = featurize(item, self.index_vocab())
        for tid, w in vec.entries.items():
            self.profile_sums[row, tid] += w
        self.profile_counts[row] += 1

    def index_vocab(self):
        if self.graph is not None:
            return self.graph.vocab
        raise ValueError("no vocabulary available to featurize a new item")


def build_accept_index(networks: dict) -> dict:
    accept_index: dict = {}
    for user_id, network in networks.items():
        for item_id in set(network.accepted):
            accept_index.setdefault(item_id, set()).add(user_id)
    return accept_index


def _baseline_scores(kind: str, ctx: FeedContext, user_id: str) -> np.ndarray:
    """Vectorized candidate scores matching the per-item reference ops."""
    index = ctx.index
    network = ctx.networks[user_id]
    n = len(index.ids)
    accel = ctx.accept_matrix is not None
    if kind == "rd":
        return np.zeros(n)
    if kind == "cb":
        if accel:
            row = ctx.user_pos[user_id]
            count = ctx.profile_counts[row]
            if count == 0:
                return np.zeros(n)
            dense = ctx.profile_sums[row] / count
            pnorm = float(np.linalg.norm(dense))
        else:
            extra = ctx.graph.item_vectors if ctx.graph is not None else None
            profile = _profile_vector(network, index, extra)
            if profile is None:
                return np.zeros(n)
            dense = np.zeros(index.matrix.shape[1])
            for tid, w in profile.entries.items():
                dense[tid] = w
            pnorm = profile.norm
        dots = index.matrix @ dense
        denom = index.norms * pnorm
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(denom > 0.0, dots / denom, 0.0)
        return np.clip(scores, -1.0, 1.0)
    if kind == "uc":
        total_belief = sum(network.belief.values())
        if total_belief <= 0.0:
            return np.zeros(n)
        if accel:
            row = ctx.user_pos[user_id]
            mine = ctx.mass_matrix[row]
            dots = ctx.mass_matrix @ mine
            norms = np.linalg.norm(ctx.mass_matrix, axis=1)
            denom = norms * float(np.linalg.norm(mine))
            with np.errstate(divide="ignore", invalid="ignore"):
                sims = np.where(denom > 0.0, dots / denom, 0.0)
            sims[row] = 0.0
            neighbor_mass = sims @ ctx.accept_matrix
            belief_arr = np.array([network.belief[c] for c in ctx.cats])
            belief_share = belief_arr[ctx.cat_index] / total_belief
            return neighbor_mass * belief_share
        my_hist = _category_count_vector(network)
        sims = {}
        for other_id, other in ctx.networks.items():
            if other_id != user_id:
                sims[other_id] = _dict_cosine(my_hist, _category_count_vector(other))
        neighbor_mass = np.zeros(n)
        for item_id, accepters in ctx.accept_index.items():
            pos = index.pos.get(item_id)
            if pos is None:
                continue
            neighbor_mass[pos] = sum(sims[u] for u in sorted(accepters)
                                     if u != user_id)
        belief_share = np.array(
            [network.belief[c] / total_belief for c in index.categories])
        return neighbor_mass * belief_share
    raise ValueError(f"unknown baseline {kind!r}")


def baseline_ranking(kind: str, ctx: FeedContext, user_id: str, k: int,
                     step: int, seed: int, exclude: set) -> list:
    """Top-k candidate items for a baseline, deterministic under ties."""
    index = ctx.index
    if kind == "rd":
        eligible = [i for i in index.ids if i not in exclude]
        rng = substream(seed, "rd", user_id, step)
        order = rng.permutation(len(eligible))
        return [eligible[i] for i in order[:k]]
    scores = _baseline_scores(kind, ctx, user_id)
    ranked = sorted(
        (i for i in index.ids if i not in exclude),
        key=lambda i: (-scores[index.pos[i]], i))
    return ranked[:k]


def assemble_feed(baseline: str, with_bheisr: bool, w: float, k: int,
                  session, ctx: FeedContext, user_id: str, step: int,
                  seed: int) -> Feed:
    """Mix baseline items with generated items from the nudge session.

    Generated slots cycle over the session's pending prompts (one item per
    slot, fresh ids); if the session is inactive or absent the deficit is
    filled from the baseline. Baseline items come first in score order, then
    the generated items.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not (0.0 <= w <= 1.0):
        raise ValueError("w must be in [0, 1]")
    network = ctx.networks[user_id]
    exclude = network.accepted_ids

    gen_items = []
    if with_bheisr and session is not None:
        want = n_generated(w, k)
        if not session.queue and session.active:
            nudge._do_reschedule(session, ctx.graph, network)
        for prompt in nudge.pending_prompts(session, want):
            gen_items.append(nudge._generate_for(session, prompt, ctx.generator))
    n_base = k - len(gen_items)
    base_ids = baseline_ranking(baseline, ctx, user_id, n_base, step, seed, exclude)
    items = [ctx.corpus.items[i] for i in base_ids] + gen_items
    return Feed(user_id=user_id, step=step, items=items,
                original_count=len(base_ids), generated_count=len(gen_items), w=w)
