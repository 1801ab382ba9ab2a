"""Seeded desk-scale simulation loop and the four standard experiments.

Users accept each recommended item with probability equal to the item's
belief share (one logged uniform draw per decision). Per-user nudge sessions,
belief networks, and RNG streams are independent; category-graph and
history-index updates are batched between steps, so parallel and
single-threaded execution produce identical results.
"""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import belief as belief_mod
from . import detection, nudge, recommenders
from .corpus import ORIGIN_GENERATED, Corpus, SynthSpec, load_behaviors, \
    load_corpus, load_ratings, synth_corpus
from .features import CategoryGraph, GraphUpdateBuffer, build_vocabulary
from .recommenders import CandidateIndex, FeedContext, acceptance_share, assemble_feed
from .rng import substream

# model name -> (baseline kind, mixes generated items)
MODELS = {
    "rd": ("rd", False),
    "rd_w": ("rd", True),
    "cb": ("cb", False),
    "cb_w": ("cb", True),
    "uc": ("uc", False),
    "uc_w": ("uc", True),
    "bheisr": ("rd", True),
}

EXEMPLARS_PER_CATEGORY = 3


@dataclass
class SimConfig:
    model: str = "cb_w"
    w: float = 0.6
    k: int = 10
    theta: float = 2.0
    feeds: int = 10
    seed: int = 0
    dataset: str = None
    dataset_format: str = "json"         # json | mind_tsv | imdb_csv
    synth: SynthSpec = None
    users: tuple = None                  # simulate only these users
    target_user: str = None
    queue_discipline: str = nudge.QUEUE_DRAIN
    max_path_len: int = None
    generator_kind: str = "template"     # template | external
    generator_url: str = None
    generator_timeout_ms: int = 2000
    generator_retries: int = 2
    parallel: bool = False
    track_fb: bool = False
    trace_paths: bool = False


def acceptance_probability(item, network) -> float:
    """Probability the user accepts the item: its belief share in [0, 1]."""
    return acceptance_share(item, network)


def decide(item, network, rng) -> tuple:
    """One Bernoulli decision; always consumes exactly one uniform draw."""
    ap = acceptance_probability(item, network)
    draw = float(rng.random())
    return draw < ap, ap, draw


def checkpoint_steps(feeds: int) -> tuple:
    if feeds <= 20:
        return tuple(range(1, feeds + 1))
    steps = [t for t in range(10, feeds + 1, 10)]
    if steps[-1] != feeds:
        steps.append(feeds)
    return tuple(steps)


@dataclass(frozen=True)
class DecisionRecord:
    item_id: str
    origin: str
    ap: float
    draw: float
    accepted: bool


@dataclass(frozen=True)
class StepUserRecord:
    step: int
    user_id: str
    item_ids: tuple
    origins: tuple
    categories: tuple            # sorted distinct categories in the feed
    coverage: float
    belief_coverage: float
    decisions: tuple


@dataclass
class RunRecord:
    model: str
    seed: int
    w: float
    k: int
    users: tuple
    steps: list = field(default_factory=list)        # per step: [StepUserRecord]
    checkpoints: dict = field(default_factory=dict)  # user -> [(step, {cat: B})]
    fb_counts: list = None                           # [(step, count)] when tracked
    initial_fb_users: tuple = ()
    path_traces: list = field(default_factory=list)

    def coverage_series(self, user_id: str) -> list:
        return [rec.coverage for step in self.steps for rec in step
                if rec.user_id == user_id]

    def belief_coverage_series(self, user_id: str) -> list:
        return [rec.belief_coverage for step in self.steps for rec in step
                if rec.user_id == user_id]


def build_corpus(config: SimConfig) -> Corpus:
    if config.synth is not None:
        return synth_corpus(config.synth)
    if config.dataset is None:
        raise ValueError("config needs either a dataset path or a synth spec")
    if config.dataset_format == "mind_tsv":
        return load_behaviors(config.dataset)
    if config.dataset_format == "imdb_csv":
        return load_ratings(config.dataset)
    if config.dataset_format == "json":
        return load_corpus(config.dataset)
    raise ValueError(f"unknown dataset format {config.dataset_format!r}")


def _collect_exemplars(corpus: Corpus) -> dict:
    exemplars = {c: [] for c in corpus.categories()}
    for item in corpus.items.values():
        bucket = exemplars[item.category]
        if len(bucket) < EXEMPLARS_PER_CATEGORY:
            bucket.append(item)
    return exemplars


def _build_generator(config: SimConfig, exemplars: dict):
    template = nudge.TemplateGenerator(exemplars)
    if config.generator_kind == "external":
        if not config.generator_url:
            raise ValueError("external generator needs generator_url")
        return nudge.ExternalGenerator(config.generator_url, template,
                                       timeout_ms=config.generator_timeout_ms,
                                       retries=config.generator_retries)
    if config.generator_kind != "template":
        raise ValueError(f"unknown generator kind {config.generator_kind!r}")
    return template


@dataclass
class SimState:
    """Shared immutable-within-a-step world handed to user steps."""
    config: SimConfig
    corpus: Corpus
    graph: CategoryGraph
    networks: dict
    ctx: FeedContext
    sessions: dict
    baseline: str
    with_bheisr: bool
    w_eff: float
    classification: object = None


@dataclass
class SharedAssets:
    """Immutable per-corpus features, reusable across runs with any seed."""
    vocab: object
    index: CandidateIndex


def build_assets(corpus: Corpus) -> SharedAssets:
    vocab = build_vocabulary(corpus.items.values())
    return SharedAssets(vocab=vocab, index=CandidateIndex.build(corpus, vocab))


def _initial_classification(corpus, networks):
    beliefs = {u: net.belief for u, net in networks.items() if net.total_mass() > 0.0}
    if len(beliefs) < detection.MIN_POPULATION:
        return None
    return detection.classify_users(beliefs, corpus.categories())


def prepare(config: SimConfig, corpus: Corpus = None,
            assets: SharedAssets = None) -> SimState:
    if config.model not in MODELS:
        raise ValueError(f"unknown model {config.model!r}; pick from "
                         f"{sorted(MODELS)}")
    if corpus is None:
        corpus = build_corpus(config)
    if assets is None:
        assets = build_assets(corpus)
    vocab, index = assets.vocab, assets.index
    graph = CategoryGraph.build(corpus, vocab, item_vectors=index.vectors)
    networks = belief_mod.build_all(corpus)
    classification = _initial_classification(corpus, networks)
    exemplars = _collect_exemplars(corpus)
    generator = _build_generator(config, exemplars)
    ctx = FeedContext(corpus=corpus, index=index, networks=networks, graph=graph,
                      accept_index=recommenders.build_accept_index(networks),
                      generator=generator)
    ctx.enable_acceleration()

    baseline, with_bheisr = MODELS[config.model]
    w_eff = 1.0 if config.model == "bheisr" else config.w
    sessions = {}
    if with_bheisr and classification is not None:
        sim_users = config.users or corpus.users
        for user in classification.fb_users:
            if user not in sim_users:
                continue
            sessions[user] = nudge.new_session(
                user, graph, networks[user], classification.classes[user],
                theta=config.theta, queue_discipline=config.queue_discipline,
                max_path_len=config.max_path_len)
    return SimState(config=config, corpus=corpus, graph=graph, networks=networks,
                    ctx=ctx, sessions=sessions, baseline=baseline,
                    with_bheisr=with_bheisr, w_eff=w_eff,
                    classification=classification)


def _user_step(state: SimState, user_id: str, step: int):
    config = state.config
    network = state.networks[user_id]
    session = state.sessions.get(user_id)
    buffer = GraphUpdateBuffer(state.graph)
    ctx = replace(state.ctx, graph=buffer)

    feed = assemble_feed(state.baseline, state.with_bheisr, state.w_eff, config.k,
                         session, ctx, user_id, step, config.seed)
    rng = substream(config.seed, "decide", user_id, step)
    decisions = []
    accepted_dataset = []
    for item in feed.items:
        ok, ap, draw = decide(item, network, rng)
        decisions.append(DecisionRecord(item_id=item.id, origin=item.origin,
                                        ap=ap, draw=draw, accepted=ok))
    for item, dec in zip(feed.items, decisions):
        if item.origin == ORIGIN_GENERATED and session is not None:
            nudge.apply_feedback(session, item, dec.accepted, buffer, network)
        elif dec.accepted:
            network.update_on_feedback(item, True)
            buffer.accept_item_update(item)
    accepted_items = [item for item, dec in zip(feed.items, decisions)
                      if dec.accepted]
    taxonomy = state.corpus.taxonomy
    record = StepUserRecord(
        step=step,
        user_id=user_id,
        item_ids=tuple(it.id for it in feed.items),
        origins=tuple(it.origin for it in feed.items),
        categories=tuple(sorted(set().union(
            *[detection.item_categories(it) for it in feed.items]))),
        coverage=detection.diversity_coverage(feed, taxonomy),
        belief_coverage=network.positive_category_count() / len(taxonomy),
        decisions=tuple(decisions),
    )
    return record, buffer, accepted_items


def run_loop(config: SimConfig, corpus: Corpus = None,
             assets: SharedAssets = None) -> RunRecord:
    """Run the interaction loop for `config.feeds` steps.

    Only `config.users` (default: everyone) are fed; the rest of the
    population still backs classification. Updates to shared state (category
    graph, acceptance index, history masses) are applied between steps in
    user order, so results do not depend on execution order within a step.
    """
    state = prepare(config, corpus, assets)
    sim_users = tuple(config.users) if config.users else state.corpus.users
    for user in sim_users:
        if user not in state.networks:
            raise ValueError(f"unknown user {user!r}")

    record = RunRecord(model=config.model, seed=config.seed, w=state.w_eff,
                       k=config.k, users=sim_users)
    if state.classification is not None:
        record.initial_fb_users = state.classification.fb_users
    checkpoints = set(checkpoint_steps(config.feeds))
    for user in sim_users:
        record.checkpoints[user] = []
    fb_counts = []
    if config.track_fb:
        fb_counts.append((0, _current_fb_count(state)))

    for step in range(1, config.feeds + 1):
        if config.parallel and len(sim_users) > 1:
            with ThreadPoolExecutor(max_workers=min(8, len(sim_users))) as pool:
                results = dict(zip(sim_users,
                                   pool.map(lambda u: _user_step(state, u, step),
                                            sim_users)))
        else:
            results = {u: _user_step(state, u, step) for u in sim_users}

        step_records = []
        for user in sim_users:
            rec, buffer, accepted = results[user]
            step_records.append(rec)
            buffer.flush()
        for user in sim_users:
            _, _, accepted = results[user]
            for item in accepted:
                state.ctx.note_accept(user, item)
        state.ctx.refresh_mass()
        record.steps.append(step_records)

        if step in checkpoints:
            for user in sim_users:
                net = state.networks[user]
                record.checkpoints[user].append(
                    (step, {c: net.belief[c] for c in net.categories}))
        if config.track_fb:
            fb_counts.append((step, _current_fb_count(state)))

    if config.track_fb:
        record.fb_counts = fb_counts
    if config.trace_paths:
        for user in sorted(state.sessions):
            session = state.sessions[user]
            record.path_traces.append(
                {"user": user, "path": session.path.key,
                 "history": list(session.history)})
    return record


def _current_fb_count(state: SimState) -> int:
    beliefs = {u: net.belief for u, net in state.networks.items()
               if net.total_mass() > 0.0}
    if len(beliefs) < detection.MIN_POPULATION:
        return 0
    return len(detection.classify_users(beliefs, state.corpus.categories()).fb_users)


def resolve_target_user(config: SimConfig, corpus: Corpus = None,
                        assets: SharedAssets = None) -> str:
    """The configured target, or the first bubble-affected user."""
    if config.target_user:
        return config.target_user
    state = prepare(replace(config, model="cb"), corpus, assets)
    if state.classification is None or not state.classification.fb_users:
        raise ValueError("no bubble-affected users to target")
    return state.classification.fb_users[0]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

COVERAGE_MODELS = ("rd", "rd_w", "cb", "cb_w", "uc", "uc_w", "bheisr")
IMPROVEMENT_PAIRS = (("rd", "rd_w"), ("cb", "cb_w"), ("uc", "uc_w"))


@dataclass
class CoverageTable:
    models: tuple
    rows: list                  # per feed: {model: coverage}
    sums: dict
    improvements: dict          # mixed model -> percent over its baseline


def experiment_coverage(config: SimConfig, corpus: Corpus = None,
                        models: tuple = COVERAGE_MODELS,
                        out_dir: str = None) -> CoverageTable:
    """Per-feed diversity coverage of one user's feeds under each model."""
    if corpus is None:
        corpus = build_corpus(config)
    assets = build_assets(corpus)
    target = resolve_target_user(config, corpus, assets)
    series = {}
    for model in models:
        run = run_loop(replace(config, model=model, users=(target,),
                               track_fb=False), corpus, assets)
        series[model] = run.coverage_series(target)
    rows = [{m: series[m][t] for m in models} for t in range(config.feeds)]
    sums = {m: sum(series[m]) for m in models}
    improvements = {}
    for base, mixed in IMPROVEMENT_PAIRS:
        if base in sums and mixed in sums and sums[base] > 0.0:
            improvements[mixed] = 100.0 * (sums[mixed] - sums[base]) / sums[base]
    table = CoverageTable(models=tuple(models), rows=rows, sums=sums,
                          improvements=improvements)
    if out_dir:
        write_coverage_csv(table, os.path.join(out_dir, "coverage.csv"))
    return table


def experiment_trajectory(config: SimConfig, corpus: Corpus = None,
                          interest: str = None, disinterest: str = None,
                          out_dir: str = None) -> dict:
    """Belief of the interest and disinterest categories at checkpoints."""
    if corpus is None:
        corpus = build_corpus(config)
    assets = build_assets(corpus)
    target = resolve_target_user(config, corpus, assets)
    if interest is None or disinterest is None:
        state = prepare(replace(config, model="cb"), corpus, assets)
        if state.classification is None:
            raise ValueError("cannot infer endpoint categories without "
                             "a classified population")
        from . import pathfinder
        src, dst = pathfinder.select_endpoints(
            state.networks[target], state.classification.classes[target])
        interest = interest or src
        disinterest = disinterest or dst
    run = run_loop(replace(config, users=(target,), track_fb=False), corpus,
                   assets)
    points = run.checkpoints[target]
    result = {
        "user": target,
        "interest": interest,
        "disinterest": disinterest,
        "steps": [s for s, _ in points],
        "interest_series": [b[interest] for _, b in points],
        "disinterest_series": [b[disinterest] for _, b in points],
    }
    if out_dir:
        path = os.path.join(out_dir, "trajectory.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "series", "value"])
            for s, b in points:
                writer.writerow([s, "interest", _fmt(b[interest])])
                writer.writerow([s, "disinterest", _fmt(b[disinterest])])
    return result


def experiment_fb_count(config: SimConfig, corpus: Corpus = None,
                        models: tuple = COVERAGE_MODELS,
                        out_dir: str = None) -> dict:
    """Population bubble-affected count after every feed, per model."""
    if corpus is None:
        corpus = build_corpus(config)
    assets = build_assets(corpus)
    counts = {}
    for model in models:
        run = run_loop(replace(config, model=model, track_fb=True), corpus,
                       assets)
        counts[model] = run.fb_counts
    if out_dir:
        path = os.path.join(out_dir, "fb_count.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step"] + list(models))
            steps = [s for s, _ in counts[models[0]]]
            for i, s in enumerate(steps):
                writer.writerow([s] + [counts[m][i][1] for m in models])
    return counts


def experiment_w_sweep(config: SimConfig, corpus: Corpus = None,
                       w_values: tuple = (0.2, 0.4, 0.6, 0.8),
                       out_dir: str = None) -> dict:
    """Belief-network category coverage of the target user per feed, per w."""
    if corpus is None:
        corpus = build_corpus(config)
    assets = build_assets(corpus)
    target = resolve_target_user(config, corpus, assets)
    model = config.model if MODELS[config.model][1] else "uc_w"
    series = {}
    for w in w_values:
        run = run_loop(replace(config, model=model, w=w, users=(target,),
                               track_fb=False), corpus, assets)
        series[w] = run.belief_coverage_series(target)
    if out_dir:
        path = os.path.join(out_dir, "w_sweep.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "w", "belief_coverage"])
            for w in w_values:
                for t, value in enumerate(series[w], start=1):
                    writer.writerow([t, _fmt(w), _fmt(value)])
    return {"user": target, "model": model, "series": series}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


MODEL_LABELS = {
    "rd": "RD", "rd_w": "RD_wC", "cb": "CB", "cb_w": "CB_wC",
    "uc": "UC", "uc_w": "UC_wC", "bheisr": "BHEISR",
}


def write_coverage_csv(table: CoverageTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Times"] + [MODEL_LABELS[m] for m in table.models])
        for i, row in enumerate(table.rows, start=1):
            writer.writerow([f"feed_{i}"] + [_fmt(row[m]) for m in table.models])
        writer.writerow(["Sum"] + [_fmt(table.sums[m]) for m in table.models])
        improv = []
        for m in table.models:
            improv.append(_fmt(table.improvements[m]) + "%"
                          if m in table.improvements else "")
        writer.writerow(["Improv"] + improv)


def write_run_log(record: RunRecord, path: str) -> None:
    """JSON-lines log: one row per (step, user) with decisions and draws."""
    with open(path, "w", encoding="utf-8") as fh:
        for step_records in record.steps:
            for rec in step_records:
                fh.write(json.dumps({
                    "step": rec.step,
                    "user": rec.user_id,
                    "items": [
                        {"id": i, "origin": o}
                        for i, o in zip(rec.item_ids, rec.origins)
                    ],
                    "decisions": [
                        {"item": d.item_id, "ap": d.ap, "draw": d.draw,
                         "accepted": d.accepted}
                        for d in rec.decisions
                    ],
                    "coverage": rec.coverage,
                }, sort_keys=True) + "\n")


def write_belief_snapshots(record: RunRecord, networks_dir: str) -> None:
    os.makedirs(networks_dir, exist_ok=True)
    for user, points in record.checkpoints.items():
        doc = [{"step": s, "belief": b} for s, b in points]
        path = os.path.join(networks_dir, f"{user}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
