"""Binary-split nudging sessions.

A session walks a prompt path by splitting it in half on rejection and popping
prompts on acceptance. Each pending prompt is materialized as a generated item
spanning the prompt's categories; generation is pluggable, with a
deterministic template generator as the default and an HTTP generator that
falls back to the template on failure.
"""

import logging
from dataclasses import dataclass, field

from . import pathfinder
from .corpus import ORIGIN_GENERATED, Item
from .features import build_vocabulary, featurize
from .pathfinder import PromptPath, RejectionLedger

log = logging.getLogger(__name__)

QUEUE_DRAIN = "drain"      # reschedule only once the queue empties
QUEUE_REPLACE = "replace"  # literal: any terminal reject replaces the queue


class QueueEmpty(Exception):
    """The session has no pending prompt; a reschedule is needed."""


def binary_split(prompt: PromptPath):
    """Split a prompt in half; None marks a terminal (length-2) prompt.

    Odd lengths drop the middle node (zero-based halves [0:(L-1)/2) and
    [(L+1)/2:L)); a length-3 prompt would leave single-node halves, so each
    half absorbs its nearest neighbor from the parent instead.
    """
    nodes = prompt.nodes
    length = len(nodes)
    if length == 2:
        return None
    if length == 3:
        return (PromptPath(nodes[0:2]), PromptPath(nodes[1:3]))
    if length % 2 == 0:
        return (PromptPath(nodes[: length // 2]), PromptPath(nodes[length // 2:]))
    return (PromptPath(nodes[: (length - 1) // 2]), PromptPath(nodes[(length + 1) // 2:]))


def initial_queue(path: PromptPath) -> list:
    halves = binary_split(path)
    return [path] if halves is None else list(halves)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

class TemplateGenerator:
    """Deterministic text for a prompt from its categories' exemplar items.

    The title and abstract always contain every prompt category's name plus at
    least two top TF-IDF terms from that category's exemplars (falling back to
    the category name when exemplars are missing or empty).
    """

    def __init__(self, exemplars: dict):
        self.exemplars = exemplars
        self._top_terms: dict = {}
        self._vocab = None

    def _vocabulary(self):
        if self._vocab is None:
            docs = [it for its in self.exemplars.values() for it in its]
            self._vocab = build_vocabulary(docs)
        return self._vocab

    def top_terms(self, category: str, limit: int = 4) -> list:
        if category not in self._top_terms:
            items = self.exemplars.get(category, [])
            if not items:
                self._top_terms[category] = []
            else:
                vocab = self._vocabulary()
                acc: dict = {}
                for item in items:
                    for tid, w in featurize(item, vocab).entries.items():
                        acc[tid] = acc.get(tid, 0.0) + w
                terms = vocab.terms()
                ranked = sorted(acc, key=lambda tid: (-acc[tid], terms[tid]))
                self._top_terms[category] = [terms[tid] for tid in ranked]
        return self._top_terms[category][:limit]

    def generate(self, prompt_categories, seed: int = 0) -> tuple:
        title = " meets ".join(prompt_categories)
        parts = []
        for cat in prompt_categories:
            terms = self.top_terms(cat)
            if len(terms) < 2:
                terms = (terms + [cat, "general"])[:2]
            else:
                start = seed % max(1, len(terms) - 1)
                terms = [terms[start], terms[(start + 1) % len(terms)]]
            parts.append(f"{cat} angle: {terms[0]} {terms[1]}.")
        abstract = "A piece connecting " + ", ".join(prompt_categories) + ". " \
                   + " ".join(parts)
        return title, abstract


class ExternalGenerator:
    """HTTP generation endpoint with retries and template fallback.

    POSTs {"prompt_categories": [...], "exemplar_snippets": [...],
    "max_tokens": n} and expects {"title": ..., "abstract": ...} back. Any
    failure after the retry budget falls back to the template generator and
    counts the event.
    """

    def __init__(self, url: str, fallback: TemplateGenerator, timeout_ms: int = 2000,
                 retries: int = 2, max_tokens: int = 120, post=None):
        if post is None:
            import requests

            def post(url, json, timeout):
                resp = requests.post(url, json=json, timeout=timeout)
                resp.raise_for_status()
                return resp.json()
        self.url = url
        self.fallback = fallback
        self.timeout_ms = timeout_ms
        self.retries = retries
        self.max_tokens = max_tokens
        self.fallback_count = 0
        self._post = post

    def generate(self, prompt_categories, seed: int = 0) -> tuple:
        payload = {
            "prompt_categories": list(prompt_categories),
            "exemplar_snippets": [
                " ".join(self.fallback.top_terms(c)) or c for c in prompt_categories
            ],
            "max_tokens": self.max_tokens,
        }
        last_error = None
        for _ in range(self.retries + 1):
            try:
                doc = self._post(self.url, json=payload,
                                 timeout=self.timeout_ms / 1000.0)
                return str(doc["title"]), str(doc["abstract"])
            except Exception as exc:   # noqa: BLE001 - any transport failure
                last_error = exc
        self.fallback_count += 1
        log.warning("external generator failed (%s); using template", last_error)
        return self.fallback.generate(prompt_categories, seed)


@dataclass
class GeneratedItem(Item):
    prompt_key: str = ""


def generate_item(prompt: PromptPath, exemplars: dict, seed: int = 0,
                  generator=None) -> GeneratedItem:
    """Materialize a prompt as an item with uniform category weights."""
    if generator is None:
        generator = TemplateGenerator(exemplars)
    title, abstract = generator.generate(prompt.nodes, seed)
    weight = 1.0 / len(prompt.nodes)
    return GeneratedItem(
        id=f"gi:{seed}:{prompt.key}",
        category=prompt.nodes[0],
        subcategory=f"{prompt.nodes[0]}/generated",
        title=title,
        abstract=abstract,
        category_weights={c: weight for c in prompt.nodes},
        origin=ORIGIN_GENERATED,
        prompt_key=prompt.key,
    )


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

@dataclass
class NudgeSession:
    user_id: str
    path: PromptPath
    queue: list
    ledger: RejectionLedger
    classes: dict                    # category -> Exposure at session start
    queue_discipline: str = QUEUE_DRAIN
    max_path_len: int = None         # exploration cap; None = category count
    active: bool = True
    gen_counter: int = 0
    history: list = field(default_factory=list)


def new_session(user_id: str, graph, network, classes: dict,
                theta: float = pathfinder.DEFAULT_THETA,
                queue_discipline: str = QUEUE_DRAIN,
                max_path_len: int = None) -> NudgeSession:
    ledger = RejectionLedger(theta=theta)
    source, target = pathfinder.select_endpoints(network, classes)
    path = pathfinder.explore(graph, source, target, network, ledger,
                              max_len=max_path_len)
    return NudgeSession(user_id=user_id, path=path, queue=initial_queue(path),
                        ledger=ledger, classes=classes,
                        queue_discipline=queue_discipline,
                        max_path_len=max_path_len)


def _generate_for(session: NudgeSession, prompt: PromptPath,
                  generator) -> GeneratedItem:
    session.gen_counter += 1
    title, abstract = generator.generate(prompt.nodes, session.gen_counter)
    weight = 1.0 / len(prompt.nodes)
    return GeneratedItem(
        id=f"gi:{session.user_id}:{session.gen_counter}",
        category=prompt.nodes[0],
        subcategory=f"{prompt.nodes[0]}/generated",
        title=title,
        abstract=abstract,
        category_weights={c: weight for c in prompt.nodes},
        origin=ORIGIN_GENERATED,
        prompt_key=prompt.key,
    )


def run_step(session: NudgeSession, graph, network, generator) -> tuple:
    """Generate an item for the head prompt. Raises QueueEmpty when drained."""
    if not session.active or not session.queue:
        raise QueueEmpty(f"session for {session.user_id!r} has no pending prompt")
    prompt = session.queue[0]
    item = _generate_for(session, prompt, generator)
    return item, prompt


def pending_prompts(session: NudgeSession, count: int) -> list:
    """The next `count` prompts, cycling over the queue when it is shorter."""
    if not session.active or not session.queue:
        return []
    return [session.queue[i % len(session.queue)] for i in range(count)]


def _do_reschedule(session: NudgeSession, graph, network) -> str:
    fresh = pathfinder.reschedule(graph, network, session.ledger, session.classes,
                                  max_len=session.max_path_len)
    if fresh is None:
        session.active = False
        session.queue = []
        return "terminal"
    session.path = fresh
    session.queue = initial_queue(fresh)
    return "rescheduled"


def apply_feedback(session: NudgeSession, item: GeneratedItem, accepted: bool,
                   graph, network) -> str:
    """Fold one decision on a generated item back into the session.

    Accepts credit belief mass and the category graph and retire the prompt;
    rejects count against the ledger and split the prompt (terminal prompts
    trigger a reschedule per the queue discipline). Returns the event name.
    """
    try:
        index = next(i for i, p in enumerate(session.queue)
                     if p.key == item.prompt_key)
        prompt = session.queue[index]
    except StopIteration:
        index = prompt = None

    if accepted:
        network.update_on_feedback(item, True)
        graph.accept_item_update(item)
        status = "accepted"
        if index is not None:
            session.queue.pop(index)
            if not session.queue:
                status = f"accepted+{_do_reschedule(session, graph, network)}"
    else:
        fallback_prompt = prompt if prompt is not None else \
            PromptPath(tuple(item.prompt_key.split("->")))
        network.update_on_feedback(item, False, fallback_prompt)
        pathfinder.record_rejection(session.ledger, fallback_prompt)
        status = "rejected"
        if index is not None:
            halves = binary_split(prompt)
            if halves is not None:
                session.queue[index:index + 1] = list(halves)
                status = "split"
            else:
                session.queue.pop(index)
                if session.queue_discipline == QUEUE_REPLACE or not session.queue:
                    status = f"rejected+{_do_reschedule(session, graph, network)}"
    if index is None:
        status += "/stale"
    session.history.append({
        "step": session.gen_counter,
        "prompt": item.prompt_key,
        "item": item.id,
        "accepted": accepted,
        "event": status,
    })
    return status
