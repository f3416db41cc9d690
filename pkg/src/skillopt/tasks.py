"""Task adapters: deterministic scripted landscapes and an HTTP LLM mutator.

Scripted adapters score documents through a registry keyed by the serialized
document, so ``score`` stays a pure function of (doc, example) while the
mutator hands out offspring from a script.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .engine import MutationError
from .metrics import ComplianceLimits
from .skill_doc import SkillDoc, parse, serialize

log = logging.getLogger(__name__)

LABELS = ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO")

FEVER_SEED_TEXT = """\
---
name: fever_verification
description: Claim verification with retrieval tool
compatibility: dspy>=2.5, python>=3.10
metadata: task: fever_singlecall, modules: 1
allowed-tools: [retriever]
---
# execute.predict
Given the fields 'claim', 'evidence', produce the fields 'verdict'.
"""

_CURRENT_RE = re.compile(r"## Current SKILL\.md\n```\n(.*?)\n```\n\n## Compliance Status", re.DOTALL)
_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def fever_seed() -> SkillDoc:
    return parse(FEVER_SEED_TEXT)


def current_skill_from_prompt(prompt: str) -> SkillDoc:
    m = _CURRENT_RE.search(prompt)
    if not m:
        raise MutationError("prompt does not contain a current SKILL.md block")
    return parse(m.group(1))


def arrange_binary(mean: float, size: int, order: Sequence[int]) -> tuple[float, ...]:
    """0/1 per-example scores whose mean is ``round(mean * size) / size``; ones follow ``order``."""
    k = int(round(mean * size))
    out = [0.0] * size
    for i in order[:k]:
        out[i] = 1.0
    return tuple(out)


def filler_text(length: int, tag: str = "", sep: str = "\n") -> str:
    """Deterministic instruction-like text of exactly ``length`` characters."""
    if length <= 0:
        return ""
    lines = [f"Revision {tag}." if tag else "Instructions."]
    k = 1
    while sum(len(x) + 1 for x in lines) < length:
        lines.append(f"Rule {k}: check each part of the claim against the evidence before answering.")
        k += 1
    text = sep.join(lines)[:length]
    if text[-1].isspace():
        text = text[:-1] + "."
    return text


def apply_patch(doc: SkillDoc, patch: dict) -> SkillDoc:
    """Apply a script ``doc_patch``: scalar fields replace, body maps section -> text (null drops)."""
    changes: dict[str, Any] = {}
    for key in ("name", "description", "compatibility"):
        if key in patch:
            changes[key] = patch[key]
    if "metadata" in patch:
        changes["metadata"] = {**doc.metadata, **patch["metadata"]}
    if "allowed_tools" in patch:
        changes["allowed_tools"] = tuple(patch["allowed_tools"])
    if "body" in patch:
        body = dict(doc.body)
        for name, text in patch["body"].items():
            if text is None:
                body.pop(name, None)
            else:
                body[name] = text
        changes["body"] = tuple(body.items())
    return doc.replace(**changes)


@dataclass
class ScriptStep:
    patch: dict
    train_scores: tuple[float, ...]
    validation_scores: tuple[float, ...]


class ScriptedTask:
    """Replayable task whose mutations and scores come from a fixed script.

    Mutation ``k`` applies step ``k`` (modulo the script length when ``cycle``)
    to the parent document found in the prompt. An empty script makes every
    mutation fail, so the engine idles.
    """

    def __init__(self, seed_doc: SkillDoc, seed_train: Sequence[float], seed_validation: Sequence[float],
                 steps: Sequence[ScriptStep] = (), cycle: bool = True, conflict_mode: bool = False):
        self.train = [("train", i) for i in range(len(seed_train))]
        self.validation = [("validation", i) for i in range(len(seed_validation))]
        self.steps = list(steps)
        self.cycle = cycle
        self.conflict_mode = conflict_mode
        self.calls = 0
        self._scores: dict[str, dict[str, tuple[float, ...]]] = {}
        self.seed_doc = seed_doc
        self.register(seed_doc, seed_train, seed_validation)

    def register(self, doc: SkillDoc, train: Sequence[float], validation: Sequence[float]) -> None:
        if len(train) != len(self.train) or len(validation) != len(self.validation):
            raise ValueError("score vectors must match the dataset sizes")
        key = serialize(doc)
        entry = {"train": tuple(map(float, train)), "validation": tuple(map(float, validation))}
        old = self._scores.get(key)
        if old is not None and old != entry:
            raise ValueError("script assigns two different score vectors to the same document")
        self._scores[key] = entry

    def score(self, doc: SkillDoc, example) -> float:
        split, i = example
        try:
            return self._scores[serialize(doc)][split][i]
        except KeyError:
            raise KeyError(f"document {doc.name!r} is not in the script") from None

    def feedback(self, doc: SkillDoc, example, score: float) -> str:
        expected = LABELS[example[1] % len(LABELS)]
        if score >= 0.5:
            return f"Correct! Verdict is {expected}."
        predicted = LABELS[(example[1] + 1) % len(LABELS)]
        return f"Incorrect. Expected '{expected}', got '{predicted}'."

    def mutate(self, prompt: str, rng) -> SkillDoc:
        if not self.steps:
            raise MutationError("mutation script is empty")
        if self.calls >= len(self.steps) and not self.cycle:
            raise MutationError("mutation script exhausted")
        step = self.steps[self.calls % len(self.steps)]
        self.calls += 1
        parent = current_skill_from_prompt(prompt)
        child = apply_patch(parent, step.patch)
        self.register(child, step.train_scores, step.validation_scores)
        return child


@dataclass
class ConflictConfig:
    train_size: int = 20
    validation_size: int = 10
    seed_correctness: float = 0.632
    first_correctness: float = 0.70
    first_description_length: int = 236
    first_body_length: int = 3100
    correctness_step: float = 0.005
    description_step: int = 2
    body_step: int = -50
    steps: int = 50


def conflict_landscape(config: ConflictConfig = ConflictConfig(), seed_doc: SkillDoc | None = None) -> ScriptedTask:
    """Every offspring beats the seed on correctness but loses more in compliance.

    Step ``k`` has correctness ``first + k * correctness_step``, a description
    that grows by ``description_step`` chars and a body that changes by
    ``body_step`` chars per step. With the defaults every offspring has a lower
    composite than the seed while staying incomparable to it and to its siblings.
    Late steps add enough volume to clear a 0.1 HVC threshold.
    Per-example correctness is constant across examples, so minibatch means
    equal validation means.
    """
    seed_doc = seed_doc or fever_seed()
    section = seed_doc.section_names[0] if seed_doc.section_names else "execute.predict"
    steps = []
    for k in range(config.steps):
        corr = config.first_correctness + k * config.correctness_step
        desc = filler_text(config.first_description_length + k * config.description_step, f"d{k}", " ")
        body = filler_text(config.first_body_length + k * config.body_step, f"b{k}")
        steps.append(ScriptStep(
            {"description": desc, "body": {section: body}},
            (corr,) * config.train_size,
            (corr,) * config.validation_size,
        ))
    return ScriptedTask(
        seed_doc,
        (config.seed_correctness,) * config.train_size,
        (config.seed_correctness,) * config.validation_size,
        steps,
        cycle=True,
        conflict_mode=True,
    )


@dataclass
class ConcaveConfig:
    # (correctness, description_compliance) pairs; body compliance stays 1 (empty body)
    front: tuple[tuple[float, float], ...] = ((1.0, 0.0), (0.4, 0.4), (0.0, 1.0))
    train_size: int = 10
    validation_size: int = 10
    seed_point: tuple[float, float] = (0.0, 0.0)
    description_limit: int = 1000


def concave_front_landscape(config: ConcaveConfig = ConcaveConfig()) -> ScriptedTask:
    """Offspring land on a fixed 2D front embedded in 3D with body compliance 1.

    Description lengths are chosen against ``config.description_limit``; run
    with that limit for the metric vectors to hit the front exactly.
    """
    order = list(range(max(config.train_size, config.validation_size)))

    def doc_for(point, tag):
        corr, desc = point
        length = int(round((1.0 - desc) * config.description_limit))
        return {"description": filler_text(length, tag, " "), "body": {}}

    def scores(corr):
        return (arrange_binary(corr, config.train_size, order[: config.train_size]),
                arrange_binary(corr, config.validation_size, order[: config.validation_size]))

    base = SkillDoc(name="concave_front", description="", body=())
    seed = apply_patch(base, doc_for(config.seed_point, "seed"))
    steps = []
    for k, point in enumerate(config.front):
        tr, va = scores(point[0])
        steps.append(ScriptStep(doc_for(point, f"p{k}"), tr, va))
    st, sv = scores(config.seed_point[0])
    task = ScriptedTask(seed, st, sv, steps, cycle=True)
    task.front = tuple((c, d, 1.0) for c, d in config.front)
    return task


@dataclass(frozen=True)
class Move:
    """One mutation kind: uniform ranges for the change in correctness and in text lengths."""

    name: str
    weight: float
    correctness: tuple[float, float]
    body: tuple[int, int]
    description: tuple[int, int] = (0, 0)


# Values come from a parameter search on seeds disjoint from the acceptance seeds.
TRADEOFF_MOVES = (
    Move("verbose", 0.0806347963991166, (0.09249158512534923, 0.28152109263960906), (451, 1046), (10, 60)),
    Move("compress", 0.043860509837247055, (-0.09683800871738983, -0.06896181048566669), (-675, -659), (-40, -10)),
    Move("balanced", 0.579190268538075, (0.020165848196312345, 0.07436645759781509), (-97, 0), (-10, 0)),
    Move("degrade", 0.11618976196076503, (-0.18633431364832842, 0.0), (0, 299), (0, 20)),
)


@dataclass
class TradeoffConfig:
    train_size: int = 20
    validation_size: int = 10
    seed_correctness: float = 0.42
    seed_description_length: int = 100
    seed_body_length: int = 1210
    moves: tuple[Move, ...] = TRADEOFF_MOVES
    landscape_seed: int = 0
    # one fixed example order per landscape: a more accurate skill solves a superset
    nested: bool = True


class TradeoffLandscape(ScriptedTask):
    """Generative landscape mixing accurate-but-verbose and balanced offspring.

    Each mutation reads the parent from the prompt and applies one move drawn
    from the task stream with probability proportional to its weight. With the
    default moves, *verbose* buys correctness with a longer body,
    *compress* does the reverse, *balanced* improves the parent slightly on
    every objective, and *degrade* makes it worse. Per-example correctness is
    0/1; when ``nested`` is set all documents share one example order, so a
    more accurate document solves a superset of examples.
    """

    def __init__(self, config: TradeoffConfig = TradeoffConfig(), seed_doc: SkillDoc | None = None):
        if not config.moves or any(m.weight < 0 for m in config.moves):
            raise ValueError("moves must be non-empty with non-negative weights")
        self.config = config
        self._weights = np.array([m.weight for m in config.moves], dtype=float)
        self._weights /= self._weights.sum()
        self._state: dict[str, tuple[float, int, int]] = {}
        if seed_doc is None:
            seed_doc = SkillDoc(
                name="tradeoff_skill",
                description=filler_text(config.seed_description_length, "seed", " "),
                body=(("execute.predict", filler_text(config.seed_body_length, "seed")),),
            )
        st, sv = self._scores_for(seed_doc, config.seed_correctness)
        super().__init__(seed_doc, st, sv, steps=(), cycle=True)
        self._state[serialize(seed_doc)] = (
            config.seed_correctness, len(seed_doc.description), seed_doc.body_length())

    def _scores_for(self, doc: SkillDoc, corr: float):
        c = self.config
        if c.nested:
            g = np.random.default_rng(c.landscape_seed)
        else:
            digest = hashlib.sha256(serialize(doc).encode()).digest()
            g = np.random.default_rng([c.landscape_seed, int.from_bytes(digest[:8], "little")])
        return (arrange_binary(corr, c.train_size, list(g.permutation(c.train_size))),
                arrange_binary(corr, c.validation_size, list(g.permutation(c.validation_size))))

    def mutate(self, prompt: str, rng) -> SkillDoc:
        parent = current_skill_from_prompt(prompt)
        try:
            corr, dlen, blen = self._state[serialize(parent)]
        except KeyError:
            raise MutationError("parent document is not part of this landscape") from None
        self.calls += 1
        move = self.config.moves[int(rng.choice(len(self.config.moves), p=self._weights))]
        corr = float(np.clip(corr + rng.uniform(*move.correctness), 0.0, 1.0))
        blen = int(max(1, blen + rng.integers(move.body[0], move.body[1] + 1)))
        dlen = int(max(1, dlen + rng.integers(move.description[0], move.description[1] + 1)))
        tag = f"{move.name}{self.calls}"
        section = parent.section_names[0] if parent.section_names else "execute.predict"
        child = apply_patch(parent, {
            "description": filler_text(dlen, tag, " "),
            "body": {section: filler_text(blen, tag)},
        })
        key = serialize(child)
        if key not in self._state:
            self._state[key] = (corr, dlen, blen)
            self.register(child, *self._scores_for(child, corr))
        return child


def load_script(path) -> ScriptedTask:
    """Load a scripted landscape from JSON.

    Schema::

        {"seed": {"skill_md": "...", "per_example_scores": {"train": [...], "validation": [...]}},
         "cycle": true,
         "steps": [{"doc_patch": {...}, "per_example_scores": {"train": [...], "validation": [...]}}]}

    ``per_example_scores`` may instead be ``{"correctness": x, "train_size": n,
    "validation_size": m}``, which spreads 0/1 scores to hit ``x``.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    seed_info = data["seed"]
    seed_doc = parse(seed_info["skill_md"])
    st, sv = _script_scores(seed_info["per_example_scores"])
    steps = []
    for raw in data.get("steps", []):
        tr, va = _script_scores(raw["per_example_scores"])
        steps.append(ScriptStep(raw.get("doc_patch", {}), tr, va))
    return ScriptedTask(seed_doc, st, sv, steps, cycle=data.get("cycle", True),
                        conflict_mode=data.get("conflict_mode", False))


def _script_scores(entry: dict):
    if "correctness" in entry:
        n, m = int(entry["train_size"]), int(entry["validation_size"])
        return (arrange_binary(entry["correctness"], n, list(range(n))),
                arrange_binary(entry["correctness"], m, list(range(m))))
    return tuple(entry["train"]), tuple(entry["validation"])


# --- LLM-backed mutation -----------------------------------------------------

RETRY_STATUS = {408, 429, 500, 502, 503, 504}


def extract_fenced(text: str) -> str:
    """Contents of the first triple-backtick block in ``text``."""
    m = _FENCE_RE.search(text)
    if not m:
        raise MutationError("response has no fenced block")
    return m.group(1)


def response_text(payload: Any) -> str:
    """Pull the assistant text out of common chat-completion response shapes."""
    if isinstance(payload, str):
        return payload
    if "choices" in payload:
        return payload["choices"][0]["message"]["content"]
    content = payload.get("content")
    if isinstance(content, list):
        return "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if isinstance(content, str):
        return content
    if "text" in payload:
        return payload["text"]
    raise MutationError("unrecognized response payload")


@dataclass
class EndpointConfig:
    url: str
    model: str
    api_key_env: str = "SKILLOPT_API_KEY"
    timeout: float = 120.0
    max_tokens: int = 4096
    tries: int = 3
    backoff: float = 1.0


class ChatClient:
    """Minimal JSON chat client with exponential backoff."""

    def __init__(self, config: EndpointConfig, transport=None, sleep: Callable[[float], None] = time.sleep):
        import httpx

        self.config = config
        self._sleep = sleep
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._errors = (httpx.HTTPError,)

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = {"content-type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["authorization"] = f"Bearer {key}"
        body = {"model": cfg.model, "messages": [{"role": "user", "content": prompt}],
                "max_tokens": cfg.max_tokens}
        last = None
        for attempt in range(cfg.tries):
            if attempt:
                self._sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(cfg.url, json=body, headers=headers)
            except self._errors as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise MutationError(f"endpoint returned HTTP {resp.status_code}")
            try:
                return response_text(resp.json())
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MutationError(f"malformed endpoint response: {exc}") from exc
        raise MutationError(f"endpoint failed after {cfg.tries} tries ({last})")

    def close(self) -> None:
        self._http.close()


def llm_mutator(config: EndpointConfig, transport=None, sleep=time.sleep) -> Callable[[str, Any], SkillDoc]:
    client = ChatClient(config, transport=transport, sleep=sleep)

    def mutate(prompt: str, rng=None) -> SkillDoc:
        text = client.complete(prompt)
        try:
            return parse(extract_fenced(text))
        except MutationError:
            log.warning("mutator response has no fenced block:\n%s", text)
            raise
        except ValueError as exc:
            log.warning("unparseable mutator response: %s\n%s", exc, text)
            raise MutationError(f"unparseable SKILL.md in response: {exc}") from exc

    mutate.client = client
    return mutate


def llm_executor(config: EndpointConfig, transport=None, sleep=time.sleep) -> Callable[[SkillDoc, dict], str]:
    """Executor that runs a skill by sending SKILL.md plus the JSON input as one chat turn.

    The reply's last non-empty line is taken as the prediction.
    """
    client = ChatClient(config, transport=transport, sleep=sleep)

    def execute(doc: SkillDoc, inputs: dict) -> str:
        prompt = (
            "Follow this skill.\n\n" + serialize(doc)
            + "\nInput (JSON):\n" + json.dumps(inputs, sort_keys=True)
            + "\n\nEnd your reply with the answer alone on the last line."
        )
        try:
            text = client.complete(prompt)
        except MutationError as exc:
            raise RuntimeError(str(exc)) from exc
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        return lines[-1] if lines else ""

    execute.client = client
    return execute


@dataclass
class JsonlTask:
    """Benchmark adapter over user-provided JSONL files.

    Each line holds ``{"input": {...}, "expected": "..."}``. Skills are executed
    by ``executor(doc, input) -> prediction`` (typically an LLM call that puts
    the SKILL.md in the system prompt); scoring is normalized exact match.
    No benchmark data ships with this package.
    """

    train_path: str
    validation_path: str
    executor: Callable[[SkillDoc, dict], str]
    mutator: Callable[[str, Any], SkillDoc]
    train: list = field(init=False)
    validation: list = field(init=False)

    def __post_init__(self):
        self.train = _read_jsonl(self.train_path)
        self.validation = _read_jsonl(self.validation_path)
        self._predictions: dict[tuple[str, str], str] = {}

    def _predict(self, doc, example) -> str:
        key = (serialize(doc), json.dumps(example["input"], sort_keys=True))
        if key not in self._predictions:
            self._predictions[key] = self.executor(doc, example["input"])
        return self._predictions[key]

    def score(self, doc, example) -> float:
        return float(_norm(self._predict(doc, example)) == _norm(example["expected"]))

    def feedback(self, doc, example, score) -> str:
        if score >= 0.5:
            return f"Correct! Verdict is {example['expected']}."
        return f"Incorrect. Expected '{example['expected']}', got '{self._predict(doc, example)}'."

    def mutate(self, prompt, rng):
        return self.mutator(prompt, rng)


def _norm(s: str) -> str:
    return " ".join(str(s).strip().lower().split())


def _read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
