"""Best-worst and zero-shot annotation with LLM endpoints.

Owns the prompt templates, response parsing, the append-only judgment
store, and the campaign runner that issues chat-completion requests with
retries, rate limiting, and resume. A deterministic offline annotator
(`intensity_oracle`) stands in for a real endpoint wherever the pipeline
needs judgments without network access.
"""

import datetime
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import requests

from .corpus import CLASS_NAMES, MULTI_CLASSES, Corpus, SurveyRecord
from .design import ComparisonTuple, Design

log = logging.getLogger(__name__)

ENV_API_KEY = "BWSQ_API_KEY"
ENV_BASE_URL = "BWSQ_BASE_URL"
ENV_MODEL = "BWSQ_MODEL"


class AnnotateError(Exception):
    pass


class ParseFailure(AnnotateError):
    """Base for typed response-parse failures."""
    reason = "parse"


class NoJsonFound(ParseFailure):
    reason = "no_json"


class KeysMissing(ParseFailure):
    reason = "keys_missing"


class IndexOutOfRange(ParseFailure):
    reason = "out_of_range"


class TiePick(ParseFailure):
    reason = "tie"


class NoClassFound(ParseFailure):
    reason = "no_class"


@dataclass(frozen=True)
class AnnotatorId:
    kind: str  # "llm" | "human"
    name: str

    def __post_init__(self):
        if self.kind not in ("llm", "human"):
            raise ValueError(f"annotator kind must be llm or human, got {self.kind!r}")
        if not self.name:
            raise ValueError("annotator name is empty")

    @property
    def key(self) -> str:
        return f"{self.kind}:{self.name}"


@dataclass(frozen=True)
class Judgment:
    tuple_id: str
    annotator: AnnotatorId
    best_index: int | None
    worst_index: int | None
    valid: bool
    raw_response: str = ""
    timestamp: str = ""

    def to_row(self) -> dict:
        return {
            "tuple_id": self.tuple_id,
            "annotator": {"kind": self.annotator.kind, "name": self.annotator.name},
            "best_index": self.best_index,
            "worst_index": self.worst_index,
            "valid": self.valid,
            "raw_response": self.raw_response,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_row(cls, row: dict) -> "Judgment":
        ann = row["annotator"]
        return cls(
            tuple_id=row["tuple_id"],
            annotator=AnnotatorId(kind=ann["kind"], name=ann["name"]),
            best_index=row.get("best_index"),
            worst_index=row.get("worst_index"),
            valid=bool(row.get("valid")),
            raw_response=row.get("raw_response", ""),
            timestamp=row.get("timestamp", ""),
        )


@dataclass(frozen=True)
class ZeroShotLabel:
    record_id: str
    annotator: AnnotatorId
    predicted_class: int | None  # in [-1, 5] when valid
    raw_response: str = ""
    valid: bool = True
    timestamp: str = ""

    def to_row(self) -> dict:
        return {
            "record_id": self.record_id,
            "annotator": {"kind": self.annotator.kind, "name": self.annotator.name},
            "predicted_class": self.predicted_class,
            "raw_response": self.raw_response,
            "valid": self.valid,
            "timestamp": self.timestamp,
        }


@dataclass
class LlmEndpointConfig:
    base_url: str
    model_name: str
    api_key: str = ""
    temperature: float = 0.0
    max_retries: int = 2
    parallelism: int = 1
    requests_per_minute: float | None = None
    timeout: float = 60.0

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")

    @classmethod
    def from_env(cls, **overrides) -> "LlmEndpointConfig":
        """Read endpoint settings from BWSQ_BASE_URL / BWSQ_MODEL / BWSQ_API_KEY."""
        kwargs = {
            "base_url": os.environ.get(ENV_BASE_URL, ""),
            "model_name": os.environ.get(ENV_MODEL, ""),
            "api_key": os.environ.get(ENV_API_KEY, ""),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


# ---------------------------------------------------------------- prompts

BWS_SYSTEM_PROMPT = (
    "You are an expert annotator specializing in Best-Worst Scaling of German "
    "texts based on quantity information about animal occurrences."
)

_BWS_USER_HEADER = (
    "Task: From the following German texts about animal occurrence, identify:\n"
    "Best: The text conveying the highest quantity (e.g., presence, frequency, "
    "population size)\n"
    "Worst: The text conveying the lowest quantity.\n"
)

_BWS_USER_FOOTER = (
    "JSON format for your answer:\n"
    '{ "Best": [Text Number],\n'
    '  "Worst": [Text Number]}'
)

MULTICLASS_SYSTEM_PROMPT = (
    "You are a German native expert in text classification. Use the provided "
    "classification scheme to classify German texts based on species frequency "
    "descriptions."
)

_CLASS_DESCRIPTIONS = {
    5: "Species is very frequently observed or present.",
    4: "Species is commonly found in the area.",
    3: "Species is observed, but not very frequently.",
    2: "Species is rarely seen in the area.",
    1: "Species is seen only in exceptional circumstances.",
    0: "Species is not observed in the area.",
    -1: "Species no longer exists in the area.",
}

_MULTICLASS_USER_HEADER = (
    "You are a classification model. Classify the given German text into one of "
    "the following categories:\n"
    + "".join(f"- {CLASS_NAMES[c]} ({c}): {_CLASS_DESCRIPTIONS[c]}\n"
              for c in sorted(MULTI_CLASSES, reverse=True))
    + "Read the provided text and classify it according to this scheme.\n"
    "Here is the text to classify:\n"
)


def render_bws_prompt(t: ComparisonTuple, corpus: Corpus) -> dict:
    """System and user strings for one tuple; members listed 1..k in stored order.

    Pure string assembly; the numbered list is the only part that varies
    with k.
    """
    by_id = corpus.by_id()
    lines = []
    for i, rid in enumerate(t.member_ids, start=1):
        if rid not in by_id:
            raise AnnotateError(f"tuple {t.tuple_id}: unknown record {rid!r}")
        lines.append(f"{i}. {by_id[rid].text}\n")
    return {"system": BWS_SYSTEM_PROMPT,
            "user": _BWS_USER_HEADER + "".join(lines) + _BWS_USER_FOOTER}


def render_multiclass_prompt(r: SurveyRecord) -> dict:
    if not r.text.strip():
        raise AnnotateError(f"record {r.record_id}: empty text")
    return {"system": MULTICLASS_SYSTEM_PROMPT,
            "user": _MULTICLASS_USER_HEADER + r.text}


# ---------------------------------------------------------------- parsing

def _coerce_index(value):
    # accepts 2 or [2]; bool is an int subtype and must not slip through
    if isinstance(value, list) and len(value) == 1:
        value = value[0]
    if isinstance(value, bool) or not isinstance(value, int):
        return None
    return value


def parse_bws_response(raw: str, k: int) -> tuple[int, int]:
    """Extract (best_index, worst_index) from a model response.

    Scans for the first JSON object carrying both "Best" and "Worst";
    values may be bare integers or single-element integer lists, matching
    the answer shape the prompt asks for. Raises a typed ParseFailure:
    NoJsonFound, KeysMissing, IndexOutOfRange, or TiePick.
    """
    decoder = json.JSONDecoder()
    found_object = False
    for pos in (m.start() for m in re.finditer(r"\{", raw)):
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        found_object = True
        if "Best" not in obj or "Worst" not in obj:
            continue
        best = _coerce_index(obj["Best"])
        worst = _coerce_index(obj["Worst"])
        if best is None or worst is None or not (1 <= best <= k and 1 <= worst <= k):
            raise IndexOutOfRange(f"indices {obj['Best']!r}/{obj['Worst']!r} "
                                  f"not both in 1..{k}")
        if best == worst:
            raise TiePick(f"best = worst = {best}")
        return best, worst
    if found_object:
        raise KeysMissing('no JSON object with "Best" and "Worst" keys')
    raise NoJsonFound("no JSON object in response")


# longest names first so "Common to Rare" is not eaten by "Common"
_CLASS_NAME_ALTERNATION = "|".join(
    re.escape(name) for name in sorted(CLASS_NAMES.values(), key=len, reverse=True))
_CLASS_TOKEN = re.compile(
    rf"\b(?:{_CLASS_NAME_ALTERNATION})\b|(?<![\w.-])-1(?!\.?\d)|(?<![\w.-])[0-5](?!\.?\d)",
    re.IGNORECASE)
_NAME_TO_CLASS = {name.lower(): c for c, name in CLASS_NAMES.items()}


def parse_class_response(raw: str) -> int:
    """Class from a zero-shot response: last class name or in-range signed
    integer mentioned wins. Raises NoClassFound when nothing matches."""
    matches = _CLASS_TOKEN.findall(raw)
    if not matches:
        raise NoClassFound("no class name or in-range integer in response")
    token = matches[-1].lower()
    if token in _NAME_TO_CLASS:
        return _NAME_TO_CLASS[token]
    return int(token)


# ---------------------------------------------------------------- transport

class TokenBucket:
    """Client-side rate limiter: tokens refill continuously, each request
    spends one. Clock and sleep are injectable so tests run instantly."""

    def __init__(self, requests_per_minute: float, burst: int = 1,
                 clock=time.monotonic, sleep=time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.rate = requests_per_minute / 60.0
        self.burst = burst
        self._tokens = float(burst)
        self._clock = clock
        self._sleep = sleep
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst,
                                   self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class ChatCompletionsClient:
    """Minimal client for an OpenAI-compatible /chat/completions endpoint."""

    def __init__(self, cfg: LlmEndpointConfig, session=None, limiter=None):
        if not cfg.base_url:
            raise AnnotateError(f"no endpoint configured (set {ENV_BASE_URL})")
        self.cfg = cfg
        self.session = session or requests.Session()
        if limiter is None and cfg.requests_per_minute:
            limiter = TokenBucket(cfg.requests_per_minute)
        self.limiter = limiter

    def complete(self, system: str, user: str) -> str:
        if self.limiter is not None:
            self.limiter.acquire()
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        body = {
            "model": self.cfg.model_name,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": user}],
            "temperature": self.cfg.temperature,
        }
        resp = self.session.post(url, json=body, headers=headers,
                                 timeout=self.cfg.timeout)
        resp.raise_for_status()
        data = resp.json()
        return data["choices"][0]["message"]["content"]


# ---------------------------------------------------------------- store

class JudgmentStore:
    """Append-only JSONL judgment log.

    Rows are never rewritten; the loaded view keeps the last row per
    (tuple_id, annotator), so retrying an invalid judgment means appending
    a fresh row. Appends are serialized by a lock and flushed per row.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, judgment: Judgment) -> None:
        line = json.dumps(judgment.to_row(), ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def load(self) -> list[Judgment]:
        if not self.path.exists():
            return []
        rows = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(Judgment.from_row(json.loads(line)))
        return rows

    def latest(self) -> dict[tuple[str, str], Judgment]:
        view = {}
        for j in self.load():
            view[(j.tuple_id, j.annotator.key)] = j
        return view


# ---------------------------------------------------------------- campaigns

def _judge_tuple(t: ComparisonTuple, prompt: dict, k: int, annotator: AnnotatorId,
                 cfg: LlmEndpointConfig, complete) -> Judgment:
    raw = ""
    for attempt in range(cfg.max_retries + 1):
        try:
            raw = complete(prompt["system"], prompt["user"])
        except Exception as exc:
            log.warning("tuple %s: request failed (attempt %d): %s",
                        t.tuple_id, attempt + 1, exc)
            raw = f"<request error: {exc}>"
            continue
        try:
            best, worst = parse_bws_response(raw, k)
        except ParseFailure as exc:
            log.info("tuple %s: %s (attempt %d)", t.tuple_id, exc.reason, attempt + 1)
            continue
        return Judgment(t.tuple_id, annotator, best, worst, valid=True,
                        raw_response=raw, timestamp=_now())
    return Judgment(t.tuple_id, annotator, None, None, valid=False,
                    raw_response=raw, timestamp=_now())


def annotate_design(design: Design, corpus: Corpus, cfg: LlmEndpointConfig,
                    store: JudgmentStore, annotator: AnnotatorId,
                    complete=None, on_result=None) -> list[Judgment]:
    """Collect one judgment per tuple for one annotator, resumably.

    Tuples that already have a stored valid judgment for this annotator are
    skipped, so rerunning after an interruption only issues the missing
    requests. Parse failures are retried up to cfg.max_retries with the
    same prompt, then persisted with valid=false; request errors are logged
    with the tuple_id and never abort the campaign. `complete` defaults to
    the configured HTTP endpoint; `on_result` fires after each append and
    may raise to stop the run.
    """
    if complete is None:
        complete = ChatCompletionsClient(cfg).complete
    view = store.latest()
    pending = []
    for t in design.tuples:
        stored = view.get((t.tuple_id, annotator.key))
        if stored is None or not stored.valid:
            pending.append(t)
    log.info("campaign %s: %d/%d tuples pending",
             annotator.key, len(pending), len(design.tuples))
    k = design.params.k

    def run(t: ComparisonTuple) -> Judgment:
        return _judge_tuple(t, render_bws_prompt(t, corpus), k, annotator,
                            cfg, complete)

    if cfg.parallelism == 1:
        for t in pending:
            j = run(t)
            store.append(j)
            if on_result is not None:
                on_result(j)
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            futures = [pool.submit(run, t) for t in pending]
            try:
                for fut in as_completed(futures):
                    j = fut.result()
                    store.append(j)
                    if on_result is not None:
                        on_result(j)
            except BaseException:
                for fut in futures:
                    fut.cancel()
                raise

    view = store.latest()
    return [view[(t.tuple_id, annotator.key)] for t in design.tuples
            if (t.tuple_id, annotator.key) in view]


def annotate_zero_shot(corpus: Corpus, cfg: LlmEndpointConfig,
                       annotator: AnnotatorId, complete=None,
                       on_result=None) -> list[ZeroShotLabel]:
    """One predicted class per record; unparseable responses are kept as
    invalid labels rather than dropped."""
    if complete is None:
        complete = ChatCompletionsClient(cfg).complete

    def run(r: SurveyRecord) -> ZeroShotLabel:
        prompt = render_multiclass_prompt(r)
        raw = ""
        for attempt in range(cfg.max_retries + 1):
            try:
                raw = complete(prompt["system"], prompt["user"])
            except Exception as exc:
                log.warning("record %s: request failed (attempt %d): %s",
                            r.record_id, attempt + 1, exc)
                raw = f"<request error: {exc}>"
                continue
            try:
                cls = parse_class_response(raw)
            except ParseFailure:
                continue
            return ZeroShotLabel(r.record_id, annotator, cls, raw_response=raw,
                                 valid=True, timestamp=_now())
        return ZeroShotLabel(r.record_id, annotator, None, raw_response=raw,
                             valid=False, timestamp=_now())

    labels = []
    if cfg.parallelism == 1:
        for r in corpus:
            lab = run(r)
            labels.append(lab)
            if on_result is not None:
                on_result(lab)
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            for lab in pool.map(run, list(corpus)):
                labels.append(lab)
                if on_result is not None:
                    on_result(lab)
    return labels


def save_labels(labels: list[ZeroShotLabel], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in labels:
            fh.write(json.dumps(lab.to_row(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- offline oracle

_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")
_PROMPT_ITEM = re.compile(r"^\d+\. (.*)$", re.MULTILINE)


def planted_intensity(text: str) -> float | None:
    """Last number occurring in a text, or None. Synthetic corpora plant a
    per-record intensity this way so judging needs no model."""
    hits = _NUMBER.findall(text)
    return float(hits[-1]) if hits else None


def intensity_oracle(system: str, user: str) -> str:
    """Deterministic drop-in for an LLM: reads the numbered texts back out
    of the rendered prompt, takes the planted number in each as the
    quantity, and answers in the requested JSON shape. Highest number is
    best, lowest worst; ties go to the earlier position."""
    texts = _PROMPT_ITEM.findall(user)
    if not texts:
        raise AnnotateError("prompt carries no numbered texts")
    values = []
    for i, text in enumerate(texts, start=1):
        value = planted_intensity(text)
        if value is None:
            raise AnnotateError(f"text {i} has no planted intensity: {text!r}")
        values.append((value, i))
    best = max(values, key=lambda v: (v[0], -v[1]))[1]
    worst = min(values)[1]
    return json.dumps({"Best": best, "Worst": worst})


def intensity_class_oracle(system: str, user: str) -> str:
    """Zero-shot counterpart of intensity_oracle: maps the planted number
    of the prompted text onto its quintile class (1..5) and answers with
    the class line the template describes."""
    text = user.rsplit("Here is the text to classify:\n", 1)[-1]
    value = planted_intensity(text)
    if value is None:
        raise AnnotateError(f"text has no planted intensity: {text!r}")
    cls = min(5, 1 + int(value * 5))
    return f"{CLASS_NAMES[cls]} ({cls})"


def resolve_annotator(name: str, task: str = "bws"):
    """Map a CLI annotator string to (AnnotatorId, offline completer).

    "mock:intensity" yields the built-in oracle for the given task;
    anything else is treated as an LLM model name served by the
    configured endpoint (completer None means: go over HTTP).
    """
    if name == "mock:intensity":
        oracle = intensity_oracle if task == "bws" else intensity_class_oracle
        return AnnotatorId("llm", "mock:intensity"), oracle
    if name.startswith("mock:"):
        raise AnnotateError(f"unknown mock annotator {name!r}")
    return AnnotatorId("llm", name), None
