"""Uniform LLM access: prompt catalog, live HTTP backend, record/replay.

Requests are keyed by (template_id, SHA-256 of the rendered messages), so a
recorded transcript replays byte-identically regardless of call order or
platform. All live calls use temperature 0.
"""

from __future__ import annotations

import hashlib
import json
import os
import string
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import requests

from .errors import CragError, ReplayMiss, TransportError

_FORMATTER = string.Formatter()


@dataclass(frozen=True)
class PromptTemplate:
    """A task prompt (system text) plus user-content sections with slots.

    Each section is a format string over named slots; sections whose single
    slot renders empty are omitted from the user message.
    """

    id: str
    task_text: str
    format_text: str
    sections: tuple[str, ...]

    @property
    def system_text(self) -> str:
        return self.task_text + "\n\n" + self.format_text

    def render(self, **slots: str) -> dict:
        parts = []
        for section in self.sections:
            names = [
                fname for _, fname, _, _ in _FORMATTER.parse(section) if fname
            ]
            missing = [n for n in names if n not in slots]
            if missing:
                raise CragError(
                    f"template {self.id!r}: missing slot(s) {missing}"
                )
            if names and any(not slots[n] for n in names):
                # Optional section: a blank slot drops the whole section
                # (e.g. no augmentation block when retrieval came back empty).
                continue
            parts.append(section.format(**slots))
        return {
            "template": self.id,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": "\n\n".join(parts)},
            ],
        }


CATALOG: dict[str, PromptTemplate] = {}


def _register(t: PromptTemplate) -> None:
    CATALOG[t.id] = t


_register(PromptTemplate(
    id="extract",
    task_text=(
        "Pretend you are a movie recommender system. You (a recommender "
        "system) will be given a user's query that seeks movie "
        "recommendations. Based on the query, you need to extract movie "
        "names mentioned in the user's query and analyze the user's "
        "attitude toward each movie. You need to reply with standardized "
        "movie names (with grammatical errors corrected and abbreviations "
        "fixed), as well as the user's attitude toward the movie."
    ),
    format_text=(
        "Specifically, the movie names need to be formatted in the IMDB "
        "style, with the year bracketed if possible (do not add the year if "
        "you are not sure). In addition, the attitude is represented in one "
        "of [-2, -1, 0, 1, 2], where -2 stands for very negative, -1 stands "
        "for negative, 0 stands for neutral, 1 stands for positive, and 2 "
        "stands for very positive. You need to reply with the number as an "
        "attitude instead of the textual description. If there are movie "
        "names mentioned in the query, list each movie name and the user's "
        "attitude (number in -2 to 2) in the form of "
        "movie_name####attitude, where different movies are listed in "
        "different lines with no extra sentences. Reply NO if no movie "
        "names are mentioned in the query."
    ),
    sections=("Here is the user's query: {query}.",),
))

_register(PromptTemplate(
    id="entity_reflect",
    task_text=(
        "Pretend you are a movie recommender system. You, as the "
        "recommender system, will be given part of the dialogue between a "
        "user seeking a movie recommendation and yourself, along with the "
        "extracted movie names (which may potentially be incorrect). Even "
        "if the extracted movie names are correct, the wording might not be "
        "precise. Therefore, you will be provided with the best match for "
        "each extracted movie name from an external database using (1) "
        "character-level fuzzy match and (2) word-level BM25 match (a space "
        "will be provided if no name can be found via the word-level "
        "match). Often, since these two matching methods focus on different "
        "levels of granularity, their results may not align. Based on the "
        "results, you must determine whether each movie name extraction is "
        "correct and what the precise movie name for that extracted name "
        "should be from the database."
    ),
    format_text=(
        "To reflect on this, for each extracted movie, you must respond "
        "with three terms separated by ####: (1) the raw movie name "
        "mentioned in the dialogue (raw refers to the exact text from the "
        "dialogue), (2) the precise movie name selected from fuzzy match or "
        "BM25 (reply with a space if the movie name extraction is incorrect "
        "or if neither match is precise), and (3) the correct extraction "
        "method, choosing from [fuzzy, BM25, none, both]. If the fuzzy "
        "match and BM25 results differ but both are probable, select the "
        "more probable one based on context as the correct name. List the "
        "reflection on each movie name in the exact form of "
        "raw_name####correct_name####method on a new line with no "
        "additional terms or sentences."
    ),
    sections=(
        "Here is the user's query: {query}.",
        "Here are extracted movie names, fuzzy matches, and BM25 matches "
        "from the movie database in the form of "
        "extracted_name####fuzzy_match####BM25_match: {matches}.",
    ),
))

_register(PromptTemplate(
    id="context_reflect",
    task_text=(
        "Pretend you are a movie recommender system. I will give you a "
        "conversation between a user and you (a recommender system), as "
        "well as movies retrieved from the movie database based on the "
        "similarity with movies mentioned by the user in the context. You "
        "need to judge whether each retrieved movie is a good "
        "recommendation based on the context."
    ),
    format_text=(
        "You need to reply with the judgment of each movie in a line, in "
        "the form of movie_name####judgment, where judgment is a binary "
        "number 0, 1. Judgment 0 means the movie is a bad recommendation, "
        "whereas judgment 1 means the movie is a good recommendation."
    ),
    sections=(
        "Here is the conversation: {dialogue}.",
        "Here are retrieved movies: {items}.",
    ),
))

_register(PromptTemplate(
    id="recommend",
    task_text=(
        "Pretend you are a movie recommender system. I will give you a "
        "conversation between a user and you (a recommender system). Based "
        "on the conversation, you need to reply with 20 movie "
        "recommendations without extra sentences."
    ),
    format_text="List the standardized title of each movie on a separate line.",
    sections=(
        "Here is the conversation: {dialogue}.",
        "{augmentation} {mode_instruction}",
    ),
))

_register(PromptTemplate(
    id="rerank",
    task_text=(
        "Pretend you are a movie recommender system. I will give you a "
        "conversation between a user and you (a recommender system), as "
        "well as some movie candidates from our movie database. You need "
        "to rate each retrieved movie as recommendations into five levels "
        "based on the conversation: 2 (great), 1 (good), 0 (normal), -1 "
        "(not good), -2 (bad)."
    ),
    format_text=(
        "You need to reply with the rating of each movie in a line, in the "
        "form of movie_name####rating, where the rating should be an "
        "Integer, and 2 means great, 1 means good, 0 means normal, -1 "
        "means not good, and -2 means bad."
    ),
    sections=(
        "Here is the conversation: {dialogue}.",
        "Here are the movie candidates: {items}.",
    ),
))

# No prompt for the no-mention seeding step is published; this one mirrors
# the house style of the others.
_register(PromptTemplate(
    id="seed",
    task_text=(
        "Pretend you are a movie recommender system. I will give you a "
        "conversation between a user and you (a recommender system). No "
        "movies are mentioned in the conversation, so based on the "
        "conversation alone, you need to reply with {n_seeds} movies the "
        "user would most likely enjoy."
    ),
    format_text="List the standardized title of each movie on a separate line.",
    sections=("Here is the conversation: {dialogue}.",),
))

RAG_INSTRUCTION = (
    "Use the above information at your discretion (i.e., do not confine "
    "your recommendation to the above movies)."
)
REC_INSTRUCTION = "Consider using the above movies for recommendations."


def render(template_id: str, **slots: str) -> dict:
    if template_id not in CATALOG:
        raise CragError(f"unknown template id: {template_id!r}")
    return CATALOG[template_id].render(**slots)


def render_dialogue(turns) -> str:
    """Role-tagged turn lines: 'USER: ...' / 'SYSTEM: ...'."""
    return "\n".join(f"{t.speaker.value}: {t.text}" for t in turns)


def request_digest(request: dict) -> str:
    payload = json.dumps(request["messages"], ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Transcript:
    """Keyed store of recorded exchanges: (template_id, digest) -> response."""

    def __init__(self):
        self._store: dict[tuple[str, str], str] = {}

    def __len__(self) -> int:
        return len(self._store)

    def put(self, template_id: str, digest: str, response: str) -> None:
        self._store[(template_id, digest)] = response

    def get(self, template_id: str, digest: str) -> Optional[str]:
        return self._store.get((template_id, digest))

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        t = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                t.put(obj["template"], obj["hash"], obj["response"])
        return t


class LiveBackend:
    """OpenAI-compatible /v1/chat/completions client with backoff retries."""

    live = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.session = session or requests.Session()

    def complete(self, request: dict) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": request["messages"],
            "temperature": 0,
        }
        last = "no attempts made"
        for attempt in range(self.max_attempts):
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=headers, timeout=120
                )
            except requests.RequestException as exc:
                last = str(exc)
            else:
                if resp.status_code == 200:
                    return resp.json()["choices"][0]["message"]["content"]
                last = f"HTTP {resp.status_code}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise TransportError(f"chat endpoint rejected request: {last}")
            time.sleep(self.backoff_base * (2 ** attempt))
        raise TransportError(f"retries exhausted ({self.max_attempts}): {last}")


class ReplayBackend:
    """Deterministic playback of a recorded transcript."""

    live = False

    def __init__(self, transcript: Transcript, strict: bool = True):
        self.transcript = transcript
        self.strict = strict

    def complete(self, request: dict) -> str:
        digest = request_digest(request)
        stored = self.transcript.get(request["template"], digest)
        if stored is None:
            if self.strict:
                raise ReplayMiss(request["template"], digest)
            return ""
        return stored


class RecordBackend:
    """Wraps a live (or scripted) backend and persists every exchange."""

    def __init__(self, inner, path: str | Path, transcript: Optional[Transcript] = None):
        self.inner = inner
        self.path = Path(path)
        self.transcript = transcript if transcript is not None else Transcript()
        self._lock = threading.Lock()

    @property
    def live(self) -> bool:
        return getattr(self.inner, "live", False)

    def complete(self, request: dict) -> str:
        digest = request_digest(request)
        cached = self.transcript.get(request["template"], digest)
        if cached is not None:
            return cached
        started = time.monotonic()
        response = self.inner.complete(request)
        latency_ms = int((time.monotonic() - started) * 1000)
        record = {
            "template": request["template"],
            "hash": digest,
            "request": {"messages": request["messages"]},
            "response": response,
            "latency_ms": latency_ms,
        }
        with self._lock:
            self.transcript.put(request["template"], digest, response)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return response


class ScriptedBackend:
    """Rule-driven deterministic backend for fixtures and tests.

    Rules map a template id to a callable over the rendered user content.
    """

    live = False

    def __init__(self, rules: dict[str, Callable[[str], str]]):
        self.rules = rules

    def complete(self, request: dict) -> str:
        template = request["template"]
        if template not in self.rules:
            raise CragError(f"scripted backend has no rule for {template!r}")
        return self.rules[template](request["messages"][1]["content"])


class Gateway:
    """Renders templates, dispatches to a backend, and bounds concurrency.

    The in-flight limit applies only to live backends; replay and scripted
    backends are pure lookups.
    """

    def __init__(self, backend, limit: Optional[int] = None):
        if limit is not None and limit < 1:
            raise ValueError("limit must be >= 1")
        self.backend = backend
        self._semaphore = threading.BoundedSemaphore(limit) if limit else None
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def ask(self, template_id: str, **slots: str) -> str:
        request = render(template_id, **slots)
        return self.complete(request)

    def complete(self, request: dict) -> str:
        with self._lock:
            self._calls += 1
        if self._semaphore is not None and getattr(self.backend, "live", False):
            with self._semaphore:
                return self.backend.complete(request)
        return self.backend.complete(request)


def with_limit(gateway: Gateway, n: int) -> Gateway:
    """A view of the same backend with at most n in-flight live requests."""
    return Gateway(gateway.backend, limit=n)
