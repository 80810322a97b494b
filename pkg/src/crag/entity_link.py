"""LLM-based entity extraction and bi-level linking to the item database.

Extraction parses "name####attitude" lines from the LLM. Each surface is
then matched against the database twice: character-level (edit-distance
ratio, typo-tolerant) and word-level (BM25 over title tokens,
abbreviation-tolerant). Agreements link directly; disagreements go to one
batched LLM reflection call that adjudicates per surface.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Optional

from .corpus import ItemDatabase
from .errors import MalformedCompletion
from .llm_gateway import Gateway

SEP = "####"

CHAR_THRESHOLD = 0.80
BM25_K1 = 1.2
BM25_B = 0.75

_PUNCT_RE = re.compile(r"[^\w\s]")
_TRAILING_YEAR_RE = re.compile(r"\s*\(\d{4}\)\s*$")


def normalize_title(title: str) -> str:
    """NFKD, lowercase, punctuation to spaces, collapsed whitespace.

    A trailing bracketed year is dropped so "Heat (1995)" matches "Heat".
    """
    s = _TRAILING_YEAR_RE.sub("", title)
    s = unicodedata.normalize("NFKD", s)
    s = s.lower()
    s = _PUNCT_RE.sub(" ", s)
    return " ".join(s.split())


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            ))
        prev = cur
    return prev[-1]


def char_similarity(a: str, b: str) -> float:
    """1 - normalized edit distance; 1.0 for identical strings."""
    if a == b:
        return 1.0
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - _edit_distance(a, b) / longest


@dataclass(frozen=True)
class MentionCandidate:
    surface: str
    attitude: int


@dataclass(frozen=True)
class MatchCandidate:
    surface: str
    char_match: Optional[tuple[int, float]]
    word_match: Optional[tuple[int, float]]


@dataclass(frozen=True)
class LinkedMention:
    item_id: int
    surface: str
    attitude: int
    method: str  # char | word | both | reflected


class TitleIndex:
    """Normalized titles plus a BM25 inverted index over title tokens."""

    def __init__(self, db: ItemDatabase):
        self.db = db
        self.normalized = [normalize_title(r.title) for r in db.records]
        self.exact = {}
        for item_id, norm in enumerate(self.normalized):
            self.exact.setdefault(norm, item_id)
        self.tokens = [norm.split() for norm in self.normalized]
        self.doc_len = [len(t) for t in self.tokens]
        self.avgdl = sum(self.doc_len) / max(len(self.tokens), 1)
        self.postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for item_id, toks in enumerate(self.tokens):
            for tok, tf in sorted(Counter(toks).items()):
                self.postings[tok].append((item_id, tf))
        n = len(self.tokens)
        self.idf = {
            tok: math.log(1 + (n - len(plist) + 0.5) / (len(plist) + 0.5))
            for tok, plist in self.postings.items()
        }


def char_match(
    surface: str, index: TitleIndex, threshold: float = CHAR_THRESHOLD
) -> Optional[tuple[int, float]]:
    """Best character-similarity title, or None below the threshold."""
    norm = normalize_title(surface)
    exact = index.exact.get(norm)
    if exact is not None:
        return exact, 1.0
    best_id, best_score = None, -1.0
    for item_id, title in enumerate(index.normalized):
        score = char_similarity(norm, title)
        if score > best_score:
            best_id, best_score = item_id, score
    if best_id is None or best_score < threshold:
        return None
    return best_id, best_score


def word_match(surface: str, index: TitleIndex) -> Optional[tuple[int, float]]:
    """Top-1 BM25-scored title over the surface tokens; None on zero overlap."""
    query = normalize_title(surface).split()
    scores: dict[int, float] = defaultdict(float)
    for tok in query:
        plist = index.postings.get(tok)
        if not plist:
            continue
        idf = index.idf[tok]
        for item_id, tf in plist:
            dl = index.doc_len[item_id]
            denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / index.avgdl)
            scores[item_id] += idf * tf * (BM25_K1 + 1) / denom
    if not scores:
        return None
    best_id = min(scores, key=lambda i: (-scores[i], i))
    return best_id, scores[best_id]


@dataclass
class ParseResult:
    candidates: list[MentionCandidate]
    warnings: list[str]


def parse_extraction(llm_text: str) -> ParseResult:
    """Parse "name####attitude" lines; "NO" means no mentions.

    Malformed lines are skipped with a warning; a multi-line completion
    with more than half of its lines malformed is rejected outright (a
    single bad line is not worth a retry).
    """
    text = llm_text.strip()
    if text.upper() == "NO":
        return ParseResult([], [])
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    candidates: list[MentionCandidate] = []
    warnings: list[str] = []
    seen: set[str] = set()
    malformed = 0
    for line in lines:
        parts = line.split(SEP)
        if len(parts) != 2 or not parts[0].strip():
            malformed += 1
            warnings.append(f"unparseable extraction line: {line!r}")
            continue
        surface = parts[0].strip()
        try:
            attitude = int(parts[1].strip())
        except ValueError:
            malformed += 1
            warnings.append(f"non-integer attitude: {line!r}")
            continue
        if attitude < -2 or attitude > 2:
            malformed += 1
            warnings.append(f"attitude out of range: {line!r}")
            continue
        key = normalize_title(surface)
        if key in seen:
            continue
        seen.add(key)
        candidates.append(MentionCandidate(surface, attitude))
    if len(lines) > 1 and malformed * 2 > len(lines):
        raise MalformedCompletion(
            f"{malformed}/{len(lines)} extraction lines malformed"
        )
    return ParseResult(candidates, warnings)


_REFLECT_METHODS = {"fuzzy", "bm25", "none", "both"}


def _parse_reflection(llm_text: str) -> list[tuple[str, str, str]]:
    """Parse "raw####correct####method" reflection lines."""
    lines = [ln.strip() for ln in llm_text.splitlines() if ln.strip()]
    rows = []
    malformed = 0
    for line in lines:
        parts = line.split(SEP)
        if len(parts) != 3 or parts[2].strip().lower() not in _REFLECT_METHODS:
            malformed += 1
            continue
        rows.append((parts[0].strip(), parts[1].strip(), parts[2].strip().lower()))
    if lines and malformed * 2 > len(lines):
        raise MalformedCompletion(
            f"{malformed}/{len(lines)} reflection lines malformed"
        )
    return rows


@dataclass
class LinkResult:
    mentions: list[LinkedMention]
    warnings: list[str]
    llm_calls: int = 0


def _resolve_reflection(
    cand: MentionCandidate,
    match: MatchCandidate,
    correct: str,
    method: str,
    index: TitleIndex,
) -> Optional[LinkedMention]:
    if method == "none" or not correct:
        return None
    if method == "bm25" and match.word_match is not None:
        item_id = match.word_match[0]
    elif match.char_match is not None:
        item_id = match.char_match[0]
    elif match.word_match is not None:
        item_id = match.word_match[0]
    else:
        return None
    # Honor a corrected title when it names a database item outright.
    exact = index.exact.get(normalize_title(correct))
    if exact is not None:
        item_id = exact
    return LinkedMention(item_id, cand.surface, cand.attitude, "reflected")


def link_mentions(
    cands: list[MentionCandidate],
    index: TitleIndex,
    context: str,
    llm: Gateway,
    threshold: float = CHAR_THRESHOLD,
) -> LinkResult:
    """Resolve candidates to item ids; LLM reflection only on disagreements."""
    linked: dict[int, LinkedMention] = {}
    disputed: list[tuple[int, MentionCandidate, MatchCandidate]] = []
    warnings: list[str] = []
    for pos, cand in enumerate(cands):
        cm = char_match(cand.surface, index, threshold)
        wm = word_match(cand.surface, index)
        if cm is None and wm is None:
            continue
        if cm is not None and wm is not None and cm[0] == wm[0]:
            linked[pos] = LinkedMention(cm[0], cand.surface, cand.attitude, "both")
            continue
        disputed.append((pos, cand, MatchCandidate(cand.surface, cm, wm)))

    calls = 0
    if disputed:
        lines = []
        for _, cand, match in disputed:
            fuzzy = index.db.title(match.char_match[0]) if match.char_match else " "
            bm25 = index.db.title(match.word_match[0]) if match.word_match else " "
            lines.append(f"{cand.surface}{SEP}{fuzzy}{SEP}{bm25}")
        rows = None
        for _ in range(2):  # one retry on a malformed completion
            calls += 1
            reply = llm.ask(
                "entity_reflect", query=context, matches="\n".join(lines)
            )
            try:
                rows = _parse_reflection(reply)
                break
            except MalformedCompletion:
                rows = None
        by_surface = {}
        if rows is None:
            warnings.append("entity reflection malformed twice; using char matches")
        else:
            for raw, correct, method in rows:
                by_surface[normalize_title(raw)] = (correct, method)
            known = {normalize_title(c.surface) for _, c, _ in disputed}
            for key in by_surface:
                if key not in known:
                    warnings.append(f"reflection names unknown surface {key!r}")
        for pos, cand, match in disputed:
            row = by_surface.get(normalize_title(cand.surface))
            if row is not None:
                resolved = _resolve_reflection(cand, match, row[0], row[1], index)
                if resolved is not None:
                    linked[pos] = resolved
                continue
            # Unjudged or unusable reflection: fall back to the char match.
            if match.char_match is not None:
                if rows is not None:
                    warnings.append(
                        f"no reflection for {cand.surface!r}; kept char match"
                    )
                linked[pos] = LinkedMention(
                    match.char_match[0], cand.surface, cand.attitude, "char"
                )

    mentions = [linked[pos] for pos in sorted(linked)]
    return LinkResult(mentions, warnings, calls)


def extract_and_link(
    utterance: str,
    index: TitleIndex,
    llm: Gateway,
    threshold: float = CHAR_THRESHOLD,
) -> LinkResult:
    """Full entity-link path for one utterance: extract, match, reflect."""
    parsed = None
    calls = 0
    for _ in range(2):
        calls += 1
        reply = llm.ask("extract", query=utterance)
        try:
            parsed = parse_extraction(reply)
            break
        except MalformedCompletion:
            parsed = None
    if parsed is None:
        raise MalformedCompletion("extraction malformed after retry")
    result = link_mentions(parsed.candidates, index, utterance, llm, threshold)
    result.warnings = parsed.warnings + result.warnings
    result.llm_calls += calls
    return result
