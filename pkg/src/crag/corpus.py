"""Data model and ingestion: dialogues, item database, catalog, interactions.

Datasets are line-delimited JSON, one dialogue per line:
    {"id": str, "date": "YYYY-MM-DD",
     "turns": [{"speaker": "USER"|"SYSTEM", "text": str,
                "mentions": [{"item": str, "attitude": int}]}]}
`mentions` is optional (raw Reddit text carries none until linked; Redial
ships them). An optional `split` field pins the record to a split; records
without one are split by start date (test = last calendar month in the data,
validation = the month before, train = everything else).
"""

from __future__ import annotations

import datetime
import json
import re
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy import sparse

from .errors import CorpusError

_YEAR_RE = re.compile(r"\((\d{4})\)\s*$")


class Speaker(Enum):
    USER = "USER"
    SYSTEM = "SYSTEM"


class Split(Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Mention:
    """A linked item mention: canonical title plus attitude in [-2, 2]."""

    title: str
    attitude: int


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    mentions: tuple[Mention, ...] = ()


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Utterance, ...]
    start_date: datetime.date
    split: Split = Split.TRAIN

    def prefix(self, k: int) -> "Dialogue":
        """Dialogue truncated to the first k turns."""
        return Dialogue(self.id, self.turns[:k], self.start_date, self.split)

    def has_mentions(self) -> bool:
        return any(t.mentions for t in self.turns)


@dataclass(frozen=True)
class ItemRecord:
    item_id: int
    title: str
    release_year: Optional[int]
    in_catalog: bool
    catalog_id: Optional[int]


class ItemDatabase:
    """All mentioned items, with the recommendable (system-mentioned) catalog.

    Item ids are assigned densely over sorted unique titles, so the database
    is independent of dialogue order. Catalog ids run 0..n_catalog-1 in
    ascending item_id order (the ReID map).
    """

    def __init__(self, records: list[ItemRecord]):
        self.records = records
        self.title_to_id = {r.title: r.item_id for r in records}
        self.catalog_item_ids = [r.item_id for r in records if r.in_catalog]
        self._catalog_of = {
            r.item_id: r.catalog_id for r in records if r.in_catalog
        }

    @property
    def n_items(self) -> int:
        return len(self.records)

    @property
    def n_catalog(self) -> int:
        return len(self.catalog_item_ids)

    def item_id(self, title: str) -> int:
        try:
            return self.title_to_id[title]
        except KeyError:
            raise CorpusError(f"unknown item title: {title!r}") from None

    def title(self, item_id: int) -> str:
        return self.records[item_id].title

    def catalog_id(self, item_id: int) -> Optional[int]:
        return self._catalog_of.get(item_id)

    def catalog_title(self, catalog_id: int) -> str:
        return self.records[self.catalog_item_ids[catalog_id]].title


@dataclass(frozen=True)
class PositivityPolicy:
    """Attitude thresholds above which a mention counts as positive.

    System mentions default to >= 0 because bare-title recommendations are
    scored neutral but are endorsements; user mentions require >= 1.
    """

    user_min: int = 1
    system_min: int = 0

    def is_positive(self, speaker: Speaker, attitude: int) -> bool:
        if speaker is Speaker.USER:
            return attitude >= self.user_min
        return attitude >= self.system_min


@dataclass
class InteractionMatrix:
    """Binary pseudo-user x item matrix (one row per training dialogue)."""

    matrix: sparse.csr_matrix

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class EvalRecord:
    dialogue_id: str
    prefix: Dialogue
    target_turn: int
    ground_truth_item: int
    cold_start: bool


def _parse_mention(obj: dict, lineno: int) -> Mention:
    try:
        attitude = int(obj["attitude"])
        title = obj["item"]
    except (KeyError, TypeError, ValueError):
        raise CorpusError(f"line {lineno}: malformed mention {obj!r}")
    return Mention(title=title, attitude=attitude)


def _parse_dialogue(obj: dict, lineno: int) -> tuple[Dialogue, Optional[Split]]:
    try:
        did = obj["id"]
        date = datetime.date.fromisoformat(obj["date"])
        raw_turns = obj["turns"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: malformed dialogue record: {exc}")
    if not raw_turns:
        raise CorpusError(f"line {lineno}: dialogue {did!r} has no turns")
    turns = []
    for t in raw_turns:
        tag = t.get("speaker")
        try:
            speaker = Speaker(tag)
        except ValueError:
            raise CorpusError(f"line {lineno}: unknown speaker tag {tag!r}")
        text = t.get("text", "")
        if not text:
            raise CorpusError(f"line {lineno}: empty utterance text")
        mentions = tuple(
            _parse_mention(m, lineno) for m in t.get("mentions", [])
        )
        turns.append(Utterance(speaker, text, mentions))
    explicit = None
    if "split" in obj:
        try:
            explicit = Split(obj["split"])
        except ValueError:
            raise CorpusError(f"line {lineno}: unknown split {obj['split']!r}")
    return Dialogue(did, tuple(turns), date, Split.TRAIN), explicit


def assign_splits_by_date(
    dialogues: list[Dialogue],
) -> list[Dialogue]:
    """Test = last calendar month in the data, valid = the month before."""
    if not dialogues:
        return []
    months = {(d.start_date.year, d.start_date.month) for d in dialogues}
    last = max(months)
    prev = (last[0], last[1] - 1) if last[1] > 1 else (last[0] - 1, 12)
    out = []
    for d in dialogues:
        month = (d.start_date.year, d.start_date.month)
        if month == last:
            split = Split.TEST
        elif month == prev:
            split = Split.VALID
        else:
            split = Split.TRAIN
        out.append(Dialogue(d.id, d.turns, d.start_date, split))
    return out


def ingest_dialogues(path: str | Path, format: str = "reddit_v2") -> list[Dialogue]:
    """Parse a line-delimited dialogue file into Dialogue objects.

    `format` is one of {"reddit_v2", "redial"}; both share the wire schema.
    Records with an explicit "split" field keep it; the remainder are split
    by the start-date rule.
    """
    if format not in ("reddit_v2", "redial"):
        raise ValueError(f"unknown dataset format: {format!r}")
    parsed: list[tuple[Dialogue, Optional[Split]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON: {exc}")
            parsed.append(_parse_dialogue(obj, lineno))

    undated = [d for d, s in parsed if s is None]
    by_date = {d.id: d for d in assign_splits_by_date(undated)}
    out = []
    for d, explicit in parsed:
        if explicit is not None:
            out.append(Dialogue(d.id, d.turns, d.start_date, explicit))
        else:
            out.append(by_date[d.id])
    return out


def write_dialogues(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    """Serialize dialogues back to the line-delimited format (round-trips)."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            obj = {
                "id": d.id,
                "date": d.start_date.isoformat(),
                "split": d.split.value,
                "turns": [
                    {
                        "speaker": t.speaker.value,
                        "text": t.text,
                        "mentions": [
                            {"item": m.title, "attitude": m.attitude}
                            for m in t.mentions
                        ],
                    }
                    for t in d.turns
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_metadata(path: str | Path) -> dict[str, int]:
    """Item metadata sidecar: line-delimited {"title": str, "year": int}."""
    years: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            years[obj["title"]] = int(obj["year"])
    return years


def build_item_database(
    dialogues: list[Dialogue],
    metadata: Optional[dict[str, int]] = None,
) -> ItemDatabase:
    """All mentioned items form the database; system-mentioned form the catalog."""
    titles: set[str] = set()
    system_titles: set[str] = set()
    for d in dialogues:
        for turn in d.turns:
            for m in turn.mentions:
                titles.add(m.title)
                if turn.speaker is Speaker.SYSTEM:
                    system_titles.add(m.title)
    records = []
    next_catalog = 0
    for item_id, title in enumerate(sorted(titles)):
        year_match = _YEAR_RE.search(title)
        if year_match:
            year: Optional[int] = int(year_match.group(1))
        elif metadata and title in metadata:
            year = metadata[title]
        else:
            year = None
        in_catalog = title in system_titles
        records.append(
            ItemRecord(
                item_id=item_id,
                title=title,
                release_year=year,
                in_catalog=in_catalog,
                catalog_id=next_catalog if in_catalog else None,
            )
        )
        if in_catalog:
            next_catalog += 1
    return ItemDatabase(records)


def build_interactions(
    train: list[Dialogue],
    db: ItemDatabase,
    policy: PositivityPolicy = PositivityPolicy(),
) -> InteractionMatrix:
    """One row per training dialogue; 1 at positively mentioned items.

    Rows with no positive mentions are retained as all-zero rows.
    """
    rows, cols = [], []
    for u, d in enumerate(train):
        seen = set()
        for turn in d.turns:
            for m in turn.mentions:
                if not policy.is_positive(turn.speaker, m.attitude):
                    continue
                i = db.item_id(m.title)
                if i not in seen:
                    seen.add(i)
                    rows.append(u)
                    cols.append(i)
    matrix = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)),
        shape=(len(train), db.n_items),
    )
    return InteractionMatrix(matrix)


def make_eval_records(
    test: list[Dialogue], db: ItemDatabase
) -> list[EvalRecord]:
    """One record per (system turn, ground-truth catalog item) pair."""
    records = []
    for d in test:
        for k, turn in enumerate(d.turns):
            if turn.speaker is not Speaker.SYSTEM:
                continue
            truths = [
                db.item_id(m.title)
                for m in turn.mentions
                if m.title in db.title_to_id
                and db.catalog_id(db.item_id(m.title)) is not None
            ]
            if not truths:
                continue
            prefix = d.prefix(k)
            cold = not prefix.has_mentions()
            for item_id in truths:
                records.append(
                    EvalRecord(
                        dialogue_id=d.id,
                        prefix=prefix,
                        target_turn=k,
                        ground_truth_item=item_id,
                        cold_start=cold,
                    )
                )
    return records


_RMAT_MAGIC = b"CRAGRMAT"


def save_interactions(R: InteractionMatrix, path: str | Path) -> None:
    """Coordinate-list binary: 16-byte header then (u32 row, u32 col) pairs."""
    coo = R.matrix.tocoo()
    with open(path, "wb") as fh:
        fh.write(_RMAT_MAGIC)
        fh.write(struct.pack("<II", R.n_users, R.n_items))
        order = np.lexsort((coo.col, coo.row))
        pairs = np.empty((len(order), 2), dtype="<u4")
        pairs[:, 0] = coo.row[order]
        pairs[:, 1] = coo.col[order]
        fh.write(pairs.tobytes())


def load_interactions(path: str | Path) -> InteractionMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _RMAT_MAGIC:
            raise CorpusError(f"bad interaction-matrix magic: {magic!r}")
        n_users, n_items = struct.unpack("<II", fh.read(8))
        raw = np.frombuffer(fh.read(), dtype="<u4").reshape(-1, 2)
    matrix = sparse.csr_matrix(
        (np.ones(len(raw)), (raw[:, 0], raw[:, 1])),
        shape=(n_users, n_items),
    )
    return InteractionMatrix(matrix)
