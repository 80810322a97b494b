"""Constrained asymmetric EASE similarity model and top-K retrieval.

W minimizes ||R_Q - R W||_F^2 + lambda ||W||_F^2 subject to
W[ReID(j), j] = 0 for every catalog column j (no self-reconstruction).
The single equality constraint per column is eliminated in closed form:
with P = (R^T R + lambda I)^-1 and c_j the Gram column of the constrained
row i_j, w_j = P c_j - P[:, i_j] * (P c_j)[i_j] / P[i_j, i_j].
"""

from __future__ import annotations

import datetime
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .corpus import (
    Dialogue,
    InteractionMatrix,
    ItemDatabase,
    PositivityPolicy,
)
from .errors import CragError

DEFAULT_LAMBDA = 100.0


@dataclass
class SimilarityModel:
    W: np.ndarray  # (n_items, n_catalog)
    lam: float
    reid: np.ndarray  # catalog_id -> item_id
    pop_weights: Optional[np.ndarray] = None
    beta: float = 0.0

    @property
    def n_items(self) -> int:
        return self.W.shape[0]

    @property
    def n_catalog(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class QueryVector:
    r: np.ndarray  # binary, length n_items
    source_items: tuple[int, ...]


@dataclass(frozen=True)
class RetrievalList:
    entries: tuple[tuple[int, float], ...]  # (catalog_id, score), score desc

    @property
    def catalog_ids(self) -> list[int]:
        return [cid for cid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def fit_ease(
    R: InteractionMatrix, db: ItemDatabase, lam: float = DEFAULT_LAMBDA
) -> SimilarityModel:
    """Closed-form constrained ridge solve, one shared factorization."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if R.n_items != db.n_items:
        raise CragError("interaction matrix and database disagree on n_items")
    reid = np.asarray(db.catalog_item_ids, dtype=np.int64)
    n_items = db.n_items
    dense = R.matrix.toarray().astype(np.float64)
    G = dense.T @ dense
    A = G + lam * np.eye(n_items)
    P = np.linalg.inv(A)
    # Column j of R_Q is column reid[j] of R, so B = G[:, reid].
    PC = P @ G[:, reid]
    cols = np.arange(len(reid))
    diag = P[reid, reid]
    W = PC - P[:, reid] * (PC[reid, cols] / diag)
    W[reid, cols] = 0.0
    return SimilarityModel(W=W, lam=lam, reid=reid)


def rewrite_query(
    prefix: Dialogue,
    db: ItemDatabase,
    policy: PositivityPolicy = PositivityPolicy(),
) -> QueryVector:
    """Multi-hot vector over the positively mentioned items in the prefix.

    Negative and (for the user) neutral mentions are excluded: extrapolating
    dislikes through co-occurrence is unreliable.
    """
    items: set[int] = set()
    for turn in prefix.turns:
        for m in turn.mentions:
            if policy.is_positive(turn.speaker, m.attitude):
                items.add(db.item_id(m.title))
    r = np.zeros(db.n_items)
    for i in items:
        r[i] = 1.0
    return QueryVector(r=r, source_items=tuple(sorted(items)))


def query_from_items(item_ids: Iterable[int], db: ItemDatabase) -> QueryVector:
    items = sorted(set(item_ids))
    r = np.zeros(db.n_items)
    for i in items:
        r[i] = 1.0
    return QueryVector(r=r, source_items=tuple(items))


def score(model: SimilarityModel, q: QueryVector) -> np.ndarray:
    """s = r^T W, optionally reweighted by pop_weights ** beta."""
    if q.r.shape[0] != model.n_items:
        raise CragError(
            f"query length {q.r.shape[0]} != model items {model.n_items}"
        )
    s = q.r @ model.W
    if model.pop_weights is not None and model.beta != 0.0:
        s = s * model.pop_weights ** model.beta
    return s


def top_k(
    scores: np.ndarray, K: int, exclude: Optional[set[int]] = None
) -> RetrievalList:
    """K best catalog ids by (score desc, id asc), skipping exclusions."""
    if K < 0:
        raise ValueError("K must be non-negative")
    exclude = exclude or set()
    if K == 0:
        return RetrievalList(())
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    picked = [(j, float(scores[j])) for j in order if j not in exclude][:K]
    return RetrievalList(tuple(picked))


def compute_pop_weights(
    train: list[Dialogue],
    db: ItemDatabase,
    window: tuple[datetime.date, datetime.date],
    policy: PositivityPolicy = PositivityPolicy(),
) -> np.ndarray:
    """Smoothed recent-popularity weights: (count_j + 1) / (max count + 1)."""
    start, end = window
    counts = np.zeros(db.n_catalog)
    for d in train:
        if not (start <= d.start_date <= end):
            continue
        for turn in d.turns:
            for m in turn.mentions:
                if not policy.is_positive(turn.speaker, m.attitude):
                    continue
                cid = db.catalog_id(db.item_id(m.title))
                if cid is not None:
                    counts[cid] += 1
    return (counts + 1.0) / (counts.max() + 1.0)


_WMAT_MAGIC = b"CRAGWMAT"


def save_model(model: SimilarityModel, path: str | Path) -> None:
    """Header (magic, u32 rows, u32 cols, f64 lambda) then row-major f64."""
    with open(path, "wb") as fh:
        fh.write(_WMAT_MAGIC)
        fh.write(struct.pack("<IId", model.n_items, model.n_catalog, model.lam))
        fh.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())


def load_model(path: str | Path, db: ItemDatabase) -> SimilarityModel:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _WMAT_MAGIC:
            raise CragError(f"bad model magic: {magic!r}")
        rows, cols, lam = struct.unpack("<IId", fh.read(16))
        W = np.frombuffer(fh.read(), dtype="<f8").reshape(rows, cols)
    reid = np.asarray(db.catalog_item_ids, dtype=np.int64)
    if rows != db.n_items or cols != db.n_catalog:
        raise CragError("model shape does not match the item database")
    return SimilarityModel(W=W.copy(), lam=lam, reid=reid)
