"""Offline measurement: recall@M, K-sweeps, recency splits, rank confusion,
and the item-replacement noise perturbation.

Recall is computed per evaluation record (each carries exactly one ground
truth) and averaged; this realizes the replicate-per-groundtruth protocol.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .corpus import Dialogue, EvalRecord, ItemDatabase, Mention, Utterance
from .errors import CragError
from .pipeline import PipelineConfig, PipelineTrace

RECALL_MS = (5, 10, 20)
DEFAULT_KS = (0, 5, 10, 15, 20, 25, 30, 35)
DEFAULT_VARIANTS = ("full", "nR2", "nR12")


@dataclass
class MetricReport:
    variant: str
    k: int
    recall_at: dict[int, float]
    n_records: int
    per_record: Optional[list[dict]] = None

    def to_json(self) -> str:
        obj = {
            "variant": self.variant,
            "k": self.k,
            "recall_at": {str(m): self.recall_at[m] for m in sorted(self.recall_at)},
            "n_records": self.n_records,
        }
        return json.dumps(obj, sort_keys=True)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: recommendation rank, cols: retrieval rank
    k: int
    top_rows_shown: int


def recall_at(
    records: Sequence[EvalRecord],
    traces: Sequence[PipelineTrace],
    M: int,
    db: ItemDatabase,
) -> float:
    """Fraction of records whose ground truth is in the top M final recs."""
    if len(records) != len(traces):
        raise CragError(
            f"{len(records)} records vs {len(traces)} traces"
        )
    if not records:
        return 0.0
    hits = 0
    for rec, trace in zip(records, traces):
        gt = db.catalog_id(rec.ground_truth_item)
        if gt is not None and gt in trace.final_recs[:M]:
            hits += 1
    return hits / len(records)


def make_report(
    variant: str,
    k: int,
    records: Sequence[EvalRecord],
    traces: Sequence[PipelineTrace],
    db: ItemDatabase,
    Ms: Sequence[int] = RECALL_MS,
) -> MetricReport:
    report = MetricReport(
        variant=variant,
        k=k,
        recall_at={m: recall_at(records, traces, m, db) for m in Ms},
        n_records=len(records),
    )
    _check_monotone(report)
    return report


def _check_monotone(report: MetricReport) -> None:
    ms = sorted(report.recall_at)
    values = [report.recall_at[m] for m in ms]
    for lo, hi in zip(values, values[1:]):
        if lo > hi:
            raise CragError(f"recall not monotone in M: {report.recall_at}")


def sweep_k(
    records: Sequence[EvalRecord],
    cfg_base: PipelineConfig,
    run_record: Callable[[EvalRecord, PipelineConfig], PipelineTrace],
    db: ItemDatabase,
    Ks: Sequence[int] = DEFAULT_KS,
    variants: Sequence[str] = DEFAULT_VARIANTS,
) -> list[MetricReport]:
    """One report per (variant, K) over the whole record list."""
    from dataclasses import replace

    reports = []
    for variant in variants:
        for k in Ks:
            cfg = replace(cfg_base, variant=variant, k=k)
            traces = [run_record(r, cfg) for r in records]
            reports.append(make_report(variant, k, records, traces, db))
    return reports


def recency_split(
    records: Sequence[EvalRecord],
    db: ItemDatabase,
    cutoff_year: int,
) -> tuple[list[EvalRecord], list[EvalRecord], int]:
    """Partition records by ground-truth release year around the cutoff.

    Grouping is per dialogue: `after` takes every record of a dialogue with
    at least one ground truth released in/after the cutoff year; `before`
    takes dialogues whose ground truths all predate it. Returns
    (before, after, n_excluded_for_unknown_year).
    """
    years_by_dialogue: dict[str, list[Optional[int]]] = {}
    for rec in records:
        year = db.records[rec.ground_truth_item].release_year
        years_by_dialogue.setdefault(rec.dialogue_id, []).append(year)
    before, after = [], []
    excluded = 0
    for rec in records:
        years = years_by_dialogue[rec.dialogue_id]
        if any(y is None for y in years):
            excluded += 1
            continue
        if any(y >= cutoff_year for y in years):
            after.append(rec)
        else:
            before.append(rec)
    return before, after, excluded


def rank_confusion(
    traces: Sequence[PipelineTrace],
    K: int,
    top_rows_shown: Optional[int] = None,
) -> ConfusionMatrix:
    """counts[i][j] += 1 when the j-th reflected retrieval lands at final rank i."""
    n_rows = max((len(t.final_recs) for t in traces), default=0)
    counts = np.zeros((n_rows, K), dtype=np.int64)
    for trace in traces:
        position = {cid: i for i, cid in enumerate(trace.final_recs)}
        for j, cid in enumerate(trace.reflected_retrieval[:K]):
            i = position.get(cid)
            if i is not None:
                counts[i, j] += 1
    return ConfusionMatrix(
        counts=counts, k=K, top_rows_shown=top_rows_shown or n_rows
    )


def noise_replace(
    records: Sequence[EvalRecord],
    db: ItemDatabase,
    seed: int,
) -> list[EvalRecord]:
    """Replace every prefix mention with a uniform random database item.

    Attitudes are preserved; the draw is deterministic in the seed.
    """
    rng = random.Random(seed)
    out = []
    for rec in records:
        turns = []
        for turn in rec.prefix.turns:
            mentions = tuple(
                Mention(
                    title=db.title(rng.randrange(db.n_items)),
                    attitude=m.attitude,
                )
                for m in turn.mentions
            )
            turns.append(Utterance(turn.speaker, turn.text, mentions))
        prefix = Dialogue(
            rec.prefix.id, tuple(turns), rec.prefix.start_date, rec.prefix.split
        )
        out.append(
            EvalRecord(
                dialogue_id=rec.dialogue_id,
                prefix=prefix,
                target_turn=rec.target_turn,
                ground_truth_item=rec.ground_truth_item,
                cold_start=rec.cold_start,
            )
        )
    return out


def write_reports(reports: Iterable[MetricReport], path: str | Path) -> None:
    """Line-delimited reports; re-checks recall monotonicity on the way out."""
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            _check_monotone(report)
            fh.write(report.to_json() + "\n")


def read_reports(path: str | Path) -> list[MetricReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            reports.append(
                MetricReport(
                    variant=obj["variant"],
                    k=obj["k"],
                    recall_at={int(m): v for m, v in obj["recall_at"].items()},
                    n_records=obj["n_records"],
                )
            )
    return reports


def write_confusion(matrix: ConfusionMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["rec_rank"] + [f"ret_{j}" for j in range(matrix.counts.shape[1])]
        )
        for i, row in enumerate(matrix.counts[: matrix.top_rows_shown]):
            writer.writerow([i] + [int(v) for v in row])
