"""End-to-end query flow: retrieve, reflect, augment, generate, rerank.

Variants: full (both reflections), nR2 (no rerank), nR12 (no reflections),
zero_shot (K forced to 0, dialogue-only generation). With K=0 all variants
share the zero-shot generation; full additionally self-reranks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import cf_model, entity_link
from .cf_model import RetrievalList, SimilarityModel
from .corpus import Dialogue, ItemDatabase, PositivityPolicy
from .entity_link import MentionCandidate, TitleIndex
from .errors import EmptyRecommendation, MalformedCompletion
from .llm_gateway import (
    Gateway,
    RAG_INSTRUCTION,
    REC_INSTRUCTION,
    render_dialogue,
)

AUGMENTATION_PRETEXT = (
    "Based on movies mentioned in the conversation, here are some movies "
    "that are usually liked by other users:"
)

VARIANTS = ("full", "nR2", "nR12", "zero_shot")


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 20
    m_rec: int = 20
    prompt_mode: str = "rag"  # rag | rec
    variant: str = "full"
    cold_start_seeds: int = 5
    allow_mentioned: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("K must be non-negative")
        if self.m_rec < 1:
            raise ValueError("m_rec must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.prompt_mode not in ("rag", "rec"):
            raise ValueError(f"unknown prompt mode {self.prompt_mode!r}")

    @property
    def effective_k(self) -> int:
        return 0 if self.variant == "zero_shot" else self.k


@dataclass
class PipelineTrace:
    query_items: list[int] = field(default_factory=list)
    raw_retrieval: RetrievalList = RetrievalList(())
    reflected_retrieval: list[int] = field(default_factory=list)
    raw_recs: list[int] = field(default_factory=list)
    rerank_scores: dict[int, int] = field(default_factory=dict)
    final_recs: list[int] = field(default_factory=list)
    cold_start: bool = False
    llm_calls: int = 0
    warnings: list[str] = field(default_factory=list)


def _parse_batch_lines(text: str, label: str) -> list[tuple[str, str]]:
    """Parse "name####value" lines; reject when most lines are malformed."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    rows, malformed = [], 0
    for line in lines:
        parts = line.split(entity_link.SEP)
        if len(parts) != 2 or not parts[0].strip():
            malformed += 1
            continue
        rows.append((parts[0].strip(), parts[1].strip()))
    if not lines or malformed * 2 > len(lines):
        raise MalformedCompletion(f"{label}: {malformed}/{len(lines)} lines malformed")
    return rows


def context_reflect(
    prefix: Dialogue,
    retrieval: RetrievalList,
    db: ItemDatabase,
    llm: Gateway,
    trace: Optional[PipelineTrace] = None,
) -> list[int]:
    """Keep only retrieved items the LLM judges context-relevant.

    Items missing from the reply are dropped (silence is not endorsement);
    a twice-malformed reply falls back to the unfiltered retrieval.
    """
    if len(retrieval) == 0:
        return []
    titles = {entity_link.normalize_title(db.catalog_title(cid)): cid
              for cid in retrieval.catalog_ids}
    listed = "; ".join(db.catalog_title(cid) for cid in retrieval.catalog_ids)
    dialogue = render_dialogue(prefix.turns)
    rows = None
    calls = 0
    for _ in range(2):
        calls += 1
        reply = llm.ask("context_reflect", dialogue=dialogue, items=listed)
        try:
            rows = _parse_batch_lines(reply, "context reflection")
            break
        except MalformedCompletion:
            rows = None
    if trace is not None:
        trace.llm_calls += calls
    if rows is None:
        if trace is not None:
            trace.warnings.append(
                "context reflection malformed twice; keeping raw retrieval"
            )
        return list(retrieval.catalog_ids)
    judged: dict[int, bool] = {}
    for name, value in rows:
        cid = titles.get(entity_link.normalize_title(name))
        if cid is None:
            if trace is not None:
                trace.warnings.append(f"reflection judged unknown item {name!r}")
            continue
        judged[cid] = value == "1"
    kept = []
    for cid in retrieval.catalog_ids:
        if cid not in judged:
            if trace is not None:
                trace.warnings.append(
                    f"no relevance judgment for {db.catalog_title(cid)!r}; dropped"
                )
            continue
        if judged[cid]:
            kept.append(cid)
    return kept


def build_augmentation(items: list[int], db: ItemDatabase) -> str:
    """Pretext plus similarity-ranked titles joined by semicolons."""
    if not items:
        return ""
    return AUGMENTATION_PRETEXT + " " + "; ".join(
        db.catalog_title(cid) for cid in items
    )


def _link_title_line(title: str, db: ItemDatabase, index: TitleIndex) -> Optional[int]:
    """Catalog id for a generated title via char/word agreement, else None."""
    cm = entity_link.char_match(title, index)
    wm = entity_link.word_match(title, index)
    if cm is None:
        return None
    if wm is not None and wm[0] != cm[0]:
        return None
    return db.catalog_id(cm[0])


def generate_recommendations(
    prefix: Dialogue,
    augmentation: str,
    cfg: PipelineConfig,
    db: ItemDatabase,
    index: TitleIndex,
    llm: Gateway,
    trace: Optional[PipelineTrace] = None,
) -> list[int]:
    """One recommendation call; reply lines linked to the catalog.

    Titles the matchers disagree on, or that fall outside the catalog, are
    dropped with warnings. Duplicates keep their first rank.
    """
    dialogue = render_dialogue(prefix.turns)
    mode = RAG_INSTRUCTION if cfg.prompt_mode == "rag" else REC_INSTRUCTION
    recs: list[int] = []
    for attempt in range(2):
        if trace is not None:
            trace.llm_calls += 1
        reply = llm.ask(
            "recommend",
            dialogue=dialogue,
            augmentation=augmentation,
            mode_instruction=mode if augmentation else "",
        )
        titles = [ln.strip() for ln in reply.splitlines() if ln.strip()]
        recs = []
        seen: set[int] = set()
        for title in titles:
            cid = _link_title_line(title, db, index)
            if cid is None:
                if trace is not None:
                    trace.warnings.append(f"unlinkable recommendation {title!r}")
                continue
            if cid in seen:
                continue
            seen.add(cid)
            recs.append(cid)
        if recs:
            break
    if not recs:
        raise EmptyRecommendation("no generated title linked to the catalog")
    return recs


def reflect_rerank(
    prefix: Dialogue,
    recs: list[int],
    db: ItemDatabase,
    llm: Gateway,
    trace: Optional[PipelineTrace] = None,
) -> tuple[list[int], dict[int, int]]:
    """Ordinal-score the generated list, then stable-sort by score desc.

    Stability keeps the LLM's generation order as the tie-breaker. Items the
    reply skips score 0; a twice-malformed reply leaves the order unchanged.
    """
    if not recs:
        return [], {}
    titles = {entity_link.normalize_title(db.catalog_title(cid)): cid
              for cid in recs}
    listed = "; ".join(db.catalog_title(cid) for cid in recs)
    dialogue = render_dialogue(prefix.turns)
    rows = None
    for _ in range(2):
        if trace is not None:
            trace.llm_calls += 1
        reply = llm.ask("rerank", dialogue=dialogue, items=listed)
        try:
            rows = _parse_batch_lines(reply, "rerank")
            break
        except MalformedCompletion:
            rows = None
    scores = {cid: 0 for cid in recs}
    if rows is None:
        if trace is not None:
            trace.warnings.append("rerank malformed twice; order unchanged")
        return list(recs), scores
    for name, value in rows:
        cid = titles.get(entity_link.normalize_title(name))
        if cid is None:
            continue
        try:
            val = int(value)
        except ValueError:
            continue
        if -2 <= val <= 2:
            scores[cid] = val
    final = sorted(recs, key=lambda cid: -scores[cid])
    return final, scores


def seed_items_cold_start(
    prefix: Dialogue,
    cfg: PipelineConfig,
    index: TitleIndex,
    llm: Gateway,
    trace: Optional[PipelineTrace] = None,
) -> list[int]:
    """Infer likely-liked items for a mention-free prefix; link them.

    The linked seeds substitute the query rewrite; zero linkable seeds
    degrade the run to pure zero-shot generation.
    """
    if trace is not None:
        trace.llm_calls += 1
    reply = llm.ask(
        "seed",
        dialogue=render_dialogue(prefix.turns),
        n_seeds=str(cfg.cold_start_seeds),
    )
    titles = [ln.strip() for ln in reply.splitlines() if ln.strip()]
    cands = [MentionCandidate(t, 1) for t in titles[: cfg.cold_start_seeds]]
    result = entity_link.link_mentions(cands, index, render_dialogue(prefix.turns), llm)
    if trace is not None:
        trace.llm_calls += result.llm_calls
        trace.warnings.extend(result.warnings)
        if not result.mentions:
            trace.warnings.append("no cold-start seed linked; pure zero-shot")
    return [m.item_id for m in result.mentions]


def run(
    prefix: Dialogue,
    cfg: PipelineConfig,
    model: SimilarityModel,
    db: ItemDatabase,
    index: TitleIndex,
    llm: Gateway,
    policy: PositivityPolicy = PositivityPolicy(),
) -> PipelineTrace:
    """Execute the configured variant over one dialogue prefix."""
    trace = PipelineTrace()
    q = cf_model.rewrite_query(prefix, db, policy)
    k = cfg.effective_k
    if not q.source_items and not prefix.has_mentions() and k > 0:
        trace.cold_start = True
        seeds = seed_items_cold_start(prefix, cfg, index, llm, trace)
        q = cf_model.query_from_items(seeds, db)
    trace.query_items = list(q.source_items)

    if k > 0 and q.source_items:
        s = cf_model.score(model, q)
        exclude: set[int] = set()
        if not cfg.allow_mentioned:
            exclude = {
                cid for cid in (db.catalog_id(i) for i in q.source_items)
                if cid is not None
            }
        trace.raw_retrieval = cf_model.top_k(s, k, exclude)

    if cfg.variant in ("full", "nR2"):
        trace.reflected_retrieval = context_reflect(
            prefix, trace.raw_retrieval, db, llm, trace
        )
    else:
        trace.reflected_retrieval = list(trace.raw_retrieval.catalog_ids)

    augmentation = build_augmentation(trace.reflected_retrieval, db)
    trace.raw_recs = generate_recommendations(
        prefix, augmentation, cfg, db, index, llm, trace
    )

    if cfg.variant == "full":
        trace.final_recs, trace.rerank_scores = reflect_rerank(
            prefix, trace.raw_recs, db, llm, trace
        )
    else:
        trace.final_recs = list(trace.raw_recs)
        trace.rerank_scores = {}
    return trace


def trace_to_dict(trace: PipelineTrace, db: ItemDatabase) -> dict:
    """JSON-ready trace summary with titles alongside catalog ids."""
    def named(cids):
        return [{"catalog_id": c, "title": db.catalog_title(c)} for c in cids]

    return {
        "query_items": [
            {"item_id": i, "title": db.title(i)} for i in trace.query_items
        ],
        "cold_start": trace.cold_start,
        "raw_retrieval": [
            {"catalog_id": c, "title": db.catalog_title(c), "score": s}
            for c, s in trace.raw_retrieval.entries
        ],
        "reflected_retrieval": named(trace.reflected_retrieval),
        "raw_recs": named(trace.raw_recs),
        "rerank_scores": {
            str(c): v for c, v in sorted(trace.rerank_scores.items())
        },
        "final_recs": named(trace.final_recs),
        "llm_calls": trace.llm_calls,
        "warnings": list(trace.warnings),
    }
