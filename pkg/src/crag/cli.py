"""Command-line entry points: ingest, link, fit, run, eval, serve, demo."""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import cf_model, corpus, demo, entity_link, eval as evalmod, pipeline
from .config import AppConfig, load_config
from .corpus import Split
from .errors import CragError
from .llm_gateway import (
    Gateway,
    LiveBackend,
    RecordBackend,
    ReplayBackend,
    Transcript,
)


def make_gateway(cfg: AppConfig) -> Gateway:
    b = cfg.backend
    if b.mode == "replay":
        if not b.transcript:
            raise CragError("replay backend requires a transcript path")
        return Gateway(ReplayBackend(Transcript.load(b.transcript)))
    live = LiveBackend(b.endpoint, b.model, b.api_key_env)
    if b.mode == "record":
        if not b.transcript:
            raise CragError("record backend requires a transcript path")
        transcript = (
            Transcript.load(b.transcript) if Path(b.transcript).exists()
            else None
        )
        return Gateway(RecordBackend(live, b.transcript, transcript), limit=b.limit)
    if b.mode == "live":
        return Gateway(live, limit=b.limit)
    raise CragError(f"unknown backend mode {b.mode!r}")


def load_corpus(cfg: AppConfig):
    if not cfg.dialogues:
        raise CragError("config has no [data].dialogues path")
    dialogues = corpus.ingest_dialogues(cfg.dialogues, cfg.dataset_format)
    metadata = corpus.load_metadata(cfg.metadata) if cfg.metadata else None
    db = corpus.build_item_database(dialogues, metadata=metadata)
    return dialogues, db


def cmd_ingest(args) -> int:
    dialogues = corpus.ingest_dialogues(args.dialogues, args.format)
    db = corpus.build_item_database(dialogues)
    test = [d for d in dialogues if d.split is Split.TEST]
    stats = {
        "n_dialogues": len(dialogues),
        "test_with_mentions": sum(1 for d in test if d.has_mentions()),
        "test_without_mentions": sum(1 for d in test if not d.has_mentions()),
        "n_items": db.n_items,
        "n_catalog": db.n_catalog,
    }
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_link(args) -> int:
    cfg = load_config(args.config)
    dialogues, db = load_corpus(cfg)
    index = entity_link.TitleIndex(db)
    gw = make_gateway(cfg)
    annotated = []
    for d in dialogues:
        turns = []
        for turn in d.turns:
            result = entity_link.extract_and_link(
                turn.text, index, gw, cfg.char_threshold
            )
            mentions = tuple(
                corpus.Mention(db.title(m.item_id), m.attitude)
                for m in result.mentions
            )
            turns.append(corpus.Utterance(turn.speaker, turn.text, mentions))
        annotated.append(corpus.Dialogue(d.id, tuple(turns), d.start_date, d.split))
    corpus.write_dialogues(annotated, args.out)
    print(f"linked {len(annotated)} dialogues -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    if args.lam is not None:
        cfg.lam = args.lam
    dialogues, db = load_corpus(cfg)
    train = [d for d in dialogues if d.split is Split.TRAIN]
    R = corpus.build_interactions(train, db, cfg.policy)
    model = cf_model.fit_ease(R, db, lam=cfg.lam)
    beta = args.beta if args.beta is not None else cfg.beta
    if beta:
        days = args.pop_window_days or cfg.pop_window_days or 365
        end = max(d.start_date for d in train)
        window = (end - datetime.timedelta(days=days), end)
        model.pop_weights = cf_model.compute_pop_weights(
            train, db, window, cfg.policy
        )
        model.beta = beta
    out = args.out or cfg.model_path
    if not out:
        raise CragError("no output path: pass --out or set [model].path")
    cf_model.save_model(model, out)
    print(f"fitted W {model.n_items}x{model.n_catalog} (lambda={model.lam}) -> {out}")
    return 0


def _runtime(cfg: AppConfig):
    dialogues, db = load_corpus(cfg)
    index = entity_link.TitleIndex(db)
    if cfg.model_path and Path(cfg.model_path).exists():
        model = cf_model.load_model(cfg.model_path, db)
    else:
        train = [d for d in dialogues if d.split is Split.TRAIN]
        R = corpus.build_interactions(train, db, cfg.policy)
        model = cf_model.fit_ease(R, db, lam=cfg.lam)
    return dialogues, db, index, model, make_gateway(cfg)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    pipe = cfg.pipeline
    if args.variant:
        pipe = replace(pipe, variant=args.variant)
    if args.k is not None:
        pipe = replace(pipe, k=args.k)
    dialogues, db, index, model, gw = _runtime(cfg)
    target = next((d for d in dialogues if d.id == args.dialogue_id), None)
    if target is None:
        print(f"error: no dialogue with id {args.dialogue_id!r}", file=sys.stderr)
        return 1
    k = args.turn if args.turn is not None else next(
        (i for i, t in enumerate(target.turns)
         if t.speaker is corpus.Speaker.SYSTEM),
        len(target.turns),
    )
    trace = pipeline.run(
        target.prefix(k), pipe, model, db, index, gw, cfg.policy
    )
    print(json.dumps(pipeline.trace_to_dict(trace, db), sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    dialogues, db, index, model, gw = _runtime(cfg)
    test = [d for d in dialogues if d.split is Split.TEST]
    records = corpus.make_eval_records(test, db)
    if args.cold_start_only:
        records = [r for r in records if r.cold_start]
    if args.noise_seed is not None:
        records = evalmod.noise_replace(records, db, args.noise_seed)
    if args.cutoff_year is not None:
        before, after, dropped = evalmod.recency_split(records, db, args.cutoff_year)
        records = after if args.recency_group == "after" else before
        print(f"recency split: kept {len(records)}, unknown-year dropped {dropped}",
              file=sys.stderr)

    variants = [args.variant] if args.variant else list(evalmod.DEFAULT_VARIANTS)
    ks = [args.k] if args.k is not None else list(evalmod.DEFAULT_KS)

    def run_record(rec, pipe_cfg):
        return pipeline.run(
            rec.prefix, pipe_cfg, model, db, index, gw, cfg.policy
        )

    reports = evalmod.sweep_k(
        records, cfg.pipeline, run_record, db, Ks=ks, variants=variants
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evalmod.write_reports(reports, out_dir / "report.jsonl")

    conf_k = args.k if args.k is not None else max(ks)
    conf_cfg = replace(cfg.pipeline, variant=variants[0], k=conf_k)
    traces = [run_record(r, conf_cfg) for r in records]
    matrix = evalmod.rank_confusion(traces, conf_k)
    evalmod.write_confusion(matrix, out_dir / "confusion.csv")
    print(f"wrote {len(reports)} reports -> {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import Runtime, build_app

    cfg = load_config(args.config)
    _, db, index, model, gw = _runtime(cfg)
    runtime = Runtime(db=db, index=index, model=model, gateway=gw, cfg=cfg)
    port = args.port or cfg.port
    uvicorn.run(build_app(runtime), host="127.0.0.1", port=port)
    return 0


def cmd_demo(args) -> int:
    paths = demo.write_fixture(args.out_dir)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crag")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("ingest", help="parse a dataset and print statistics")
    q.add_argument("--dialogues", required=True)
    q.add_argument("--format", default="reddit_v2", choices=["reddit_v2", "redial"])
    q.set_defaults(fn=cmd_ingest)

    q = sub.add_parser("link", help="entity-link a corpus via the LLM")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=cmd_link)

    q = sub.add_parser("fit", help="fit the similarity model")
    q.add_argument("--config", required=True)
    q.add_argument("--lambda", dest="lam", type=float, default=None)
    q.add_argument("--beta", type=float, default=None)
    q.add_argument("--pop-window-days", type=int, default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=cmd_fit)

    q = sub.add_parser("run", help="run one query and print the trace")
    q.add_argument("--config", required=True)
    q.add_argument("--dialogue-id", required=True)
    q.add_argument("--turn", type=int, default=None)
    q.add_argument("--variant", default=None, choices=list(pipeline.VARIANTS))
    q.add_argument("--k", type=int, default=None)
    q.set_defaults(fn=cmd_run)

    q = sub.add_parser("eval", help="run the offline evaluation")
    q.add_argument("--config", required=True)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--variant", default=None, choices=list(pipeline.VARIANTS))
    q.add_argument("--k", type=int, default=None)
    q.add_argument("--cutoff-year", type=int, default=None)
    q.add_argument("--recency-group", default="after", choices=["before", "after"])
    q.add_argument("--noise-seed", type=int, default=None)
    q.add_argument("--cold-start-only", action="store_true")
    q.set_defaults(fn=cmd_eval)

    q = sub.add_parser("serve", help="start the HTTP service")
    q.add_argument("--config", required=True)
    q.add_argument("--port", type=int, default=None)
    q.set_defaults(fn=cmd_serve)

    q = sub.add_parser("demo", help="write the synthetic demo fixture")
    q.add_argument("--out-dir", required=True)
    q.set_defaults(fn=cmd_demo)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
