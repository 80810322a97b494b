"""Synthetic demo corpus and scripted LLM rules for deterministic runs.

The corpus centers on a Brazilian-cinema scenario: a user who loved
"City of God" and "Bacurau" asks for similar movies, collaborative
retrieval surfaces "The Enemy Within", and the rerank step lifts
"Elite Squad" to the top. Scripted rules are pure functions of the
rendered request, so recording them once yields a transcript that
replays byte-identically.
"""

from __future__ import annotations

import datetime
import re
from pathlib import Path

from . import cf_model, corpus, entity_link, pipeline
from .corpus import Dialogue, Mention, Speaker, Split, Utterance
from .llm_gateway import Gateway, RecordBackend, ScriptedBackend

MOVIE_YEARS = {
    "City of God": 2002,
    "Bacurau": 2019,
    "The Enemy Within": 2014,
    "Elite Squad": 2007,
    "Elite Squad 2": 2010,
    "Central Station": 1998,
    "Aquarius": 2016,
    "Amores Perros": 2000,
    "Y Tu Mama Tambien": 2001,
    "Oldboy": 2003,
    "Inception": 2010,
    "Amelie": 2001,
    "Parasite": 2019,
    "Memories of Murder": 2003,
    "The Host": 2006,
    "Pan's Labyrinth": 2006,
    "Troll": 2022,
}

# Items the scripted context reflection judges relevant.
RELEVANT = {"The Enemy Within", "Parasite", "Memories of Murder"}

# Ranked pool the scripted recommender falls back to after echoing the
# augmentation titles. "Roma" is deliberately off-catalog.
GENERATION_POOL = [
    "Elite Squad",
    "Elite Squad 2",
    "The Enemy Within",
    "Central Station",
    "Aquarius",
    "Parasite",
    "Memories of Murder",
    "The Host",
    "Inception",
    "Y Tu Mama Tambien",
    "City of God",
    "Troll",
    "Pan's Labyrinth",
    "Roma",
]

RERANK_SCORES = {
    "Elite Squad": 2,
    "Elite Squad 2": 2,
    "The Enemy Within": 1,
    "Parasite": 1,
}

SEED_TITLES = ["Parasite", "Memories of Murder", "Oldboy", "The Host", "Inception"]

SHOWCASE_QUERY = (
    "I recently watched City of God and Bacurau and loved both. Could you "
    "recommend some more Brazilian movies like these?"
)

# Scripted extraction replies keyed by the exact user utterance.
EXTRACTIONS = {
    SHOWCASE_QUERY: "City of God####2\nBacurau####2",
    "Any movies as tense as Parasite? It blew me away.": "Parasite####2",
    "I adored Amelie, looking for something equally whimsical.": "Amelie####2",
    "Oldboy was incredible, more Korean thrillers please.": "Oldboy####2",
    "Troll was fun! More creature features from Scandinavia?": "Troll####2",
    "Loved Central Station, any other moving road dramas?": "Central Station####2",
    "Pan's Labyrinth haunted me for weeks. More dark fantasy?": "Pan's Labyrinth####2",
    "Elite Squad was so intense. What should I watch next?": "Elite Squad####2",
    "Aquarius really stayed with me, what else captures that mood?": "Aquarius####2",
    "The Host surprised me, more monster movies with heart?": "The Host####2",
    "I want something gripping for movie night, surprise me.": "NO",
}

DEMO_KS = (0, 5, 10, 20)
DEMO_VARIANTS = ("full", "nR2", "nR12")


def _dlg(did, date, split, *turns) -> Dialogue:
    parsed = []
    for speaker, text, mentions in turns:
        parsed.append(Utterance(
            Speaker(speaker), text,
            tuple(Mention(t, a) for t, a in mentions),
        ))
    return Dialogue(did, tuple(parsed), datetime.date.fromisoformat(date), split)


def build_dialogues() -> list[Dialogue]:
    """Training corpus (Jan-Oct 2022), one valid dialogue, Dec test set."""
    d = []
    train = [
        ("t01", "2022-01-10",
         ("USER", "Just rewatched City of God, blown away again.", [("City of God", 2)]),
         ("SYSTEM", "Try The Enemy Within or Elite Squad.",
          [("The Enemy Within", 0), ("Elite Squad", 0)])),
        ("t02", "2022-01-22",
         ("USER", "Bacurau is a masterpiece.", [("Bacurau", 2)]),
         ("SYSTEM", "Then watch The Enemy Within and Elite Squad 2.",
          [("The Enemy Within", 0), ("Elite Squad 2", 0)])),
        ("t03", "2022-02-05",
         ("USER", "City of God and Bacurau are my favorites.",
          [("City of God", 2), ("Bacurau", 2)]),
         ("SYSTEM", "The Enemy Within should be next.", [("The Enemy Within", 0)])),
        ("t04", "2022-02-19",
         ("USER", "Anything like City of God?", [("City of God", 2)]),
         ("SYSTEM", "Elite Squad and Central Station.",
          [("Elite Squad", 0), ("Central Station", 0)])),
        ("t05", "2022-03-03",
         ("USER", "Bacurau was wild.", [("Bacurau", 2)]),
         ("SYSTEM", "You may enjoy Aquarius.", [("Aquarius", 0)])),
        ("t06", "2022-03-17",
         ("USER", "Elite Squad had me on edge.", [("Elite Squad", 2)]),
         ("SYSTEM", "The sequel Elite Squad 2 is even better.", [("Elite Squad 2", 0)])),
        ("t07", "2022-04-02",
         ("USER", "Oldboy is peak cinema.", [("Oldboy", 2)]),
         ("SYSTEM", "Memories of Murder and Parasite, then.",
          [("Memories of Murder", 0), ("Parasite", 0)])),
        ("t08", "2022-04-20",
         ("USER", "Parasite deserves every award.", [("Parasite", 2)]),
         ("SYSTEM", "The Host and Memories of Murder pair well.",
          [("The Host", 0), ("Memories of Murder", 0)])),
        ("t09", "2022-05-06",
         ("USER", "Amelie always cheers me up.", [("Amelie", 2)]),
         ("SYSTEM", "Maybe Inception for a change of pace.", [("Inception", 0)])),
        ("t10", "2022-05-25",
         ("USER", "Amores Perros wrecked me.", [("Amores Perros", 2)]),
         ("SYSTEM", "Y Tu Mama Tambien and City of God.",
          [("Y Tu Mama Tambien", 0), ("City of God", 0)])),
        ("t11", "2022-06-08",
         ("USER", "Pan's Labyrinth is gorgeous.", [("Pan's Labyrinth", 2)]),
         ("SYSTEM", "Troll scratches a similar itch.", [("Troll", 0)])),
        ("t12", "2022-07-14",
         ("USER", "Troll was a pleasant surprise.", [("Troll", 2)]),
         ("SYSTEM", "Go watch Pan's Labyrinth.", [("Pan's Labyrinth", 0)])),
        ("t13", "2022-08-21",
         ("USER", "More like Bacurau please.", [("Bacurau", 2)]),
         ("SYSTEM", "Central Station is a classic.", [("Central Station", 0)])),
        ("t14", "2022-09-12",
         ("USER", "The Host is so much fun.", [("The Host", 2)]),
         ("SYSTEM", "Parasite, naturally.", [("Parasite", 0)])),
    ]
    for did, date, user, system in train:
        d.append(_dlg(did, date, Split.TRAIN, user, system))
    d.append(_dlg(
        "v01", "2022-11-05", Split.VALID,
        ("USER", "Inception-style puzzles wanted.", [("Inception", 2)]),
        ("SYSTEM", "Oldboy twists hard enough.", [("Oldboy", 0)]),
    ))
    tests = [
        ("showcase", "2022-12-01", SHOWCASE_QUERY,
         [("City of God", 2), ("Bacurau", 2)],
         "You should try Elite Squad.", [("Elite Squad", 0)]),
        ("e01", "2022-12-02", "Any movies as tense as Parasite? It blew me away.",
         [("Parasite", 2)],
         "Memories of Murder fits.", [("Memories of Murder", 0)]),
        ("e02", "2022-12-03", "I adored Amelie, looking for something equally whimsical.",
         [("Amelie", 2)],
         "Inception, for dreamlike visuals.", [("Inception", 0)]),
        ("e03", "2022-12-04", "Oldboy was incredible, more Korean thrillers please.",
         [("Oldboy", 2)],
         "Memories of Murder and The Host.",
         [("Memories of Murder", 0), ("The Host", 0)]),
        ("e04", "2022-12-05", "Troll was fun! More creature features from Scandinavia?",
         [("Troll", 2)],
         "Pan's Labyrinth, if you allow Spain.", [("Pan's Labyrinth", 0)]),
        ("e05", "2022-12-06", "Loved Central Station, any other moving road dramas?",
         [("Central Station", 2)],
         "City of God, for the same director's world.", [("City of God", 0)]),
        ("e06", "2022-12-07", "Pan's Labyrinth haunted me for weeks. More dark fantasy?",
         [("Pan's Labyrinth", 2)],
         "Troll leans lighter but works.", [("Troll", 0)]),
        ("e07", "2022-12-08", "Elite Squad was so intense. What should I watch next?",
         [("Elite Squad", 2)],
         "Elite Squad 2, without question.", [("Elite Squad 2", 0)]),
        ("e08", "2022-12-09", "Aquarius really stayed with me, what else captures that mood?",
         [("Aquarius", 2)],
         "Central Station.", [("Central Station", 0)]),
        ("e09", "2022-12-10", "The Host surprised me, more monster movies with heart?",
         [("The Host", 2)],
         "Parasite, of course.", [("Parasite", 0)]),
        ("e10", "2022-12-11", "I want something gripping for movie night, surprise me.",
         [],
         "Parasite never misses.", [("Parasite", 0)]),
    ]
    for did, date, query, qm, resp, rm in tests:
        d.append(_dlg(
            did, date, Split.TEST,
            ("USER", query, qm),
            ("SYSTEM", resp, rm),
        ))
    return d


_QUERY_RE = re.compile(r"Here is the user's query: (.*?)\.?$", re.DOTALL)
_RETRIEVED_RE = re.compile(r"Here are retrieved movies: (.*)\.$", re.DOTALL)
_CANDIDATES_RE = re.compile(r"Here are the movie candidates: (.*)\.$", re.DOTALL)
_AUG_RE = re.compile(
    r"liked by other users: (.*?)(?: Use the above| Consider using|$)",
    re.DOTALL,
)


def _extract_rule(content: str) -> str:
    match = _QUERY_RE.search(content)
    query = match.group(1).strip() if match else ""
    for utterance, reply in EXTRACTIONS.items():
        if utterance.rstrip(".?!") in query or query in utterance:
            return reply
    return "NO"


def _entity_reflect_rule(content: str) -> str:
    lines = []
    section = content.split("BM25_match: ", 1)[-1].rstrip(".")
    for row in section.splitlines():
        parts = row.split(entity_link.SEP)
        if len(parts) != 3:
            continue
        raw, fuzzy, bm25 = (p.strip() for p in parts)
        if fuzzy:
            lines.append(f"{raw}{entity_link.SEP}{fuzzy}{entity_link.SEP}fuzzy")
        elif bm25:
            lines.append(f"{raw}{entity_link.SEP}{bm25}{entity_link.SEP}BM25")
        else:
            lines.append(f"{raw}{entity_link.SEP} {entity_link.SEP}none")
    return "\n".join(lines)


def _context_reflect_rule(content: str) -> str:
    match = _RETRIEVED_RE.search(content)
    titles = [t.strip() for t in match.group(1).split(";")] if match else []
    return "\n".join(
        f"{t}{entity_link.SEP}{1 if t in RELEVANT else 0}" for t in titles
    )


def _recommend_rule(content: str) -> str:
    match = _AUG_RE.search(content)
    aug = [t.strip() for t in match.group(1).split(";")] if match else []
    ranked = aug + [t for t in GENERATION_POOL if t not in aug]
    return "\n".join(ranked[:20])


def _rerank_rule(content: str) -> str:
    match = _CANDIDATES_RE.search(content)
    titles = [t.strip() for t in match.group(1).split(";")] if match else []
    return "\n".join(
        f"{t}{entity_link.SEP}{RERANK_SCORES.get(t, 0)}" for t in titles
    )


def _seed_rule(content: str) -> str:
    return "\n".join(SEED_TITLES)


def scripted_rules() -> dict:
    return {
        "extract": _extract_rule,
        "entity_reflect": _entity_reflect_rule,
        "context_reflect": _context_reflect_rule,
        "recommend": _recommend_rule,
        "rerank": _rerank_rule,
        "seed": _seed_rule,
    }


def scripted_gateway() -> Gateway:
    return Gateway(ScriptedBackend(scripted_rules()))


DEMO_LAMBDA = 1.0


def write_fixture(directory: str | Path) -> dict[str, Path]:
    """Materialize dialogues, metadata, model, interactions, transcript,
    and a CLI config under `directory`. Returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "dialogues": directory / "dialogues.jsonl",
        "metadata": directory / "metadata.jsonl",
        "interactions": directory / "interactions.bin",
        "model": directory / "model.bin",
        "transcript": directory / "transcript.jsonl",
        "config": directory / "config.toml",
    }

    dialogues = build_dialogues()
    corpus.write_dialogues(dialogues, paths["dialogues"])
    with open(paths["metadata"], "w", encoding="utf-8") as fh:
        import json
        for title, year in sorted(MOVIE_YEARS.items()):
            fh.write(json.dumps({"title": title, "year": year}) + "\n")

    db = corpus.build_item_database(dialogues, metadata=MOVIE_YEARS)
    train = [d for d in dialogues if d.split is Split.TRAIN]
    R = corpus.build_interactions(train, db)
    corpus.save_interactions(R, paths["interactions"])
    model = cf_model.fit_ease(R, db, lam=DEMO_LAMBDA)
    cf_model.save_model(model, paths["model"])

    # Record every exchange the replay-backed tests and demo will request.
    index = entity_link.TitleIndex(db)
    paths["transcript"].unlink(missing_ok=True)
    backend = RecordBackend(ScriptedBackend(scripted_rules()), paths["transcript"])
    gw = Gateway(backend)
    test = [d for d in dialogues if d.split is Split.TEST]
    records = corpus.make_eval_records(test, db)
    for variant in DEMO_VARIANTS:
        for k in DEMO_KS:
            cfg = pipeline.PipelineConfig(k=k, variant=variant)
            for rec in records:
                pipeline.run(rec.prefix, cfg, model, db, index, gw)
    for d in test:
        for turn in d.turns:
            if turn.speaker is Speaker.USER:
                entity_link.extract_and_link(turn.text, index, gw)

    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write(
            "[data]\n"
            f'dialogues = "{paths["dialogues"]}"\n'
            f'metadata = "{paths["metadata"]}"\n'
            'format = "reddit_v2"\n\n'
            "[model]\n"
            f'path = "{paths["model"]}"\n'
            f"lambda_ = {DEMO_LAMBDA}\n"
            "beta = 0.0\n\n"
            "[backend]\n"
            'mode = "replay"\n'
            f'transcript = "{paths["transcript"]}"\n\n'
            "[pipeline]\n"
            "k = 5\n"
            'variant = "full"\n'
            "m_rec = 20\n"
            'prompt_mode = "rag"\n\n'
            "[service]\n"
            "port = 8787\n"
        )
    return paths
