"""Entity extraction parsing and bi-level title matching."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crag.corpus import ItemDatabase, ItemRecord
from crag.entity_link import (
    CHAR_THRESHOLD,
    MentionCandidate,
    TitleIndex,
    char_match,
    char_similarity,
    extract_and_link,
    link_mentions,
    normalize_title,
    parse_extraction,
    word_match,
)
from crag.errors import MalformedCompletion
from crag.llm_gateway import Gateway, ScriptedBackend


def make_db(titles):
    records = []
    for i, title in enumerate(sorted(titles)):
        records.append(ItemRecord(i, title, None, True, i))
    return ItemDatabase(records)


TITLES = [
    "Pan's Labyrinth",
    "Troll",
    "The Hangover",
    "Superbad",
    "Star Wars I - The Phantom Menace",
    "Star Trek",
    "Alien vs. Predator",
    "Heat",
    "Inception",
]


@pytest.fixture(scope="module")
def index():
    return TitleIndex(make_db(TITLES))


# --- normalization ---------------------------------------------------------


def test_normalize_drops_year_and_punctuation():
    assert normalize_title("Heat (1995)") == "heat"
    assert normalize_title("Pan's  Labyrinth!") == "pan s labyrinth"
    assert normalize_title("  STAR   trek ") == "star trek"


def test_normalize_keeps_internal_year():
    assert normalize_title("2001: A Space Odyssey") == "2001 a space odyssey"


# --- extraction parsing ----------------------------------------------------


def test_parse_two_mentions():
    out = parse_extraction("Troll####2\nPan's Labyrinth####2")
    assert [(c.surface, c.attitude) for c in out.candidates] == [
        ("Troll", 2),
        ("Pan's Labyrinth", 2),
    ]
    assert out.warnings == []


def test_parse_no_reply():
    assert parse_extraction("NO").candidates == []
    assert parse_extraction("  no \n").candidates == []


def test_parse_negative_attitudes():
    out = parse_extraction("The Hangover####-2\nSuperbad####-2")
    assert [c.attitude for c in out.candidates] == [-2, -2]


def test_parse_wrong_separator_single_line_warns():
    out = parse_extraction("Inception##2")
    assert out.candidates == []
    assert len(out.warnings) == 1


def test_parse_mostly_malformed_rejected():
    with pytest.raises(MalformedCompletion):
        parse_extraction("Inception##2\nHeat==1\nTroll####2")


def test_parse_minority_malformed_skipped_with_warning():
    out = parse_extraction("Inception####2\nTroll####2\ngarbage line")
    assert len(out.candidates) == 2
    assert len(out.warnings) == 1


def test_parse_attitude_out_of_range():
    out = parse_extraction("Inception####7")
    assert out.candidates == []
    assert any("out of range" in w for w in out.warnings)


def test_parse_dedupes_by_normalized_surface():
    out = parse_extraction("Heat####2\nheat (1995)####1")
    assert len(out.candidates) == 1
    assert out.candidates[0].attitude == 2


@given(st.lists(st.integers(min_value=-2, max_value=2), min_size=1, max_size=5))
def test_parse_preserves_attitudes(attitudes):
    text = "\n".join(f"Movie {i}####{a}" for i, a in enumerate(attitudes))
    out = parse_extraction(text)
    assert [c.attitude for c in out.candidates] == attitudes


# --- character-level matching ----------------------------------------------


def test_char_similarity_oracle():
    # edit distance between "kitten" and "sitting" is famously 3
    assert char_similarity("kitten", "sitting") == pytest.approx(1 - 3 / 7)
    assert char_similarity("abc", "abc") == 1.0
    assert char_similarity("", "") == 1.0


def test_char_match_exact_is_one(index):
    item, score = char_match("Troll", index)
    assert index.db.title(item) == "Troll"
    assert score == 1.0


def test_char_match_typo_tolerant(index):
    item, score = char_match("Pans Labyrinth", index)
    assert index.db.title(item) == "Pan's Labyrinth"
    assert score > 0.9


def test_char_match_below_threshold_is_none(index):
    assert char_match("qqqqqq", index) is None


def test_char_match_agrees_with_exhaustive_scan(index):
    # oracle: argmax over every normalized title, no early exits
    for surface in ["Supurbad", "the hangover", "Alien versus Predator"]:
        norm = normalize_title(surface)
        scores = [char_similarity(norm, t) for t in index.normalized]
        best = max(range(len(scores)), key=lambda i: scores[i])
        got = char_match(surface, index, threshold=0.0)
        assert got is not None
        assert got[1] == pytest.approx(scores[best])


# --- word-level matching ----------------------------------------------------


def test_word_match_handles_subtitle(index):
    item, _ = word_match("Star Wars I", index)
    assert index.db.title(item) == "Star Wars I - The Phantom Menace"


def test_word_match_zero_overlap_is_none(index):
    assert word_match("zzzz qqqq", index) is None


def test_word_match_prefers_rarer_tokens(index):
    # "Trek" only occurs in one title; shared "Star" must not outweigh it.
    item, _ = word_match("Trek", index)
    assert index.db.title(item) == "Star Trek"


# --- linking and reflection --------------------------------------------------


class ExplodingBackend:
    live = False

    def complete(self, request):
        raise AssertionError("LLM must not be consulted when matchers agree")


def test_agreement_skips_llm(index):
    gw = Gateway(ExplodingBackend())
    cands = [MentionCandidate("Troll", 2), MentionCandidate("Superbad", -1)]
    out = link_mentions(cands, index, "ctx", gw)
    assert [m.method for m in out.mentions] == ["both", "both"]
    assert out.llm_calls == 0


def test_unmatchable_surface_dropped_without_llm(index):
    gw = Gateway(ExplodingBackend())
    out = link_mentions([MentionCandidate("qzqzqz", 1)], index, "ctx", gw)
    assert out.mentions == []
    assert out.llm_calls == 0


def test_disagreement_resolved_by_reflection(index):
    def reflect(user_content):
        return "Alien Predator movie####Alien vs. Predator####bm25"

    gw = Gateway(ScriptedBackend({"entity_reflect": reflect}))
    # Force a dispute: give AvP a word match by using overlapping tokens.
    cands = [MentionCandidate("Alien Predator movie", 1)]
    out = link_mentions(cands, index, "ctx", gw)
    # char match fails (long surface), word match hits, reflection maps it
    assert len(out.mentions) == 1
    assert index.db.title(out.mentions[0].item_id) == "Alien vs. Predator"
    assert out.mentions[0].method == "reflected"
    assert out.llm_calls == 1


def test_reflection_none_drops_mention(index):
    gw = Gateway(
        ScriptedBackend(
            {"entity_reflect": lambda _: "Alien Predator movie#### ####none"}
        )
    )
    out = link_mentions([MentionCandidate("Alien Predator movie", 1)], index, "c", gw)
    assert out.mentions == []


def test_reflection_malformed_twice_falls_back_to_char(index):
    calls = []

    def bad(user_content):
        calls.append(1)
        return "not a reflection line at all"

    gw = Gateway(ScriptedBackend({"entity_reflect": bad}))
    # "Supurbad" char-matches Superbad but word-matches nothing with that
    # token, so craft a dispute via a surface with both matchers firing
    # differently: "Star Warz" (char -> Star Wars I..., word -> Star ...).
    out = link_mentions([MentionCandidate("Supurbad movie", -1)], index, "c", gw)
    # whether disputed or not, the call count must never exceed the retry cap
    assert len(calls) <= 2
    if calls:
        assert any("malformed twice" in w for w in out.warnings)
        assert all(m.method == "char" for m in out.mentions)


def test_extract_and_link_end_to_end(index):
    gw = Gateway(
        ScriptedBackend({"extract": lambda _: "Troll####2\nPans Labyrinth####2"})
    )
    out = extract_and_link("I loved Troll and Pans Labyrinth", index, gw)
    titles = {index.db.title(m.item_id) for m in out.mentions}
    assert titles == {"Troll", "Pan's Labyrinth"}
    assert out.llm_calls == 1  # agreement path, extract only


def test_extract_retry_then_failure(index):
    attempts = []

    def garbage(_):
        attempts.append(1)
        return "::::\n::::"

    gw = Gateway(ScriptedBackend({"extract": garbage}))
    with pytest.raises(MalformedCompletion):
        extract_and_link("hi", index, gw)
    assert len(attempts) == 2


def test_linked_attitudes_preserved(index):
    gw = Gateway(ExplodingBackend())
    cands = [MentionCandidate("Heat", -2), MentionCandidate("Inception", 0)]
    out = link_mentions(cands, index, "ctx", gw)
    assert [(index.db.title(m.item_id), m.attitude) for m in out.mentions] == [
        ("Heat", -2),
        ("Inception", 0),
    ]


def test_threshold_boundary(index):
    # a surface exactly at similarity threshold must still link
    title = "Superbad"
    # mutate 20% of characters -> similarity exactly 0.80 is fiddly; instead
    # check the inequality contract directly on both sides of the cut.
    assert char_match(title, index, threshold=1.0) is not None  # exact
    assert char_match("Superbat", index, threshold=CHAR_THRESHOLD) is not None
    assert char_match("Superbat", index, threshold=0.99) is None
