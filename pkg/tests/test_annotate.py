from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2v.annotate import (
    DEFAULT_PROMPTS,
    FULL_NAMES,
    TAG_ORDER,
    AttributeTag,
    ExtractiveSummarizer,
    KeywordTagger,
    PromptSet,
    RemoteTagger,
    Summary,
    build_attribute_subsets,
    compose_local_input,
    parse_tag_reply,
    read_annotations,
    summarize,
    tag_sentence,
    tag_sentences,
    write_annotations,
)
from e2v.corpus import Sentence, collapse_whitespace, load_corpus
from e2v.errors import E2vError, RemoteServiceError

FIXTURE = Path(__file__).resolve().parent.parent / "data" / "corpus"


def sent(text, index=0):
    return Sentence(index=index, text=text, word_count=len(text.split()))


def test_eight_tags_in_declared_order():
    assert [t.value for t in TAG_ORDER] == [
        "MECH", "OPT", "EM", "THERM", "CHEM", "ARF", "APPL", "ABND",
    ]
    assert len(FULL_NAMES) == 8


def test_keyword_tagger_melting_point_is_thermal():
    tagged = tag_sentence(sent("Gold has a melting point of 1064 °C."), KeywordTagger())
    assert tagged.tag is AttributeTag.THERM
    assert tagged.source == "fallback"


def test_keyword_tagger_abundant_is_abundance():
    tagged = tag_sentence(
        sent("Helium is the second most abundant element in the universe."), KeywordTagger()
    )
    assert tagged.tag is AttributeTag.ABND


def test_keyword_tagger_default_is_chem():
    tagged = tag_sentence(sent("Nothing notable here whatsoever."), KeywordTagger())
    assert tagged.tag is AttributeTag.CHEM


def test_keyword_tagger_priority_order():
    # "density" (MECH) outranks "react" (CHEM) by priority.
    tagger = KeywordTagger()
    assert tagger.tag("The density rises when it reacts.") is AttributeTag.MECH


def test_keyword_tagger_stem_matches_at_word_boundary():
    tagger = KeywordTagger()
    # "ore" must not fire inside "more"; "abundan" matches "abundant".
    assert tagger.tag("There is more to say.") is AttributeTag.CHEM
    assert tagger.tag("Rich ores are mined.") is AttributeTag.ABND


def test_keyword_tagger_deterministic():
    tagger = KeywordTagger()
    text = "Its thermal conductivity and electrical resistivity are both notable."
    assert all(tagger.tag(text) == tagger.tag(text) for _ in range(5))


class _StubClient:
    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, prompt, text):
        self.calls += 1
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def test_remote_tagger_parses_reply():
    tagger = RemoteTagger(_StubClient(["THERM"]))
    assert tag_sentence(sent("It melts."), tagger).tag is AttributeTag.THERM


def test_remote_tagger_accepts_full_name():
    tagger = RemoteTagger(_StubClient(["This is about Thermal properties."]))
    tagged = tag_sentence(sent("It melts."), tagger)
    assert tagged.tag is AttributeTag.THERM
    assert tagged.source == "llm"


def test_remote_tagger_retries_then_falls_back():
    client = _StubClient(["no tag here", "still nothing"])
    tagged = tag_sentence(sent("Gold has a high melting point."), RemoteTagger(client))
    assert client.calls == 2
    assert tagged.source == "fallback"
    assert tagged.tag is AttributeTag.THERM


def test_remote_tagger_transport_failure_falls_back():
    client = _StubClient([RemoteServiceError("boom", retriable=True)])
    tagged = tag_sentence(sent("The crust holds rich ores."), RemoteTagger(client))
    assert tagged.source == "fallback"
    assert tagged.tag is AttributeTag.ABND


def test_parse_tag_reply_earliest_occurrence_wins():
    assert parse_tag_reply("OPT, maybe MECH") is AttributeTag.OPT
    assert parse_tag_reply("mech") is AttributeTag.MECH
    assert parse_tag_reply("chemistry is not a token") is None
    assert parse_tag_reply("") is None


def test_tag_sentences_preserves_order():
    sentences = [sent("It melts at 300 K.", 0), sent("Ores are mined.", 1), sent("Plain.", 2)]
    tagged = tag_sentences(sentences, KeywordTagger())
    assert [t.sentence.index for t in tagged] == [0, 1, 2]
    assert [t.tag for t in tagged] == [AttributeTag.THERM, AttributeTag.ABND, AttributeTag.CHEM]


def test_build_attribute_subsets_preserves_page_order():
    tagged = tag_sentences(
        [sent("s0 melts now.", 0), sent("s1 plain text.", 1), sent("s2 boiling starts.", 2)],
        KeywordTagger(),
    )
    subsets = build_attribute_subsets(tagged)
    assert subsets[AttributeTag.THERM] == "s0 melts now. s2 boiling starts."
    assert subsets[AttributeTag.CHEM] == "s1 plain text."
    assert sum(1 for text in subsets.values() if text) == 2
    assert len(subsets) == 8


def test_subsets_partition_sentences():
    record = next(r for r in load_corpus(FIXTURE) if r.symbol == "He")
    tagged = tag_sentences(record.sentences, KeywordTagger())
    subsets = build_attribute_subsets(tagged)
    total_words = sum(len(text.split()) for text in subsets.values())
    assert total_words == sum(s.word_count for s in record.sentences)


def test_tag_totality_on_fixture():
    for record in load_corpus(FIXTURE):
        tagged = tag_sentences(record.sentences, KeywordTagger())
        assert len(tagged) == record.sentence_count
        assert all(t.tag in AttributeTag for t in tagged)


def test_summarize_thousand_word_page_within_band():
    # 100 sentences of 10 words each.
    page = " ".join(
        f"Sentence number {i} fills exactly ten words of page text." for i in range(100)
    )
    summary = summarize(page, 0.05)
    assert summary.target_words(1000) == 50
    assert 35 <= summary.word_count <= 65
    assert summary.within_band(1000)


def test_summarize_is_leading_extract():
    page = "First point made here. Second point follows now. Third point closes it."
    summary = summarize(page, 0.5)
    assert summary.text.startswith("First point made here.")
    assert summary.word_count < len(page.split())


def test_summarize_ratio_out_of_range():
    with pytest.raises(E2vError):
        summarize("Some text here.", 1.5)
    with pytest.raises(E2vError):
        summarize("Some text here.", 0.0)


def test_summarize_remote_failure_falls_back():
    class FailingSummarizer:
        source = "llm"

        def summarize(self, page_text, budget, ratio):
            raise RemoteServiceError("down", retriable=True)

    page = "Alpha one two three. Beta four five six. Gamma seven eight nine."
    summary = summarize(page, 0.3, FailingSummarizer())
    assert summary.text.startswith("Alpha")


def test_summarize_fixture_shorter_than_page():
    record = next(r for r in load_corpus(FIXTURE) if r.symbol == "He")
    page_words = len(collapse_whitespace(record.page_text).split())
    summary = summarize(record.page_text, 0.2, element_symbol="He")
    assert summary.word_count < page_words


def test_compose_local_input_front_and_end():
    summary = Summary(element_symbol="He", ratio=0.05, text="S", word_count=1)
    assert compose_local_input("A", summary, "front") == "S\n\nA"
    assert compose_local_input("A", summary, "end") == "A\n\nS"
    assert compose_local_input("", summary, "front") == "S\n\n"


def test_compose_placement_asymmetry():
    summary = Summary(element_symbol="He", ratio=0.05, text="S", word_count=1)
    assert compose_local_input("A", summary, "front") != compose_local_input("A", summary, "end")


@settings(max_examples=100)
@given(
    st.text(alphabet=st.characters(whitelist_categories=("Ll", "Zs")), min_size=1).filter(
        lambda t: t.strip()
    ),
    st.text(alphabet=st.characters(whitelist_categories=("Ll", "Zs")), min_size=1).filter(
        lambda t: t.strip()
    ),
)
def test_compose_differs_unless_equal(attribute_text, summary_text):
    summary = Summary("X", 0.05, summary_text, len(summary_text.split()))
    front = compose_local_input(attribute_text, summary, "front")
    end = compose_local_input(attribute_text, summary, "end")
    if attribute_text != summary_text:
        assert front != end


def test_prompt_set_validation():
    with pytest.raises(E2vError, match="missing"):
        PromptSet(classify_prompt="pick MECH or OPT", summarize_prompt="shrink to {ratio}")
    with pytest.raises(E2vError, match="ratio"):
        PromptSet(classify_prompt=DEFAULT_PROMPTS.classify_prompt, summarize_prompt="no slot")
    assert "{ratio}" in DEFAULT_PROMPTS.summarize_prompt


def test_annotations_roundtrip(tmp_path):
    record = next(r for r in load_corpus(FIXTURE) if r.symbol == "C")
    tagged = tag_sentences(record.sentences, KeywordTagger())
    path = write_annotations(tmp_path, "C", tagged)
    loaded = read_annotations(path)
    assert [(t.sentence.index, t.tag, t.source) for t in loaded] == [
        (t.sentence.index, t.tag, t.source) for t in tagged
    ]
    counts = Counter(t.tag for t in loaded)
    assert sum(counts.values()) == record.sentence_count
