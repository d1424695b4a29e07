"""Sentence attribute tagging and ratio-controlled page summaries.

A remote LLM endpoint can do the real tagging and summarizing; a keyword
tagger and an extractive summarizer stand in offline so that every
downstream stage stays deterministic and testable.  Eight attribute
categories partition each element's sentences, and each attribute text is
later composed with a page summary before embedding.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Protocol

from .corpus import Sentence, collapse_whitespace, segment_sentences
from .errors import E2vError, RemoteServiceError
from .remote import LlmClient


class AttributeTag(str, Enum):
    MECH = "MECH"
    OPT = "OPT"
    EM = "EM"
    THERM = "THERM"
    CHEM = "CHEM"
    ARF = "ARF"
    APPL = "APPL"
    ABND = "ABND"


# Declaration order doubles as the fallback-tagger priority order and the
# aggregation order for concatenated local embeddings.
TAG_ORDER: tuple[AttributeTag, ...] = tuple(AttributeTag)

FULL_NAMES: dict[AttributeTag, str] = {
    AttributeTag.MECH: "Mechanical properties",
    AttributeTag.OPT: "Optical properties",
    AttributeTag.EM: "Electrical & Magnetic properties",
    AttributeTag.THERM: "Thermal properties",
    AttributeTag.CHEM: "Chemical properties",
    AttributeTag.ARF: "Atomic & radiational features",
    AttributeTag.APPL: "Applications",
    AttributeTag.ABND: "Abundance",
}

DEFAULT_TAG = AttributeTag.CHEM

STANDARD_RATIOS = (0.01, 0.05, 0.10, 0.20)


@dataclass(frozen=True)
class TaggedSentence:
    sentence: Sentence
    tag: AttributeTag
    source: str  # "llm" or "fallback"


@dataclass(frozen=True)
class Summary:
    element_symbol: str
    ratio: float
    text: str
    word_count: int

    def target_words(self, page_words: int) -> int:
        return _round_half_up(self.ratio * page_words)

    def within_band(self, page_words: int, tolerance: float = 0.30) -> bool:
        """Whether the length lands within the +-30% band around the target."""
        target = self.ratio * page_words
        return abs(self.word_count - target) <= tolerance * target


@dataclass(frozen=True)
class PromptSet:
    classify_prompt: str
    summarize_prompt: str

    def __post_init__(self) -> None:
        missing = [t.value for t in TAG_ORDER if t.value not in self.classify_prompt]
        if missing:
            raise E2vError(f"classify_prompt must list every tag; missing {missing}")
        if "{ratio}" not in self.summarize_prompt:
            raise E2vError("summarize_prompt must contain a {ratio} placeholder")


DEFAULT_PROMPTS = PromptSet(
    classify_prompt=(
        "Assign the sentence below to exactly one of these attribute categories "
        "of a chemical element and answer with the abbreviation only: "
        "MECH (Mechanical properties), OPT (Optical properties), "
        "EM (Electrical & Magnetic properties), THERM (Thermal properties), "
        "CHEM (Chemical properties), ARF (Atomic & radiational features), "
        "APPL (Applications), ABND (Abundance)."
    ),
    summarize_prompt=(
        "Summarize the following element description to about {ratio} of its "
        "original length, roughly {budget} words. Keep factual statements, "
        "drop anecdotes, and answer with the summary text only."
    ),
)


def _round_half_up(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


@lru_cache(maxsize=1)
def default_lexicon() -> tuple[tuple[AttributeTag, str], ...]:
    ref = importlib.resources.files("e2v.data") / "lexicon.csv"
    rows = []
    with ref.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append((AttributeTag(row["tag"]), row["stem"]))
    return tuple(rows)


class KeywordTagger:
    """Deterministic stand-in for the LLM tagger.

    Stems match at word boundaries as prefixes ("abundan" hits "abundant").
    The first tag in priority order with any matching stem wins; within that
    tag the longest matching stem is recorded.  Unmatched sentences default
    to CHEM.
    """

    source = "fallback"

    def __init__(self, lexicon: tuple[tuple[AttributeTag, str], ...] | None = None):
        entries = lexicon if lexicon is not None else default_lexicon()
        self._patterns: dict[AttributeTag, list[tuple[str, re.Pattern[str]]]] = {
            tag: [] for tag in TAG_ORDER
        }
        for tag, stem in entries:
            self._patterns[tag].append((stem, re.compile(r"\b" + re.escape(stem.lower()))))

    def tag(self, text: str) -> AttributeTag:
        tag, _ = self.tag_with_stem(text)
        return tag

    def tag_with_stem(self, text: str) -> tuple[AttributeTag, str | None]:
        lowered = collapse_whitespace(text).lower()
        for tag in TAG_ORDER:
            hits = [stem for stem, pat in self._patterns[tag] if pat.search(lowered)]
            if hits:
                return tag, max(hits, key=len)
        return DEFAULT_TAG, None


def parse_tag_reply(reply: str) -> AttributeTag | None:
    """Extract a tag from an LLM reply.

    The first case-insensitive occurrence of an abbreviation or full
    category name wins; at equal positions the longer match does.
    """
    lowered = reply.lower()
    best: tuple[int, int, AttributeTag] | None = None
    for tag in TAG_ORDER:
        for token in (tag.value, FULL_NAMES[tag]):
            m = re.search(r"\b" + re.escape(token.lower()) + r"\b", lowered)
            if m is None:
                continue
            key = (m.start(), -len(token), tag)
            if best is None or key < best:
                best = key
    return best[2] if best else None


class RemoteTagger:
    """LLM-backed tagger; unparseable replies are retried once."""

    source = "llm"

    def __init__(self, client: LlmClient, prompts: PromptSet = DEFAULT_PROMPTS):
        self.client = client
        self.prompts = prompts

    def tag(self, text: str) -> AttributeTag:
        for _ in range(2):
            reply = self.client.complete(self.prompts.classify_prompt, text)
            parsed = parse_tag_reply(reply)
            if parsed is not None:
                return parsed
        raise RemoteServiceError("LLM reply contained no attribute tag", retriable=False)


class Tagger(Protocol):
    source: str

    def tag(self, text: str) -> AttributeTag: ...


def tag_sentence(
    sentence: Sentence, tagger: Tagger, fallback: KeywordTagger | None = None
) -> TaggedSentence:
    """Tag one sentence, falling back to the keyword tagger on remote failure."""
    try:
        return TaggedSentence(sentence=sentence, tag=tagger.tag(sentence.text), source=tagger.source)
    except RemoteServiceError:
        keyword = fallback if fallback is not None else KeywordTagger()
        return TaggedSentence(sentence=sentence, tag=keyword.tag(sentence.text), source="fallback")


def tag_sentences(
    sentences: tuple[Sentence, ...] | list[Sentence],
    tagger: Tagger,
    concurrency: int = 4,
) -> list[TaggedSentence]:
    """Tag a sentence batch; results come back in sentence order."""
    fallback = KeywordTagger() if not isinstance(tagger, KeywordTagger) else tagger
    if isinstance(tagger, KeywordTagger) or concurrency <= 1:
        return [tag_sentence(s, tagger, fallback) for s in sentences]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(lambda s: tag_sentence(s, tagger, fallback), sentences))


def build_attribute_subsets(tagged: list[TaggedSentence]) -> dict[AttributeTag, str]:
    """Group sentences by tag, each subset in original page order."""
    ordered = sorted(tagged, key=lambda t: t.sentence.index)
    subsets: dict[AttributeTag, list[str]] = {tag: [] for tag in TAG_ORDER}
    for item in ordered:
        subsets[item.tag].append(item.sentence.text)
    return {tag: " ".join(parts) for tag, parts in subsets.items()}


class ExtractiveSummarizer:
    """Offline summarizer: leading sentences until the word budget is met."""

    source = "fallback"

    def summarize(self, page_text: str, budget: int, ratio: float) -> str:
        sentences = segment_sentences(page_text)
        taken: list[str] = []
        total = 0
        for sentence in sentences:
            if total >= budget:
                break
            taken.append(sentence.text)
            total += sentence.word_count
        return " ".join(taken)


class RemoteSummarizer:
    source = "llm"

    def __init__(self, client: LlmClient, prompts: PromptSet = DEFAULT_PROMPTS):
        self.client = client
        self.prompts = prompts

    def summarize(self, page_text: str, budget: int, ratio: float) -> str:
        prompt = self.prompts.summarize_prompt.format(ratio=ratio, budget=budget)
        return self.client.complete(prompt, page_text)


class Summarizer(Protocol):
    source: str

    def summarize(self, page_text: str, budget: int, ratio: float) -> str: ...


def summarize(
    page_text: str,
    ratio: float,
    summarizer: Summarizer | None = None,
    element_symbol: str = "",
) -> Summary:
    """Produce a summary targeting ``round(ratio * page words)`` words.

    Remote failures fall back to the extractive summarizer; a budget that
    rounds to zero is lifted to one word so the summary is never empty.
    """
    if not 0 < ratio < 1:
        raise E2vError(f"summary ratio must be in (0, 1), got {ratio}")
    page_words = len(collapse_whitespace(page_text).split())
    budget = max(1, _round_half_up(ratio * page_words))
    chosen = summarizer if summarizer is not None else ExtractiveSummarizer()
    try:
        text = chosen.summarize(page_text, budget, ratio)
    except RemoteServiceError:
        text = ExtractiveSummarizer().summarize(page_text, budget, ratio)
    text = collapse_whitespace(text)
    return Summary(
        element_symbol=element_symbol,
        ratio=ratio,
        text=text,
        word_count=len(text.split()),
    )


def compose_local_input(attribute_text: str, summary: Summary, placement: str) -> str:
    """Concatenate attribute text and summary with a blank-line separator."""
    if placement not in ("front", "end"):
        raise E2vError(f"placement must be 'front' or 'end', got {placement!r}")
    if not summary.text:
        raise E2vError("summary text must be non-empty")
    if placement == "front":
        return f"{summary.text}\n\n{attribute_text}"
    return f"{attribute_text}\n\n{summary.text}"


def format_ratio(ratio: float) -> str:
    return format(ratio, "g")


def write_annotations(out_dir: str | Path, symbol: str, tagged: list[TaggedSentence]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{symbol}.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in sorted(tagged, key=lambda t: t.sentence.index):
            fh.write(
                json.dumps(
                    {
                        "index": item.sentence.index,
                        "text": item.sentence.text,
                        "tag": item.tag.value,
                        "source": item.source,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def read_annotations(path: str | Path) -> list[TaggedSentence]:
    tagged = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            sentence = Sentence(
                index=row["index"], text=row["text"], word_count=len(row["text"].split())
            )
            tagged.append(
                TaggedSentence(sentence=sentence, tag=AttributeTag(row["tag"]), source=row["source"])
            )
    return tagged


def summary_filename(symbol: str, ratio: float) -> str:
    return f"{symbol}_{format_ratio(ratio)}.txt"
