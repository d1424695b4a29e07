"""Per-element text corpora: loading, fetching, and sentence segmentation.

A corpus directory holds one UTF-8 text file per element plus a
``manifest.csv`` mapping symbols to identity and family labels.  Sentence
segmentation is rule-based (terminator plus abbreviation guard) so that
identical input bytes produce identical records on every platform.
"""

from __future__ import annotations

import csv
import importlib.resources
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import requests

from .errors import CorpusError, RemoteServiceError

FAMILIES = (
    "alkali metal",
    "alkaline earth metal",
    "transition metal",
    "lanthanide",
    "actinide",
    "post-transition metal",
    "metalloid",
    "reactive nonmetal",
    "halogen",
    "noble gas",
)

# Trailing strings that keep a terminator from ending a sentence, matched
# case-sensitively against the text immediately before {. ! ?}.
DEFAULT_ABBREVIATIONS = ("e.g", "i.e", "et al", "approx", "Fig", "No")

_TERMINATORS = frozenset(".!?")


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    word_count: int

    def __post_init__(self) -> None:
        if not self.text or self.text != self.text.strip():
            raise CorpusError(f"sentence {self.index} has leading/trailing whitespace or is empty")
        if self.word_count < 1:
            raise CorpusError(f"sentence {self.index} has no words")


@dataclass(frozen=True)
class ElementRecord:
    symbol: str
    atomic_number: int
    name: str
    family: str
    page_text: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.atomic_number <= 118:
            raise CorpusError(f"{self.symbol}: atomic number {self.atomic_number} outside 1..118")
        if self.family not in FAMILIES:
            raise CorpusError(f"{self.symbol}: unknown family {self.family!r}")

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)


def collapse_whitespace(text: str) -> str:
    """Collapse every whitespace run to a single space and strip the ends."""
    return " ".join(text.split())


def _is_guarded(text: str, pos: int, abbreviations: tuple[str, ...]) -> bool:
    """True when the terminator at ``pos`` must not end a sentence."""
    before = text[:pos]
    # Initials: a lone capital letter right before the terminator ("J. Smith").
    if before and before[-1].isupper() and (len(before) == 1 or not before[-2].isalnum()):
        return True
    for abbr in abbreviations:
        if before.endswith(abbr):
            head = before[: -len(abbr)]
            if not head or not head[-1].isalnum():
                return True
    return False


def segment_sentences(
    page_text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> tuple[Sentence, ...]:
    """Split page text into ordered sentences.

    A sentence ends at one of ``. ! ?`` followed by whitespace and an
    uppercase letter or digit, unless the terminator trails a known
    abbreviation or a single-letter initial.  Whitespace runs inside
    sentences are collapsed to single spaces, so joining the results with
    one space reconstructs the collapsed page text.
    """
    collapsed = collapse_whitespace(page_text)
    if not collapsed:
        raise CorpusError("empty corpus")

    separators = []
    for i, ch in enumerate(collapsed):
        if ch not in _TERMINATORS or i + 2 > len(collapsed) - 1:
            continue
        if collapsed[i + 1] != " ":
            continue
        nxt = collapsed[i + 2]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if _is_guarded(collapsed, i, abbreviations):
            continue
        separators.append(i + 1)

    starts = [0] + [sep + 1 for sep in separators]
    ends = separators + [len(collapsed)]
    sentences = []
    for idx, (a, b) in enumerate(zip(starts, ends)):
        piece = collapsed[a:b]
        sentences.append(Sentence(index=idx, text=piece, word_count=len(piece.split())))
    return tuple(sentences)


def join_sentences(sentences: tuple[Sentence, ...] | list[Sentence]) -> str:
    return " ".join(s.text for s in sentences)


@dataclass(frozen=True)
class ManifestEntry:
    symbol: str
    atomic_number: int
    name: str
    family: str


def read_manifest(path: str | Path) -> tuple[ManifestEntry, ...]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen_symbols: set[str] = set()
    seen_numbers: set[int] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["symbol", "atomic_number", "name", "family"]
        if reader.fieldnames != expected:
            raise CorpusError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            symbol = row["symbol"].strip()
            if symbol in seen_symbols:
                raise CorpusError(f"{path}: duplicate symbol {symbol!r}")
            seen_symbols.add(symbol)
            try:
                number = int(row["atomic_number"])
            except ValueError:
                raise CorpusError(f"{path}: bad atomic number for {symbol!r}") from None
            if number in seen_numbers:
                raise CorpusError(f"{path}: duplicate atomic number {number}")
            seen_numbers.add(number)
            entries.append(
                ManifestEntry(
                    symbol=symbol,
                    atomic_number=number,
                    name=row["name"].strip(),
                    family=row["family"].strip(),
                )
            )
    return tuple(entries)


def load_corpus(
    dir_path: str | Path, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> list[ElementRecord]:
    """Load every manifest entry from ``dir_path``, sorted by atomic number."""
    dir_path = Path(dir_path)
    records = []
    for entry in read_manifest(dir_path / "manifest.csv"):
        text_path = dir_path / f"{entry.symbol}.txt"
        if not text_path.exists():
            raise CorpusError(f"no text file for manifest symbol {entry.symbol!r}: {text_path}")
        raw = text_path.read_bytes()
        try:
            page_text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{text_path}: undecodable bytes at offset {exc.start}") from exc
        records.append(
            ElementRecord(
                symbol=entry.symbol,
                atomic_number=entry.atomic_number,
                name=entry.name,
                family=entry.family,
                page_text=page_text,
                sentences=segment_sentences(page_text, abbreviations),
            )
        )
    return sorted(records, key=lambda r: r.atomic_number)


@lru_cache(maxsize=1)
def canonical_elements() -> tuple[ManifestEntry, ...]:
    """All 118 elements with their canonical family labels (shipped data file)."""
    ref = importlib.resources.files("e2v.data") / "elements.csv"
    entries = []
    with ref.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            entries.append(
                ManifestEntry(
                    symbol=row["symbol"],
                    atomic_number=int(row["atomic_number"]),
                    name=row["name"],
                    family=row["family"],
                )
            )
    return tuple(sorted(entries, key=lambda e: e.atomic_number))


def atomic_number_of(symbol: str) -> int:
    for entry in canonical_elements():
        if entry.symbol == symbol:
            return entry.atomic_number
    raise CorpusError(f"unknown element symbol {symbol!r}")


def element_name_of(symbol: str) -> str:
    for entry in canonical_elements():
        if entry.symbol == symbol:
            return entry.name
    raise CorpusError(f"unknown element symbol {symbol!r}")


def fetch_page(
    symbol: str,
    url_template: str,
    name: str | None = None,
    timeout: float = 30.0,
) -> str:
    """Fetch one element page as plain text.

    ``url_template`` must contain a ``{name}`` placeholder; the element name
    defaults to the canonical one for ``symbol``.  Non-success statuses raise
    a retriable :class:`RemoteServiceError`; an empty body is a hard error.
    """
    if "{name}" not in url_template:
        raise CorpusError("url_template must contain a {name} placeholder")
    url = url_template.format(name=name if name is not None else element_name_of(symbol))
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise RemoteServiceError(f"fetch failed for {symbol}: {exc}", retriable=True) from exc
    if not resp.ok:
        raise RemoteServiceError(
            f"fetch for {symbol} returned status {resp.status_code}",
            status=resp.status_code,
            retriable=True,
        )
    if not resp.content:
        raise CorpusError(f"fetched empty body for {symbol}")
    return resp.text


def fetch_corpus(
    entries: tuple[ManifestEntry, ...] | list[ManifestEntry],
    url_template: str,
    workers: int = 4,
    retries: int = 3,
    backoff: float = 0.5,
) -> dict[str, str]:
    """Fetch pages for many elements with bounded concurrency.

    Retriable failures back off exponentially; there is at most one in-flight
    request per symbol by construction (one task per entry).
    """

    def fetch_one(entry: ManifestEntry) -> tuple[str, str]:
        for attempt in range(retries + 1):
            try:
                return entry.symbol, fetch_page(entry.symbol, url_template, name=entry.name)
            except RemoteServiceError as exc:
                if not exc.retriable or attempt == retries:
                    raise
                time.sleep(backoff * 2**attempt)
        raise AssertionError("unreachable")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = dict(pool.map(fetch_one, entries))
    return results
