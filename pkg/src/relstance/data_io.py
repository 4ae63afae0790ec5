"""Readers and writers for interaction edge lists, tweet corpora, word vectors
and embedding files.

All tabular formats are UTF-8 TSV. Lines starting with ``#`` are comments and
blank lines are skipped everywhere.
"""
from __future__ import annotations

import enum
import io
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, NamedTuple, TextIO

import numpy as np

if TYPE_CHECKING:
    from .relemb import RelationalEmbedding


class Kind(str, enum.Enum):
    RETWEET = "RETWEET"
    FRIEND = "FRIEND"


class Stance(str, enum.Enum):
    """Stance labels, declared in tie-break order (AGAINST < FAVOR < NONE)."""

    AGAINST = "AGAINST"
    FAVOR = "FAVOR"
    NONE = "NONE"


class Split(str, enum.Enum):
    TRAIN = "TRAIN"
    TEST = "TEST"


STANCES: tuple[Stance, ...] = (Stance.AGAINST, Stance.FAVOR, Stance.NONE)

# datasets use both names for the third class
_STANCE_ALIASES = {"NEUTRAL": Stance.NONE}


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def parse_stance(token: str) -> Stance:
    key = token.strip().upper()
    if key in _STANCE_ALIASES:
        return _STANCE_ALIASES[key]
    return Stance(key)


def parse_kind(token: str) -> Kind:
    return Kind(token.strip().upper())


def _lines(stream: str | Iterable[str]) -> Iterator[tuple[int, str]]:
    """Yield ``(lineno, line)`` for non-blank, non-comment lines."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


# --------------------------------------------------------------------------
# interaction pairs


class InteractionPair(NamedTuple):
    source: str
    target: str
    kind: Kind = Kind.RETWEET


@dataclass
class InteractionSet:
    """Ordered multiset of interaction pairs.

    Duplicates are kept: repeated retweets of the same account are separate
    training instances. ``errors`` is only populated by lenient parsing.
    """

    pairs: list[InteractionPair] = field(default_factory=list)
    errors: list[ParseError] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[InteractionPair]:
        return iter(self.pairs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return self.pairs == other.pairs

    @property
    def counts(self) -> dict[Kind, int]:
        c = Counter(p.kind for p in self.pairs)
        return {k: c.get(k, 0) for k in Kind}

    def users(self) -> set[str]:
        return {u for p in self.pairs for u in (p.source, p.target)}

    def add(self, source: str, target: str, kind: Kind = Kind.RETWEET) -> None:
        self.pairs.append(InteractionPair(source, target, Kind(kind)))


def parse_edges(stream: str | Iterable[str], kind_default: Kind = Kind.RETWEET,
                strict: bool = True) -> InteractionSet:
    """Parse ``source<TAB>target[<TAB>kind]`` lines.

    With ``strict=False`` malformed lines are collected in ``result.errors``
    instead of raising, so that accepted + rejected always accounts for every
    data line.
    """
    kind_default = Kind(kind_default)
    result = InteractionSet()
    for lineno, line in _lines(stream):
        try:
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise ParseError(f"expected 2 or 3 tab-separated columns, got {len(cols)}", lineno)
            source, target = cols[0], cols[1]
            if not source or not target:
                raise ParseError("empty user id", lineno)
            kind = kind_default
            if len(cols) == 3:
                try:
                    kind = parse_kind(cols[2])
                except ValueError:
                    raise ParseError(f"unknown interaction kind {cols[2]!r}", lineno) from None
        except ParseError as err:
            if strict:
                raise
            result.errors.append(err)
            continue
        result.pairs.append(InteractionPair(source, target, kind))
    return result


def serialize_edges(pairs: InteractionSet, stream: TextIO) -> None:
    for p in pairs:
        stream.write(f"{p.source}\t{p.target}\t{p.kind.value}\n")


# --------------------------------------------------------------------------
# labeled tweets

TWEET_HEADER = ("id", "user", "text", "label", "split")

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\\\": "\\", "\\t": "\t", "\\n": "\n", "\\r": "\r"}
_ESCAPE_RE = re.compile(r"[\\\t\n\r]")
_UNESCAPE_RE = re.compile(r"\\[\\tnr]")


def escape_text(text: str) -> str:
    return _ESCAPE_RE.sub(lambda m: _ESCAPES[m.group()], text)


def unescape_text(text: str) -> str:
    return _UNESCAPE_RE.sub(lambda m: _UNESCAPES[m.group()], text)


@dataclass(frozen=True)
class LabeledTweet:
    tweet_id: str
    author: str
    text: str
    stance: Stance
    split: Split = Split.TRAIN


@dataclass
class TweetDataset:
    records: list[LabeledTweet] = field(default_factory=list)

    def __post_init__(self):
        seen: set[str] = set()
        for r in self.records:
            if r.tweet_id in seen:
                raise ValueError(f"duplicate tweet id {r.tweet_id!r}")
            seen.add(r.tweet_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LabeledTweet]:
        return iter(self.records)

    @property
    def label_histogram(self) -> dict[Split, dict[Stance, int]]:
        hist: dict[Split, dict[Stance, int]] = {}
        for r in self.records:
            per = hist.setdefault(r.split, {})
            per[r.stance] = per.get(r.stance, 0) + 1
        return hist

    def split(self, which: Split) -> list[LabeledTweet]:
        return [r for r in self.records if r.split == which]

    @property
    def train(self) -> list[LabeledTweet]:
        return self.split(Split.TRAIN)

    @property
    def test(self) -> list[LabeledTweet]:
        return self.split(Split.TEST)

    def authors(self, which: Split | None = None) -> set[str]:
        return {r.author for r in self.records if which is None or r.split == which}


def parse_tweets(stream: str | Iterable[str]) -> TweetDataset:
    lines = _lines(stream)
    header = next(lines, None)
    if header is None:
        return TweetDataset()
    lineno, line = header
    if tuple(c.strip().lower() for c in line.split("\t")) != TWEET_HEADER:
        raise ParseError("expected header " + "\\t".join(TWEET_HEADER), lineno)

    records: list[LabeledTweet] = []
    seen: dict[str, int] = {}
    for lineno, line in lines:
        cols = line.split("\t")
        if len(cols) != 5:
            raise ParseError(f"expected 5 tab-separated columns, got {len(cols)}", lineno)
        tid, user, text, label, split = cols
        if not tid or not user:
            raise ParseError("empty tweet id or user id", lineno)
        if tid in seen:
            raise ParseError(f"duplicate tweet id {tid!r} (first seen on line {seen[tid]})", lineno)
        seen[tid] = lineno
        try:
            stance = parse_stance(label)
        except ValueError:
            raise ParseError(f"unknown label {label!r}", lineno) from None
        try:
            which = Split(split.strip().upper())
        except ValueError:
            raise ParseError(f"unknown split {split!r}", lineno) from None
        records.append(LabeledTweet(tid, user, unescape_text(text), stance, which))
    return TweetDataset(records)


def write_tweets(dataset: TweetDataset | Iterable[LabeledTweet], stream: TextIO) -> None:
    stream.write("\t".join(TWEET_HEADER) + "\n")
    for r in dataset:
        stream.write(f"{r.tweet_id}\t{r.author}\t{escape_text(r.text)}\t"
                     f"{r.stance.value}\t{r.split.value}\n")


# --------------------------------------------------------------------------
# word vectors


@dataclass
class WordVectorTable:
    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("word vector dimension must be positive")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def get(self, word: str) -> np.ndarray | None:
        return self.entries.get(word)


def _floats(tokens: list[str], what: str, lineno: int) -> np.ndarray:
    try:
        vec = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError:
        raise ParseError(f"non-numeric component in vector for {what!r}", lineno) from None
    if not np.all(np.isfinite(vec)):
        raise ParseError(f"non-finite component in vector for {what!r}", lineno)
    return vec


def load_word_vectors(stream: str | Iterable[str]) -> WordVectorTable:
    """Read the textual word-vector layout: optional ``<count> <dim>`` header,
    then ``word v1 ... vdim`` per line. Later duplicates overwrite earlier ones."""
    dim: int | None = None
    entries: dict[str, np.ndarray] = {}
    first = True
    for lineno, line in _lines(stream):
        parts = line.split()
        if first:
            first = False
            if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                dim = int(parts[1])
                if dim <= 0:
                    raise ParseError("header dimension must be positive", lineno)
                continue
        word, comps = parts[0], parts[1:]
        if dim is None:
            if not comps:
                raise ParseError(f"no vector components for {word!r}", lineno)
            dim = len(comps)
        if len(comps) != dim:
            raise ParseError(f"vector for {word!r} has {len(comps)} components, expected {dim}", lineno)
        entries[word] = _floats(comps, word, lineno)
    if dim is None:
        raise ParseError("empty word-vector file: dimension unknown")
    return WordVectorTable(dim, entries)


def write_word_vectors(table: WordVectorTable, stream: TextIO) -> None:
    stream.write(f"{len(table.entries)} {table.dim}\n")
    for word, vec in table.entries.items():
        stream.write(word + " " + " ".join(f"{v:.9g}" for v in vec) + "\n")


# --------------------------------------------------------------------------
# relational embeddings


def write_embedding(emb: RelationalEmbedding, stream: TextIO) -> None:
    """Write ``U D`` then one ``user v1 ... vD`` line per user, rows in index
    order, values at 9 significant digits (exact round trip for |v| < 10
    within 1e-8)."""
    vectors = emb.vectors
    stream.write(f"{vectors.shape[0]} {emb.dim}\n")
    for user, row in zip(emb.users, vectors):
        stream.write(user + " " + " ".join(f"{v:.9g}" for v in row) + "\n")


def read_embedding(stream: str | Iterable[str]) -> RelationalEmbedding:
    from .relemb import RelationalEmbedding

    lines = _lines(stream)
    header = next(lines, None)
    if header is None:
        raise ParseError("empty embedding file")
    lineno, line = header
    parts = line.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ParseError("expected header 'U D'", lineno)
    n_users, dim = int(parts[0]), int(parts[1])
    if dim < 1:
        raise ParseError("embedding dimension must be positive", lineno)

    users: list[str] = []
    rows: list[np.ndarray] = []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != dim + 1:
            raise ParseError(f"expected user id and {dim} values, got {len(parts)} fields", lineno)
        users.append(parts[0])
        rows.append(_floats(parts[1:], parts[0], lineno))
    if len(users) != n_users:
        raise ParseError(f"header declares {n_users} users but {len(users)} rows follow")
    vectors = np.vstack(rows) if rows else np.zeros((0, dim))
    return RelationalEmbedding(users, vectors)
