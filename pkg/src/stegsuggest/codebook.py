"""Shared steganographic codebook: 10-bit chunks to words and back.

A book holds four groups of 1024 words. Word ``k`` of group ``g`` (counting
in popularity order) carries the value ``perm_g[k]`` where ``perm_0..perm_3``
are chained keyed permutations from :func:`stegsuggest.kernels.keyed_permutation`,
all drawn from one SplitMix64 stream seeded with the channel key.

File format (UTF-8 text)::

    # stegsuggest-codebook v1 fingerprint=<16 hex> digest=<name>
    <group>\\t<value>\\t<word>      (4096 lines, any order)

Word-list input format: ``rank\\tword\\tpos`` per line.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import kernels
from .errors import (
    DuplicateRank,
    InsufficientWords,
    IoFailure,
    KeyMismatch,
    MalformedFile,
    UnknownWord,
)

GROUPS = 4
GROUP_SIZE = 1024
CHUNK_BITS = 10
BOOK_SIZE = GROUPS * GROUP_SIZE

POS_TAGS = ("noun", "verb", "adjective", "adverb", "quantifier", "other")
_HEADER = "# stegsuggest-codebook v1"
_FORBIDDEN = set('"\\')


@dataclass(frozen=True)
class WordEntry:
    word: str
    pos: str
    rank: int

    def __post_init__(self):
        if not self.word or any(c.isspace() for c in self.word):
            raise ValueError(f"invalid word {self.word!r}")
        if _FORBIDDEN & set(self.word):
            raise ValueError(f"word may not contain quotes or backslashes: {self.word!r}")
        if self.pos not in POS_TAGS:
            raise ValueError(f"unknown part of speech {self.pos!r}")


@dataclass(frozen=True)
class ChannelKey:
    """64-bit shared secret."""

    hck: int

    def __post_init__(self):
        if not 0 <= self.hck < 1 << 64:
            raise ValueError("channel key must fit in 64 bits")

    def __int__(self) -> int:
        return self.hck

    @classmethod
    def parse(cls, text: str) -> "ChannelKey":
        return cls(int(text, 0))

    def fingerprint(self) -> str:
        return hashlib.sha256(b"stegsuggest-codebook:" + self.hck.to_bytes(8, "big")).hexdigest()[:16]


def _as_key(key: ChannelKey | int) -> ChannelKey:
    return key if isinstance(key, ChannelKey) else ChannelKey(int(key))


@dataclass(frozen=True)
class Codebook:
    """Four bijections between words and 10-bit values.

    ``groups[g][v]`` is the word carrying value ``v`` in group ``g``.
    """

    groups: tuple[tuple[str, ...], ...]
    key_fingerprint: str
    digest: str = "sha1"
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.groups) != GROUPS or any(len(g) != GROUP_SIZE for g in self.groups):
            raise MalformedFile("codebook must hold 4 groups of 1024 words")
        index = {}
        for g, words in enumerate(self.groups):
            for v, w in enumerate(words):
                if w in index:
                    raise MalformedFile(f"word {w!r} appears twice")
                index[w] = (v, g)
        object.__setattr__(self, "_index", index)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._index)

    def words(self) -> frozenset[str]:
        return frozenset(self._index)


def build_codebook(words: Sequence[WordEntry], key: ChannelKey | int, digest: str = "sha1") -> Codebook:
    """Filter a ranked word list and deal it into a keyed four-group book."""
    key = _as_key(key)
    ranks = Counter(e.rank for e in words)
    dup = [r for r, n in ranks.items() if n > 1]
    if dup:
        raise DuplicateRank(f"rank {min(dup)} used more than once")
    spellings = Counter(e.word for e in words)
    survivors = [e for e in words if e.pos != "other" and spellings[e.word] == 1]
    if len(survivors) < BOOK_SIZE:
        raise InsufficientWords(f"{len(survivors)} words survive filtering, need {BOOK_SIZE}")
    survivors.sort(key=lambda e: e.rank)
    kept = survivors[:BOOK_SIZE]

    groups = []
    counter = 0
    for g in range(GROUPS):
        members = kept[g::GROUPS]
        perm, counter = kernels.keyed_permutation(key.hck, GROUP_SIZE, counter)
        table = [""] * GROUP_SIZE
        for pos, entry in enumerate(members):
            table[perm[pos]] = entry.word
        groups.append(tuple(table))
    return Codebook(tuple(groups), key.fingerprint(), digest)


def encode_chunk(cb: Codebook, value: int, rng: random.Random, group: int | None = None) -> str:
    """Word for a 10-bit value from a uniformly drawn (or forced) group."""
    if not 0 <= value < GROUP_SIZE:
        raise ValueError(f"chunk value out of range: {value}")
    g = rng.randrange(GROUPS) if group is None else group
    return cb.groups[g][value]


def decode_word(cb: Codebook, word: str) -> tuple[int, int]:
    """Return ``(value, group)`` for a codebook word."""
    try:
        return cb._index[word]
    except KeyError:
        raise UnknownWord(word) from None


def save_codebook(cb: Codebook, path: str | Path) -> None:
    lines = [f"{_HEADER} fingerprint={cb.key_fingerprint} digest={cb.digest}"]
    for g, words in enumerate(cb.groups):
        lines.extend(f"{g}\t{v}\t{w}" for v, w in enumerate(words))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_codebook(path: str | Path, key: ChannelKey | int | None) -> Codebook:
    """Read a saved book; ``key=None`` skips the fingerprint check (inspection only)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER):
        raise MalformedFile("missing codebook header")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(_HEADER):].split() if "=" in tok)
    if "fingerprint" not in meta:
        raise MalformedFile("header lacks fingerprint")
    if key is not None and meta["fingerprint"] != _as_key(key).fingerprint():
        raise KeyMismatch("codebook was built with a different channel key")
    groups = [[None] * GROUP_SIZE for _ in range(GROUPS)]
    count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            g, v, w = int(parts[0]), int(parts[1]), parts[2]
            if len(parts) != 3 or not w:
                raise ValueError
            if groups[g][v] is not None:
                raise MalformedFile(f"line {lineno}: slot ({g}, {v}) filled twice")
            groups[g][v] = w
        except (ValueError, IndexError):
            raise MalformedFile(f"line {lineno}: bad record {line!r}") from None
        count += 1
    if count != BOOK_SIZE:
        raise MalformedFile(f"expected {BOOK_SIZE} records, found {count}")
    return Codebook(tuple(tuple(g) for g in groups), meta["fingerprint"], meta.get("digest", "sha1"))


def read_wordlist(path: str | Path) -> list[WordEntry]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        try:
            out.append(WordEntry(parts[1], parts[2].strip(), int(parts[0])))
        except (ValueError, IndexError) as exc:
            raise MalformedFile(f"line {lineno}: {exc}") from None
    return out


def write_wordlist(entries: Iterable[WordEntry], path: str | Path) -> None:
    Path(path).write_text("".join(f"{e.rank}\t{e.word}\t{e.pos}\n" for e in entries), encoding="utf-8")


# Synthetic stand-in for a licensed frequency dictionary: same size and
# part-of-speech mix, with homographs that thin it to exactly 4220 usable words.
_POS_MIX = (("noun", 2542), ("verb", 1001), ("adjective", 839), ("adverb", 340), ("quantifier", 35))
_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def synthetic_wordlist(seed: int = 2011, total: int = 5000) -> list[WordEntry]:
    """Pronounceable pseudo-words shaped like a 5000-entry frequency list.

    With the default size, filtering keeps 4757 content words, homograph
    removal leaves 4220 and the book keeps the top 4096.
    """
    rng = random.Random(seed)
    content = [pos for pos, n in _POS_MIX for _ in range(n)]
    pos_list = content + ["other"] * (total - len(content))
    # 267 spelling pairs plus one triple among content words: 537 entries removed
    pairs, triples = 267, 1
    distinct_needed = total - (pairs + 2 * triples)
    spellings: list[str] = []
    seen = set()
    while len(spellings) < distinct_needed:
        n_syll = rng.choice((2, 2, 3))
        w = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n_syll))
        if w not in seen:
            seen.add(w)
            spellings.append(w)
    content_idx = list(range(len(content)))
    rng.shuffle(content_idx)
    words = [""] * total
    cursor = 0
    pos_iter = iter(content_idx)
    for _ in range(pairs):
        w = spellings[cursor]
        cursor += 1
        words[next(pos_iter)] = w
        words[next(pos_iter)] = w
    for _ in range(triples):
        w = spellings[cursor]
        cursor += 1
        for _ in range(3):
            words[next(pos_iter)] = w
    for i in range(total):
        if not words[i]:
            words[i] = spellings[cursor]
            cursor += 1
    ranks = list(range(1, total + 1))
    rng.shuffle(ranks)
    entries = [WordEntry(w, p, r) for w, p, r in zip(words, pos_list, ranks)]
    entries.sort(key=lambda e: e.rank)
    return entries
