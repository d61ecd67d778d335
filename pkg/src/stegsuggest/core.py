"""Pure functions of the covert scheme.

* Session identifiers: ``SSI = first 16 bits of H(isn || hck || ows)`` over
  4 + 8 + 1 big-endian bytes, ``ows = 15`` meaning "no WS option".
* WS marking of registration SYNs and its inversion.
* The three message formats written into suggestion lists.

Frame layouts (rows counted from 1, words appended at the end of the row;
lists are first padded to ten rows with bare-query fake rows):

===================  ==========================================================
RegistrationConfirm  rows 1-2: SSI padded to 20 bits, rows 3-4: second copy
Data / EndOfData     rows 1-10: ten 10-bit payload chunks, MSB first;
                     rows 2 and 5: one more word each, high/low half of the
                     20-bit sequence number (0 marks end of data)
Close                rows 1-4: native SSI twice, row 5: bits used in the
                     final data frame
===================  ==========================================================
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import kernels
from .codebook import CHUNK_BITS, Codebook, decode_word, encode_chunk
from .errors import (
    AmbiguousMatch,
    FormatMismatch,
    FrameInvalid,
    NoMatch,
    RowTooShort,
    SsiMismatch,
    UnknownWord,
)
from .wire import SuggestionList, append_word, strip_last_words

ROWS = 10
PAYLOAD_BITS = ROWS * CHUNK_BITS
SEQ_BITS = 20
# 0 is reserved; the counter is reset to 1 when it reaches 2**20
SEQ_MAX = (1 << SEQ_BITS) - 1
SEQ_HIGH_ROW = 1  # zero-based row indices
SEQ_LOW_ROW = 4
OWS_ABSENT = 15

ABSENT_BOTH = "AbsentBoth"
WS_ONLY = "WsOnly"
WS_AND_TS = "WsAndTs"

ADD_TS = "add-ts"
OVERWRITE_TSVAL = "overwrite-tsval"


def _check_ssi(ssi: int) -> int:
    if not 0 <= ssi <= 0xFFFF:
        raise FrameInvalid(f"SSI must be 16 bits, got {ssi}")
    return ssi


@dataclass(frozen=True)
class WsCase:
    case: str
    ows: int

    def __post_init__(self):
        if self.case == ABSENT_BOTH:
            if self.ows != OWS_ABSENT:
                raise ValueError("AbsentBoth requires ows=15")
        elif self.case in (WS_ONLY, WS_AND_TS):
            if not 0 <= self.ows <= 14:
                raise ValueError(f"ows out of range for {self.case}: {self.ows}")
        else:
            raise ValueError(f"unknown WS case {self.case!r}")

    @classmethod
    def of(cls, ws: int | None, ts_present: bool) -> "WsCase | None":
        """Classify a client SYN; ``None`` for the unsupported TS-without-WS shape."""
        if ws is None:
            return None if ts_present else cls(ABSENT_BOTH, OWS_ABSENT)
        return cls(WS_AND_TS if ts_present else WS_ONLY, ws)


_EMITTED = {ABSENT_BOTH: (1, ADD_TS), WS_ONLY: (2, ADD_TS), WS_AND_TS: (6, OVERWRITE_TSVAL)}
_CASE_BY_EMITTED = {1: ABSENT_BOTH, 2: WS_ONLY, 6: WS_AND_TS}


def compute_ssi(isn: int, hck: int, ows: int, digest: str = "sha1") -> int:
    return kernels.ssi_candidates(isn, int(hck), digest)[ows]


def choose_ws(original: WsCase) -> tuple[int, str]:
    return _EMITTED[original.case]


def embed_ssi_in_ts(ssi: int, rng: random.Random) -> int:
    return (rng.getrandbits(16) << 16) | _check_ssi(ssi)


def extract_ssi_from_ts(tsval: int) -> int:
    return tsval & 0xFFFF


def recover_original(emitted_ws: int | None, tsval: int, isn: int, hck: int, digest: str = "sha1") -> WsCase:
    """Find the original WS case of a marked SYN by trying every ows."""
    case = _CASE_BY_EMITTED.get(emitted_ws)
    if case is None:
        raise NoMatch(f"WS={emitted_ws} is not a registration marker")
    target = extract_ssi_from_ts(tsval)
    table = kernels.ssi_candidates(isn, int(hck), digest)
    candidates = (OWS_ABSENT,) if case == ABSENT_BOTH else range(15)
    hits = [ows for ows in candidates if table[ows] == target]
    if not hits:
        raise NoMatch("no original WS value reproduces the identifier")
    if len(hits) > 1:
        raise AmbiguousMatch(f"original WS values {hits} collide")
    return WsCase(case, hits[0])


# frames


@dataclass(frozen=True)
class RegistrationConfirm:
    ssi: int

    def __post_init__(self):
        _check_ssi(self.ssi)


@dataclass(frozen=True)
class Data:
    seq: int
    payload: int

    def __post_init__(self):
        if not 1 <= self.seq <= SEQ_MAX:
            raise FrameInvalid(f"data sequence number {self.seq} outside 1..{SEQ_MAX}")
        if not 0 <= self.payload < 1 << PAYLOAD_BITS:
            raise FrameInvalid("payload must be exactly 100 bits")

    @property
    def bits(self) -> str:
        return format(self.payload, f"0{PAYLOAD_BITS}b")


@dataclass(frozen=True)
class EndOfData:
    """Data-format list whose sequence number is 0; the payload is cover."""

    filler: int = 0

    def __post_init__(self):
        if not 0 <= self.filler < 1 << PAYLOAD_BITS:
            raise FrameInvalid("filler must be 100 bits")


@dataclass(frozen=True)
class Close:
    native_ssi: int
    last_bits: int

    def __post_init__(self):
        _check_ssi(self.native_ssi)
        if not 0 <= self.last_bits <= PAYLOAD_BITS:
            raise FrameInvalid(f"last_bits must lie in 0..{PAYLOAD_BITS}")


StegFrame = RegistrationConfirm | Data | EndOfData | Close


def next_seq(seq: int) -> int:
    return 1 if seq >= SEQ_MAX else seq + 1


def is_embeddable(slist: SuggestionList) -> bool:
    """Whether padding with fake rows keeps decoding unambiguous."""
    rows = slist.rows
    return 1 <= len(rows) <= ROWS and rows[-1] != slist.query


def _chunks(value: int, count: int) -> list[int]:
    mask = (1 << CHUNK_BITS) - 1
    return [(value >> (CHUNK_BITS * (count - 1 - i))) & mask for i in range(count)]


def _join(chunks: list[int]) -> int:
    v = 0
    for c in chunks:
        v = (v << CHUNK_BITS) | c
    return v


def _ssi_chunks(ssi: int) -> list[int]:
    return _chunks(ssi << (2 * CHUNK_BITS - 16), 2)


def encode_frame(frame: StegFrame, slist: SuggestionList, cb: Codebook, rng: random.Random) -> SuggestionList:
    """Append the steg words for ``frame`` to a copy of ``slist``."""
    if not is_embeddable(slist):
        raise FrameInvalid("list needs 1..10 rows and must not end with a bare-query row")
    rows = list(slist.rows) + [slist.query] * (ROWS - len(slist.rows))
    extra: dict[int, list[int]] = {}
    if isinstance(frame, RegistrationConfirm):
        c = _ssi_chunks(frame.ssi)
        extra = {0: [c[0]], 1: [c[1]], 2: [c[0]], 3: [c[1]]}
    elif isinstance(frame, (Data, EndOfData)):
        payload, seq = (frame.payload, frame.seq) if isinstance(frame, Data) else (frame.filler, 0)
        extra = {i: [c] for i, c in enumerate(_chunks(payload, ROWS))}
        hi, lo = _chunks(seq, 2)
        extra[SEQ_HIGH_ROW].append(hi)
        extra[SEQ_LOW_ROW].append(lo)
    elif isinstance(frame, Close):
        c = _ssi_chunks(frame.native_ssi)
        extra = {0: [c[0]], 1: [c[1]], 2: [c[0]], 3: [c[1]], 4: [frame.last_bits]}
    else:
        raise FrameInvalid(f"not a frame: {frame!r}")
    for i, values in extra.items():
        for v in values:
            rows[i] = append_word(rows[i], encode_chunk(cb, v, rng))
    return slist.with_rows(rows)


def _strip(rows: list[str], counts: dict[int, int], query: str, cb: Codebook) -> dict[int, list[int]]:
    out = {}
    for i, n in counts.items():
        try:
            rows[i], words = strip_last_words(rows[i], n, query)
            out[i] = [decode_word(cb, w)[0] for w in words]
        except (RowTooShort, UnknownWord) as exc:
            raise FormatMismatch(f"row {i + 1}: {exc}") from None
    return out


def _unpad(query: str, rows: list[str]) -> list[str]:
    while rows and rows[-1] == query:
        rows.pop()
    return rows


def _pick_ssi(values: dict[int, list[int]], expected: int | None) -> int:
    copies = []
    for a, b in ((0, 1), (2, 3)):
        v = (values[a][0] << CHUNK_BITS) | values[b][0]
        if v & 0xF == 0:
            copies.append(v >> 4)
    if not copies:
        raise FormatMismatch("no well-formed SSI copy")
    if expected is None:
        return copies[0]
    if expected in copies:
        return expected
    raise SsiMismatch(f"decoded SSI {copies} does not match {expected:#06x}")


def _decode_ssi_copies(rows: list[str], query: str, cb: Codebook) -> dict[int, list[int]]:
    """Strip the four SSI words; a copy with a non-codebook word is marked bad."""
    values = {}
    bad = 0
    for copy in ((0, 1), (2, 3)):
        ok = True
        for i in copy:
            try:
                rows[i], (word,) = strip_last_words(rows[i], 1, query)
            except RowTooShort as exc:
                raise FormatMismatch(f"row {i + 1}: {exc}") from None
            try:
                values[i] = [decode_word(cb, word)[0]]
            except UnknownWord:
                ok = False
        if not ok:
            bad += 1
            # 0x3FF << 10 | 0x3FF has non-zero padding bits: never a valid copy
            values[copy[0]] = values[copy[1]] = [(1 << CHUNK_BITS) - 1]
    if bad == 2:
        raise FormatMismatch("neither SSI copy decodes")
    return values


def decode_frame(
    slist: SuggestionList,
    cb: Codebook,
    expected: str,
    expected_ssi: int | None = None,
) -> tuple[StegFrame, SuggestionList]:
    """Strip the steg words of the expected frame kind by position.

    ``expected`` is ``"confirm"``, ``"data"`` or ``"close"``. Returns the frame
    and the list as the server sent it.
    """
    if len(slist.rows) != ROWS:
        raise FormatMismatch(f"expected {ROWS} rows, found {len(slist.rows)}")
    q = slist.query
    rows = list(slist.rows)
    if expected == "confirm":
        values = _decode_ssi_copies(rows, q, cb)
        frame = RegistrationConfirm(_pick_ssi(values, expected_ssi))
    elif expected == "data":
        counts = {i: 1 for i in range(ROWS)}
        counts[SEQ_HIGH_ROW] = counts[SEQ_LOW_ROW] = 2
        values = _strip(rows, counts, q, cb)
        payload = _join([values[i][0] for i in range(ROWS)])
        seq = (values[SEQ_HIGH_ROW][1] << CHUNK_BITS) | values[SEQ_LOW_ROW][1]
        if seq == 0:
            frame = EndOfData(payload)
        elif seq > SEQ_MAX:
            raise FormatMismatch(f"sequence number {seq} out of range")
        else:
            frame = Data(seq, payload)
    elif expected == "close":
        values = _decode_ssi_copies(rows, q, cb)
        values.update(_strip(rows, {4: 1}, q, cb))
        last = values[4][0]
        if last > PAYLOAD_BITS:
            raise FormatMismatch(f"last_bits {last} out of range")
        frame = Close(_pick_ssi(values, expected_ssi), last)
    else:
        raise ValueError(f"unknown frame kind {expected!r}")
    return frame, slist.with_rows(_unpad(q, rows))
