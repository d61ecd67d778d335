"""Data model of the overt traffic.

Segments are simplified TCP/IP segments carrying the Window Scale and
Timestamp options; payloads are HTTP-like suggest requests and responses
whose bodies follow the autocomplete callback shape::

    window.google.ac.h(["<query>", [{"<row>",0,"0"}, {"<row>",0,"1"}], <trailer>])

Row text is kept verbatim (escape sequences such as ``\\u003Cb\\u003E`` are
opaque), so serialization round-trips byte for byte.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple
from urllib.parse import parse_qs, quote_plus, urlsplit

from .errors import ParseError, RowTooShort

TO_SERVER = "to_server"
TO_CLIENT = "to_client"

SYN, ACK, FIN, RST = "SYN", "ACK", "FIN", "RST"
FLAG_ORDER = (SYN, ACK, FIN, RST)

IP_HEADER = 20
TCP_HEADER = 20
WS_OPTION_LEN = 3
TS_OPTION_LEN = 10

CLIENT_KINDS = ("hp", "serp", "tbrs", "firefox", "ie", "chrome", "safari", "img", "youtube", "unspec")
DEFAULT_TRAILER = '"", "", "", "", "", {}'
SUGGEST_HOST = "clients1.google.com"


class ConnId(NamedTuple):
    client: str
    cport: int
    server: str
    sport: int

    def __str__(self) -> str:
        return f"{self.client}:{self.cport}->{self.server}:{self.sport}"

    @classmethod
    def parse(cls, text: str) -> "ConnId":
        a, b = text.split("->")
        ca, cp = a.rsplit(":", 1)
        sa, sp = b.rsplit(":", 1)
        return cls(ca, int(cp), sa, int(sp))


def options_length(ws: int | None, ts: tuple[int, int] | None) -> int:
    raw = (WS_OPTION_LEN if ws is not None else 0) + (TS_OPTION_LEN if ts is not None else 0)
    return (raw + 3) // 4 * 4


@dataclass(frozen=True)
class Segment:
    """One TCP segment as seen on a link.

    ``total_length`` mirrors the IP header field: it is computed when the
    segment is built and deliberately left stale by :func:`dataclasses.replace`
    so that :func:`rebalance_lengths` has something to fix.
    """

    conn_id: ConnId
    direction: str
    flags: frozenset
    seq: int
    ack: int = 0
    isn_flag: bool = False
    ws: int | None = None
    ts: tuple[int, int] | None = None
    payload: bytes = b""
    total_length: int | None = None

    def __post_init__(self):
        if not isinstance(self.flags, frozenset):
            object.__setattr__(self, "flags", frozenset(self.flags))
        if self.ws is not None:
            if SYN not in self.flags:
                raise ValueError("window scale is only valid on SYN segments")
            if not 0 <= self.ws <= 14:
                raise ValueError(f"window scale shift out of range: {self.ws}")
        object.__setattr__(self, "seq", self.seq & 0xFFFFFFFF)
        object.__setattr__(self, "ack", self.ack & 0xFFFFFFFF)
        if self.total_length is None:
            object.__setattr__(self, "total_length", self.computed_length())

    @property
    def is_syn(self) -> bool:
        return SYN in self.flags and ACK not in self.flags

    @property
    def data_offset(self) -> int:
        return (TCP_HEADER + options_length(self.ws, self.ts)) // 4

    def computed_length(self) -> int:
        return IP_HEADER + TCP_HEADER + options_length(self.ws, self.ts) + len(self.payload)

    @property
    def seq_space(self) -> int:
        """Sequence numbers consumed: payload bytes plus one each for SYN/FIN."""
        return len(self.payload) + (SYN in self.flags) + (FIN in self.flags)

    def flag_list(self) -> list[str]:
        return [f for f in FLAG_ORDER if f in self.flags]

    def shape(self) -> tuple:
        """Everything an endpoint can observe except timestamp values."""
        return (
            self.conn_id,
            self.direction,
            self.flags,
            self.seq,
            self.ack,
            self.ws,
            self.ts is not None,
            self.payload,
            self.total_length,
        )


@dataclass(frozen=True)
class SuggestRequest:
    phrase_prefix: str
    client_kind: str = "hp"
    cp: int | None = None

    def __post_init__(self):
        if self.client_kind not in CLIENT_KINDS:
            raise ValueError(f"unknown client kind {self.client_kind!r}")
        if self.cp is None:
            object.__setattr__(self, "cp", len(self.phrase_prefix))
        if not 0 <= self.cp <= len(self.phrase_prefix):
            raise ValueError("cursor position beyond phrase")


@dataclass(frozen=True)
class DnsRecord:
    name: str
    address: str
    ttl: float

    def __post_init__(self):
        if self.ttl <= 0:
            raise ValueError("ttl must be positive")


@dataclass(frozen=True)
class SuggestionList:
    query: str
    rows: tuple[str, ...] = ()
    trailer: str = DEFAULT_TRAILER

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        for r in self.rows:
            if not r.startswith(self.query):
                raise ValueError(f"row {r!r} does not start with query {self.query!r}")

    @property
    def content_length(self) -> int:
        return len(serialize_suggestions(self))

    def with_rows(self, rows) -> "SuggestionList":
        return replace(self, rows=tuple(rows))


# suggestion bodies

_PREFIX = "window.google.ac.h(["


def _quote(text: str) -> str:
    return '"' + text + '"'


def serialize_suggestions(slist: SuggestionList) -> bytes:
    entries = ", ".join("{%s,0,\"%d\"}" % (_quote(r), i) for i, r in enumerate(slist.rows))
    return f"{_PREFIX}{_quote(slist.query)}, [{entries}], {slist.trailer}])".encode("utf-8")


_STRING_RE = re.compile(r'"((?:[^"\\]|\\.)*)"', re.S)
_DIGITS_RE = re.compile(r"\d+")
_WS_RE = re.compile(r"[ \t\r\n]*")
_ENTRY_RE = re.compile(r'[ \t\r\n]*\{"((?:[^"\\]|\\.)*)",(\d+),"(\d+)"\}[ \t\r\n]*([,\]])', re.S)


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def fail(self, message: str):
        raise ParseError(message, len(self.text[: self.i].encode("utf-8")))

    def skip_ws(self):
        self.i = _WS_RE.match(self.text, self.i).end()

    def expect(self, token: str):
        self.skip_ws()
        if not self.text.startswith(token, self.i):
            self.fail(f"expected {token!r}")
        self.i += len(token)

    def peek(self, token: str) -> bool:
        self.skip_ws()
        return self.text.startswith(token, self.i)

    def string(self) -> str:
        self.skip_ws()
        if not self.text.startswith('"', self.i):
            self.fail("expected '\"'")
        m = _STRING_RE.match(self.text, self.i)
        if not m:
            self.i += 1
            self.fail("unterminated string")
        self.i = m.end()
        return m.group(1)

    def digits(self) -> int:
        m = _DIGITS_RE.match(self.text, self.i)
        if not m:
            self.fail("expected digits")
        self.i = m.end()
        return int(m.group())


def parse_suggestions(data: bytes) -> SuggestionList:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("body is not UTF-8", exc.start) from None
    cur = _Cursor(text)
    cur.expect(_PREFIX)
    query = cur.string()
    cur.expect(",")
    cur.expect("[")
    rows = []
    if not cur.peek("]"):
        while True:
            # fast path for the well-formed common case
            m = _ENTRY_RE.match(text, cur.i)
            if m and m.group(2) == "0" and int(m.group(3)) == len(rows) and m.group(1).startswith(query):
                rows.append(m.group(1))
                cur.i = m.end()
                if m.group(4) == "]":
                    cur.i -= 1
                    break
                continue
            cur.expect("{")
            row = cur.string()
            cur.expect(",")
            if cur.digits() != 0:
                cur.fail("unsupported row type")
            cur.expect(",")
            cur.expect('"')
            idx = cur.digits()
            if idx != len(rows):
                cur.fail(f"row index {idx} out of order")
            cur.expect('"')
            cur.expect("}")
            if not row.startswith(query):
                cur.fail("row does not start with query")
            rows.append(row)
            if cur.peek("]"):
                break
            cur.expect(",")
    cur.expect("]")
    cur.expect(",")
    cur.skip_ws()
    rest = text[cur.i :]
    if not rest.endswith("])"):
        cur.i = len(text)
        cur.fail("missing closing '])'")
    return SuggestionList(query, tuple(rows), rest[:-2])


def append_word(row: str, word: str) -> str:
    return f"{row} {word}"


def strip_last_words(row: str, n: int, query: str = "") -> tuple[str, list[str]]:
    """Remove ``n`` trailing space-separated words, returned in row order."""
    words = []
    for _ in range(n):
        head, sep, word = row.rpartition(" ")
        if not sep or not word or len(head) < len(query) or not head.startswith(query):
            raise RowTooShort(f"row {row!r} has fewer than {n} trailing words")
        words.append(word)
        row = head
    words.reverse()
    return row, words


# HTTP payloads

_CL_RE = re.compile(rb"(?im)^content-length:[ \t]*(\d+)(?=\r?$)")


def request_payload(req: SuggestRequest) -> bytes:
    client = "" if req.client_kind == "unspec" else f"client={req.client_kind}&"
    target = f"/complete/search?{client}hl=en&q={quote_plus(req.phrase_prefix)}&cp={req.cp}"
    return f"GET {target} HTTP/1.1\r\nHost: {SUGGEST_HOST}\r\nConnection: keep-alive\r\n\r\n".encode()


def parse_request(payload: bytes) -> SuggestRequest:
    line = payload.split(b"\r\n", 1)[0].decode()
    parts = line.split(" ")
    if len(parts) != 3 or parts[0] != "GET":
        raise ParseError("not a suggest request", 0)
    qs = parse_qs(urlsplit(parts[1]).query, keep_blank_values=True)
    kind = qs.get("client", ["unspec"])[0]
    return SuggestRequest(qs.get("q", [""])[0], kind, int(qs.get("cp", ["0"])[0]))


def response_payload(slist: SuggestionList) -> bytes:
    body = serialize_suggestions(slist)
    head = (
        "HTTP/1.1 200 OK\r\n"
        "Content-Type: text/javascript; charset=utf-8\r\n"
        "Cache-Control: private, max-age=3600\r\n"
        f"Content-Length: {len(body)}\r\n"
        "\r\n"
    )
    return head.encode() + body


def split_http(payload: bytes) -> tuple[bytes, bytes]:
    head, sep, body = payload.partition(b"\r\n\r\n")
    if not sep:
        raise ParseError("no header terminator", len(payload))
    return head + sep, body


def declared_content_length(payload: bytes) -> int | None:
    m = _CL_RE.search(split_http(payload)[0])
    return int(m.group(1)) if m else None


def is_suggest_response(payload: bytes) -> bool:
    return payload.startswith(b"HTTP/1.1 200") and _PREFIX.encode() in payload


def parse_response(payload: bytes) -> SuggestionList:
    return parse_suggestions(split_http(payload)[1])


def replace_body(payload: bytes, body: bytes) -> bytes:
    """Swap the body, leaving the (now stale) Content-Length untouched."""
    return split_http(payload)[0] + body


def rebalance_lengths(seg: Segment) -> tuple[Segment, int]:
    """Recompute Content-Length and the IP total length after a payload edit.

    Returns the repaired segment and the change in total length, which for
    segments whose option block was not resized equals the payload byte
    delta fed to the sequence-offset ledger.
    """
    payload = seg.payload
    if payload and _CL_RE.search(payload.partition(b"\r\n\r\n")[0]):
        head, body = split_http(payload)
        head = _CL_RE.sub(b"Content-Length: %d" % len(body), head, count=1)
        payload = head + body
    fixed = replace(seg, payload=payload, total_length=None)
    return fixed, fixed.total_length - seg.total_length


# trace records


@dataclass
class TraceRecord:
    timestamp_s: float
    conn_id: str
    direction: str
    flags: list[str] = field(default_factory=list)
    ws: int | None = None
    ts_present: bool = False
    client_kind: str | None = None
    user_id: int | None = None
    search_id: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        return cls(**json.loads(line))

    @classmethod
    def from_segment(cls, seg: Segment, now: float, user_id=None, search_id=None) -> "TraceRecord":
        kind = None
        if seg.direction == TO_SERVER and seg.payload.startswith(b"GET "):
            kind = parse_request(seg.payload).client_kind
        return cls(
            round(now, 6),
            str(seg.conn_id),
            seg.direction,
            seg.flag_list(),
            seg.ws,
            seg.ts is not None,
            kind,
            user_id,
            search_id,
        )


def segment_to_dict(seg: Segment) -> dict:
    return {
        "conn_id": str(seg.conn_id),
        "direction": seg.direction,
        "flags": seg.flag_list(),
        "seq": seg.seq,
        "ack": seg.ack,
        "isn_flag": seg.isn_flag,
        "ws": seg.ws,
        "ts": list(seg.ts) if seg.ts is not None else None,
        "payload": base64.b64encode(seg.payload).decode("ascii"),
        "total_length": seg.total_length,
    }


def segment_from_dict(d: dict) -> Segment:
    return Segment(
        ConnId.parse(d["conn_id"]),
        d["direction"],
        frozenset(d["flags"]),
        d["seq"],
        d["ack"],
        d.get("isn_flag", False),
        d["ws"],
        tuple(d["ts"]) if d["ts"] is not None else None,
        base64.b64decode(d["payload"]),
        d["total_length"],
    )
