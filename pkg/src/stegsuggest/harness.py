"""Deterministic discrete-event simulation of the overt traffic and the channel.

Topology and default one-way latencies::

    clients --1 ms-- SR --20 ms-- SS --1 ms-- suggestion server

Each user searches at exponential (or fixed) intervals. A search opens one
keep-alive TCP connection, preceded by a DNS answer when the cached one
has expired, and sends one suggest request per typed character group. All
randomness comes from child generators of one seeded ``random.Random`` and
every component talks to the others only through the event queue.

Endpoints check what they receive: sequence continuity, acknowledgements and
that every echoed timestamp is one they sent. Violations are collected in
``Simulation.violations``; a transparent channel leaves it empty.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

from .codebook import ChannelKey, Codebook, build_codebook, read_wordlist, synthetic_wordlist
from .errors import ParseError
from .shim import MASK32, SrShim, SsShim, StegContext
from .wire import (
    ACK,
    FIN,
    SYN,
    TO_CLIENT,
    TO_SERVER,
    CLIENT_KINDS,
    SUGGEST_HOST,
    ConnId,
    DnsRecord,
    Segment,
    SuggestionList,
    SuggestRequest,
    TraceRecord,
    parse_request,
    parse_response,
    request_payload,
    response_payload,
    segment_from_dict,
    segment_to_dict,
    serialize_suggestions,
    split_http,
)

SERVER_ADDRESS = "74.125.39.99"
SERVER_PORT = 80
DEFAULT_HCK = 0x0123456789ABCDEF

# Client SYN option shapes, in percent of SYNs. Keys are "none", "<ws>" or
# "<ws>+ts"; every TS-bearing SYN also carries WS.
TABLE4_PROFILE = {
    "none": 39.28,
    "1": 1.98,
    "1+ts": 12.48,
    "2": 29.91,
    "2+ts": 0.48,
    "3+ts": 2.11,
    "6+ts": 10.28,
    "7+ts": 0.53,
    "8": 2.96,
}

TABLE1_CLIENTS = {
    "hp": 41.53,
    "serp": 25.53,
    "firefox": 8.54,
    "safari": 6.06,
    "chrome": 5.59,
    "youtube": 5.21,
    "ie": 4.99,
    "tbrs": 1.87,
    "img": 0.50,
    "unspec": 0.19,
}

DEFAULT_ROWS = {10: 0.85, 9: 0.03, 8: 0.03, 7: 0.02, 6: 0.02, 5: 0.02, 4: 0.01, 3: 0.01, 2: 0.005, 1: 0.005}

# Ordinary vocabulary for phrases and the mock server's completions.
FILLER_WORDS = tuple(
    """
    download free online security suite review price windows mac linux
    manual update version crack key trial best cheap new used weather
    forecast news today tomorrow map route train bus ticket hotel flight
    recipe cake bread soup pizza pasta chicken salad movie music lyrics
    video game guide tips tricks football tennis score live results
    university library course exam schedule calendar email login account
    bank loan card insurance car repair phone cover case battery charger
    camera lens photo editor software driver printer network router wifi
    garden flower tree house rent apartment sale job salary career
    history museum art gallery city park beach mountain river lake
    doctor hospital health diet sleep coffee tea water wine beer
    """.split()
)

MOCK_EXTRA_WORDS = 4
BARE_ROW_P = 0.3
MARKUP_P = 0.4


def estimate_bandwidth(
    lists_per_search: float,
    bits_per_list: int,
    searches_per_hour_per_user: float,
    num_users: int,
) -> float:
    """Closed-form steganographic bandwidth in bit/s."""
    args = (lists_per_search, bits_per_list, searches_per_hour_per_user, num_users)
    if any(a < 0 for a in args):
        raise ValueError("bandwidth inputs must be non-negative")
    exact = Fraction(num_users) * Fraction(searches_per_hour_per_user) * Fraction(lists_per_search)
    return float(exact * bits_per_list / 3600)


def _parse_dist(text: str, key=str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if part:
            k, v = part.split(":")
            out[key(k.strip())] = float(v)
    return out


def _format_dist(d: dict) -> str:
    return ",".join(f"{k}:{v:g}" for k, v in d.items())


@dataclass
class SimConfig:
    seed: int = 1
    num_users: int = 10
    searches_per_hour_per_user: float = 0.31
    requests_per_search: float = 7.1
    row_count_distribution: dict = field(default_factory=lambda: dict(DEFAULT_ROWS))
    ws_ts_profile: dict = field(default_factory=lambda: dict(TABLE4_PROFILE))
    client_kind_distribution: dict = field(default_factory=lambda: dict(TABLE1_CLIENTS))
    duration: float = 3600.0
    registration_timeout_s: float = 5.0
    start_time_s: float = 9 * 3600.0
    arrival: str = "poisson"
    first_search_s: float = 1.0
    user_stagger_s: float = 0.05
    max_searches_per_user: int = 0
    typing_gap_min_s: float = 0.15
    typing_gap_max_s: float = 0.4
    client_sr_latency_s: float = 0.001
    sr_ss_latency_s: float = 0.02
    ss_server_latency_s: float = 0.001
    server_delay_s: float = 0.01
    dns_ttl_s: float = 300.0
    hck: int = DEFAULT_HCK
    digest: str = "sha1"
    wordlist: str = ""
    ss_guard_s: float = 0.5

    def __post_init__(self):
        rates = (
            self.num_users,
            self.searches_per_hour_per_user,
            self.requests_per_search,
            self.duration,
            self.registration_timeout_s,
        )
        if any(r < 0 for r in rates):
            raise ValueError("rates and durations must be non-negative")
        if self.arrival not in ("poisson", "fixed"):
            raise ValueError(f"unknown arrival process {self.arrival!r}")
        if not self.row_count_distribution or any(not 1 <= int(k) <= 10 for k in self.row_count_distribution):
            raise ValueError("row counts must lie in 1..10")
        for k in self.ws_ts_profile:
            _profile_shape(k)
        for k in self.client_kind_distribution:
            if k not in CLIENT_KINDS:
                raise ValueError(f"unknown client kind {k!r}")
        ChannelKey(self.hck)

    _DISTS = {
        "row_count_distribution": int,
        "ws_ts_profile": str,
        "client_kind_distribution": str,
    }

    @classmethod
    def from_text(cls, text: str) -> "SimConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            if key in cls._DISTS:
                kwargs[key] = _parse_dist(value, cls._DISTS[key])
            elif key in ("seed", "hck"):
                kwargs[key] = int(value, 0)
            elif types[key] == "int":
                kwargs[key] = int(value)
            elif types[key] == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "SimConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in self._DISTS:
                v = _format_dist(v)
            elif f.name == "hck":
                v = f"{v:#018x}"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _profile_shape(key: str) -> tuple[int | None, bool]:
    if key == "none":
        return None, False
    ws, _, ts = key.partition("+")
    if ts not in ("", "ts") or not 0 <= int(ws) <= 14:
        raise ValueError(f"bad WS/TS profile key {key!r}")
    return int(ws), ts == "ts"


@dataclass
class Faults:
    """Per-connection fault probabilities for robustness runs."""

    strip_syn_ts_p: float = 0.0
    corrupt_confirm_p: float = 0.0
    slow_first_response_p: float = 0.0
    slow_delay_s: float = 6.0


@dataclass
class SimReport:
    bits_sent: int
    bits_received: int
    lists_used: int
    searches_simulated: int
    virtual_elapsed_s: float
    achieved_bandwidth_bps: float
    trace_path: str | None = None
    connections: int = 0
    registrations: int = 0
    closed: bool = False
    incomplete: bool = False
    violations: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_table(self) -> str:
        rows = asdict(self)
        width = max(map(len, rows))
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows.items()) + "\n"


def _draw(rng: random.Random, dist: dict):
    keys = list(dist)
    return rng.choices(keys, weights=[dist[k] for k in keys])[0]


def mock_server_respond(
    req: SuggestRequest,
    rng: random.Random,
    row_count_distribution: dict | None = None,
    vocabulary: Iterable[str] = FILLER_WORDS,
    rows: int | None = None,
) -> SuggestionList:
    """Invent a plausible suggestion list for ``req``.

    Every row starts with the query and adds up to four vocabulary words,
    sometimes wrapped in the escaped bold markup the real service uses. A
    bare-query row may appear near the top, never last.
    """
    q = req.phrase_prefix
    vocab = list(vocabulary)
    n = rows if rows is not None else int(_draw(rng, row_count_distribution or DEFAULT_ROWS))
    out: list[str] = []
    seen = {q}
    if n > 1 and rng.random() < BARE_ROW_P:
        out.append(q)
    attempts = 0
    while len(out) < n:
        attempts += 1
        k = rng.randint(1, MOCK_EXTRA_WORDS) if attempts < 50 else MOCK_EXTRA_WORDS
        tail = " ".join(rng.choice(vocab) for _ in range(k))
        if rng.random() < MARKUP_P:
            row = f"{q}\\u003Cb\\u003E {tail}\\u003C\\/b\\u003E"
        else:
            row = f"{q} {tail}"
        if row not in seen:
            seen.add(row)
            out.append(row)
    return SuggestionList(q, tuple(out))


# endpoints


@dataclass
class User:
    uid: int
    address: str
    ts_offset: int
    dns_expiry: float = -1.0
    searches: int = 0
    next_port: int = 40000


@dataclass
class ClientConn:
    user: User
    search_id: int
    prefixes: list[str]
    isn: int
    ws: int | None
    ts_wanted: bool
    snd_nxt: int = 0
    rcv_nxt: int = 0
    ts_ok: bool = False
    ts_recent: int = 0
    sent_tsvals: set = field(default_factory=set)
    sent_requests: int = 0
    responses: int = 0
    done: bool = False


@dataclass
class ServerConn:
    isn: int
    snd_nxt: int = 0
    rcv_nxt: int = 0
    ts_ok: bool = False
    ts_recent: int = 0
    ws: int | None = None
    clock_offset: int = 0
    sent_tsvals: set = field(default_factory=set)
    responses: int = 0
    fin_sent: bool = False


@dataclass
class Transcript:
    """What each endpoint sent and received on one connection."""

    client_sent: list = field(default_factory=list)
    server_recv: list = field(default_factory=list)
    server_sent: list = field(default_factory=list)
    client_recv: list = field(default_factory=list)


_codebook_cache: dict = {}


def codebook_for(config: SimConfig) -> Codebook:
    key = (config.wordlist, config.hck, config.digest)
    if key not in _codebook_cache:
        words = read_wordlist(config.wordlist) if config.wordlist else synthetic_wordlist()
        _codebook_cache[key] = build_codebook(words, config.hck, config.digest)
    return _codebook_cache[key]


class Simulation:
    def __init__(
        self,
        config: SimConfig,
        steganogram: str,
        faults: Faults | None = None,
        codebook: Codebook | None = None,
        record_transcripts: bool = True,
    ):
        self.config = config
        self.steganogram = steganogram
        self.faults = faults or Faults()
        self.codebook = codebook or codebook_for(config)
        root = random.Random(config.seed)
        child = lambda: random.Random(root.getrandbits(64))  # noqa: E731
        self.rng_users = child()
        self.rng_server = child()
        self.rng_faults = child()
        rng_sr, rng_ss = child(), child()
        self.sr = SrShim(self._ctx(), rng_sr)
        self.ss = SsShim(self._ctx(), rng_ss, guard_s=config.ss_guard_s)
        if steganogram:
            self.ss.load(steganogram)
        self.vocab = tuple(w for w in FILLER_WORDS if w not in self.codebook)
        self.now = config.start_time_s
        self.end = config.start_time_s + config.duration
        self._queue: list = []
        self._tick = itertools.count()
        self.users = [
            User(u, f"10.0.{u // 250}.{u % 250 + 2}", self.rng_users.getrandbits(32)) for u in range(config.num_users)
        ]
        self.clients: dict[ConnId, ClientConn] = {}
        self.servers: dict[ConnId, ServerConn] = {}
        self.record_transcripts = record_transcripts
        self.transcripts: dict[ConnId, Transcript] = {}
        self.trace: list[TraceRecord] = []
        self.channel: list[dict] = []
        self.violations: list[str] = []
        self.searches = 0
        self.connections = 0
        self._slow: set = set()
        self._corrupt: set = set()
        self._search_ids = itertools.count(1)

    def _ctx(self) -> StegContext:
        c = self.config
        return StegContext(self.codebook, c.hck, c.digest, c.registration_timeout_s)

    # event queue

    def at(self, t: float, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (t, next(self._tick), fn, args))

    def run(self) -> SimReport:
        c = self.config
        for user in self.users:
            if c.arrival == "fixed":
                first = c.start_time_s + c.first_search_s + user.uid * c.user_stagger_s
            else:
                first = self.now + self._gap()
            self.at(first, self._start_search, user)
        while self._queue:
            t, _, fn, args = heapq.heappop(self._queue)
            if t > self.end:
                break
            self.now = t
            fn(*args)
        self.now = self.end
        return self.report()

    def _gap(self) -> float:
        c = self.config
        rate = c.searches_per_hour_per_user / 3600.0
        if rate <= 0:
            return math.inf
        if c.arrival == "fixed":
            return 1.0 / rate
        return self.rng_users.expovariate(rate)

    # clients

    def _start_search(self, user: User) -> None:
        c = self.config
        if c.max_searches_per_user and user.searches >= c.max_searches_per_user:
            return
        user.searches += 1
        self.searches += 1
        nxt = self.now + self._gap()
        if math.isfinite(nxt):
            self.at(nxt, self._start_search, user)
        rng = self.rng_users
        if user.dns_expiry < self.now:
            rec = DnsRecord(SUGGEST_HOST, SERVER_ADDRESS, c.dns_ttl_s)
            self.sr.observe_dns(rec, self.now)
            self.ss.observe_dns(rec, self.now)
            self.channel.append({"t": self.now, "kind": "dns", "name": rec.name, "address": rec.address, "ttl": rec.ttl})
            user.dns_expiry = self.now + c.dns_ttl_s
        n = int(c.requests_per_search)
        frac = c.requests_per_search - n
        if frac and rng.random() < frac:
            n += 1
        n = max(n, 1)
        ws, ts = _profile_shape(_draw(rng, c.ws_ts_profile))
        cid = ConnId(user.address, user.next_port, SERVER_ADDRESS, SERVER_PORT)
        user.next_port = 40000 + (user.next_port - 40000 + 1) % 20000
        conn = ClientConn(user, next(self._search_ids), self._prefixes(n), rng.getrandbits(32), ws, ts)
        conn.snd_nxt = conn.isn
        self.clients[cid] = conn
        self.connections += 1
        if self.record_transcripts:
            self.transcripts[cid] = Transcript()
        f = self.faults
        if f.slow_first_response_p and self.rng_faults.random() < f.slow_first_response_p:
            self._slow.add(cid)
        if f.corrupt_confirm_p and self.rng_faults.random() < f.corrupt_confirm_p:
            self._corrupt.add(cid)
        self._client_send(cid, {SYN}, ws=ws, ts_syn=ts)

    def _prefixes(self, n: int) -> list[str]:
        rng = self.rng_users
        words = [rng.choice(self.vocab) for _ in range(rng.randint(1, 3))]
        while len(" ".join(words)) < n:
            words.append(rng.choice(self.vocab))
        phrase = " ".join(words)
        lengths = sorted({max(1, round(len(phrase) * (k + 1) / n)) for k in range(n)})
        # rounding can merge lengths; pad with the earliest missing ones
        pool = [L for L in range(1, len(phrase) + 1) if L not in lengths]
        while len(lengths) < n:
            lengths.append(pool.pop(0))
        return [phrase[:L] for L in sorted(lengths)]

    def _client_tsval(self, conn: ClientConn) -> int:
        return (conn.user.ts_offset + int(self.now * 1000)) & MASK32

    def _client_send(self, cid: ConnId, flags: set, payload: bytes = b"", ws=None, ts_syn=False) -> None:
        conn = self.clients[cid]
        ts = None
        if (SYN in flags and ts_syn) or conn.ts_ok:
            tsval = self._client_tsval(conn)
            conn.sent_tsvals.add(tsval)
            ts = (tsval, conn.ts_recent if conn.ts_ok else 0)
        ack = conn.rcv_nxt if ACK in flags else 0
        seg = Segment(cid, TO_SERVER, frozenset(flags), conn.snd_nxt, ack, SYN in flags, ws, ts, payload)
        conn.snd_nxt = (conn.snd_nxt + seg.seq_space) & MASK32
        if self.record_transcripts:
            self.transcripts[cid].client_sent.append(seg)
        self.trace.append(TraceRecord.from_segment(seg, self.now, conn.user.uid, conn.search_id))
        self.at(self.now + self.config.client_sr_latency_s, self._at_sr, seg)

    def _client_request(self, cid: ConnId) -> None:
        conn = self.clients[cid]
        if conn.done:
            return
        prefix = conn.prefixes[conn.sent_requests]
        conn.sent_requests += 1
        # drawn per request so the trace mix converges on the configured one
        kind = _draw(self.rng_users, self.config.client_kind_distribution)
        self._client_send(cid, {ACK}, request_payload(SuggestRequest(prefix, kind)))

    def _client_recv(self, seg: Segment) -> None:
        cid = seg.conn_id
        conn = self.clients.get(cid)
        if conn is None:
            return
        if self.record_transcripts:
            self.transcripts[cid].client_recv.append(seg)
        self.trace.append(TraceRecord.from_segment(seg, self.now, conn.user.uid, conn.search_id))
        if ACK in seg.flags and seg.ack != conn.snd_nxt:
            self._violation(cid, f"client got ack {seg.ack}, expected {conn.snd_nxt}")
        if seg.ts is not None:
            if not conn.ts_ok and not seg.flags >= {SYN, ACK}:
                self._violation(cid, "client got a timestamp it never negotiated")
            elif seg.ts[1] not in conn.sent_tsvals:
                self._violation(cid, f"client got unknown tsecr {seg.ts[1]}")
        if SYN in seg.flags:
            if conn.ws is None and seg.ws is not None:
                self._violation(cid, "client got WS it never offered")
            conn.rcv_nxt = (seg.seq + 1) & MASK32
            conn.ts_ok = conn.ts_wanted and seg.ts is not None
            if seg.ts is not None and not conn.ts_wanted:
                self._violation(cid, "client got TS it never offered")
            if conn.ts_ok:
                conn.ts_recent = seg.ts[0]
            self._client_send(cid, {ACK})
            self._client_request(cid)
            return
        if seg.seq != conn.rcv_nxt:
            self._violation(cid, f"client got seq {seg.seq}, expected {conn.rcv_nxt}")
        if conn.ts_ok and seg.ts is not None:
            conn.ts_recent = seg.ts[0]
        conn.rcv_nxt = (conn.rcv_nxt + seg.seq_space) & MASK32
        if FIN in seg.flags:
            conn.done = True
            self._client_send(cid, {ACK})
            self.clients.pop(cid, None)
            return
        if seg.payload:
            self._check_body(cid, seg.payload)
            conn.responses += 1
            if conn.sent_requests < len(conn.prefixes):
                gap = self.rng_users.uniform(self.config.typing_gap_min_s, self.config.typing_gap_max_s)
                self._client_send(cid, {ACK})
                self.at(self.now + gap, self._client_request, cid)
            else:
                self._client_send(cid, {ACK, FIN})

    def _check_body(self, cid: ConnId, payload: bytes) -> None:
        try:
            head, body = split_http(payload)
            parse_response(payload)
        except ParseError as exc:
            self._violation(cid, f"client could not parse response: {exc}")
            return
        if f"Content-Length: {len(body)}".encode() not in head:
            self._violation(cid, "Content-Length does not match body")

    def _violation(self, cid: ConnId, message: str) -> None:
        self.violations.append(f"{self.now:.6f} {cid}: {message}")

    # middleboxes and links

    def _at_sr(self, seg: Segment) -> None:
        self.channel.append({"t": self.now, "kind": "segment", "segment": segment_to_dict(seg)})
        out = self.sr.process(seg, self.now)
        if seg.direction == TO_SERVER:
            if out.is_syn and out.ts is not None and self.faults.strip_syn_ts_p:
                if self.rng_faults.random() < self.faults.strip_syn_ts_p:
                    out = replace(out, ts=None, total_length=None)
            self.at(self.now + self.config.sr_ss_latency_s, self._at_ss, out)
        else:
            self.at(self.now + self.config.client_sr_latency_s, self._client_recv, out)

    def _at_ss(self, seg: Segment) -> None:
        out = self.ss.process(seg, self.now)
        if seg.direction == TO_SERVER:
            self.at(self.now + self.config.ss_server_latency_s, self._server_recv, out)
        else:
            if out.conn_id in self._corrupt and out.payload and out.conn_id in self.ss.confirmed:
                self._corrupt.discard(out.conn_id)
                out = _corrupt_first_word(out, self.codebook)
            self.at(self.now + self.config.sr_ss_latency_s, self._at_sr, out)

    # server

    def _server_tsval(self, conn: ServerConn) -> int:
        return (conn.clock_offset + int(self.now * 1000)) & MASK32

    def _server_send(self, cid: ConnId, flags: set, payload: bytes = b"") -> None:
        conn = self.servers.get(cid)
        if conn is None:
            return
        ts = None
        if conn.ts_ok:
            tsval = self._server_tsval(conn)
            conn.sent_tsvals.add(tsval)
            ts = (tsval, conn.ts_recent)
        ws = conn.ws if SYN in flags else None
        seg = Segment(cid, TO_CLIENT, frozenset(flags), conn.snd_nxt, conn.rcv_nxt, SYN in flags, ws, ts, payload)
        conn.snd_nxt = (conn.snd_nxt + seg.seq_space) & MASK32
        if self.record_transcripts:
            self.transcripts[cid].server_sent.append(seg)
        self.at(self.now + self.config.ss_server_latency_s, self._at_ss, seg)

    def _server_recv(self, seg: Segment) -> None:
        cid = seg.conn_id
        if self.record_transcripts and cid in self.transcripts:
            self.transcripts[cid].server_recv.append(seg)
        delay = self.config.server_delay_s
        if seg.is_syn:
            conn = ServerConn(self.rng_server.getrandbits(32), clock_offset=self.rng_server.getrandbits(32))
            conn.snd_nxt = conn.isn
            conn.rcv_nxt = (seg.seq + 1) & MASK32
            conn.ts_ok = seg.ts is not None
            conn.ts_recent = seg.ts[0] if seg.ts else 0
            conn.ws = 7 if seg.ws is not None else None
            self.servers[cid] = conn
            self.at(self.now + delay, self._server_send, cid, {SYN, ACK})
            return
        conn = self.servers.get(cid)
        if conn is None:
            return
        if seg.seq != conn.rcv_nxt:
            self._violation(cid, f"server got seq {seg.seq}, expected {conn.rcv_nxt}")
        if ACK in seg.flags and (conn.snd_nxt - seg.ack) & MASK32 > 1 << 31:
            self._violation(cid, f"server got ack {seg.ack} beyond {conn.snd_nxt}")
        if seg.ts is not None:
            if not conn.ts_ok:
                self._violation(cid, "server got a timestamp it never negotiated")
            else:
                if seg.ts[1] not in conn.sent_tsvals:
                    self._violation(cid, f"server got unknown tsecr {seg.ts[1]}")
                conn.ts_recent = seg.ts[0]
        conn.rcv_nxt = (conn.rcv_nxt + seg.seq_space) & MASK32
        if seg.payload:
            try:
                req = parse_request(seg.payload)
            except (ParseError, ValueError) as exc:
                self._violation(cid, f"server could not parse request: {exc}")
                return
            slist = mock_server_respond(req, self.rng_server, self.config.row_count_distribution, self.vocab)
            conn.responses += 1
            if conn.responses == 1 and cid in self._slow:
                delay += self.faults.slow_delay_s
            self.at(self.now + delay, self._server_send, cid, {ACK}, response_payload(slist))
        elif FIN in seg.flags:
            self.at(self.now + delay, self._server_send, cid, {FIN, ACK})
            conn.fin_sent = True
        elif conn.fin_sent and seg.ack == conn.snd_nxt:
            self.servers.pop(cid, None)

    # results

    def recovered(self) -> str:
        """Steganogram prefix the receiver has reassembled."""
        bits = self.sr.reassemble().bits
        return bits[: self.ss.bits_sent] if self.sr.last_bits is None else bits

    def report(self, trace_path: str | None = None) -> SimReport:
        bits = self.recovered()
        elapsed = self.now - self.config.start_time_s
        return SimReport(
            bits_sent=self.ss.bits_sent,
            bits_received=len(bits),
            lists_used=self.ss.lists_used,
            searches_simulated=self.searches,
            virtual_elapsed_s=elapsed,
            achieved_bandwidth_bps=len(bits) / elapsed if elapsed > 0 else 0.0,
            trace_path=trace_path,
            connections=self.connections,
            registrations=len(self.sr.registered),
            closed=self.sr.closed,
            incomplete=bits != self.steganogram,
            violations=len(self.violations),
        )

    def transparency_mismatches(self) -> list[str]:
        """Segments whose endpoint view differs beyond timestamp values."""
        out = []
        for cid, t in self.transcripts.items():
            for label, sent, got in (("to-server", t.client_sent, t.server_recv), ("to-client", t.server_sent, t.client_recv)):
                if len(got) > len(sent):
                    out.append(f"{cid} {label}: {len(got)} segments received, {len(sent)} sent")
                for i, (a, b) in enumerate(zip(sent, got)):
                    if a.shape() != b.shape():
                        out.append(f"{cid} {label} #{i}: {a.shape()} != {b.shape()}")
        return out

    def events(self) -> list[dict]:
        return sorted(self.sr.events + self.ss.events, key=lambda e: (e["t"], e["shim"]))

    def write_outputs(self, out_dir: str | Path) -> SimReport:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / "trace.jsonl"
        trace_path.write_text("".join(r.to_json() + "\n" for r in self.trace), encoding="utf-8")
        (out / "events.jsonl").write_text(
            "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events()), encoding="utf-8"
        )
        report = self.report(str(trace_path))
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
        return report


def _corrupt_first_word(seg: Segment, cb: Codebook) -> Segment:
    """Damage the last word of row 1 without changing the payload length."""
    head, body = split_http(seg.payload)
    slist = parse_response(seg.payload)
    row = slist.rows[0]
    base, _, word = row.rpartition(" ")
    bad = "X" + word[1:]
    if bad in cb:
        return seg
    new = serialize_suggestions(slist.with_rows((f"{base} {bad}",) + slist.rows[1:]))
    return replace(seg, payload=head + new)


def run_simulation(
    config: SimConfig,
    steganogram: str,
    faults: Faults | None = None,
    out_dir: str | Path | None = None,
) -> SimReport:
    if not steganogram:
        raise ValueError("steganogram must be non-empty")
    sim = Simulation(config, steganogram, faults)
    sim.run()
    return sim.write_outputs(out_dir) if out_dir is not None else sim.report()


# offline send/recv over a recorded channel


def write_channel(sim: Simulation, path: str | Path) -> None:
    """Everything SR observed, in order: the shared channel file."""
    c = sim.config
    header = {
        "kind": "header",
        "fingerprint": sim.codebook.key_fingerprint,
        "digest": c.digest,
        "registration_timeout_s": c.registration_timeout_s,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r, sort_keys=True) for r in sim.channel)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_channel(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("empty channel file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError("channel file lacks a header line")
    return header, [json.loads(line) for line in lines[1:] if line.strip()]


def replay_receiver(records: Iterable[dict], codebook: Codebook, hck: int, timeout_s: float = 5.0, digest: str = "sha1") -> SrShim:
    """Feed a recorded channel through a fresh receiver."""
    sr = SrShim(StegContext(codebook, hck, digest, timeout_s), random.Random(0))
    for rec in records:
        if rec["kind"] == "dns":
            sr.observe_dns(DnsRecord(rec["name"], rec["address"], rec["ttl"]), rec["t"])
        elif rec["kind"] == "segment":
            sr.process(segment_from_dict(rec["segment"]), rec["t"])
    return sr


__all__ = [
    "Faults",
    "SimConfig",
    "SimReport",
    "Simulation",
    "codebook_for",
    "estimate_bandwidth",
    "mock_server_respond",
    "read_channel",
    "replay_receiver",
    "run_simulation",
    "write_channel",
]
