"""The two in-path middleboxes.

``SrShim`` sits next to the clients and receives the steganogram; ``SsShim``
sits next to the suggestion servers and sends it::

    client <-> SR <-> SS <-> server

Both shims process segments strictly in arrival order and never raise on
the data path: anything they cannot interpret is forwarded as is.
"""

from __future__ import annotations

import bisect
import logging
import random
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable

from . import kernels
from .codebook import Codebook
from .core import (
    ADD_TS,
    PAYLOAD_BITS,
    SEQ_MAX,
    WS_AND_TS,
    WS_ONLY,
    Close,
    Data,
    EndOfData,
    RegistrationConfirm,
    WsCase,
    choose_ws,
    compute_ssi,
    decode_frame,
    embed_ssi_in_ts,
    encode_frame,
    extract_ssi_from_ts,
    is_embeddable,
    next_seq,
    recover_original,
)
from .errors import FormatMismatch, GapTimeout, NoMatch, ParseError, SsiMismatch
from .wire import (
    ACK,
    FIN,
    RST,
    SYN,
    TO_CLIENT,
    TO_SERVER,
    DnsRecord,
    Segment,
    is_suggest_response,
    parse_response,
    rebalance_lengths,
    replace_body,
    serialize_suggestions,
)

log = logging.getLogger(__name__)

MASK32 = 0xFFFFFFFF
TS_MAP_CAPACITY = 4096

PENDING = "Pending"
REGISTERED = "Registered"
CLOSING = "Closing"
PASSTHROUGH = "PassThrough"
# SS-side states
ACCEPTED = "Accepted"
CONFIRMED = "Confirmed"


class ServerList:
    """Addresses learned from DNS answers, each valid until its TTL runs out."""

    def __init__(self):
        self.entries: dict[str, float] = {}

    def observe(self, record: DnsRecord, now: float) -> None:
        expiry = now + record.ttl
        self.entries[record.address] = max(expiry, self.entries.get(record.address, expiry))

    def matches(self, address: str, now: float) -> bool:
        exp = self.entries.get(address)
        return exp is not None and now <= exp


class TsRewriter:
    """Timestamp rewrite registers for one connection direction.

    Every rewritten value follows ``steg_cur = steg_last + (orig_cur - orig_last)``
    mod 2**32, so inter-segment deltas survive. A bounded LRU map remembers
    ``steg -> orig`` for restoring echoed timestamps.
    """

    def __init__(self, capacity: int = TS_MAP_CAPACITY):
        self.ts_orig_last = self.ts_orig_cur = None
        self.ts_steg_last = self.ts_steg_cur = None
        self.capacity = capacity
        self.ts_map: OrderedDict[int, int] = OrderedDict()

    def _remember(self, steg: int, orig: int) -> None:
        self.ts_map[steg] = orig
        self.ts_map.move_to_end(steg)
        while len(self.ts_map) > self.capacity:
            self.ts_map.popitem(last=False)

    def seed(self, orig: int, steg: int) -> None:
        self.ts_orig_last = self.ts_orig_cur = orig & MASK32
        self.ts_steg_last = self.ts_steg_cur = steg & MASK32
        self._remember(self.ts_steg_cur, self.ts_orig_cur)

    def rewrite(self, orig: int) -> int:
        if self.ts_orig_last is None:
            self.seed(orig, orig)
            return self.ts_steg_cur
        self.ts_orig_cur = orig & MASK32
        self.ts_steg_cur = (self.ts_steg_last + (self.ts_orig_cur - self.ts_orig_last)) & MASK32
        self._remember(self.ts_steg_cur, self.ts_orig_cur)
        self.ts_orig_last, self.ts_steg_last = self.ts_orig_cur, self.ts_steg_cur
        return self.ts_steg_cur

    def rewrite_many(self, origs: list[int]) -> list[int]:
        """Batch form of :meth:`rewrite` for long traces."""
        if not origs:
            return []
        if self.ts_orig_last is None:
            out = kernels.ts_rewrite_run(origs)
        else:
            out = kernels.ts_rewrite_run([self.ts_orig_last] + list(origs), self.ts_steg_last)[1:]
        for s, o in zip(out[-self.capacity :], origs[-self.capacity :]):
            self._remember(s, o & MASK32)
        self.ts_orig_last = self.ts_orig_cur = origs[-1] & MASK32
        self.ts_steg_last = self.ts_steg_cur = out[-1]
        return out

    def restore(self, echoed: int) -> int | None:
        orig = self.ts_map.get(echoed)
        if orig is not None:
            self.ts_map.move_to_end(echoed)
        return orig


class OffsetLedger:
    """Maps sequence numbers of one byte stream across a payload-editing hop.

    Positions are kept relative to the stream's initial sequence number so
    32-bit wraparound never reorders them. Each payload edit adds a boundary
    ``(input_end, output_end)``; the offset after it applies to later bytes.
    """

    def __init__(self):
        self.base: int | None = None
        self._in_ends = [0]
        self._out_ends = [0]
        self._offsets = [0]

    @property
    def offset(self) -> int:
        return self._offsets[-1]

    def set_base(self, isn: int) -> None:
        self.base = isn & MASK32

    def forward(self, seq: int, len_in: int, len_out: int) -> int:
        if self.base is None:
            return seq
        rel = (seq - self.base) & MASK32
        k = bisect.bisect_right(self._in_ends, rel) - 1
        off = self._offsets[k]
        if len_out != len_in:
            end = rel + len_in
            self._in_ends.append(end)
            self._out_ends.append(end + off + len_out - len_in)
            self._offsets.append(off + len_out - len_in)
        return (seq + off) & MASK32

    def reverse(self, ack: int) -> int:
        if self.base is None:
            return ack
        rel = (ack - self.base) & MASK32
        k = bisect.bisect_right(self._out_ends, rel) - 1
        return (ack - self._offsets[k]) & MASK32


@dataclass
class ConnEntry:
    conn_id: object
    state: str
    ssi: int
    is_native: bool = False
    deadline: float = 0.0
    ows: WsCase | None = None
    ts: TsRewriter | None = None
    ledger: OffsetLedger = field(default_factory=OffsetLedger)
    added_ws: bool = False
    added_ts: bool = False
    syn_time: float = 0.0
    responses: int = 0
    fin_to_server: bool = False
    fin_to_client: bool = False


@dataclass
class StegContext:
    codebook: Codebook
    hck: int
    digest: str = "sha1"
    registration_timeout_s: float = 5.0
    native_ssi: int | None = None


class _Shim:
    name = "shim"

    def __init__(self, ctx: StegContext, rng: random.Random | None = None):
        self.ctx = ctx
        self.rng = rng or random.Random(0)
        self.servers = ServerList()
        self.conns: dict[object, ConnEntry] = {}
        self.events: list[dict] = []

    def observe_dns(self, record: DnsRecord, now: float) -> None:
        self.servers.observe(record, now)

    def emit(self, now: float, event: str, **fields) -> None:
        rec = {"t": round(now, 6), "shim": self.name, "event": event}
        rec.update({k: (str(v) if k == "conn_id" else v) for k, v in fields.items()})
        self.events.append(rec)
        log.debug("%s", rec)

    def _track_teardown(self, entry: ConnEntry, seg: Segment) -> None:
        if RST in seg.flags:
            self.conns.pop(entry.conn_id, None)
            return
        if FIN in seg.flags:
            if seg.direction == TO_SERVER:
                entry.fin_to_server = True
            else:
                entry.fin_to_client = True
        elif entry.fin_to_server and entry.fin_to_client and seg.direction == TO_SERVER:
            self.conns.pop(entry.conn_id, None)

    def _common_to_server(self, entry: ConnEntry, seg: Segment) -> Segment:
        out = seg
        if seg.ts is not None and entry.ts is not None:
            out = replace(out, ts=(entry.ts.rewrite(seg.ts[0]), seg.ts[1]))
        if ACK in seg.flags:
            out = replace(out, ack=entry.ledger.reverse(seg.ack))
        return out

    def _restore_echo(self, entry: ConnEntry, seg: Segment) -> Segment:
        if seg.ts is not None and entry.ts is not None:
            orig = entry.ts.restore(seg.ts[1])
            if orig is not None:
                return replace(seg, ts=(seg.ts[0], orig))
        return seg

    def _finish_to_client(self, entry: ConnEntry, seg: Segment, out: Segment) -> Segment:
        out, _ = rebalance_lengths(out)
        out = replace(out, seq=entry.ledger.forward(seg.seq, len(seg.payload), len(out.payload)))
        self._track_teardown(entry, seg)
        return out

    def _suggestions(self, seg: Segment):
        if not is_suggest_response(seg.payload):
            return None
        try:
            return parse_response(seg.payload)
        except (ParseError, ValueError):
            return None

    @staticmethod
    def _with_list(seg: Segment, slist) -> Segment:
        return replace(seg, payload=replace_body(seg.payload, serialize_suggestions(slist)))


class SrShim(_Shim):
    """Steganogram receiver: marks SYNs, decodes lists, strips steg words."""

    name = "SR"

    def __init__(self, ctx: StegContext, rng: random.Random | None = None):
        super().__init__(ctx, rng)
        self.frames: list[tuple[int, str]] = []
        self.awaiting_close = False
        self.closed = False
        self.last_bits: int | None = None
        self.registered: set = set()

    def process(self, seg: Segment, now: float) -> Segment:
        entry = self.conns.get(seg.conn_id)
        if seg.direction == TO_SERVER:
            if seg.is_syn:
                return self._on_syn(seg, now)
            if entry is None:
                return seg
            self._expire(entry, now)
            out, _ = rebalance_lengths(self._common_to_server(entry, seg))
            self._track_teardown(entry, seg)
            return out
        if entry is None:
            return seg
        self._expire(entry, now)
        out = self._restore_echo(entry, seg)
        if SYN in seg.flags:
            entry.ledger.set_base(seg.seq)
        # only reached when SS did not restore the SYN: hide options the client never offered
        if entry.added_ws and out.ws is not None:
            out = replace(out, ws=None)
        if entry.added_ts and out.ts is not None:
            out = replace(out, ts=None)
        slist = self._suggestions(seg) if entry.state in (PENDING, REGISTERED) else None
        if slist is not None:
            cleaned = self._receive(entry, slist, now)
            if cleaned is not slist:
                out = self._with_list(out, cleaned)
        return self._finish_to_client(entry, seg, out)

    def _on_syn(self, seg: Segment, now: float) -> Segment:
        cid = seg.conn_id
        if not self.servers.matches(cid.server, now):
            return seg
        case = WsCase.of(seg.ws, seg.ts is not None)
        if case is None:
            return seg
        ctx = self.ctx
        ssi = compute_ssi(seg.seq, ctx.hck, case.ows, ctx.digest)
        emitted, action = choose_ws(case)
        tsval = embed_ssi_in_ts(ssi, self.rng)
        entry = ConnEntry(cid, PENDING, ssi, deadline=now + ctx.registration_timeout_s, ows=case, syn_time=now)
        if action == ADD_TS:
            ts = (tsval, 0)
            entry.added_ts = True
            entry.added_ws = case.case != WS_ONLY
        else:
            entry.ts = TsRewriter()
            entry.ts.seed(seg.ts[0], tsval)
            ts = (tsval, seg.ts[1])
        self.conns[cid] = entry
        self.emit(now, "registration-request", conn_id=cid, ssi=ssi, ows=case.ows, ws=emitted)
        out, _ = rebalance_lengths(replace(seg, ws=emitted, ts=ts))
        return out

    def _expire(self, entry: ConnEntry, now: float) -> None:
        if entry.state == PENDING and now > entry.deadline:
            entry.state = PASSTHROUGH
            self.emit(now, "timeout", conn_id=entry.conn_id, ssi=entry.ssi)

    def _receive(self, entry: ConnEntry, slist, now: float):
        if entry.state == PENDING:
            try:
                _, slist = decode_frame(slist, self.ctx.codebook, "confirm", expected_ssi=entry.ssi)
            except (FormatMismatch, SsiMismatch):
                return slist
            entry.state = REGISTERED
            self.registered.add(entry.conn_id)
            if self.ctx.native_ssi is None:
                self.ctx.native_ssi = entry.ssi
                entry.is_native = True
            self.emit(now, "registration", conn_id=entry.conn_id, ssi=entry.ssi, native=entry.is_native)
        kinds = ("close", "data") if self.awaiting_close else ("data", "close")
        for kind in kinds:
            try:
                frame, cleaned = decode_frame(
                    slist, self.ctx.codebook, kind, expected_ssi=self.ctx.native_ssi if kind == "close" else None
                )
            except (FormatMismatch, SsiMismatch):
                continue
            self._on_frame(entry, frame, now)
            return cleaned
        return slist

    def _on_frame(self, entry: ConnEntry, frame, now: float) -> None:
        if isinstance(frame, Data):
            self.frames.append((frame.seq, frame.bits))
            self.emit(now, "frame-received", conn_id=entry.conn_id, seq=frame.seq)
        elif isinstance(frame, EndOfData):
            self.awaiting_close = True
            self.emit(now, "frame-received", conn_id=entry.conn_id, seq=0)
        elif isinstance(frame, Close):
            self.closed = True
            self.last_bits = frame.last_bits
            for e in self.conns.values():
                if e.state == REGISTERED:
                    e.state = PASSTHROUGH
            self.emit(now, "close", conn_id=entry.conn_id, last_bits=frame.last_bits)

    def reassemble(self, strict: bool = False) -> "Reassembly":
        return reassemble(self.frames, self.last_bits, strict=strict)


class SsShim(_Shim):
    """Steganogram sender: accepts marked SYNs and writes frames into lists."""

    name = "SS"

    def __init__(self, ctx: StegContext, rng: random.Random | None = None, guard_s: float = 0.5):
        super().__init__(ctx, rng)
        self.guard_s = guard_s
        self.bits = ""
        self.pos = 0
        self.next_seq_to_send = 1
        self.last_bits = PAYLOAD_BITS
        self.eod_sent = False
        self.close_sent = False
        self.bits_sent = 0
        self.lists_used = 0
        self.confirmed: set = set()

    def load(self, bits: str) -> None:
        if set(bits) - {"0", "1"}:
            raise ValueError("steganogram must be a string of 0/1")
        self.bits = bits
        self.pos = 0

    @property
    def channel_open(self) -> bool:
        return bool(self.bits) and not self.close_sent

    def process(self, seg: Segment, now: float) -> Segment:
        entry = self.conns.get(seg.conn_id)
        if seg.direction == TO_SERVER:
            if seg.is_syn:
                return self._on_syn(seg, now)
            if entry is None:
                return seg
            out, _ = rebalance_lengths(self._common_to_server(entry, seg))
            self._track_teardown(entry, seg)
            return out
        if entry is None:
            return seg
        out = self._restore_echo(entry, seg)
        if SYN in seg.flags:
            entry.ledger.set_base(seg.seq)
        slist = self._suggestions(seg) if entry.state in (ACCEPTED, CONFIRMED) else None
        if slist is not None and is_embeddable(slist):
            embedded = self._embed(entry, slist, now)
            if embedded is not None:
                out = self._with_list(out, embedded)
        return self._finish_to_client(entry, seg, out)

    def _on_syn(self, seg: Segment, now: float) -> Segment:
        cid = seg.conn_id
        if not self.servers.matches(cid.server, now) or seg.ts is None:
            return seg
        ctx = self.ctx
        try:
            case = recover_original(seg.ws, seg.ts[0], seg.seq, ctx.hck, ctx.digest)
        except NoMatch:
            return seg
        ssi = extract_ssi_from_ts(seg.ts[0])
        state = ACCEPTED if self.channel_open else PASSTHROUGH
        entry = ConnEntry(cid, state, ssi, ows=case, syn_time=now)
        if case.case == WS_AND_TS:
            # the client's tsval was overwritten; continue from our own clock
            synthetic = int(now * 1000) & MASK32
            entry.ts = TsRewriter()
            entry.ts.seed(seg.ts[0], synthetic)
            out = replace(seg, ws=case.ows, ts=(synthetic, seg.ts[1]))
        elif case.case == WS_ONLY:
            out = replace(seg, ws=case.ows, ts=None)
        else:
            out = replace(seg, ws=None, ts=None)
        self.conns[cid] = entry
        self.emit(now, "syn-accepted" if state == ACCEPTED else "syn-restored", conn_id=cid, ssi=ssi, ows=case.ows)
        out, _ = rebalance_lengths(out)
        return out

    def _next_frame(self, now: float):
        if self.pos < len(self.bits):
            chunk = self.bits[self.pos : self.pos + PAYLOAD_BITS]
            n = len(chunk)
            pad = PAYLOAD_BITS - n
            payload = (int(chunk, 2) << pad) | (self.rng.getrandbits(pad) if pad else 0)
            frame = Data(self.next_seq_to_send, payload)
            self.pos += n
            self.last_bits = n
            self.bits_sent += n
            self.lists_used += 1
            self.next_seq_to_send = next_seq(self.next_seq_to_send)
            return frame
        if not self.eod_sent:
            self.eod_sent = True
            return EndOfData(self.rng.getrandbits(PAYLOAD_BITS))
        if not self.close_sent:
            self.close_sent = True
            return Close(self.ctx.native_ssi, self.last_bits)
        return None

    def _embed(self, entry: ConnEntry, slist, now: float):
        cb = self.ctx.codebook
        first = entry.state == ACCEPTED
        if first:
            latest = entry.syn_time + self.ctx.registration_timeout_s - self.guard_s
            if now > latest or not self.channel_open:
                entry.state = PASSTHROUGH
                self.emit(now, "confirm-skipped", conn_id=entry.conn_id, ssi=entry.ssi)
                return None
            entry.state = CONFIRMED
            self.confirmed.add(entry.conn_id)
            if self.ctx.native_ssi is None:
                self.ctx.native_ssi = entry.ssi
                entry.is_native = True
            self.emit(now, "registration-confirm", conn_id=entry.conn_id, ssi=entry.ssi, native=entry.is_native)
        frame = self._next_frame(now)
        if frame is None and not first:
            return None
        out = slist
        if frame is not None:
            out = encode_frame(frame, out, cb, self.rng)
            self._log_frame(entry, frame, now)
        if first:
            out = encode_frame(RegistrationConfirm(entry.ssi), out, cb, self.rng)
        entry.responses += 1
        return out

    def _log_frame(self, entry: ConnEntry, frame, now: float) -> None:
        if isinstance(frame, Data):
            self.emit(now, "frame-sent", conn_id=entry.conn_id, seq=frame.seq)
        elif isinstance(frame, EndOfData):
            self.emit(now, "frame-sent", conn_id=entry.conn_id, seq=0)
        else:
            self.emit(now, "close", conn_id=entry.conn_id, last_bits=frame.last_bits)
            self.emit(now, "transfer-complete", bits_sent=self.bits_sent)


# reassembly


@dataclass
class Reassembly:
    bits: str
    frames: int
    missing: list[int]
    closed: bool

    @property
    def complete(self) -> bool:
        return self.closed and not self.missing


def _unwrap(seqs: Iterable[int]) -> list[int]:
    """Map wrapped sequence numbers (1..SEQ_MAX) to stream positions.

    Each frame lands in the wrap epoch closest to the highest position seen
    so far, which is exact while reordering stays under half the space.
    """
    out = []
    ref = None
    for s in seqs:
        p = s - 1
        pos = p if ref is None else p + round((ref - p) / SEQ_MAX) * SEQ_MAX
        out.append(pos)
        ref = pos if ref is None else max(ref, pos)
    return out


def reassemble(
    frames: Iterable[tuple[int, str]],
    last_bits: int | None = None,
    strict: bool = False,
) -> Reassembly:
    """Order data frames by sequence number and trim the final one.

    ``frames`` holds ``(seq, 100-char bit string)`` in arrival order.
    ``last_bits`` comes from the close message; ``None`` means the channel
    was not closed and every frame counts in full.
    """
    frames = list(frames)
    positions = _unwrap([s for s, _ in frames])
    by_pos = {}
    for pos, (_, bits) in zip(positions, frames):
        by_pos.setdefault(pos, bits)
    if not by_pos:
        return Reassembly("", 0, [], last_bits is not None)
    lo, hi = min(0, min(by_pos)), max(by_pos)
    missing = [p % SEQ_MAX + 1 for p in range(lo, hi + 1) if p not in by_pos]
    parts = []
    for p in range(lo, hi + 1):
        if p not in by_pos:
            break
        parts.append(by_pos[p])
    if parts and last_bits is not None and not missing:
        parts[-1] = parts[-1][:last_bits]
    result = Reassembly("".join(parts), len(by_pos), missing, last_bits is not None)
    if strict and missing:
        raise GapTimeout(missing, result.bits)
    return result
