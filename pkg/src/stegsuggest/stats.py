"""Trace analyzer: request mix, per-user search behaviour, SYN option usage.

One pass over the records, memory proportional to the number of users and
searches. A "SYN record" is a client-to-server segment with SYN and without
ACK. Per-user figures use only users with at least ``min_searches_filter``
searches; standard deviations are population deviations.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, TextIO

from .wire import CLIENT_KINDS, TO_SERVER, TraceRecord

DAY = 86400.0
WS_ABSENT = "absent"


@dataclass
class MeanStd:
    mean: float | None
    std: float | None
    population: int

    @classmethod
    def of(cls, values: list[float]) -> "MeanStd":
        n = len(values)
        if not n:
            return cls(None, None, 0)
        mean = math.fsum(values) / n
        var = math.fsum((v - mean) ** 2 for v in values) / n
        return cls(mean, math.sqrt(var), n)


@dataclass
class StatsReport:
    records: int
    by_client: dict[str, dict]
    per_user: dict[str, MeanStd]
    syn_stats: dict
    ws_table: dict[str, dict]
    users_total: int = 0
    users_kept: int = 0
    work_hours: tuple[int, int] = (9, 17)
    empty: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["work_hours"] = list(self.work_hours)
        return d


def _pct(part: int, whole: int) -> float | None:
    return 100.0 * part / whole if whole else None


def _work_seconds(t0: float, t1: float, hours: tuple[int, int]) -> float:
    """Overlap of [t0, t1] with the daily working window."""
    lo, hi = hours[0] * 3600.0, hours[1] * 3600.0
    total = 0.0
    day = math.floor(t0 / DAY)
    while day * DAY <= t1:
        a, b = max(t0, day * DAY + lo), min(t1, day * DAY + hi)
        total += max(0.0, b - a)
        day += 1
    return total


def _in_work_hours(t: float, hours: tuple[int, int]) -> bool:
    return hours[0] * 3600.0 <= t % DAY < hours[1] * 3600.0


def _ws_key(ws: int | None) -> str:
    return WS_ABSENT if ws is None else str(ws)


def analyze(
    trace: Iterable[TraceRecord],
    min_searches_filter: int = 5,
    work_hours: tuple[int, int] = (9, 17),
) -> StatsReport:
    n = 0
    kinds: Counter = Counter()
    t_min = t_max = None
    user_requests: Counter = Counter()
    # first timestamp of each (user, search)
    search_start: dict[tuple, float] = {}
    syn_total = syn_ws = syn_ts = 0
    ws_syn: Counter = Counter()
    ws_ts: Counter = Counter()

    for rec in trace:
        n += 1
        t = rec.timestamp_s
        t_min = t if t_min is None else min(t_min, t)
        t_max = t if t_max is None else max(t_max, t)
        if rec.client_kind is not None:
            kinds[rec.client_kind] += 1
            if rec.user_id is not None:
                user_requests[rec.user_id] += 1
        if rec.user_id is not None and rec.search_id is not None:
            key = (rec.user_id, rec.search_id)
            if key not in search_start or t < search_start[key]:
                search_start[key] = t
        if rec.direction == TO_SERVER and "SYN" in rec.flags and "ACK" not in rec.flags:
            syn_total += 1
            syn_ws += rec.ws is not None
            syn_ts += rec.ts_present
            k = _ws_key(rec.ws)
            ws_syn[k] += 1
            ws_ts[k] += rec.ts_present

    requests = sum(kinds.values())
    by_client = {}
    for k in sorted(kinds, key=lambda k: (-kinds[k], CLIENT_KINDS.index(k) if k in CLIENT_KINDS else 99, k)):
        by_client[k] = {"count": kinds[k], "percent": _pct(kinds[k], requests)}

    searches: Counter = Counter()
    work_searches: Counter = Counter()
    for (u, _), t in search_start.items():
        searches[u] += 1
        if _in_work_hours(t, work_hours):
            work_searches[u] += 1
    users = set(searches) | set(user_requests)
    kept = sorted(u for u in users if searches[u] >= min_searches_filter)
    hours = _work_seconds(t_min, t_max, work_hours) / 3600.0 if n else 0.0
    per_user = {
        "searches_per_user": MeanStd.of([searches[u] for u in kept]),
        "requests_per_user": MeanStd.of([user_requests[u] for u in kept]),
        "requests_per_search": MeanStd.of([user_requests[u] / searches[u] for u in kept if searches[u]]),
        "searches_per_hour": MeanStd.of([work_searches[u] / hours for u in kept] if hours > 0 else []),
    }

    syn_stats = {
        "syn_total": syn_total,
        "with_ws": syn_ws,
        "with_ts": syn_ts,
        "ws_percent": _pct(syn_ws, syn_total),
        "ts_percent": _pct(syn_ts, syn_total),
    }
    ws_order = sorted((k for k in ws_syn if k != WS_ABSENT), key=int) + ([WS_ABSENT] if WS_ABSENT in ws_syn else [])
    ws_table = {
        k: {
            "syn_count": ws_syn[k],
            "syn_percent": _pct(ws_syn[k], syn_total),
            "ts_count": ws_ts[k],
            "ts_percent": _pct(ws_ts[k], ws_syn[k]),
        }
        for k in ws_order
    }
    notes = ["standard deviations are population deviations"]
    if not n:
        notes.append("empty trace: zero population")
    return StatsReport(
        records=n,
        by_client=by_client,
        per_user=per_user,
        syn_stats=syn_stats,
        ws_table=ws_table,
        users_total=len(users),
        users_kept=len(kept),
        work_hours=tuple(work_hours),
        empty=n == 0,
        notes=notes,
    )


def read_trace(stream: TextIO) -> Iterable[TraceRecord]:
    for line in stream:
        if line.strip():
            yield TraceRecord.from_json(line)


def _fmt(v, digits: int = 2) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def _table(title: str, header: list[str], rows: list[list]) -> list[str]:
    cells = [header] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    out = [title, line(header), "  ".join("-" * w for w in widths)]
    out.extend(line(r) for r in cells[1:])
    return out + [""]


def render_report(report: StatsReport, format: str = "table") -> str:
    if format == "json-lines":
        d = report.to_dict()
        lines = [{"section": "summary", "records": d["records"], "users_total": d["users_total"], "users_kept": d["users_kept"], "work_hours": d["work_hours"], "empty": d["empty"]}]
        lines += [{"section": "by_client", "client_kind": k, **v} for k, v in d["by_client"].items()]
        lines += [{"section": "per_user", "metric": k, **v} for k, v in d["per_user"].items()]
        lines.append({"section": "syn_stats", **d["syn_stats"]})
        lines += [{"section": "ws_table", "ws": k, **v} for k, v in d["ws_table"].items()]
        lines.append({"section": "notes", "notes": d["notes"]})
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in lines)
    if format != "table":
        raise ValueError(f"unknown format {format!r}")
    out = []
    out += _table(
        "Requests by client type",
        ["client", "requests", "percent"],
        [[k, v["count"], v["percent"]] for k, v in report.by_client.items()],
    )
    lo, hi = report.work_hours
    out += _table(
        f"Per-user statistics ({report.users_kept} of {report.users_total} users, working hours {lo}-{hi})",
        ["metric", "mean", "std"],
        [[k.replace("_", " "), m.mean, m.std] for k, m in report.per_user.items()],
    )
    s = report.syn_stats
    out += _table(
        "SYN segments",
        ["total", "with WS", "% WS", "with TS", "% TS"],
        [[s["syn_total"], s["with_ws"], s["ws_percent"], s["with_ts"], s["ts_percent"]]],
    )
    out += _table(
        "Window scale values",
        ["WS", "SYNs", "% of SYNs", "with TS", "% with TS"],
        [[k, v["syn_count"], v["syn_percent"], v["ts_count"], v["ts_percent"]] for k, v in report.ws_table.items()],
    )
    out += [f"note: {n}" for n in report.notes]
    return "\n".join(out) + "\n"
