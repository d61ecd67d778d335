"""Naive second-pass tallies, one independent loop per quantity."""


def tally(records, min_searches=5):
    recs = list(records)
    out = {"records": len(recs)}
    kinds = {}
    for r in recs:
        if r.client_kind is not None:
            kinds[r.client_kind] = kinds.get(r.client_kind, 0) + 1
    out["by_client"] = kinds
    syn = [r for r in recs if r.direction == "to_server" and "SYN" in r.flags and "ACK" not in r.flags]
    out["syn_total"] = len(syn)
    out["with_ws"] = len([r for r in syn if r.ws is not None])
    out["with_ts"] = len([r for r in syn if r.ts_present])
    ws = {}
    for r in syn:
        key = "absent" if r.ws is None else str(r.ws)
        count, ts = ws.get(key, (0, 0))
        ws[key] = (count + 1, ts + (1 if r.ts_present else 0))
    out["ws"] = ws
    searches = {}
    for r in recs:
        if r.user_id is not None and r.search_id is not None:
            searches.setdefault(r.user_id, set()).add(r.search_id)
    requests = {}
    for r in recs:
        if r.user_id is not None and r.client_kind is not None:
            requests[r.user_id] = requests.get(r.user_id, 0) + 1
    kept = [u for u in set(searches) | set(requests) if len(searches.get(u, ())) >= min_searches]
    out["users_kept"] = len(kept)
    out["searches_kept"] = sum(len(searches[u]) for u in kept)
    out["requests_kept"] = sum(requests.get(u, 0) for u in kept)
    return out
