"""Command-line entry point.

Payload files hold a first line ``bits=<n>`` followed by ``ceil(n/8)`` raw
bytes, most significant bit first.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .codebook import (
    BOOK_SIZE,
    ChannelKey,
    build_codebook,
    load_codebook,
    read_wordlist,
    save_codebook,
    synthetic_wordlist,
)
from .errors import StegSuggestError
from .harness import (
    SimConfig,
    Simulation,
    codebook_for,
    estimate_bandwidth,
    read_channel,
    replay_receiver,
    write_channel,
)
from .stats import analyze, read_trace, render_report

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def read_payload(path: str | Path) -> str:
    data = Path(path).read_bytes()
    head, sep, body = data.partition(b"\n")
    if not sep or not head.startswith(b"bits="):
        raise ValueError(f"{path}: payload must start with a 'bits=<n>' line")
    n = int(head[5:])
    if len(body) != (n + 7) // 8:
        raise ValueError(f"{path}: header says {n} bits but {len(body)} bytes follow")
    bits = "".join(format(b, "08b") for b in body)
    return bits[:n]


def write_payload(path: str | Path, bits: str) -> None:
    padded = bits + "0" * (-len(bits) % 8)
    body = bytes(int(padded[i : i + 8], 2) for i in range(0, len(padded), 8))
    Path(path).write_bytes(f"bits={len(bits)}\n".encode() + body)


def _hours(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("-")
    try:
        span = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("expected START-END, e.g. 9-17") from None
    if not 0 <= span[0] < span[1] <= 24:
        raise argparse.ArgumentTypeError("hours must satisfy 0 <= START < END <= 24")
    return span


def _key(text: str) -> ChannelKey:
    try:
        return ChannelKey.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stegsuggest", description="Simulated covert channel in search-suggestion traffic.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    c = sub.add_parser("codebook-build", help="build a keyed codebook from a ranked word list")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--wordlist", help="TSV file of rank, word, part of speech")
    src.add_argument("--synthetic", action="store_true", help="use the built-in synthetic 5000-word list")
    c.add_argument("--key", type=_key, required=True, help="64-bit channel key, e.g. 0x0123456789abcdef")
    c.add_argument("--digest", default="sha1", help="hash used for session identifiers (default sha1)")
    c.add_argument("--out", required=True, help="output codebook file")

    c = sub.add_parser("codebook-inspect", help="print group sizes and key fingerprint of a codebook")
    c.add_argument("book", help="codebook file")
    c.add_argument("--key", type=_key, help="verify the book against this key")

    c = sub.add_parser("sim-run", help="run a simulation and write report, trace and recovered payload")
    c.add_argument("--config", required=True, help="key=value simulation config")
    c.add_argument("--payload", required=True, help="payload file to transfer")
    c.add_argument("--out-dir", required=True, help="directory for outputs")

    c = sub.add_parser("send", help="simulate the sending half and record the channel file")
    c.add_argument("--config", required=True, help="key=value simulation config")
    c.add_argument("--payload", required=True, help="payload file to transfer")
    c.add_argument("--channel", required=True, help="channel file to write")

    c = sub.add_parser("recv", help="decode a recorded channel file")
    c.add_argument("--config", required=True, help="config naming the key and word list")
    c.add_argument("--channel", required=True, help="channel file written by send")
    c.add_argument("--out", required=True, help="payload file to write")

    c = sub.add_parser("stats", help="analyze a trace file")
    c.add_argument("trace", help="trace file (JSON lines), or - for standard input")
    c.add_argument("--filter-min-searches", type=int, default=5, help="keep users with at least this many searches")
    c.add_argument("--work-hours", type=_hours, default=(9, 17), help="working-hours window, default 9-17")
    c.add_argument("--format", choices=("table", "json-lines"), default="table", help="output format")

    c = sub.add_parser("estimate", help="closed-form steganographic bandwidth")
    c.add_argument("--lists-per-search", type=float, default=7.0, help="suggestion lists per search")
    c.add_argument("--bits-per-list", type=int, default=100, help="hidden bits per list")
    c.add_argument("--searches-per-hour", type=float, default=1 / 3, help="searches per hour per user")
    c.add_argument("--users", type=int, default=1, help="number of users")
    return p


def _cmd_codebook_build(args) -> int:
    words = synthetic_wordlist() if args.synthetic else read_wordlist(args.wordlist)
    cb = build_codebook(words, args.key, args.digest)
    save_codebook(cb, args.out)
    print(f"wrote {len(cb)} words to {args.out} (fingerprint {cb.key_fingerprint})")
    return EXIT_OK


def _cmd_codebook_inspect(args) -> int:
    cb = load_codebook(args.book, args.key)
    print(f"fingerprint {cb.key_fingerprint}")
    print(f"digest      {cb.digest}")
    for g, words in enumerate(cb.groups):
        print(f"group {g}     {len(words)} words")
    print(f"total       {len(cb)} of {BOOK_SIZE}")
    if args.key is not None:
        print("key         matches")
    return EXIT_OK


def _simulate(config_path: str, payload_path: str) -> Simulation:
    sim = Simulation(SimConfig.from_file(config_path), read_payload(payload_path), record_transcripts=False)
    sim.run()
    return sim


def _cmd_sim_run(args) -> int:
    sim = _simulate(args.config, args.payload)
    out = Path(args.out_dir)
    report = sim.write_outputs(out)
    write_channel(sim, out / "channel.jsonl")
    write_payload(out / "recovered.bin", sim.recovered())
    sys.stdout.write(report.to_table())
    print(report.to_json())
    return EXIT_OK


def _cmd_send(args) -> int:
    sim = _simulate(args.config, args.payload)
    write_channel(sim, args.channel)
    print(json.dumps({"bits_sent": sim.ss.bits_sent, "lists_used": sim.ss.lists_used, "close_sent": sim.ss.close_sent}))
    return EXIT_OK


def _cmd_recv(args) -> int:
    config = SimConfig.from_file(args.config)
    cb = codebook_for(config)
    header, records = read_channel(args.channel)
    if header.get("fingerprint") != cb.key_fingerprint:
        raise StegSuggestError("channel file was recorded with a different key")
    sr = replay_receiver(records, cb, config.hck, header.get("registration_timeout_s", 5.0), header.get("digest", "sha1"))
    result = sr.reassemble()
    write_payload(args.out, result.bits)
    print(json.dumps({"bits_received": len(result.bits), "frames": result.frames, "closed": result.closed, "missing": result.missing[:16]}))
    return EXIT_OK


def _cmd_stats(args) -> int:
    if args.trace == "-":
        report = analyze(read_trace(sys.stdin), args.filter_min_searches, args.work_hours)
    else:
        with open(args.trace, encoding="utf-8") as fh:
            report = analyze(read_trace(fh), args.filter_min_searches, args.work_hours)
    sys.stdout.write(render_report(report, args.format))
    return EXIT_OK


def _cmd_estimate(args) -> int:
    bps = estimate_bandwidth(args.lists_per_search, args.bits_per_list, args.searches_per_hour, args.users)
    print(f"{bps:.2f} bit/s")
    return EXIT_OK


_COMMANDS = {
    "codebook-build": _cmd_codebook_build,
    "codebook-inspect": _cmd_codebook_inspect,
    "sim-run": _cmd_sim_run,
    "send": _cmd_send,
    "recv": _cmd_recv,
    "stats": _cmd_stats,
    "estimate": _cmd_estimate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (StegSuggestError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"stegsuggest: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
