import json
import random
import subprocess
import sys
from pathlib import Path

import pytest

from stegsuggest.cli import main, read_payload, write_payload

from conftest import DATA, random_bits

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONF = ROOT / "configs" / "default.conf"


@pytest.fixture
def payload(tmp_path):
    bits = random_bits(random.Random(1000), 1000)
    path = tmp_path / "payload.bin"
    write_payload(path, bits)
    return path, bits


def test_payload_file_round_trip(tmp_path):
    for n in (0, 1, 7, 8, 9, 250):
        bits = random_bits(random.Random(n), n)
        write_payload(tmp_path / "p", bits)
        assert read_payload(tmp_path / "p") == bits
        assert (tmp_path / "p").read_bytes().startswith(f"bits={n}\n".encode())


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command_and_bad_flag(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["estimate", "--users", "many"]) == 1
    assert main(["stats", "x", "--work-hours", "17-9"]) == 1


def test_estimate(capsys):
    args = ["estimate", "--lists-per-search", "7", "--bits-per-list", "100", "--searches-per-hour", "0.3333", "--users", "100"]
    assert main(args) == 0
    assert capsys.readouterr().out.strip() == "6.48 bit/s"


def test_sim_run_default_config(tmp_path, payload, capsys):
    path, bits = payload
    out = tmp_path / "out"
    assert main(["sim-run", "--config", str(DEFAULT_CONF), "--payload", str(path), "--out-dir", str(out)]) == 0
    assert read_payload(out / "recovered.bin") == bits
    assert (out / "recovered.bin").read_bytes() == path.read_bytes()
    report = json.loads((out / "report.json").read_text())
    assert report["bits_received"] == 1000 and report["closed"]
    for name in ("trace.jsonl", "events.jsonl", "channel.jsonl", "report.txt"):
        assert (out / name).stat().st_size > 0
    assert "bits_received" in capsys.readouterr().out


def test_send_then_recv(tmp_path, payload):
    path, bits = payload
    channel = tmp_path / "channel.jsonl"
    assert main(["send", "--config", str(DEFAULT_CONF), "--payload", str(path), "--channel", str(channel)]) == 0
    got = tmp_path / "got.bin"
    assert main(["recv", "--config", str(DEFAULT_CONF), "--channel", str(channel), "--out", str(got)]) == 0
    assert read_payload(got) == bits


def test_recv_wrong_key(tmp_path, payload, capsys):
    path, _ = payload
    channel = tmp_path / "channel.jsonl"
    main(["send", "--config", str(DEFAULT_CONF), "--payload", str(path), "--channel", str(channel)])
    other = tmp_path / "other.conf"
    other.write_text(DEFAULT_CONF.read_text().replace("0x0123456789abcdef", "0x1111111111111111"))
    assert main(["recv", "--config", str(other), "--channel", str(channel), "--out", str(tmp_path / "x")]) == 2
    assert "different key" in capsys.readouterr().err


def test_codebook_build_and_inspect(tmp_path, capsys):
    book = tmp_path / "book.tsv"
    key = "0x0123456789ABCDEF"
    assert main(["codebook-build", "--wordlist", str(DATA / "wordlist_5000.tsv"), "--key", key, "--out", str(book)]) == 0
    golden = {tuple(l.split("\t")) for l in (DATA / "golden_codebook.tsv").read_text().splitlines()}
    saved = {tuple(l.split("\t")) for l in book.read_text().splitlines()[1:]}
    assert saved == golden
    capsys.readouterr()
    assert main(["codebook-inspect", str(book), "--key", key]) == 0
    out = capsys.readouterr().out
    assert out.count("1024 words") == 4 and "fingerprint" in out and "matches" in out
    assert main(["codebook-inspect", str(book), "--key", "0x1"]) == 2
    assert main(["codebook-inspect", str(tmp_path / "missing.tsv")]) == 2


def test_codebook_build_requires_source(capsys):
    assert main(["codebook-build", "--key", "1", "--out", "x"]) == 1


def test_bad_payload_is_data_error(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"no header")
    assert main(["sim-run", "--config", str(DEFAULT_CONF), "--payload", str(bad), "--out-dir", str(tmp_path / "o")]) == 2


def test_help_documents_every_flag():
    for cmd in ("codebook-build", "codebook-inspect", "sim-run", "send", "recv", "stats", "estimate"):
        res = subprocess.run([sys.executable, "-m", "stegsuggest.cli", cmd, "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "usage" in res.stdout
