import json
import random

import pytest

from stegsuggest.core import encode_frame, Data
from stegsuggest.harness import (
    FILLER_WORDS,
    Faults,
    SimConfig,
    Simulation,
    estimate_bandwidth,
    mock_server_respond,
    read_channel,
    replay_receiver,
    run_simulation,
    write_channel,
)
from stegsuggest.wire import SuggestRequest, parse_response

from conftest import random_bits

ONE_SEARCH = dict(
    num_users=1,
    requests_per_search=7,
    row_count_distribution={10: 1.0},
    arrival="fixed",
    max_searches_per_user=1,
    duration=60,
)


def test_estimator_examples():
    assert estimate_bandwidth(7, 100, 1 / 3, 1) == pytest.approx(0.0648148, abs=1e-6)
    assert round(estimate_bandwidth(7, 100, 1 / 3, 1), 4) == 0.0648
    assert round(estimate_bandwidth(7, 100, 1 / 3, 100), 2) == 6.48
    assert estimate_bandwidth(0, 100, 1, 1) == estimate_bandwidth(7, 0, 1, 1) == 0
    assert estimate_bandwidth(7, 100, 0, 1) == estimate_bandwidth(7, 100, 1, 0) == 0
    with pytest.raises(ValueError):
        estimate_bandwidth(-1, 100, 1, 1)


def test_mock_server(codebook):
    rng = random.Random(1)
    ten = mock_server_respond(SuggestRequest("steganos"), rng, rows=10)
    assert len(ten.rows) == 10 and all(r.startswith("steganos") for r in ten.rows)
    assert len(set(ten.rows)) == 10
    four = mock_server_respond(SuggestRequest("steganos"), rng, rows=4)
    assert len(encode_frame(Data(1, 0), four, codebook, rng).rows) == 10
    a = [mock_server_respond(SuggestRequest("ab"), random.Random(5)) for _ in range(2)]
    assert a[0] == a[1]
    # the simulation drops any filler word that happens to be a codebook word
    sim = Simulation(SimConfig(seed=1), "1")
    assert sim.codebook == codebook
    assert not set(sim.vocab) & codebook.words()
    assert set(sim.vocab) < set(FILLER_WORDS)


def test_mock_server_row_distribution():
    rng = random.Random(2)
    counts = [len(mock_server_respond(SuggestRequest("x"), rng, {3: 0.5, 7: 0.5}).rows) for _ in range(2000)]
    assert set(counts) == {3, 7}
    assert abs(counts.count(3) / 2000 - 0.5) < 0.05


def test_one_search_carries_700_bits():
    bits = random_bits(random.Random(1), 700)
    sim = Simulation(SimConfig(seed=3, **ONE_SEARCH), bits)
    report = sim.run()
    assert report.searches_simulated == 1
    assert report.lists_used == 7
    assert report.bits_sent == report.bits_received == 700
    assert sim.recovered() == bits
    assert sim.violations == []
    assert sim.transparency_mismatches() == []


def test_noop_channel_is_byte_identical():
    sim = Simulation(SimConfig(seed=4, num_users=5, duration=1800, searches_per_hour_per_user=2), "")
    report = sim.run()
    assert report.bits_sent == report.bits_received == report.lists_used == 0
    assert report.searches_simulated > 0
    assert sim.violations == []
    for t in sim.transcripts.values():
        assert [s.payload for s in t.server_sent] == [s.payload for s in t.client_recv]
        assert [s.payload for s in t.client_sent] == [s.payload for s in t.server_recv]
    assert sim.transparency_mismatches() == []


def test_endpoints_see_unmodified_traffic():
    bits = random_bits(random.Random(2), 20_000)
    sim = Simulation(SimConfig(seed=8, num_users=40, searches_per_hour_per_user=1), bits)
    report = sim.run()
    assert report.bits_received > 1000
    assert sim.violations == []
    assert sim.transparency_mismatches() == []
    assert sim.recovered() == bits[: report.bits_received]


def test_bandwidth_matches_estimate():
    # pooled over seeds: a single hour holds only about 31 searches
    rng = random.Random(3)
    runs = []
    for seed in range(20):
        cfg = SimConfig(seed=1000 + seed, num_users=100)
        sim = Simulation(cfg, random_bits(rng, 60_000), record_transcripts=False)
        runs.append(sim.run().achieved_bandwidth_bps)
    pooled = sum(runs) / len(runs)
    expected = estimate_bandwidth(7.1, 100, 0.31, 100)
    assert abs(pooled - expected) / expected < 0.15


def test_determinism(tmp_path):
    bits = random_bits(random.Random(4), 3000)
    cfg = SimConfig(seed=77, num_users=30)
    a = run_simulation(cfg, bits, out_dir=tmp_path / "a")
    b = run_simulation(cfg, bits, out_dir=tmp_path / "b")
    assert a.to_json().replace("/a/", "/b/") == b.to_json()
    for name in ("trace.jsonl", "events.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = run_simulation(SimConfig(seed=78, num_users=30), bits)
    assert c.to_json() != a.to_json()


def test_report_invariants():
    bits = random_bits(random.Random(5), 5000)
    report = run_simulation(SimConfig(seed=9, num_users=20), bits)
    assert report.lists_used * 100 >= report.bits_sent >= report.bits_received
    assert report.achieved_bandwidth_bps == report.bits_received / report.virtual_elapsed_s


def test_incomplete_is_reported():
    bits = random_bits(random.Random(6), 5000)
    report = run_simulation(SimConfig(seed=10, num_users=2, duration=600), bits)
    assert report.incomplete and report.bits_received < 5000 and not report.closed
    with pytest.raises(ValueError):
        run_simulation(SimConfig(), "")


@pytest.mark.parametrize(
    "faults,event",
    [
        (Faults(strip_syn_ts_p=0.5), None),
        (Faults(corrupt_confirm_p=1.0), None),
        (Faults(slow_first_response_p=0.5), "confirm-skipped"),
    ],
)
def test_faults_keep_registration_sound(faults, event):
    bits = random_bits(random.Random(7), 4000)
    sim = Simulation(SimConfig(seed=12, num_users=40, searches_per_hour_per_user=1), bits, faults)
    report = sim.run()
    assert sim.sr.registered == sim.ss.confirmed
    assert sim.recovered() == bits[: report.bits_received]
    assert report.bits_received > 0
    if event:
        assert any(e["event"] == event for e in sim.ss.events)
    timeouts = {e["conn_id"] for e in sim.sr.events if e["event"] == "timeout"}
    assert not timeouts & {str(c) for c in sim.sr.registered}


def test_strip_fault_blocks_registration():
    sim = Simulation(SimConfig(seed=12, num_users=40, searches_per_hour_per_user=1), "1" * 4000, Faults(strip_syn_ts_p=1.0))
    report = sim.run()
    assert report.registrations == 0 and report.bits_received == 0


def test_corrupt_fault_applied():
    sim = Simulation(SimConfig(seed=13, **ONE_SEARCH), "0" * 700, Faults(corrupt_confirm_p=1.0))
    sim.run()
    assert not sim._corrupt  # consumed
    assert sim.recovered() == "0" * 700
    assert sim.transparency_mismatches() == []


def test_channel_file_replay(tmp_path, codebook):
    bits = random_bits(random.Random(8), 1500)
    cfg = SimConfig(seed=14, num_users=40)
    sim = Simulation(cfg, bits)
    report = sim.run()
    assert report.closed
    path = tmp_path / "channel.jsonl"
    write_channel(sim, path)
    header, records = read_channel(path)
    assert header["fingerprint"] == codebook.key_fingerprint
    sr = replay_receiver(records, codebook, cfg.hck, header["registration_timeout_s"])
    assert sr.reassemble().bits == bits


def test_config_text_round_trip(tmp_path):
    cfg = SimConfig(seed=5, num_users=3, row_count_distribution={10: 0.5, 4: 0.5}, arrival="fixed")
    text = cfg.to_text()
    assert SimConfig.from_text(text) == cfg
    path = tmp_path / "c.conf"
    path.write_text("# comment\nseed = 0x10\nnum_users = 2  # trailing\n")
    loaded = SimConfig.from_file(path)
    assert loaded.seed == 16 and loaded.num_users == 2
    with pytest.raises(ValueError):
        SimConfig.from_text("bogus = 1")
    with pytest.raises(ValueError):
        SimConfig(num_users=-1)
    with pytest.raises(ValueError):
        SimConfig(row_count_distribution={11: 1.0})


def test_outputs_written(tmp_path):
    report = run_simulation(SimConfig(seed=15, **ONE_SEARCH), "1" * 700, out_dir=tmp_path)
    assert report.trace_path == str(tmp_path / "trace.jsonl")
    assert json.loads((tmp_path / "report.json").read_text())["bits_received"] == 700
    lines = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert lines and all(json.loads(line)["conn_id"] for line in lines)
    ts = [json.loads(line)["timestamp_s"] for line in lines]
    assert ts == sorted(ts)
