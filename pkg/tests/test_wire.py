import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegsuggest.errors import ParseError, RowTooShort
from stegsuggest.harness import mock_server_respond
from stegsuggest.wire import (
    ACK,
    SYN,
    TO_CLIENT,
    TO_SERVER,
    ConnId,
    Segment,
    SuggestionList,
    SuggestRequest,
    TraceRecord,
    append_word,
    declared_content_length,
    parse_request,
    parse_response,
    parse_suggestions,
    rebalance_lengths,
    replace_body,
    request_payload,
    response_payload,
    segment_from_dict,
    segment_to_dict,
    serialize_suggestions,
    split_http,
    strip_last_words,
)

from conftest import DATA

CID = ConnId("10.0.0.2", 40000, "74.125.39.99", 80)


def test_fig3_body_parses(fig3):
    assert fig3.query == "steganos"
    assert len(fig3.rows) == 10
    assert fig3.rows[1] == "steganos"
    assert all(r.startswith("steganos") for r in fig3.rows)
    assert serialize_suggestions(fig3) == (DATA / "fig3_body.txt").read_bytes()


def test_empty_list_round_trip():
    empty = SuggestionList("abc", ())
    body = serialize_suggestions(empty)
    assert b", [], " in body
    assert parse_suggestions(body) == empty


def test_generated_lists_round_trip():
    rng = random.Random(3)
    for i in range(1000):
        q = rng.choice(["s", "st", "steg", "weather to", "a b c"])
        slist = mock_server_respond(SuggestRequest(q), rng)
        body = serialize_suggestions(slist)
        assert parse_suggestions(body) == slist
        assert serialize_suggestions(parse_suggestions(body)) == body


@settings(max_examples=200, deadline=None)
@given(
    st.text(alphabet="abcxyz 19", min_size=1, max_size=8),
    st.lists(st.text(alphabet="abc def\\u003C/", max_size=20), max_size=10),
)
def test_round_trip_property(query, tails):
    # keep escapes well-formed: a lone trailing backslash would swallow the quote
    tails = [t.replace("\\", "\\\\") for t in tails]
    slist = SuggestionList(query, tuple(query + t for t in tails))
    assert parse_suggestions(serialize_suggestions(slist)) == slist


@pytest.mark.parametrize(
    "bad",
    [b"", b"window.google.ac.h([", b'window.google.ac.h(["q", [{"q",0,"1"}], {}])', b'window.google.ac.h(["q", [{"x",0,"0"}], {}])', b"\xff"],
)
def test_parse_errors_carry_offset(bad):
    with pytest.raises(ParseError) as exc:
        parse_suggestions(bad)
    assert exc.value.offset >= 0


def test_row_must_start_with_query():
    with pytest.raises(ValueError):
        SuggestionList("abc", ("abd",))


def test_append_and_strip():
    assert append_word("steganos milk", "age") == "steganos milk age"
    assert strip_last_words("steganos download working", 1) == ("steganos download", ["working"])
    assert strip_last_words("steganos a b c", 2, "steganos") == ("steganos a", ["b", "c"])
    assert strip_last_words("steganos x", 0) == ("steganos x", [])
    with pytest.raises(RowTooShort):
        strip_last_words("steganos", 1, "steganos")
    with pytest.raises(RowTooShort):
        strip_last_words("steganos x", 2, "steganos")


def test_segment_lengths():
    seg = Segment(CID, TO_SERVER, {SYN}, 1, ws=2, ts=(5, 0))
    assert seg.total_length == 40 + 16
    assert seg.data_offset == 9
    assert Segment(CID, TO_SERVER, {SYN}, 1).total_length == 40
    assert Segment(CID, TO_SERVER, {SYN}, 1, ws=2).total_length == 44
    with pytest.raises(ValueError):
        Segment(CID, TO_SERVER, {ACK}, 1, ws=2)
    with pytest.raises(ValueError):
        Segment(CID, TO_SERVER, {SYN}, 1, ws=15)


def _response_segment(slist):
    return Segment(CID, TO_CLIENT, {ACK}, 100, 1, payload=response_payload(slist))


def test_rebalance_growth(fig3):
    seg = _response_segment(fig3)
    assert rebalance_lengths(seg) == (seg, 0)
    grown = fig3.with_rows((fig3.rows[0] + " abc",) + fig3.rows[1:])
    edited = replace(seg, payload=replace_body(seg.payload, serialize_suggestions(grown)))
    fixed, delta = rebalance_lengths(edited)
    assert delta == 4
    assert fixed.total_length == seg.total_length + 4
    assert declared_content_length(fixed.payload) == declared_content_length(seg.payload) + 4
    assert grown.content_length == fig3.content_length + 4
    assert parse_response(fixed.payload) == grown


def test_rebalance_random_mutations(fig3):
    rng = random.Random(8)
    seg = _response_segment(fig3)
    slist = fig3
    for _ in range(200):
        rows = list(slist.rows)
        i = rng.randrange(len(rows))
        if rng.random() < 0.5:
            rows[i] = append_word(rows[i], rng.choice(["a", "bb", "ccc"]))
        elif rows[i] != slist.query and " " in rows[i][len(slist.query):]:
            rows[i] = strip_last_words(rows[i], 1, slist.query)[0]
        slist = slist.with_rows(rows)
        seg, _ = rebalance_lengths(replace(seg, payload=replace_body(seg.payload, serialize_suggestions(slist))))
    fresh = _response_segment(slist)
    assert seg.payload == fresh.payload
    assert seg.total_length == fresh.total_length == fresh.computed_length()


def test_http_request_round_trip():
    req = SuggestRequest("steg anos", "firefox")
    assert parse_request(request_payload(req)) == req
    assert parse_request(request_payload(SuggestRequest("x", "unspec"))).client_kind == "unspec"
    head, body = split_http(response_payload(SuggestionList("q", ("q a",))))
    assert head.endswith(b"\r\n\r\n") and body.startswith(b"window.google.ac.h(")


def test_segment_dict_round_trip():
    seg = Segment(CID, TO_SERVER, {SYN, ACK}, 2**32 - 1, 7, True, 3, (1, 2), b"\x00\xffdata")
    assert segment_from_dict(segment_to_dict(seg)) == seg
    assert ConnId.parse(str(CID)) == CID


def test_trace_record_json():
    seg = Segment(CID, TO_SERVER, {ACK}, 1, 1, payload=request_payload(SuggestRequest("ab", "serp")))
    rec = TraceRecord.from_segment(seg, 12.5, user_id=3, search_id=9)
    assert rec.client_kind == "serp"
    assert TraceRecord.from_json(rec.to_json()) == rec
