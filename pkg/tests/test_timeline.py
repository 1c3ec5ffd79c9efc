import pytest
from hypothesis import given, strategies as st

from asdfusion.errors import DataError
from asdfusion.timeline import Segment, SpeakerTimeline, format_rttm, parse_rttm, read_rttm, write_rttm


def test_sorting_labels_and_totals():
    tl = SpeakerTimeline([(5.0, 6.0, "b"), (0.0, 2.0, "a"), (3.0, 4.0, "b")])
    assert [s.start for s in tl.segments] == [0.0, 3.0, 5.0]
    assert tl.labels == ["a", "b"]
    assert tl.total_speech == 4.0
    assert tl.end_time() == 6.0
    assert [s.label for s in tl.active_labels(3.5)] == ["b"]
    assert tl.active_labels(2.0) == []


def test_invalid_segment():
    with pytest.raises(DataError):
        SpeakerTimeline([(2.0, 2.0, "a")])


def test_merged():
    tl = SpeakerTimeline([(0, 1, "a"), (1, 2, "a"), (2.2, 3, "a"), (1, 2, "b")])
    assert [(s.start, s.end) for s in tl.merged(0.0).for_label("a")] == [(0, 2), (2.2, 3)]
    assert [(s.start, s.end) for s in tl.merged(0.25).for_label("a")] == [(0, 3)]


def test_rttm_format_and_parse(tmp_path):
    tl = SpeakerTimeline([(0.0, 1.5, "spk0"), (2.25, 3.0, "spk1")])
    text = format_rttm(tl, "meet")
    assert text.splitlines()[0] == "SPEAKER meet 1 0.000 1.500 <NA> <NA> spk0 <NA> <NA>"
    write_rttm(tmp_path / "x.rttm", tl, "meet")
    back = read_rttm(tmp_path / "x.rttm")
    assert back.segments == tl.segments
    assert parse_rttm(text, file_id="other").segments == []


def test_rttm_parse_errors_and_skips(tmp_path):
    assert parse_rttm("# comment\n\nSPKR-INFO x 1 <NA> <NA> <NA> unknown a <NA> <NA>\n").segments == []
    assert parse_rttm("SPEAKER f 1 1.0 0.0 <NA> <NA> a <NA> <NA>\n").segments == []
    with pytest.raises(DataError):
        parse_rttm("SPEAKER f 1 1.0\n")
    with pytest.raises(DataError):
        parse_rttm("SPEAKER f 1 x 1.0 <NA> <NA> a <NA> <NA>\n")
    with pytest.raises(DataError):
        read_rttm(tmp_path / "missing.rttm")


@given(st.lists(st.tuples(st.integers(0, 5000), st.integers(1, 500), st.sampled_from("abc")), max_size=20))
def test_rttm_round_trip_millisecond_grid(items):
    tl = SpeakerTimeline([Segment(s / 1000, (s + d) / 1000, lab) for s, d, lab in items])
    back = parse_rttm(format_rttm(tl, "f"))
    assert len(back.segments) == len(tl.segments)
    for a, b in zip(back.segments, tl.segments):
        assert a.label == b.label
        assert abs(a.start - b.start) < 1e-9 and abs(a.end - b.end) < 1e-9
