from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dynamics_xml, note_xml, score_xml, wedge_xml, words_xml
from dynalens.score import (DynamicMarking, NoteEvent, PartScore, Pitch,
                            Score, ScoreError, UnsupportedScoreError,
                            instrument_class, parse_score, score_from_text,
                            score_onsets, score_to_text)


def test_minimal_single_note(minimal_score_xml):
    score = parse_score(minimal_score_xml)
    assert len(score.parts) == 1
    (note,) = score.parts[0].notes
    assert note.onset == 0
    assert note.duration == 1
    assert note.pitch.midi == 60


def test_two_oboe_parts_share_class(two_oboe_xml):
    score = parse_score(two_oboe_xml)
    assert len(score.parts) == 2
    assert {p.instrument_class for p in score.parts} == {"oboe"}


def test_tie_consolidation():
    m1 = note_xml("C", 4, 4, tie="start")
    m2 = note_xml("C", 4, 2, tie="stop") + note_xml("D", 4, 2)
    score = parse_score(score_xml({"P1": ("Flute", [m1, m2])}))
    notes = score.parts[0].notes
    assert len(notes) == 2
    assert notes[0].duration == 3
    assert notes[1].onset == 3


def test_tie_chain_across_three_notes():
    m1 = note_xml("G", 4, 4, tie="start")
    m2 = note_xml("G", 4, 4, tie="both")
    m3 = note_xml("G", 4, 4, tie="stop")
    score = parse_score(score_xml({"P1": ("Flute", [m1, m2, m3])}))
    (note,) = score.parts[0].notes
    assert note.duration == 6


def test_xml_syntax_error_reports_line():
    with pytest.raises(ScoreError, match="line"):
        parse_score("<score-partwise>\n<part-list>\n</broken>")


def test_missing_divisions_is_unsupported():
    doc = ('<?xml version="1.0"?><score-partwise>'
           '<part-list><score-part id="P1"><part-name>X</part-name>'
           "</score-part></part-list>"
           '<part id="P1"><measure number="1">'
           + note_xml("C", 4, 2) + "</measure></part></score-partwise>")
    with pytest.raises(UnsupportedScoreError, match="divisions"):
        parse_score(doc)


def test_timewise_document_rejected():
    with pytest.raises(UnsupportedScoreError, match="score-timewise"):
        parse_score("<score-timewise></score-timewise>")


def test_duplicate_constant_anchor_rejected():
    measure = dynamics_xml("f") + dynamics_xml("p") + note_xml("C", 4, 2)
    with pytest.raises(ScoreError, match="overlapping constant markings"):
        parse_score(score_xml({"P1": ("Oboe", [measure])}))


def test_chord_notes_share_onset():
    measure = (note_xml("C", 4, 2) + note_xml("E", 4, 2, chord=True)
               + note_xml("G", 4, 2, chord=True) + note_xml("D", 4, 2))
    score = parse_score(score_xml({"P1": ("Horn", [measure])}))
    onsets = [n.onset for n in score.parts[0].notes]
    assert onsets == [0, 0, 0, 1]
    midis = [n.pitch.midi for n in score.parts[0].notes[:3]]
    assert midis == sorted(midis)


def test_grace_notes_skipped(caplog):
    measure = note_xml("D", 5, 0, grace=True) + note_xml("C", 4, 2)
    with caplog.at_level("WARNING"):
        score = parse_score(score_xml({"P1": ("Oboe", [measure])}))
    assert len(score.parts[0].notes) == 1
    assert "grace" in caplog.text


def test_rests_advance_the_cursor():
    measure = note_xml(None, None, 2, rest=True) + note_xml("C", 4, 2)
    score = parse_score(score_xml({"P1": ("Oboe", [measure])}))
    assert score.parts[0].notes[0].onset == 1


def test_backup_supports_second_voice():
    measure = (note_xml("C", 5, 4, voice=1)
               + "<backup><duration>4</duration></backup>"
               + note_xml("E", 3, 2, voice=2) + note_xml("F", 3, 2, voice=2))
    score = parse_score(score_xml({"P1": ("Piano", [measure])}))
    onsets = sorted((n.onset, n.voice) for n in score.parts[0].notes)
    assert onsets == [(0, 1), (0, 2), (1, 2)]


def test_articulations_and_fermata():
    measure = (note_xml("C", 4, 2, articulations=("accent", "staccato"))
               + note_xml("D", 4, 2, articulations=("strong-accent",))
               + note_xml("E", 4, 2, fermata=True) + note_xml("F", 4, 2))
    score = parse_score(score_xml({"P1": ("Oboe", [measure])}))
    notes = score.parts[0].notes
    assert notes[0].articulations == frozenset({"accent", "staccato"})
    assert notes[1].articulations == frozenset({"marcato"})
    assert notes[2].articulations == frozenset({"fermata"})
    assert notes[3].articulations == frozenset()


def test_constant_extents_tile_the_timeline(two_oboe_xml):
    score = parse_score(two_oboe_xml)
    for part in score.parts:
        constants = sorted((m for m in part.markings if m.kind == "constant"),
                           key=lambda m: m.anchor)
        intervals = [(m.anchor, m.extent_end) for m in constants]
        assert intervals == [(0, 4), (4, 8)]
        for (a1, e1), (a2, e2) in zip(intervals, intervals[1:]):
            assert e1 == a2


def test_wedge_becomes_gradual_marking():
    m1 = wedge_xml("crescendo") + note_xml("C", 4, 4) + note_xml("D", 4, 4)
    m2 = wedge_xml("stop") + note_xml("E", 4, 8)
    score = parse_score(score_xml({"P1": ("Viola", [m1, m2])}))
    gradual = [m for m in score.parts[0].markings if m.kind == "gradual"]
    assert gradual == [DynamicMarking("gradual", "crescendo",
                                      Fraction(0), Fraction(4))]


def test_dynamic_words_map_to_gradual_until_next_constant():
    m1 = words_xml("cresc.") + note_xml("C", 4, 8)
    m2 = dynamics_xml("ff") + note_xml("D", 4, 8)
    score = parse_score(score_xml({"P1": ("Violini I", [m1, m2])}))
    gradual = [m for m in score.parts[0].markings if m.kind == "gradual"]
    assert gradual == [DynamicMarking("gradual", "crescendo",
                                      Fraction(0), Fraction(4))]
    assert score.parts[0].instrument_class == "violin"


def test_diminuendo_word():
    m1 = words_xml("dim.") + note_xml("C", 4, 8)
    score = parse_score(score_xml({"P1": ("Celli", [m1])}))
    (marking,) = [m for m in score.parts[0].markings if m.kind == "gradual"]
    assert marking.label == "diminuendo"
    assert marking.extent_end == 4  # piece end


def test_impulsive_markings():
    measure = (dynamics_xml("sfz") + note_xml("C", 4, 2)
               + dynamics_xml("fp") + note_xml("D", 4, 2))
    score = parse_score(score_xml({"P1": ("Trombe", [measure])}))
    impulses = [m for m in score.parts[0].markings if m.kind == "impulsive"]
    assert [(m.label, m.anchor) for m in impulses] == [("sfz", 0), ("fp", 1)]
    assert all(m.extent_end == m.anchor for m in impulses)


def test_repeat_barlines_record_positions():
    m1 = ('<barline location="left"><repeat direction="forward"/></barline>'
          + note_xml("C", 4, 8))
    m2 = (note_xml("D", 4, 8)
          + '<barline location="right"><repeat direction="backward"/>'
            "</barline>")
    score = parse_score(score_xml({"P1": ("Corni", [m1, m2])}))
    assert score.parts[0].repeat_signs == (Fraction(0), Fraction(8))
    assert score.parts[0].instrument_class == "horn"


@pytest.mark.parametrize("name,expected", [
    ("Oboe I", "oboe"),
    ("oboe", "oboe"),
    ("Oboe 2", "oboe"),
    ("Oboi", "oboe"),
    ("Violini I", "violin"),
    ("Theremin 2", "theremin"),
    ("Violoncello", "cello"),
    ("Contrabassi", "contrabass"),
    ("Corni in F", "horn"),
    ("Flauti", "flute"),
    ("Viola I.", "viola"),
    ("Fagotti 1 2", "bassoon"),
])
def test_instrument_class_mapping(name, expected):
    assert instrument_class(name) == expected


def _part(part_id, onsets, cls="oboe"):
    notes = tuple(NoteEvent(onset=Fraction(o), duration=Fraction(1),
                            pitch=Pitch("C", 0, 4)) for o in onsets)
    return PartScore(part_id=part_id, part_name=cls, instrument_class=cls,
                     notes=notes, time_signatures=((Fraction(0), 4, 4),))


def test_score_onsets_union():
    score = Score(parts=(_part("P1", [0, 1]), _part("P2", [0, 2])))
    assert score_onsets(score) == [0, 1, 2]


def test_score_onsets_single_note():
    score = Score(parts=(_part("P1", [0]),))
    assert score_onsets(score) == [0]


def test_score_onsets_empty_score_errors():
    with pytest.raises(ScoreError, match="no notes"):
        score_onsets(Score(parts=()))


def test_two_oboe_onset_grid(two_oboe_xml):
    score = parse_score(two_oboe_xml)
    assert score_onsets(score) == [0, 1, 2, 4]


def test_pitch_midi_values():
    assert Pitch("C", 0, 4).midi == 60
    assert Pitch("A", 0, 4).midi == 69
    assert Pitch("B", -1, 4).midi == 70
    assert Pitch("F", 1, 5).midi == 78
    with pytest.raises(ScoreError):
        Pitch("H", 0, 4)
    with pytest.raises(ScoreError):
        Pitch("C", 0, 12)


def test_notes_sorted_by_onset_then_midi(two_oboe_xml):
    score = parse_score(two_oboe_xml)
    for part in score.parts:
        keys = [(n.onset, n.pitch.midi) for n in part.notes]
        assert keys == sorted(keys)


@given(divisions=st.integers(1, 96), ticks=st.integers(1, 400))
def test_beat_arithmetic_is_exact(divisions, ticks):
    measure = note_xml("C", 4, ticks) + note_xml("D", 4, divisions)
    score = parse_score(score_xml({"P1": ("Oboe", [measure])},
                                  divisions=divisions))
    assert score.parts[0].notes[1].onset == Fraction(ticks, divisions)


# --- debug-format round trip ---------------------------------------------

_fractions = st.fractions(min_value=0, max_value=16, max_denominator=12)
_durations = st.fractions(min_value=Fraction(1, 8), max_value=4,
                          max_denominator=8)
_steps = st.sampled_from("CDEFGAB")
_name_text = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"),
                           whitelist_characters=" "),
    min_size=1, max_size=12).map(lambda s: s.strip() or "x")


@st.composite
def _note_events(draw):
    return NoteEvent(
        onset=draw(_fractions), duration=draw(_durations),
        pitch=Pitch(draw(_steps), draw(st.integers(-1, 1)),
                    draw(st.integers(2, 6))),
        voice=draw(st.integers(1, 3)),
        articulations=frozenset(draw(st.sets(
            st.sampled_from(["accent", "staccato", "fermata", "marcato"]),
            max_size=2))))


@st.composite
def _markings(draw):
    kind = draw(st.sampled_from(["constant", "gradual", "impulsive"]))
    anchor = draw(_fractions)
    if kind == "constant":
        label = draw(st.sampled_from(["pp", "p", "mf", "f", "ff"]))
        end = anchor + draw(_durations)
    elif kind == "gradual":
        label = draw(st.sampled_from(["crescendo", "diminuendo"]))
        end = anchor + draw(_durations)
    else:
        label = draw(st.sampled_from(["sfz", "fp", "accent", "marcato"]))
        end = anchor
    return DynamicMarking(kind, label, anchor, end)


@st.composite
def _part_scores(draw, index):
    notes = tuple(sorted(draw(st.lists(_note_events(), min_size=1,
                                       max_size=6)),
                         key=lambda n: (n.onset, n.pitch.midi)))
    markings = draw(st.lists(_markings(), max_size=3))
    constants = {}
    filtered = []
    for m in markings:
        if m.kind == "constant":
            if m.anchor in constants:
                continue
            constants[m.anchor] = m
        filtered.append(m)
    num = draw(st.sampled_from([2, 3, 4, 6]))
    return PartScore(
        part_id=f"P{index}", part_name=draw(_name_text),
        instrument_class=draw(_name_text).lower(),
        notes=notes, markings=tuple(filtered),
        time_signatures=((Fraction(0), num, 4),),
        repeat_signs=tuple(sorted(set(draw(st.lists(_fractions,
                                                    max_size=2))))))


@st.composite
def _scores(draw):
    n = draw(st.integers(1, 3))
    parts = tuple(draw(_part_scores(i + 1)) for i in range(n))
    return Score(parts=parts, title=draw(_name_text))


@settings(max_examples=60, deadline=None)
@given(score=_scores())
def test_debug_format_round_trip(score):
    assert score_from_text(score_to_text(score)) == score


def test_round_trip_of_parsed_fixture(two_oboe_xml):
    score = parse_score(two_oboe_xml)
    assert score_from_text(score_to_text(score)) == score
