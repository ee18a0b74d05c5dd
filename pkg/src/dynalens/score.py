"""Symbolic score model and a MusicXML (partwise) reader.

The reader covers the subset of MusicXML needed for dynamics modeling:
notes with pitch, duration, voice, ties and articulations; dynamic
directions (constant levels, wedges, crescendo/diminuendo words,
impulsive accents); time signatures; and repeat barlines.  All score
time is expressed in quarter-note beats as exact rationals, converted
from ``divisions`` ticks without floating-point drift.
"""

from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from fractions import Fraction

LOGGER = logging.getLogger(__name__)

CONSTANT_LEVELS = ("ppp", "pp", "p", "mp", "mf", "f", "ff", "fff")
GRADUAL_DIRECTIONS = ("crescendo", "diminuendo")
IMPULSIVE_SYMBOLS = ("sfz", "fp", "accent", "marcato")
ARTICULATIONS = ("accent", "staccato", "fermata", "marcato")

_STEP_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# Constant dynamics outside the supported eight levels are clamped to the
# nearest supported level.
_CONSTANT_DYNAMIC_TAGS = {
    "ppp": "ppp", "pppp": "ppp", "ppppp": "ppp", "pppppp": "ppp",
    "pp": "pp", "p": "p", "mp": "mp", "mf": "mf", "f": "f",
    "ff": "ff", "fff": "fff", "ffff": "fff", "fffff": "fff", "ffffff": "fff",
}
_IMPULSIVE_DYNAMIC_TAGS = {
    "sfz": "sfz", "sf": "sfz", "sffz": "sfz", "fz": "sfz", "rf": "sfz",
    "rfz": "sfz", "fp": "fp", "sfp": "fp", "sfzp": "fp", "pf": "fp",
}
_ARTICULATION_TAGS = {
    "accent": "accent",
    "strong-accent": "marcato",
    "staccato": "staccato",
    "staccatissimo": "staccato",
}

# Canonical instrument classes for common score part names (English,
# Italian, German, French, singular and plural).  Unknown names fall back
# to the normalized name itself.
_INSTRUMENT_SYNONYMS = {
    "flute": "flute", "flutes": "flute", "flauto": "flute", "flauti": "flute",
    "flote": "flute", "floete": "flute",
    "piccolo": "piccolo", "ottavino": "piccolo",
    "oboe": "oboe", "oboes": "oboe", "oboi": "oboe", "hautbois": "oboe",
    "hoboe": "oboe",
    "english horn": "english horn", "cor anglais": "english horn",
    "corno inglese": "english horn", "englischhorn": "english horn",
    "clarinet": "clarinet", "clarinets": "clarinet", "clarinetto": "clarinet",
    "clarinetti": "clarinet", "klarinette": "clarinet",
    "klarinetten": "clarinet", "clarinette": "clarinet",
    "bassoon": "bassoon", "bassoons": "bassoon", "fagotto": "bassoon",
    "fagotti": "bassoon", "fagott": "bassoon", "fagotte": "bassoon",
    "basson": "bassoon",
    "contrabassoon": "contrabassoon", "contrafagotto": "contrabassoon",
    "kontrafagott": "contrabassoon",
    "horn": "horn", "horns": "horn", "corno": "horn", "corni": "horn",
    "horner": "horn", "french horn": "horn",
    "trumpet": "trumpet", "trumpets": "trumpet", "tromba": "trumpet",
    "trombe": "trumpet", "trompete": "trumpet", "trompeten": "trumpet",
    "trompette": "trumpet",
    "trombone": "trombone", "trombones": "trombone", "tromboni": "trombone",
    "posaune": "trombone", "posaunen": "trombone",
    "tuba": "tuba", "basstuba": "tuba",
    "timpani": "timpani", "pauken": "timpani", "timbales": "timpani",
    "kettledrums": "timpani",
    "harp": "harp", "arpa": "harp", "harfe": "harp", "harpe": "harp",
    "violin": "violin", "violins": "violin", "violino": "violin",
    "violini": "violin", "violine": "violin", "violinen": "violin",
    "geige": "violin", "geigen": "violin",
    "viola": "viola", "violas": "viola", "viole": "viola",
    "bratsche": "viola", "bratschen": "viola",
    "cello": "cello", "cellos": "cello", "celli": "cello",
    "violoncello": "cello", "violoncelli": "cello", "violoncelle": "cello",
    "contrabass": "contrabass", "contrabasses": "contrabass",
    "contrabasso": "contrabass", "contrabassi": "contrabass",
    "double bass": "contrabass", "double basses": "contrabass",
    "kontrabass": "contrabass", "contrebasse": "contrabass",
    "bass": "contrabass", "basses": "contrabass", "bassi": "contrabass",
    "piano": "piano", "pianoforte": "piano", "klavier": "piano",
    "organ": "organ", "orgel": "organ",
}

_ROMAN_OR_DIGIT = re.compile(r"^(?:[0-9]+|[ivx]+)$")


class ScoreError(Exception):
    """The input document cannot be parsed or violates the score model."""


class UnsupportedScoreError(ScoreError):
    """A required element is missing or outside the supported subset."""

    def __init__(self, element: str, detail: str = ""):
        self.element = element
        msg = f"unsupported score: {element}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class Pitch:
    """Notated pitch with derived MIDI number."""

    step: str
    alter: int
    octave: int

    def __post_init__(self):
        if self.step not in _STEP_SEMITONES:
            raise ScoreError(f"invalid pitch step {self.step!r}")
        if not -2 <= self.alter <= 2:
            raise ScoreError(f"pitch alteration {self.alter} out of range")
        if not 0 <= self.midi <= 127:
            raise ScoreError(f"pitch {self.step}{self.alter:+d} octave "
                             f"{self.octave} outside MIDI range")

    @property
    def midi(self) -> int:
        return 12 * (self.octave + 1) + _STEP_SEMITONES[self.step] + self.alter


@dataclass(frozen=True)
class NoteEvent:
    """One performed note.  Tie chains are consolidated at parse time,
    so a tied continuation never appears as a separate event."""

    onset: Fraction
    duration: Fraction
    pitch: Pitch
    voice: int = 1
    articulations: frozenset = frozenset()
    tied_from_previous: bool = False

    def __post_init__(self):
        if self.onset < 0:
            raise ScoreError(f"negative note onset {self.onset}")
        if self.duration <= 0:
            raise ScoreError(f"non-positive note duration {self.duration}")
        unknown = set(self.articulations) - set(ARTICULATIONS)
        if unknown:
            raise ScoreError(f"unknown articulations {sorted(unknown)}")


@dataclass(frozen=True)
class DynamicMarking:
    """A dynamics annotation.

    ``kind`` is one of ``constant`` (label: a level such as ``f``),
    ``gradual`` (label: ``crescendo`` or ``diminuendo``) or ``impulsive``
    (label: ``sfz``, ``fp``, ``accent`` or ``marcato``).  ``extent_end``
    is the resolved end of the marking's influence: for constants the
    anchor of the next constant marking in the part (or the piece end),
    for graduals the wedge or word span end, for impulses the anchor.
    """

    kind: str
    label: str
    anchor: Fraction
    extent_end: Fraction

    def __post_init__(self):
        valid = {"constant": CONSTANT_LEVELS,
                 "gradual": GRADUAL_DIRECTIONS,
                 "impulsive": IMPULSIVE_SYMBOLS}
        if self.kind not in valid:
            raise ScoreError(f"unknown marking kind {self.kind!r}")
        if self.label not in valid[self.kind]:
            raise ScoreError(f"invalid {self.kind} marking {self.label!r}")
        if self.anchor > self.extent_end:
            raise ScoreError(f"marking {self.label} anchored at {self.anchor} "
                             f"ends before its anchor ({self.extent_end})")


@dataclass(frozen=True)
class PartScore:
    """One score part on a quarter-note beat timeline."""

    part_id: str
    part_name: str
    instrument_class: str
    notes: tuple = ()
    markings: tuple = ()
    time_signatures: tuple = ()
    repeat_signs: tuple = ()

    def __post_init__(self):
        keys = [(n.onset, n.pitch.midi) for n in self.notes]
        if keys != sorted(keys):
            raise ScoreError(f"notes of part {self.part_id} are not sorted "
                             "by onset and pitch")
        if not self.time_signatures:
            raise ScoreError(f"part {self.part_id} has no time signature")
        if self.time_signatures[0][0] != 0:
            raise ScoreError(f"first time signature of part {self.part_id} "
                             "is not at beat 0")
        anchors = [m.anchor for m in self.markings if m.kind == "constant"]
        if len(anchors) != len(set(anchors)):
            raise ScoreError(f"overlapping constant markings in part "
                             f"{self.part_id}")


@dataclass(frozen=True)
class Score:
    """A parsed score: parts sharing one beat timeline."""

    parts: tuple = ()
    title: str = ""

    @property
    def onset_grid(self) -> tuple:
        """Sorted distinct note onsets across all parts."""
        return tuple(sorted({n.onset for p in self.parts for n in p.notes}))

    @property
    def end(self) -> Fraction:
        """Largest note offset over all parts (0 for an empty score)."""
        offsets = [n.onset + n.duration for p in self.parts for n in p.notes]
        return max(offsets, default=Fraction(0))


def score_onsets(score: Score) -> list:
    """Strictly increasing union of all parts' note onsets.

    Raises
    ------
    ScoreError
        If the score contains no notes.
    """
    grid = score.onset_grid
    if not grid:
        raise ScoreError("no notes")
    return list(grid)


def instrument_class(part_name: str) -> str:
    """Canonical instrument class for a printed part name.

    Known names (in several languages, with instance numbers or roman
    numerals) map through a synonym table; anything else falls back to
    the lowercased, trimmed name with trailing numerals stripped.
    """
    norm = part_name.lower()
    norm = re.sub(r"[.,;:()\[\]']", " ", norm)
    norm = re.sub(r"\s+", " ", norm).strip()
    words = norm.split()
    while words and _ROMAN_OR_DIGIT.match(words[-1]):
        words.pop()
    if not words:
        return "unknown"
    for k in range(len(words), 0, -1):
        key = " ".join(words[:k])
        if key in _INSTRUMENT_SYNONYMS:
            return _INSTRUMENT_SYNONYMS[key]
    return " ".join(words)


# ---------------------------------------------------------------------------
# MusicXML parsing

@dataclass
class _RawNote:
    onset: Fraction
    duration: Fraction
    pitch: Pitch
    voice: int
    articulations: frozenset
    tie_start: bool
    tie_stop: bool


@dataclass
class _PartDraft:
    part_id: str
    part_name: str
    raw_notes: list = field(default_factory=list)
    constants: list = field(default_factory=list)   # (anchor, level)
    graduals: list = field(default_factory=list)    # (anchor, direction, end | None)
    impulses: list = field(default_factory=list)    # (anchor, symbol)
    time_signatures: list = field(default_factory=list)
    repeat_signs: list = field(default_factory=list)


def parse_score(document: str) -> Score:
    """Parse a partwise MusicXML document into a :class:`Score`.

    Parameters
    ----------
    document : str
        The XML text.  Only uncompressed partwise documents are
        supported.

    Returns
    -------
    Score
        Immutable score with beat-valued timelines, consolidated ties
        and resolved dynamic-marking extents.

    Raises
    ------
    ScoreError
        On XML syntax errors (with line number), on unsupported or
        missing required elements, and on overlapping constant markings
        within one part.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ScoreError(f"XML syntax error at line {line}, column {column}: "
                         f"{exc.msg.split(':')[0]}") from None
    if root.tag != "score-partwise":
        raise UnsupportedScoreError(root.tag,
                                    "only score-partwise documents are supported")

    title = (root.findtext("work/work-title")
             or root.findtext("movement-title") or "").strip()

    part_names = {}
    part_list = root.find("part-list")
    if part_list is not None:
        for sp in part_list.findall("score-part"):
            pid = sp.get("id", "")
            part_names[pid] = (sp.findtext("part-name") or "").strip()

    drafts = []
    for part_el in root.findall("part"):
        pid = part_el.get("id", f"P{len(drafts) + 1}")
        drafts.append(_parse_part(part_el, pid, part_names.get(pid) or pid))
    if not drafts:
        raise UnsupportedScoreError("part", "document contains no parts")

    piece_end = Fraction(0)
    for d in drafts:
        for rn in d.raw_notes:
            piece_end = max(piece_end, rn.onset + rn.duration)

    parts = tuple(_finalize_part(d, piece_end) for d in drafts)
    return Score(parts=parts, title=title)


def _int_text(el, tag: str, element_name: str) -> int:
    text = el.findtext(tag)
    if text is None:
        raise UnsupportedScoreError(element_name, f"missing {tag}")
    try:
        return int(text.strip())
    except ValueError:
        raise UnsupportedScoreError(element_name,
                                    f"non-integer {tag} {text!r}") from None


def _parse_part(part_el, part_id: str, part_name: str) -> _PartDraft:
    draft = _PartDraft(part_id=part_id, part_name=part_name)
    divisions = None
    cursor = Fraction(0)
    prev_onset = None
    open_wedges = {}

    def ticks_to_beats(ticks: int) -> Fraction:
        if divisions is None:
            raise UnsupportedScoreError(
                "divisions", f"part {part_id} uses durations before any "
                "divisions declaration")
        return Fraction(ticks, divisions)

    for measure in part_el.findall("measure"):
        measure_start = cursor
        max_cursor = cursor
        for el in measure:
            if el.tag == "attributes":
                div_text = el.findtext("divisions")
                if div_text is not None:
                    divisions = int(div_text.strip())
                    if divisions <= 0:
                        raise UnsupportedScoreError("divisions",
                                                    "must be positive")
                for time_el in el.findall("time"):
                    num = _int_text(time_el, "beats", "time")
                    den = _int_text(time_el, "beat-type", "time")
                    if num <= 0 or den <= 0:
                        raise UnsupportedScoreError("time",
                                                    f"invalid meter {num}/{den}")
                    draft.time_signatures.append((cursor, num, den))
            elif el.tag == "note":
                cursor, prev_onset = _parse_note(
                    el, draft, cursor, prev_onset, ticks_to_beats)
            elif el.tag == "backup":
                cursor -= ticks_to_beats(_int_text(el, "duration", "backup"))
            elif el.tag == "forward":
                cursor += ticks_to_beats(_int_text(el, "duration", "forward"))
            elif el.tag == "direction":
                _parse_direction(el, draft, cursor, open_wedges)
            elif el.tag == "barline":
                repeat = el.find("repeat")
                if repeat is not None:
                    if repeat.get("direction") == "forward":
                        draft.repeat_signs.append(measure_start)
                    else:
                        draft.repeat_signs.append(max(max_cursor, cursor))
            max_cursor = max(max_cursor, cursor)
        cursor = max_cursor

    for anchor, direction in open_wedges.values():
        LOGGER.warning("unterminated %s wedge in part %s", direction, part_id)
        draft.graduals.append((anchor, direction, None))
    return draft


def _parse_note(el, draft: _PartDraft, cursor: Fraction, prev_onset,
                ticks_to_beats):
    if el.find("grace") is not None:
        LOGGER.warning("skipping grace note in part %s", draft.part_id)
        return cursor, prev_onset
    dur_el = el.find("duration")
    if dur_el is None:
        raise UnsupportedScoreError("duration",
                                    f"note without duration in part "
                                    f"{draft.part_id}")
    duration = ticks_to_beats(int(dur_el.text.strip()))
    if el.find("rest") is not None:
        return cursor + duration, prev_onset

    is_chord = el.find("chord") is not None
    pitch_el = el.find("pitch")
    if pitch_el is None:
        LOGGER.warning("skipping unpitched note in part %s", draft.part_id)
        if is_chord:
            return cursor, prev_onset
        onset = cursor if prev_onset is None else cursor
        return onset + duration, prev_onset

    step = (pitch_el.findtext("step") or "").strip()
    octave = _int_text(pitch_el, "octave", "pitch")
    alter_text = (pitch_el.findtext("alter") or "0").strip()
    alter = float(alter_text)
    if alter != int(alter):
        raise UnsupportedScoreError("alter",
                                    f"non-integer alteration {alter_text}")
    pitch = Pitch(step=step, alter=int(alter), octave=octave)

    onset = prev_onset if (is_chord and prev_onset is not None) else cursor
    voice = int((el.findtext("voice") or "1").strip())

    articulations = set()
    tie_types = {t.get("type") for t in el.findall("tie")}
    notations = el.find("notations")
    if notations is not None:
        tie_types |= {t.get("type") for t in notations.findall("tied")}
        if notations.find("fermata") is not None:
            articulations.add("fermata")
        art_el = notations.find("articulations")
        if art_el is not None:
            for child in art_el:
                mapped = _ARTICULATION_TAGS.get(child.tag)
                if mapped:
                    articulations.add(mapped)

    draft.raw_notes.append(_RawNote(
        onset=onset, duration=duration, pitch=pitch, voice=voice,
        articulations=frozenset(articulations),
        tie_start="start" in tie_types, tie_stop="stop" in tie_types))

    if is_chord:
        return cursor, prev_onset
    return onset + duration, onset


def _parse_direction(el, draft: _PartDraft, cursor: Fraction,
                     open_wedges: dict):
    for dtype in el.findall("direction-type"):
        for child in dtype:
            if child.tag == "dynamics":
                for dyn in child:
                    tag = dyn.tag
                    if tag in _CONSTANT_DYNAMIC_TAGS:
                        draft.constants.append(
                            (cursor, _CONSTANT_DYNAMIC_TAGS[tag]))
                    elif tag in _IMPULSIVE_DYNAMIC_TAGS:
                        draft.impulses.append(
                            (cursor, _IMPULSIVE_DYNAMIC_TAGS[tag]))
                    else:
                        LOGGER.warning("ignoring dynamics %r in part %s",
                                       tag, draft.part_id)
            elif child.tag == "wedge":
                wtype = child.get("type")
                number = child.get("number", "1")
                if wtype in ("crescendo", "diminuendo"):
                    open_wedges[number] = (cursor, wtype)
                elif wtype == "stop":
                    if number in open_wedges:
                        anchor, direction = open_wedges.pop(number)
                    elif len(open_wedges) == 1:
                        anchor, direction = open_wedges.popitem()[1]
                    else:
                        LOGGER.warning("stray wedge stop in part %s",
                                       draft.part_id)
                        continue
                    draft.graduals.append((anchor, direction, cursor))
            elif child.tag == "words":
                text = (child.text or "").strip().lower()
                if text.startswith("cresc"):
                    draft.graduals.append((cursor, "crescendo", None))
                elif text.startswith(("dim", "decresc")):
                    draft.graduals.append((cursor, "diminuendo", None))


def _consolidate_ties(raw_notes, part_id: str):
    out = []
    open_ties = {}
    for rn in raw_notes:
        key = (rn.voice, rn.pitch.midi)
        if rn.tie_stop and key in open_ties:
            idx = open_ties[key]
            out[idx][1] += rn.duration
            out[idx][4] |= rn.articulations
            if not rn.tie_start:
                del open_ties[key]
            continue
        if rn.tie_stop:
            LOGGER.warning("unmatched tie stop in part %s at beat %s",
                           part_id, rn.onset)
        out.append([rn.onset, rn.duration, rn.pitch, rn.voice,
                    set(rn.articulations)])
        if rn.tie_start:
            open_ties[key] = len(out) - 1
    if open_ties:
        LOGGER.warning("unterminated ties in part %s", part_id)
    notes = [NoteEvent(onset=o, duration=d, pitch=p, voice=v,
                       articulations=frozenset(a))
             for o, d, p, v, a in out]
    return tuple(sorted(notes, key=lambda n: (n.onset, n.pitch.midi)))


def _finalize_part(draft: _PartDraft, piece_end: Fraction) -> PartScore:
    notes = _consolidate_ties(draft.raw_notes, draft.part_id)

    constants = sorted(draft.constants)
    anchors = [a for a, _ in constants]
    for a, count in ((a, anchors.count(a)) for a in set(anchors)):
        if count > 1:
            raise ScoreError(f"overlapping constant markings at beat {a} "
                             f"in part {draft.part_id}")

    markings = []
    for i, (anchor, level) in enumerate(constants):
        end = constants[i + 1][0] if i + 1 < len(constants) \
            else max(piece_end, anchor)
        markings.append(DynamicMarking("constant", level, anchor, end))
    for anchor, direction, stop in draft.graduals:
        if stop is None:
            later = [a for a, _ in constants if a > anchor]
            stop = min(later) if later else max(piece_end, anchor)
        markings.append(DynamicMarking("gradual", direction, anchor,
                                       max(stop, anchor)))
    for anchor, symbol in draft.impulses:
        markings.append(DynamicMarking("impulsive", symbol, anchor, anchor))
    markings.sort(key=lambda m: (m.anchor, m.kind, m.label))

    time_signatures = {pos: (pos, num, den)
                       for pos, num, den in draft.time_signatures}
    if Fraction(0) not in time_signatures:
        LOGGER.warning("part %s declares no time signature at beat 0, "
                       "assuming 4/4", draft.part_id)
        time_signatures[Fraction(0)] = (Fraction(0), 4, 4)

    return PartScore(
        part_id=draft.part_id,
        part_name=draft.part_name,
        instrument_class=instrument_class(draft.part_name),
        notes=notes,
        markings=tuple(markings),
        time_signatures=tuple(sorted(time_signatures.values())),
        repeat_signs=tuple(sorted(set(draft.repeat_signs))),
    )


# ---------------------------------------------------------------------------
# Line-oriented debug dump (used by tests and the `parse` subcommand)

def score_to_text(score: Score) -> str:
    """Serialize a score to the line-oriented debug format."""
    lines = ["score v1", f"title {score.title}"]
    for p in score.parts:
        lines.append(f"part\t{p.part_id}\t{p.part_name}\t{p.instrument_class}")
        for pos, num, den in p.time_signatures:
            lines.append(f"time {pos} {num} {den}")
        for pos in p.repeat_signs:
            lines.append(f"repeat {pos}")
        for m in p.markings:
            lines.append(f"mark {m.kind} {m.label} {m.anchor} {m.extent_end}")
        for n in p.notes:
            artics = ",".join(sorted(n.articulations)) or "-"
            lines.append(f"note {n.onset} {n.duration} {n.pitch.step} "
                         f"{n.pitch.alter} {n.pitch.octave} {n.voice} "
                         f"{int(n.tied_from_previous)} {artics}")
    return "\n".join(lines) + "\n"


def score_from_text(text: str) -> Score:
    """Re-read a score from the debug format written by
    :func:`score_to_text`."""
    lines = text.splitlines()
    if not lines or lines[0] != "score v1":
        raise ScoreError("not a score debug dump")
    title = ""
    parts = []
    current = None

    def finish(cur):
        if cur is not None:
            parts.append(PartScore(
                part_id=cur["id"], part_name=cur["name"],
                instrument_class=cur["class"], notes=tuple(cur["notes"]),
                markings=tuple(cur["markings"]),
                time_signatures=tuple(cur["times"]),
                repeat_signs=tuple(cur["repeats"])))

    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("title"):
            title = line[6:] if len(line) > 5 else ""
        elif line.startswith("part\t"):
            finish(current)
            _, pid, name, cls = line.split("\t")
            current = {"id": pid, "name": name, "class": cls, "notes": [],
                       "markings": [], "times": [], "repeats": []}
        elif current is None:
            raise ScoreError(f"dump line outside any part: {line!r}")
        elif line.startswith("time "):
            _, pos, num, den = line.split()
            current["times"].append((Fraction(pos), int(num), int(den)))
        elif line.startswith("repeat "):
            current["repeats"].append(Fraction(line.split()[1]))
        elif line.startswith("mark "):
            _, kind, label, anchor, end = line.split()
            current["markings"].append(
                DynamicMarking(kind, label, Fraction(anchor), Fraction(end)))
        elif line.startswith("note "):
            (_, onset, dur, step, alter, octave, voice, tied,
             artics) = line.split()
            current["notes"].append(NoteEvent(
                onset=Fraction(onset), duration=Fraction(dur),
                pitch=Pitch(step, int(alter), int(octave)), voice=int(voice),
                articulations=frozenset() if artics == "-"
                else frozenset(artics.split(",")),
                tied_from_previous=bool(int(tied))))
        else:
            raise ScoreError(f"unrecognized dump line: {line!r}")
    finish(current)
    return Score(parts=tuple(parts), title=title)
