"""Score descriptors ("basis functions") on the onset grid.

Each part yields one row of descriptor values per distinct note onset.
Rows of all instances of one instrument class are merged into a single
class-level set, simultaneous values are fused (average by default, sum
for instance counts), and the fused rows of all classes are aligned on
the global onset grid to form the model input matrix.

Descriptor values are computed in exact rational arithmetic and only
converted to floats when the matrix is assembled, so repeated builds
are bit-identical.
"""

from __future__ import annotations

import logging
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .score import (CONSTANT_LEVELS, GRADUAL_DIRECTIONS, IMPULSIVE_SYMBOLS,
                    ARTICULATIONS, PartScore, Score, score_onsets)
from .util import fmt17

LOGGER = logging.getLogger(__name__)

STD_FLOOR = 1e-8

#: Features whose absent entries count as zeros when averaging; all other
#: features (marking steps/ramps and sign impulses) are presence-sparse:
#: averaging skips rows in which they do not occur.
NUMERIC_FEATURES = ("pitch", "duration", "ioi", "polyphony")

#: Features fused with the sum operator unless overridden.
DEFAULT_SUM_FEATURES = ("polyphony",)

FUSION_OPERATORS = ("average", "sum")

_NATURAL_CHUNKS = re.compile(r"(\d+)")


class BasisId(NamedTuple):
    """Identity of one matrix column: instrument class plus feature."""

    instrument_class: str
    feature: str

    @property
    def name(self) -> str:
        return f"{self.instrument_class}.{self.feature}"

    @classmethod
    def parse(cls, text: str) -> "BasisId":
        cls_name, _, feature = text.partition(".")
        if not feature:
            raise ValueError(f"malformed basis column name {text!r}")
        return cls(cls_name, feature)


def feature_kind(feature: str) -> str:
    """Classify a feature as ``numeric``, ``step``, ``ramp`` or ``impulse``.

    Raises ``KeyError`` for names outside the feature vocabulary.
    """
    if feature in NUMERIC_FEATURES:
        return "numeric"
    if feature in ARTICULATIONS or feature == "repeat":
        return "impulse"
    if feature.startswith("beat."):
        tail = feature[5:]
        if tail.isdigit() and int(tail) >= 1:
            return "impulse"
    if feature.startswith("dyn."):
        label = feature[4:]
        if label in CONSTANT_LEVELS:
            return "step"
        if label in GRADUAL_DIRECTIONS:
            return "ramp"
        if label in IMPULSIVE_SYMBOLS:
            return "impulse"
    raise KeyError(f"unknown basis feature: {feature}")


def known_feature(feature: str) -> bool:
    try:
        feature_kind(feature)
        return True
    except KeyError:
        return False


def is_impulse_feature(feature: str) -> bool:
    return feature_kind(feature) == "impulse"


def _feature_sort_key(feature: str):
    return tuple(int(c) if c.isdigit() else c
                 for c in _NATURAL_CHUNKS.split(feature))


def column_order_key(column: BasisId):
    """Canonical column ordering: class, then feature with natural
    numbering (beat.2 before beat.10)."""
    return (column.instrument_class, _feature_sort_key(column.feature))


@dataclass
class NoteBasisRow:
    """Descriptor values at one onset of one part (or merged class).

    Absent entries denote exact zero.  Values are rationals or ints so
    that merging and fusion stay exact.
    """

    onset: Fraction
    values: dict = field(default_factory=dict)


@dataclass(eq=False)
class BasisMatrix:
    """Onset-grid by named-descriptor matrix, the model input."""

    times: np.ndarray
    columns: list
    data: np.ndarray
    fusion_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (len(self.times), len(self.columns)):
            raise ValueError(f"matrix shape {self.data.shape} does not match "
                             f"{len(self.times)} times x "
                             f"{len(self.columns)} columns")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("matrix times must be strictly increasing")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column ids")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("matrix contains non-finite values")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_columns(self) -> int:
        return self.data.shape[1]


@dataclass(eq=False)
class BasisStats:
    """Per-column mean and standard deviation from training data.

    Standard deviations are floored so that constant columns map to
    zeros instead of blowing up.
    """

    columns: list
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.maximum(np.asarray(self.stds, dtype=float), STD_FLOOR)
        if not (len(self.columns) == len(self.means) == len(self.stds)):
            raise ValueError("stats columns/means/stds lengths differ")


def _marking_value(marking, t: Fraction):
    """Exact value of one dynamic marking at beat ``t``.

    Constants are 1 on [anchor, extent_end), gradual markings ramp
    linearly from 0 at the anchor to 1 at the span end (0 outside), and
    impulses are 1 exactly at the anchor.
    """
    if marking.kind == "constant":
        return 1 if marking.anchor <= t < marking.extent_end else 0
    if marking.kind == "gradual":
        if marking.anchor <= t <= marking.extent_end \
                and marking.extent_end > marking.anchor:
            return (t - marking.anchor) / (marking.extent_end - marking.anchor)
        return 0
    return 1 if t == marking.anchor else 0


def _part_marking_value(part: PartScore, feature: str, t: Fraction):
    value = 0
    for m in part.markings:
        if f"dyn.{m.label}" == feature:
            value = max(value, _marking_value(m, t))
    return value


def _beat_feature(part: PartScore, t: Fraction):
    """Feature name ``beat.b`` if ``t`` falls exactly on beat ``b`` of the
    meter active at ``t``, else None."""
    positions = [pos for pos, _, _ in part.time_signatures]
    idx = bisect_right(positions, t) - 1
    if idx < 0:
        return None
    pos, num, den = part.time_signatures[idx]
    bar_length = Fraction(4 * num, den)
    beat_unit = Fraction(4, den)
    offset = (t - pos) % bar_length
    index, remainder = divmod(offset, beat_unit)
    if remainder == 0:
        return f"beat.{int(index) + 1}"
    return None


def extract_part_basis(part: PartScore) -> list:
    """Per-onset descriptor rows for one part.

    Exactly one row per distinct note onset.  Chord notes sharing an
    onset are collapsed within the part: pitch and duration are
    averaged, articulations are combined, and polyphony counts all of
    the part's notes sounding at the onset, so that later sum-fusion
    across instrument instances counts instances without double
    counting chords.

    Row entries:

    * pitch : mean MIDI number of the notes starting here, over 127
    * duration : mean duration in beats
    * ioi : distance to the previous distinct onset of this part
    * polyphony : number of the part's notes sounding at the onset
    * beat.b : 1 when the onset is exactly on beat ``b`` of the meter
    * accent/staccato/fermata/marcato : 1 when annotated on any note here
    * repeat : 1 when the onset coincides with a repeat sign
    * dyn.* : marking value at the onset (step, ramp or impulse)
    """
    starts = sorted(n.onset for n in part.notes)
    ends = sorted(n.onset + n.duration for n in part.notes)
    repeat_positions = set(part.repeat_signs)

    by_onset = {}
    for note in part.notes:
        by_onset.setdefault(note.onset, []).append(note)

    rows = []
    previous = None
    for onset in sorted(by_onset):
        chord = by_onset[onset]
        values = {
            "pitch": Fraction(sum(n.pitch.midi for n in chord),
                              127 * len(chord)),
            "duration": Fraction(sum((n.duration for n in chord),
                                     Fraction(0)), len(chord)),
            "ioi": (onset - previous) if previous is not None else Fraction(0),
            "polyphony": (bisect_right(starts, onset)
                          - bisect_right(ends, onset)),
        }
        beat = _beat_feature(part, onset)
        if beat:
            values[beat] = 1
        for note in chord:
            for art in note.articulations:
                values[art] = 1
        if onset in repeat_positions:
            values["repeat"] = 1
        for marking in part.markings:
            value = _marking_value(marking, onset)
            if value:
                key = f"dyn.{marking.label}"
                values[key] = max(values.get(key, 0), value)
        rows.append(NoteBasisRow(onset=onset, values=values))
        previous = onset
    return rows


def merge_instrument_class(part_rows, instrument_class: str) -> list:
    """Union of the rows of all instances of one instrument class.

    Rows from different instances at the same onset are kept as
    separate rows; :func:`fuse` resolves them.
    """
    if not part_rows:
        raise ValueError(f"no parts to merge for class "
                         f"{instrument_class!r}")
    merged = [row for rows in part_rows for row in rows]
    merged.sort(key=lambda r: r.onset)
    return merged


def resolve_fusion_spec(features, overrides=None) -> dict:
    """Full feature-to-operator map: defaults plus validated overrides."""
    overrides = dict(overrides or {})
    for feature, op in overrides.items():
        if op not in FUSION_OPERATORS:
            raise ValueError(f"unknown fusion operator {op!r} for "
                             f"feature {feature!r}")
        if not known_feature(feature):
            raise ValueError(f"unknown feature in fusion spec: {feature!r}")
    spec = {}
    for feature in features:
        default = "sum" if feature in DEFAULT_SUM_FEATURES else "average"
        spec[feature] = overrides.get(feature, default)
    return spec


def fuse(merged, fusion_spec=None) -> list:
    """Combine coinciding rows into exactly one row per onset.

    The operator comes from ``fusion_spec`` (average everywhere, sum
    for polyphony, unless overridden).  Averaging counts absent entries
    as zeros for numeric features; marking and sign features average
    over the rows in which they occur.
    """
    features = sorted({f for row in merged for f in row.values})
    spec = resolve_fusion_spec(features, fusion_spec)

    groups = {}
    for row in merged:
        groups.setdefault(row.onset, []).append(row)

    fused = []
    for onset in sorted(groups):
        rows = groups[onset]
        values = {}
        present = {}
        for row in rows:
            for feature, value in row.values.items():
                present.setdefault(feature, []).append(value)
        for feature, entries in present.items():
            total = sum(entries)
            if spec[feature] == "sum":
                values[feature] = total
            elif feature in NUMERIC_FEATURES:
                values[feature] = Fraction(total, len(rows))
            else:
                values[feature] = Fraction(total, len(entries))
        fused.append(NoteBasisRow(onset=onset, values=values))
    return fused


def _class_features(parts, fused_rows) -> list:
    features = set(NUMERIC_FEATURES)
    for part in parts:
        for _, num, _ in part.time_signatures:
            features.update(f"beat.{b}" for b in range(1, num + 1))
        if part.repeat_signs:
            features.add("repeat")
        for marking in part.markings:
            features.add(f"dyn.{marking.label}")
    for row in fused_rows:
        features.update(row.values)
    return sorted(features, key=_feature_sort_key)


def build_basis_matrix(score: Score, fusion_spec=None) -> BasisMatrix:
    """Assemble the full input matrix for a score.

    Pipeline: extract per part, merge per instrument class, fuse, then
    align every class's rows on the global onset grid.  Grid points
    where a class has no note keep the class's step and ramp values
    (those are functions of time, not of note presence) and zeros for
    all note-local features.  Columns that happen to be all zero are
    retained; the model-level vocabulary decides which columns matter.
    """
    grid = score_onsets(score)
    overrides = dict(fusion_spec or {})

    groups = {}
    for part in score.parts:
        groups.setdefault(part.instrument_class, []).append(part)

    class_rows = {}
    class_features = {}
    for cls in sorted(groups):
        parts = groups[cls]
        merged = merge_instrument_class(
            [extract_part_basis(p) for p in parts], cls)
        fused = fuse(merged, overrides)
        class_rows[cls] = {row.onset: row for row in fused}
        class_features[cls] = _class_features(parts, fused)

    columns = [BasisId(cls, feature)
               for cls in sorted(groups)
               for feature in class_features[cls]]
    col_index = {c: j for j, c in enumerate(columns)}

    data = np.zeros((len(grid), len(columns)))
    for cls in sorted(groups):
        parts = groups[cls]
        rows = class_rows[cls]
        time_features = [f for f in class_features[cls]
                         if feature_kind(f) in ("step", "ramp")]
        for i, t in enumerate(grid):
            row = rows.get(t)
            if row is not None:
                for feature, value in row.values.items():
                    data[i, col_index[BasisId(cls, feature)]] = float(value)
            else:
                for feature in time_features:
                    contributions = [v for p in parts
                                     if (v := _part_marking_value(p, feature, t))]
                    if contributions:
                        value = Fraction(sum(contributions),
                                         len(contributions))
                        data[i, col_index[BasisId(cls, feature)]] = float(value)

    all_features = sorted({c.feature for c in columns},
                          key=_feature_sort_key)
    resolved = resolve_fusion_spec(all_features, overrides)
    times = np.array([float(t) for t in grid])
    return BasisMatrix(times=times, columns=columns, data=data,
                       fusion_spec=resolved)


def compute_stats(data: np.ndarray, columns) -> BasisStats:
    """Column means and population standard deviations of training data."""
    data = np.asarray(data, dtype=float)
    return BasisStats(columns=list(columns), means=data.mean(axis=0),
                      stds=data.std(axis=0))


def standardize(matrix: BasisMatrix, stats: BasisStats) -> BasisMatrix:
    """Center and scale matrix columns with training statistics.

    Impulse columns pass through unchanged; everything else becomes
    (x - mean) / std with the floored std.  Raises if the stats do not
    cover a matrix column.
    """
    index = {c: k for k, c in enumerate(stats.columns)}
    data = matrix.data.copy()
    for j, column in enumerate(matrix.columns):
        if column not in index:
            raise ValueError(f"no standardization stats for column "
                             f"{column.name}")
        if is_impulse_feature(column.feature):
            continue
        k = index[column]
        data[:, j] = (data[:, j] - stats.means[k]) / stats.stds[k]
    return BasisMatrix(times=matrix.times.copy(),
                       columns=list(matrix.columns), data=data,
                       fusion_spec=dict(matrix.fusion_spec))


# ---------------------------------------------------------------------------
# CSV and side-car formats

def basis_matrix_to_csv(matrix: BasisMatrix) -> str:
    lines = ["beat," + ",".join(c.name for c in matrix.columns)]
    for t, row in zip(matrix.times, matrix.data):
        lines.append(",".join([fmt17(t)] + [fmt17(v) for v in row]))
    return "\n".join(lines) + "\n"


def basis_matrix_from_csv(text: str, fusion_spec=None) -> BasisMatrix:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    if header[0] != "beat":
        raise ValueError("basis CSV must start with a 'beat' column")
    columns = [BasisId.parse(name) for name in header[1:]]
    times = []
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        times.append(float(cells[0]))
        rows.append([float(c) for c in cells[1:]])
    features = sorted({c.feature for c in columns}, key=_feature_sort_key)
    return BasisMatrix(times=np.array(times), columns=columns,
                       data=np.array(rows).reshape(len(times), len(columns)),
                       fusion_spec=resolve_fusion_spec(features, fusion_spec))


def vocabulary_sidecar(matrix: BasisMatrix) -> str:
    """Text side-car recording the fusion spec and column vocabulary."""
    lines = ["dynalens-basis v1"]
    for feature in sorted(matrix.fusion_spec, key=_feature_sort_key):
        lines.append(f"fusion {feature} {matrix.fusion_spec[feature]}")
    for column in matrix.columns:
        lines.append(f"column {column.name}")
    return "\n".join(lines) + "\n"
