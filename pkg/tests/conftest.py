"""Shared fixture builders: tiny MusicXML documents and synthetic pieces."""

from fractions import Fraction

import numpy as np
import pytest

from dynalens.basis import BasisId, BasisMatrix
from dynalens.loudness import TargetCurve


def note_xml(step, octave, ticks, alter=None, voice=1, chord=False,
             tie=None, articulations=(), fermata=False, grace=False,
             rest=False):
    parts = ["<note>"]
    if grace:
        parts.append("<grace/>")
    if chord:
        parts.append("<chord/>")
    if rest:
        parts.append("<rest/>")
    elif step is not None:
        alter_xml = f"<alter>{alter}</alter>" if alter is not None else ""
        parts.append(f"<pitch><step>{step}</step>{alter_xml}"
                     f"<octave>{octave}</octave></pitch>")
    if not grace:
        parts.append(f"<duration>{ticks}</duration>")
    parts.append(f"<voice>{voice}</voice>")
    if tie in ("start", "stop", "both"):
        if tie in ("start", "both"):
            parts.append('<tie type="start"/>')
        if tie in ("stop", "both"):
            parts.append('<tie type="stop"/>')
    notations = []
    if articulations:
        inner = "".join(f"<{a}/>" for a in articulations)
        notations.append(f"<articulations>{inner}</articulations>")
    if fermata:
        notations.append("<fermata/>")
    if notations:
        parts.append(f"<notations>{''.join(notations)}</notations>")
    parts.append("</note>")
    return "".join(parts)


def dynamics_xml(tag):
    return (f"<direction><direction-type><dynamics><{tag}/></dynamics>"
            f"</direction-type></direction>")


def wedge_xml(wtype, number=1):
    return (f'<direction><direction-type><wedge type="{wtype}" '
            f'number="{number}"/></direction-type></direction>')


def words_xml(text):
    return (f"<direction><direction-type><words>{text}</words>"
            f"</direction-type></direction>")


def score_xml(parts, title="Test", divisions=2, beats=4, beat_type=4):
    """Assemble a partwise document.

    ``parts`` maps part id to (part_name, list of measures), each
    measure being a string of note/direction elements.  The first
    measure of each part receives the divisions and time attributes.
    """
    part_list = "".join(
        f'<score-part id="{pid}"><part-name>{name}</part-name></score-part>'
        for pid, (name, _) in parts.items())
    bodies = []
    for pid, (_, measures) in parts.items():
        content = []
        for i, measure in enumerate(measures):
            attributes = ""
            if i == 0:
                attributes = (f"<attributes><divisions>{divisions}</divisions>"
                              f"<time><beats>{beats}</beats>"
                              f"<beat-type>{beat_type}</beat-type></time>"
                              f"</attributes>")
            content.append(f'<measure number="{i + 1}">{attributes}{measure}'
                           f"</measure>")
        bodies.append(f'<part id="{pid}">{"".join(content)}</part>')
    return (f'<?xml version="1.0" encoding="UTF-8"?>'
            f'<score-partwise version="3.1">'
            f"<work><work-title>{title}</work-title></work>"
            f"<part-list>{part_list}</part-list>"
            f'{"".join(bodies)}</score-partwise>')


@pytest.fixture
def minimal_score_xml():
    return score_xml({"P1": ("Oboe", [note_xml("C", 4, 1)])}, divisions=1)


@pytest.fixture
def two_oboe_xml():
    """Two oboe parts sharing f then p markings, chords-free."""
    p1_m1 = (dynamics_xml("f") + note_xml("C", 5, 2) + note_xml("D", 5, 2)
             + note_xml("E", 5, 4))
    p1_m2 = dynamics_xml("p") + note_xml("F", 5, 8)
    p2_m1 = dynamics_xml("f") + note_xml("E", 4, 4) + note_xml("G", 4, 4)
    p2_m2 = dynamics_xml("p") + note_xml("A", 4, 8)
    return score_xml({"P1": ("Oboe I", [p1_m1, p1_m2]),
                      "P2": ("Oboe II", [p2_m1, p2_m2])})


def lin_ground_truth_piece(seed, n_rows=60, coeffs=(2.0, -1.0, 0.5),
                           intercept=0.3, noise=0.0):
    """Synthetic piece whose target is an exact linear map of its data."""
    rng = np.random.default_rng(seed)
    columns = [BasisId("x", "pitch"), BasisId("x", "duration"),
               BasisId("x", "ioi")]
    data = rng.uniform(0.0, 2.0, size=(n_rows, len(columns)))
    times = np.arange(n_rows, dtype=float)
    matrix = BasisMatrix(times=times, columns=columns, data=data)
    values = data @ np.array(coeffs) + intercept
    if noise:
        values = values + rng.normal(0.0, noise, size=n_rows)
    return matrix, TargetCurve(times=times, values=values)


def numeric_param_gradients(params, X, y, l2, eps=1e-6):
    """Central finite differences of the regularized training loss."""
    from dynalens.models import _named_arrays, regularized_loss
    grads = []
    for _, arr in _named_arrays(params):
        grad = np.zeros_like(arr)
        flat = np.atleast_1d(arr)
        grad_flat = np.atleast_1d(grad)
        it = np.nditer(flat, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = flat[idx]
            flat[idx] = original + eps
            hi = regularized_loss(params, X, y, l2)
            flat[idx] = original - eps
            lo = regularized_loss(params, X, y, l2)
            flat[idx] = original
            grad_flat[idx] = (hi - lo) / (2 * eps)
        grads.append(grad)
    return grads


def numeric_input_gradients(params, X, eps=1e-6):
    """Central finite differences of y_t with respect to X[t, k]."""
    from dynalens.models import predict
    grads = np.zeros_like(X)
    for t in range(X.shape[0]):
        for k in range(X.shape[1]):
            hi = X.copy()
            hi[t, k] += eps
            lo = X.copy()
            lo[t, k] -= eps
            grads[t, k] = (predict(params, hi)[t]
                           - predict(params, lo)[t]) / (2 * eps)
    return grads


def relative_error(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


def random_params(kind, n_inputs, hidden, rng, spread=0.3):
    """Freshly initialized parameters with randomized biases."""
    from dynalens.models import _init_params, _named_arrays
    params = _init_params(kind, n_inputs, hidden, rng)
    for _, arr in _named_arrays(params):
        arr[...] = arr + rng.normal(0.0, spread, size=arr.shape)
    return params


def interaction_corpus(seed, n_pieces=6, n_rows=120, noise=0.05,
                       smooth=True):
    """Pieces whose target mixes a multiplicative descriptor interaction
    with temporal smoothing, then is z-normalized per piece."""
    rng = np.random.default_rng(seed)
    columns = [BasisId("x", f"beat.{j + 1}") for j in range(2)] \
        + [BasisId("x", "pitch"), BasisId("x", "duration"),
           BasisId("x", "ioi"), BasisId("x", "polyphony")]
    pieces = []
    for p in range(n_pieces):
        data = rng.uniform(-1.0, 1.0, size=(n_rows, len(columns)))
        z = 1.5 * data[:, 2] * data[:, 3] + 0.6 * data[:, 4]
        if smooth:
            padded = np.concatenate([z[:1], z, z[-1:]])
            z = 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]
        z = z + rng.normal(0.0, noise, size=n_rows)
        z = (z - z.mean()) / z.std()
        times = np.arange(n_rows, dtype=float)
        pieces.append((f"piece{p}",
                       BasisMatrix(times=times, columns=list(columns),
                                   data=data),
                       TargetCurve(times=times, values=z)))
    return pieces
