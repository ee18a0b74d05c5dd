"""Perceptual loudness measurement and resampling onto score time.

Loudness is computed block-wise on K-weighted audio (a high shelf
around 1.5 kHz followed by a ~38 Hz high pass, both re-derived for the
actual sample rate from the analog prototype rather than read from a
fixed-rate table).  Per-piece z-normalization removes overall level
and range so that only loudness variation remains, and an externally
supplied beat-to-seconds alignment indexes the curve by score time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .util import fmt17

LOGGER = logging.getLogger(__name__)

SILENCE_FLOOR_LU = -100.0

#: Per-channel weights: front channels at unity, surround boosted.
_CHANNEL_WEIGHTS = (1.0, 1.0, 1.0, 1.41, 1.41)

# Analog prototype of the two-stage perceptual pre-filter
# (high shelf, then high pass), bilinear-transformed per sample rate.
_SHELF_FREQ_HZ = 1681.9744509555319
_SHELF_GAIN_DB = 3.99984385397
_SHELF_Q = 0.7071752369554193
_HIGHPASS_FREQ_HZ = 38.13547087613982
_HIGHPASS_Q = 0.5003270373253953


@dataclass(eq=False)
class AudioBuffer:
    """Multi-channel audio with samples in [-1, 1]."""

    sample_rate: int
    channels: tuple

    def __post_init__(self):
        self.channels = tuple(np.asarray(ch, dtype=float)
                              for ch in self.channels)
        if not self.channels:
            raise ValueError("audio buffer needs at least one channel")
        lengths = {len(ch) for ch in self.channels}
        if len(lengths) != 1:
            raise ValueError("audio channels differ in length")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return len(self.channels[0])

    @property
    def n_channels(self) -> int:
        return len(self.channels)


@dataclass(eq=False)
class LoudnessCurve:
    """Block loudness over time.

    ``times`` are block start times with a constant hop;
    ``block_duration`` (seconds) locates block centers for
    interpolation and is zero for hand-made or imported curves whose
    times already are the sampling points.
    """

    times: np.ndarray
    values: np.ndarray
    block_duration: float = 0.0
    normalized: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if len(self.times) >= 2:
            hops = np.diff(self.times)
            if np.any(hops <= 0):
                raise ValueError("block times must be strictly increasing")
            if not np.allclose(hops, hops[0], rtol=1e-6, atol=0):
                raise ValueError("block times must have a constant hop")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("loudness values must be finite")


@dataclass(eq=False)
class AlignmentMap:
    """Monotone correspondence between score beats and recording seconds."""

    breakpoints: tuple

    def __post_init__(self):
        pts = tuple((float(b), float(s)) for b, s in self.breakpoints)
        if len(pts) < 2:
            raise ValueError("alignment needs at least two breakpoints")
        beats = [b for b, _ in pts]
        secs = [s for _, s in pts]
        if any(b2 <= b1 for b1, b2 in zip(beats, beats[1:])) \
                or any(s2 <= s1 for s1, s2 in zip(secs, secs[1:])):
            raise ValueError("alignment breakpoints must be strictly "
                             "increasing in both coordinates")
        self.breakpoints = pts

    @property
    def beats(self) -> np.ndarray:
        return np.array([b for b, _ in self.breakpoints])

    @property
    def seconds(self) -> np.ndarray:
        return np.array([s for _, s in self.breakpoints])


@dataclass(eq=False)
class TargetCurve:
    """Normalized loudness sampled at score onset beats."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")


def _shelf_coefficients(sample_rate: float):
    K = np.tan(np.pi * _SHELF_FREQ_HZ / sample_rate)
    Vh = 10.0 ** (_SHELF_GAIN_DB / 20.0)
    Vb = Vh ** 0.499666774155
    a0 = 1.0 + K / _SHELF_Q + K * K
    b = np.array([(Vh + Vb * K / _SHELF_Q + K * K) / a0,
                  2.0 * (K * K - Vh) / a0,
                  (Vh - Vb * K / _SHELF_Q + K * K) / a0])
    a = np.array([1.0,
                  2.0 * (K * K - 1.0) / a0,
                  (1.0 - K / _SHELF_Q + K * K) / a0])
    return b, a


def _highpass_coefficients(sample_rate: float):
    K = np.tan(np.pi * _HIGHPASS_FREQ_HZ / sample_rate)
    a0 = 1.0 + K / _HIGHPASS_Q + K * K
    b = np.array([1.0, -2.0, 1.0])
    a = np.array([1.0,
                  2.0 * (K * K - 1.0) / a0,
                  (1.0 - K / _HIGHPASS_Q + K * K) / a0])
    return b, a


def _biquad_gain(b, a, frequency_hz: float, sample_rate: float) -> float:
    z = np.exp(-2j * np.pi * frequency_hz / sample_rate)
    powers = np.array([1.0, z, z * z])
    return float(abs(np.dot(b, powers) / np.dot(a, powers)))


def k_filter_coefficients(sample_rate: float):
    """Filter stages of the perceptual pre-filter for one sample rate.

    Both stages are derived from the analog prototype, and the shelf
    is scaled so that the cascade has exactly unity gain at 1 kHz: a
    1 kHz tone passes unchanged and block loudness of a full-scale
    1 kHz sine equals its plain mean-square level plus the fixed
    -0.691 offset.
    """
    b1, a1 = _shelf_coefficients(sample_rate)
    b2, a2 = _highpass_coefficients(sample_rate)
    cascade_gain = (_biquad_gain(b1, a1, 1000.0, sample_rate)
                    * _biquad_gain(b2, a2, 1000.0, sample_rate))
    return (b1 / cascade_gain, a1), (b2, a2)


def k_weighting(audio: AudioBuffer) -> AudioBuffer:
    """Apply the two-stage perceptual pre-filter per channel.

    Filter state starts at zero.  Supported sample rates are 8 to
    192 kHz; coefficients are derived for the actual rate.
    """
    if not 8000 <= audio.sample_rate <= 192000:
        raise ValueError(f"unsupported sample rate {audio.sample_rate} Hz "
                         "(need 8000..192000)")
    (b1, a1), (b2, a2) = k_filter_coefficients(audio.sample_rate)
    filtered = tuple(
        scipy.signal.lfilter(b2, a2, scipy.signal.lfilter(b1, a1, ch))
        for ch in audio.channels)
    return AudioBuffer(sample_rate=audio.sample_rate, channels=filtered)


def momentary_loudness(audio: AudioBuffer, block: int = 1024,
                       hop: int = 1024) -> LoudnessCurve:
    """Block-wise loudness of a recording in LUFS.

    Each block of the K-weighted signal contributes
    ``-0.691 + 10 log10(sum_ch G_ch * meanSquare_ch)``.  A trailing
    partial block is discarded and silent blocks are floored at
    -100 LUFS instead of diverging.
    """
    if audio.n_samples < block:
        raise ValueError(f"audio shorter ({audio.n_samples} samples) than "
                         f"one block ({block})")
    if audio.n_channels > len(_CHANNEL_WEIGHTS):
        raise ValueError(f"too many channels ({audio.n_channels})")
    weighted = k_weighting(audio)
    n_blocks = 1 + (audio.n_samples - block) // hop

    power = np.zeros(n_blocks)
    for ch, gain in zip(weighted.channels, _CHANNEL_WEIGHTS):
        squared = ch * ch
        windows = np.lib.stride_tricks.sliding_window_view(squared, block)
        power += gain * windows[::hop][:n_blocks].mean(axis=1)

    with np.errstate(divide="ignore"):
        values = -0.691 + 10.0 * np.log10(power)
    values = np.maximum(values, SILENCE_FLOOR_LU)

    times = np.arange(n_blocks) * (hop / audio.sample_rate)
    return LoudnessCurve(times=times, values=values,
                         block_duration=block / audio.sample_rate)


def normalize_curve(curve: LoudnessCurve) -> LoudnessCurve:
    """Z-score the loudness values per recording (population std)."""
    if len(curve.values) < 2:
        raise ValueError("need at least two blocks to normalize")
    std = curve.values.std()
    if std == 0:
        raise ValueError("constant loudness")
    z = (curve.values - curve.values.mean()) / std
    return LoudnessCurve(times=curve.times.copy(), values=z,
                         block_duration=curve.block_duration,
                         normalized=True)


def sample_at_score_times(curve: LoudnessCurve, align: AlignmentMap,
                          onsets) -> TargetCurve:
    """Index the loudness curve by score time.

    Each onset beat maps to performance seconds by piecewise-linear
    interpolation of the alignment breakpoints, and to loudness by
    linear interpolation between block centers.
    """
    beats = np.array([float(o) for o in onsets])
    lo, hi = align.beats[0], align.beats[-1]
    for b in beats:
        if not lo <= b <= hi:
            raise ValueError(f"onset at beat {fmt17(b)} outside alignment "
                             f"range [{fmt17(lo)}, {fmt17(hi)}]")
    seconds = np.interp(beats, align.beats, align.seconds)
    centers = curve.times + curve.block_duration / 2.0
    values = np.interp(seconds, centers, curve.values)
    return TargetCurve(times=beats, values=values)


# ---------------------------------------------------------------------------
# File formats

def read_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float, any channels)."""
    sample_rate, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}; "
                         "need 16-bit PCM or 32-bit float")
    if data.ndim == 1:
        channels = (data,)
    else:
        channels = tuple(data[:, i] for i in range(data.shape[1]))
    return AudioBuffer(sample_rate=int(sample_rate), channels=channels)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write an AudioBuffer as 32-bit float WAV."""
    stacked = np.stack(audio.channels, axis=-1).astype(np.float32)
    if stacked.shape[1] == 1:
        stacked = stacked[:, 0]
    scipy.io.wavfile.write(path, audio.sample_rate, stacked)


def loudness_curve_to_csv(curve: LoudnessCurve) -> str:
    lines = [f"# normalized: {'true' if curve.normalized else 'false'}",
             f"# block_sec: {fmt17(curve.block_duration)}",
             "time_sec,loudness_lu"]
    for t, v in zip(curve.times, curve.values):
        lines.append(f"{fmt17(t)},{fmt17(v)}")
    return "\n".join(lines) + "\n"


def loudness_curve_from_csv(text: str) -> LoudnessCurve:
    normalized = False
    block_duration = 0.0
    times = []
    values = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("normalized:"):
                normalized = body.split(":", 1)[1].strip() == "true"
            elif body.startswith("block_sec:"):
                block_duration = float(body.split(":", 1)[1])
            continue
        if line.startswith("time_sec"):
            continue
        t, v = line.split(",")
        times.append(float(t))
        values.append(float(v))
    if not times:
        raise ValueError("empty loudness CSV")
    return LoudnessCurve(times=np.array(times), values=np.array(values),
                         block_duration=block_duration,
                         normalized=normalized)


def alignment_to_csv(align: AlignmentMap) -> str:
    lines = ["score_beat,time_sec"]
    for beat, sec in align.breakpoints:
        lines.append(f"{fmt17(beat)},{fmt17(sec)}")
    return "\n".join(lines) + "\n"


def alignment_from_csv(text: str) -> AlignmentMap:
    points = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("score_beat"):
            continue
        beat, sec = line.split(",")
        points.append((float(beat), float(sec)))
    return AlignmentMap(breakpoints=tuple(points))


def target_curve_to_csv(target: TargetCurve) -> str:
    lines = ["beat,target"]
    for t, v in zip(target.times, target.values):
        lines.append(f"{fmt17(t)},{fmt17(v)}")
    return "\n".join(lines) + "\n"


def target_curve_from_csv(text: str) -> TargetCurve:
    times = []
    values = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("beat"):
            continue
        t, v = line.split(",")
        times.append(float(t))
        values.append(float(v))
    if not times:
        raise ValueError("empty target CSV")
    return TargetCurve(times=np.array(times), values=np.array(values))
