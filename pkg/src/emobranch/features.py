"""Frame-level audio feature extraction.

The feature front end produces three streams per utterance, all on a common
10 ms frame grid so they can be concatenated frame by frame downstream:

* 40-d log Mel filterbank energies from 25 ms windows,
* 40-d log Mel filterbank energies from 250 ms windows,
* 1-d log pitch with probability-of-voicing weighted mean subtraction
  (see :mod:`emobranch.pitch`).

Frames are centered on ``t * frame_shift`` with reflect padding at both
signal edges, which makes the frame count depend only on the shift, never
on the window length.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .audio import AudioSignal
from .errors import InvalidInput, InvalidSpec

LOG_FLOOR = 1e-10
MEL_LOW_HZ = 20.0
MAX_FFT_SIZE = 1 << 24
DELTA_WINDOW = 2


class StreamTag(Enum):
    FBK25 = "fbk25"
    FBK250 = "fbk250"
    PITCH = "pitch"
    DELTA = "delta"
    COMBINED = "combined"


@dataclass(frozen=True)
class FramingSpec:
    """Short-time analysis grid: shift and window length in milliseconds."""

    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0
    padding: str = "reflect"

    def __post_init__(self):
        if not self.frame_shift_ms > 0:
            raise InvalidSpec(f"frame_shift_ms must be positive, got {self.frame_shift_ms}")
        if self.frame_length_ms < self.frame_shift_ms:
            raise InvalidSpec(
                f"frame_length_ms ({self.frame_length_ms}) must be >= "
                f"frame_shift_ms ({self.frame_shift_ms})"
            )
        if self.padding != "reflect":
            raise InvalidSpec(f"unsupported padding mode {self.padding!r}")

    def shift_samples(self, sample_rate: int) -> int:
        shift = sample_rate * self.frame_shift_ms / 1000.0
        if abs(shift - round(shift)) > 1e-9 or round(shift) <= 0:
            raise InvalidSpec(
                f"frame shift of {self.frame_shift_ms} ms is not a positive integer "
                f"number of samples at {sample_rate} Hz"
            )
        return int(round(shift))

    def length_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.frame_length_ms / 1000.0))


@dataclass
class FeatureMatrix:
    """T x D feature values on a fixed frame grid."""

    values: np.ndarray
    frame_shift_ms: float
    stream_tag: StreamTag = StreamTag.COMBINED

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise InvalidInput(f"feature matrix must be T x D with T >= 1, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise InvalidInput("feature matrix contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def num_frames(n_samples: int, shift_samples: int) -> int:
    return n_samples // shift_samples


def frame_signal(signal: AudioSignal, spec: FramingSpec) -> np.ndarray:
    """Slice a signal into overlapping frames centered on the shift grid.

    Returns a ``T x L`` array with ``T = floor(len(samples) / shift)``.
    Frame ``t`` is centered on sample ``t * shift``; samples outside the
    signal are filled by reflection, so the 25 ms and 250 ms streams of one
    utterance always agree on ``T`` and on frame centers.
    """
    samples = signal.samples
    if samples.size == 0:
        raise InvalidInput("cannot frame an empty signal")
    shift = spec.shift_samples(signal.sample_rate)
    length = spec.length_samples(signal.sample_rate)
    t_count = num_frames(samples.size, shift)
    if t_count < 1:
        raise InvalidInput(
            f"signal of {samples.size} samples is shorter than one frame shift ({shift})"
        )
    half = length // 2
    padded = np.pad(samples, (half, half + length), mode="reflect")
    starts = np.arange(t_count) * shift  # frame t spans padded[c-half : c-half+L], c = t*shift+half
    idx = starts[:, None] + np.arange(length)[None, :]
    return padded[idx]


def _next_pow2(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int,
                   low_hz: float = MEL_LOW_HZ, high_hz: float | None = None) -> np.ndarray:
    """Triangular Mel filters evaluated at the rFFT bin frequencies.

    Returns an ``n_mels x (n_fft // 2 + 1)`` nonnegative weight matrix whose
    triangles are laid out on the Mel scale between ``low_hz`` and Nyquist.
    """
    if high_hz is None:
        high_hz = sample_rate / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    weights = np.zeros((n_mels, bin_hz.size))
    for j in range(n_mels):
        lo, center, hi = edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        weights[j] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def mel_filter_centers_hz(n_mels: int, sample_rate: int,
                          low_hz: float = MEL_LOW_HZ, high_hz: float | None = None) -> np.ndarray:
    if high_hz is None:
        high_hz = sample_rate / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    return edges[1:-1]


def log_mel_fbank(frames: np.ndarray, sample_rate: int, n_mels: int = 40,
                  frame_shift_ms: float = 10.0,
                  stream_tag: StreamTag = StreamTag.FBK25) -> FeatureMatrix:
    """Log Mel filterbank energies for pre-cut frames.

    Each frame is Hamming-windowed, zero-padded to the next power-of-two FFT
    size, converted to a power spectrum, passed through ``n_mels`` triangular
    Mel filters spanning 20 Hz to Nyquist, and floored at ``LOG_FLOOR``
    before the natural log.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    length = frames.shape[1]
    n_fft = _next_pow2(length)
    if n_fft > MAX_FFT_SIZE:
        raise InvalidSpec(f"frame of {length} samples exceeds the maximum FFT size {MAX_FFT_SIZE}")
    windowed = frames * np.hamming(length)
    power = np.abs(np.fft.rfft(windowed, n=n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(n_mels, n_fft, sample_rate).T
    values = np.log(np.maximum(energies, LOG_FLOOR))
    return FeatureMatrix(values, frame_shift_ms, stream_tag)


def extract_fbank(signal: AudioSignal, spec: FramingSpec, n_mels: int = 40,
                  stream_tag: StreamTag = StreamTag.FBK25) -> FeatureMatrix:
    """Frame a signal and compute its log Mel filterbank stream."""
    frames = frame_signal(signal, spec)
    return log_mel_fbank(frames, signal.sample_rate, n_mels, spec.frame_shift_ms, stream_tag)


def append_deltas(feats: FeatureMatrix) -> FeatureMatrix:
    """Append regression-based first differentials, doubling the dimension.

    ``delta[t] = sum_n n * (x[t+n] - x[t-n]) / (2 * sum_n n^2)`` for
    ``n in 1..DELTA_WINDOW`` with edge frames replicated, i.e. the local
    regression slope per dimension.
    """
    x = feats.values
    t_count = x.shape[0]
    pad = np.pad(x, ((DELTA_WINDOW, DELTA_WINDOW), (0, 0)), mode="edge")
    num = np.zeros_like(x)
    for n in range(1, DELTA_WINDOW + 1):
        num += n * (pad[DELTA_WINDOW + n:DELTA_WINDOW + n + t_count]
                    - pad[DELTA_WINDOW - n:DELTA_WINDOW - n + t_count])
    denom = 2.0 * sum(n * n for n in range(1, DELTA_WINDOW + 1))
    deltas = num / denom
    return FeatureMatrix(np.concatenate([x, deltas], axis=1), feats.frame_shift_ms, StreamTag.COMBINED)


def normalize_features(features: Mapping[str, FeatureMatrix],
                       dialogue_of: Mapping[str, str]) -> dict[str, FeatureMatrix]:
    """Dialogue-level variance normalization then utterance-level mean subtraction.

    Per dimension, every utterance of a dialogue is divided by the standard
    deviation pooled over all frames of that dialogue, then each utterance's
    own mean is subtracted. A dimension whose pooled deviation is zero is
    passed through unscaled with a warning.
    """
    by_dialogue: dict[str, list[str]] = {}
    for utt_id in features:
        if utt_id not in dialogue_of:
            raise InvalidInput(f"utterance {utt_id!r} has no dialogue assignment")
        by_dialogue.setdefault(dialogue_of[utt_id], []).append(utt_id)

    out: dict[str, FeatureMatrix] = {}
    for dialogue_id, utt_ids in by_dialogue.items():
        stacked = np.concatenate([features[u].values for u in utt_ids], axis=0)
        std = stacked.std(axis=0)
        flat = std == 0.0
        if flat.any():
            warnings.warn(
                f"dialogue {dialogue_id!r}: {int(flat.sum())} constant dimension(s) "
                "left unscaled during variance normalization"
            )
            std = np.where(flat, 1.0, std)
        for utt_id in utt_ids:
            feat = features[utt_id]
            scaled = feat.values / std
            centered = scaled - scaled.mean(axis=0)
            out[utt_id] = FeatureMatrix(centered, feat.frame_shift_ms, feat.stream_tag)
    return out


def concat_streams(streams: Iterable[FeatureMatrix]) -> FeatureMatrix:
    """Concatenate equal-length streams along the feature dimension."""
    streams = list(streams)
    if not streams:
        raise InvalidInput("no streams to concatenate")
    t_counts = {s.num_frames for s in streams}
    if len(t_counts) != 1:
        raise InvalidInput(f"streams disagree on frame count: {sorted(t_counts)}")
    values = np.concatenate([s.values for s in streams], axis=1)
    return FeatureMatrix(values, streams[0].frame_shift_ms, StreamTag.COMBINED)
