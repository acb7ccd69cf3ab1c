"""Log pitch extraction: NCCF candidates, Viterbi smoothing, POV weighting.

The tracker computes a normalized cross-correlation function (NCCF) per
frame over candidate lags for 60-400 Hz, picks a lag path with dynamic
programming (transition cost proportional to the log-lag jump, plus a small
octave bias toward shorter lags so exact harmonics resolve to the
fundamental), and emits one value per frame: the log pitch frequency minus
its probability-of-voicing weighted mean over a sliding 1.5 s window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal
from .errors import InvalidInput
from .features import FeatureMatrix, FramingSpec, StreamTag, num_frames

PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 400.0
POV_MEAN_WINDOW_S = 1.5
OCTAVE_BIAS = 0.05      # subtracted per unit ln(lag/lag_min) from local scores
JUMP_COST = 1.0         # per unit |delta ln lag| between adjacent frames
ENERGY_EPS = 1e-12


@dataclass(frozen=True)
class PitchFrame:
    """One frame of the pitch stream: mean-subtracted log pitch and POV."""

    log_pitch: float
    pov: float


def nccf_matrix(signal: AudioSignal, spec: FramingSpec) -> tuple[np.ndarray, int]:
    """NCCF values for every frame and candidate lag.

    Returns ``(nccf, lag_min)`` where ``nccf[t, i]`` is the normalized
    cross-correlation of frame ``t`` at lag ``lag_min + i``, clipped later by
    the caller. Windows follow the same centered grid as the other streams.
    """
    samples = signal.samples
    rate = signal.sample_rate
    shift = spec.shift_samples(rate)
    window = spec.length_samples(rate)
    if samples.size < window:
        raise InvalidInput(
            f"signal of {samples.size} samples is shorter than one {window}-sample frame"
        )
    t_count = num_frames(samples.size, shift)
    lag_min = int(np.ceil(rate / PITCH_MAX_HZ))
    lag_max = int(np.floor(rate / PITCH_MIN_HZ))
    half = window // 2
    padded = np.pad(samples, (half, half + window + lag_max), mode="reflect")

    n_lags = lag_max - lag_min + 1
    out = np.empty((t_count, n_lags))
    for t in range(t_count):
        start = t * shift
        segment = padded[start:start + window + lag_max]
        segment = segment - segment.mean()
        base = segment[:window]
        corr = np.correlate(segment, base, mode="valid")  # corr[l] = sum_n seg[n+l]*base[n]
        sq = np.concatenate([[0.0], np.cumsum(segment * segment)])
        energies = sq[np.arange(lag_max + 1) + window] - sq[np.arange(lag_max + 1)]
        denom = np.sqrt(energies[0] * energies + ENERGY_EPS)
        out[t] = (corr / denom)[lag_min:lag_max + 1]
    return out, lag_min


def viterbi_lags(nccf: np.ndarray, lag_min: int) -> np.ndarray:
    """Best lag index per frame under local NCCF scores and jump costs."""
    t_count, n_lags = nccf.shape
    log_lag = np.log(lag_min + np.arange(n_lags))
    local = nccf - OCTAVE_BIAS * (log_lag - log_lag[0])
    transition = -JUMP_COST * np.abs(log_lag[:, None] - log_lag[None, :])

    score = local[0].copy()
    back = np.zeros((t_count, n_lags), dtype=np.int64)
    for t in range(1, t_count):
        reach = score[:, None] + transition
        back[t] = np.argmax(reach, axis=0)
        score = reach[back[t], np.arange(n_lags)] + local[t]
    path = np.empty(t_count, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(t_count - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def track_pitch(signal: AudioSignal, spec: FramingSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Raw pitch track: per-frame ``(log_pitch_hz, pov)`` before mean subtraction."""
    if spec is None:
        spec = FramingSpec()
    nccf, lag_min = nccf_matrix(signal, spec)
    path = viterbi_lags(nccf, lag_min)
    rows = np.arange(nccf.shape[0])
    pov = np.clip(nccf[rows, path], 0.0, 1.0)
    log_pitch = np.log(signal.sample_rate / (lag_min + path))
    return log_pitch, pov


def pov_weighted_mean_subtract(log_pitch: np.ndarray, pov: np.ndarray,
                               frame_shift_ms: float,
                               window_s: float = POV_MEAN_WINDOW_S) -> np.ndarray:
    """Subtract the POV-weighted running mean of log pitch.

    The mean at frame ``t`` is taken over a window of ``window_s`` seconds
    centered at ``t`` (truncated at utterance edges) with the POV values as
    weights; frames whose window carries no voicing weight fall back to the
    unweighted window mean.
    """
    half = int(round(window_s * 1000.0 / frame_shift_ms / 2.0))
    t_count = log_pitch.size
    wsum = np.concatenate([[0.0], np.cumsum(pov)])
    wval = np.concatenate([[0.0], np.cumsum(pov * log_pitch)])
    usum = np.concatenate([[0.0], np.cumsum(log_pitch)])
    lo = np.maximum(np.arange(t_count) - half, 0)
    hi = np.minimum(np.arange(t_count) + half + 1, t_count)
    weight = wsum[hi] - wsum[lo]
    weighted = wval[hi] - wval[lo]
    unweighted = (usum[hi] - usum[lo]) / (hi - lo)
    mean = np.where(weight > ENERGY_EPS, weighted / np.maximum(weight, ENERGY_EPS), unweighted)
    return log_pitch - mean


def extract_pitch(signal: AudioSignal, spec: FramingSpec | None = None) -> FeatureMatrix:
    """One-dimensional pitch stream on the common frame grid."""
    if spec is None:
        spec = FramingSpec()
    log_pitch, pov = track_pitch(signal, spec)
    values = pov_weighted_mean_subtract(log_pitch, pov, spec.frame_shift_ms)
    return FeatureMatrix(values[:, None], spec.frame_shift_ms, StreamTag.PITCH)


def extract_pitch_frames(signal: AudioSignal, spec: FramingSpec | None = None) -> list[PitchFrame]:
    """Pitch stream as records that keep the POV alongside each value."""
    if spec is None:
        spec = FramingSpec()
    log_pitch, pov = track_pitch(signal, spec)
    subtracted = pov_weighted_mean_subtract(log_pitch, pov, spec.frame_shift_ms)
    return [PitchFrame(float(lp), float(p)) for lp, p in zip(subtracted, pov)]
