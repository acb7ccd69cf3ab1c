"""Audio containers and mono WAV file I/O."""
from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInput

INT16_FULL_SCALE = 32768.0


@dataclass(frozen=True)
class AudioSignal:
    """Mono audio: amplitude samples plus the sampling rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1:
            raise InvalidInput(f"expected mono 1-D samples, got shape {samples.shape}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path: str | Path) -> AudioSignal:
    """Read a 16-bit PCM mono WAV file."""
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise FormatError(f"{path}: expected mono audio, got {wav.getnchannels()} channels")
        if wav.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit PCM, got {8 * wav.getsampwidth()}-bit")
        raw = wav.readframes(wav.getnframes())
        rate = wav.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_FULL_SCALE
    return AudioSignal(samples, rate)


def write_wav(path: str | Path, signal: AudioSignal) -> None:
    """Write a 16-bit PCM mono WAV file, clipping to [-1, 1)."""
    scaled = np.clip(signal.samples, -1.0, 1.0 - 1.0 / INT16_FULL_SCALE)
    pcm = np.round(scaled * INT16_FULL_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(signal.sample_rate)
        wav.writeframes(pcm.tobytes())
