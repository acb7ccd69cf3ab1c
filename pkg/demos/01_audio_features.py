# Audio front end walkthrough: filterbanks, pitch, deltas, normalization.
#
# Run:  python3 demos/01_audio_features.py

import numpy as np

from emobranch import AudioSignal, FramingSpec, extract_fbank, frame_signal
from emobranch.features import StreamTag, append_deltas, concat_streams, normalize_features
from emobranch.pitch import extract_pitch, track_pitch

SR = 16000

# one second of a 200 Hz harmonic tone with a little noise
rng = np.random.default_rng(0)
t = np.arange(SR) / SR
wave = 0.6 * np.sin(2 * np.pi * 200 * t) + 0.2 * np.sin(2 * np.pi * 400 * t)
signal = AudioSignal(wave + 0.02 * rng.standard_normal(SR), SR)

# the 25 ms and 250 ms streams share one 10 ms frame grid, so their frame
# counts always match and the streams can be concatenated frame by frame
short_frames = frame_signal(signal, FramingSpec(10.0, 25.0))
long_frames = frame_signal(signal, FramingSpec(10.0, 250.0))
print("frames (25 ms):", short_frames.shape)
print("frames (250 ms):", long_frames.shape)

fbk25 = extract_fbank(signal, FramingSpec(10.0, 25.0), stream_tag=StreamTag.FBK25)
fbk250 = extract_fbank(signal, FramingSpec(10.0, 250.0), stream_tag=StreamTag.FBK250)
print("fbk25:", fbk25.values.shape, " fbk250:", fbk250.values.shape)

# pitch: NCCF candidates -> Viterbi path -> POV-weighted mean subtraction
log_pitch, pov = track_pitch(signal)
print(f"raw log pitch (interior mean): {log_pitch[10:-10].mean():.4f}"
      f"  target log(200) = {np.log(200):.4f}")
print(f"mean probability of voicing: {pov.mean():.3f}")

pitch = extract_pitch(signal)
print(f"after POV-weighted mean subtraction: |mean| = {abs(pitch.values.mean()):.2e}")

# the 82-d frame-synchronous audio stream: (fbk25 + pitch) with deltas
audio25 = append_deltas(concat_streams([fbk25, pitch]))
print("audio25 stream:", audio25.values.shape)

# dialogue-level variance normalization, then utterance-level mean
# subtraction (each stream is normalized on its own)
half = audio25.values.shape[0] // 2
first = type(audio25)(audio25.values[:half], 10.0, StreamTag.COMBINED)
second = type(audio25)(audio25.values[half:], 10.0, StreamTag.COMBINED)
normalized = normalize_features({"utt_a": first, "utt_b": second},
                                {"utt_a": "dlg0", "utt_b": "dlg0"})
for name, feat in normalized.items():
    print(f"{name}: per-dim mean after normalization = "
          f"{np.abs(feat.values.mean(axis=0)).max():.2e}")
