"""Corpus manifest: one JSON object per line describing one utterance."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import FormatError
from .textio import WordAlignment

REQUIRED_FIELDS = ("utt_id", "dialogue_id", "session", "speaker", "position",
                   "audio_path", "ref_transcript", "ref_alignments",
                   "asr_transcript", "raw_label")


@dataclass
class UtteranceRecord:
    """Everything known about one utterance before feature extraction."""

    utt_id: str
    dialogue_id: str
    session: int
    speaker: str
    position: int
    audio_path: str
    ref_transcript: str
    ref_alignments: list[WordAlignment] = field(default_factory=list)
    asr_transcript: str = ""
    raw_label: str = ""


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            missing = [k for k in REQUIRED_FIELDS if k not in obj]
            if missing:
                raise FormatError(f"{path}:{lineno}: missing fields {missing}")
            alignments = [WordAlignment(a["word"], float(a["start_ms"]), float(a["end_ms"]))
                          for a in obj["ref_alignments"]]
            record = UtteranceRecord(
                utt_id=str(obj["utt_id"]),
                dialogue_id=str(obj["dialogue_id"]),
                session=int(obj["session"]),
                speaker=str(obj["speaker"]),
                position=int(obj["position"]),
                audio_path=str(obj["audio_path"]),
                ref_transcript=str(obj["ref_transcript"]),
                ref_alignments=alignments,
                asr_transcript=str(obj["asr_transcript"]),
                raw_label=str(obj["raw_label"]),
            )
            if record.utt_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate utt_id {record.utt_id!r}")
            seen.add(record.utt_id)
            records.append(record)
    return records


def write_manifest(path: str | Path, records: Sequence[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            obj = asdict(record)
            obj["ref_alignments"] = [
                {"word": a.word, "start_ms": a.start_ms, "end_ms": a.end_ms}
                for a in record.ref_alignments
            ]
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def dialogue_order(records: Sequence[UtteranceRecord]) -> dict[str, list[str]]:
    """Utterance ids of each dialogue, sorted by dialogue position."""
    groups: dict[str, list[UtteranceRecord]] = {}
    for record in records:
        groups.setdefault(record.dialogue_id, []).append(record)
    out: dict[str, list[str]] = {}
    for dialogue_id, members in groups.items():
        members.sort(key=lambda r: r.position)
        positions = [m.position for m in members]
        if len(set(positions)) != len(positions):
            raise FormatError(f"dialogue {dialogue_id!r}: duplicate positions")
        out[dialogue_id] = [m.utt_id for m in members]
    return out
