#!/usr/bin/env python3
"""Regenerate prompts/manifest.json from the template files.

Run after editing any prompt asset; the C++ loader refuses assets whose
sha256 does not match the manifest.
"""
import hashlib
import json
import pathlib
import re
import sys

TEMPLATES = [
    ("StageClassifier", "stage_classifier.txt"),
    ("AgentSystem", "agent_system.txt"),
    ("SpeakerClassifier", "speaker_classifier.txt"),
    ("VoiceStyle", "voice_style.txt"),
    ("JudgeRole", "judge_role.txt"),
    ("JudgeStage", "judge_stage.txt"),
    ("JudgeConsistency", "judge_consistency.txt"),
]

SECTION = re.compile(r"^\[([A-Za-z0-9_.]+)\]$")
SLOT = re.compile(r"\{\{(>?)([A-Za-z0-9_.]+)\}\}")


def body_of(text):
    lines = text.split("\n")
    if not lines or not SECTION.match(lines[0]):
        return text
    out, current = [], None
    for line in lines:
        m = SECTION.match(line)
        if m:
            current = m.group(1)
            continue
        if current == "body":
            out.append(line)
    return "\n".join(out)


def slots_of(body):
    names = set()
    for include, name in SLOT.findall(body):
        if include:
            names.update(name.split(".")[1:])
        else:
            names.add(name)
    return sorted(names)


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "prompts")
    entries = []
    for tid, fname in TEMPLATES:
        data = (root / fname).read_bytes()
        entries.append({
            "id": tid,
            "file": fname,
            "sha256": hashlib.sha256(data).hexdigest(),
            "required_slots": slots_of(body_of(data.decode("utf-8"))),
        })
    data = (root / "scenarios.json").read_bytes()
    entries.append({"id": "Scenarios", "file": "scenarios.json",
                    "sha256": hashlib.sha256(data).hexdigest(), "required_slots": []})
    (root / "manifest.json").write_text(json.dumps(entries, indent=2) + "\n")


if __name__ == "__main__":
    main()
