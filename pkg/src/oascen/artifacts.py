"""On-disk dataset bundles and run manifests.

Everything is JSON written with sorted keys and ``repr`` floats, and nothing
time-dependent is recorded, so rerunning a command reproduces its files byte
for byte.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from pathlib import Path

import numpy as np

from .dataprep import DaySample, day_stats
from .errors import DataIOError, ParseError

BUNDLE_FORMAT = "oascen-bundle"
MANIFEST_FORMAT = "oascen-manifest"
VERSION = 1


def dump_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_json(path, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read {what} {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what} {path} is not valid JSON: {exc}") from exc


def sha256(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


# -- dataset bundle -----------------------------------------------------

def save_bundle(path, zones, train, test, dropped: dict) -> None:
    def enc(s: DaySample, split: str):
        st = day_stats(s)
        return {"date": s.date.isoformat(), "label": s.label, "split": split,
                "da": s.da_real.tolist(), "rt": s.rt_real.tolist(),
                "da_min": st.da_min.tolist(), "da_ave": st.da_ave.tolist(),
                "da_max": st.da_max.tolist()}

    days = [enc(s, "train") for s in train] + [enc(s, "test") for s in test]
    days.sort(key=lambda d: d["date"])
    dump_json(path, {"format": BUNDLE_FORMAT, "version": VERSION, "zones": list(zones),
                     "horizon": (train or test)[0].da_real.shape[1],
                     "dropped": dropped, "days": days})


class Bundle:
    def __init__(self, zones, horizon, samples, splits):
        self.zones = tuple(zones)
        self.horizon = horizon
        self.samples = samples
        self.splits = splits

    def select(self, split: str) -> list[DaySample]:
        if split == "all":
            return list(self.samples)
        return [s for s, sp in zip(self.samples, self.splits) if sp == split]


def load_bundle(path) -> Bundle:
    doc = read_json(path, "bundle")
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise ParseError(f"{path} is not a dataset bundle")
    try:
        samples, splits = [], []
        for d in doc["days"]:
            samples.append(DaySample(dt.date.fromisoformat(d["date"]), np.array(d["da"], float),
                                     np.array(d["rt"], float), int(d["label"])))
            splits.append(d["split"])
        return Bundle(doc["zones"], int(doc["horizon"]), samples, splits)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed bundle {path}: {exc!r}") from exc


# -- manifests ----------------------------------------------------------

def write_manifest(path, command: str, argv, config: dict, inputs, outputs, seed=None) -> None:
    from . import __version__
    dump_json(path, {
        "format": MANIFEST_FORMAT,
        "version": VERSION,
        "tool_version": __version__,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
    })


def load_manifest(path) -> dict:
    doc = read_json(path, "manifest")
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise ParseError(f"{path} is not a run manifest")
    for key in ("argv", "inputs", "outputs"):
        if key not in doc:
            raise ParseError(f"manifest {path} lacks {key!r}")
    return doc
