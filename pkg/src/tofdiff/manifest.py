"""On-disk datasets: one PFM per plane plus a JSON manifest tying them together.

Layout under a dataset directory::

    manifest.json
    records/<id>/ideal_i.pfm  ideal_q.pfm      clean raw correlations
                 noisy_i.pfm  noisy_q.pfm      noisy raw correlations
                 gt_depth.pfm gt_valid.pfm     ground truth depth and 0/1 mask
                 noisy_depth.pfm noisy_valid.pfm
                 confidence.pfm
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pfm import read_pfm, write_atomic, write_pfm
from .rangecodec import normalize_pair
from .tofmodel import RawFrame
from .training import SampleRecord

MANIFEST_VERSION = 1
FILE_KEYS = (
    "ideal_i", "ideal_q", "noisy_i", "noisy_q",
    "gt_depth", "gt_valid", "noisy_depth", "noisy_valid", "confidence",
)


class ManifestError(ValueError):
    pass


@dataclass
class DatasetManifest:
    frequency_hz: float
    scale_const: float
    noise: dict
    records: list[dict] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    root: Path = Path(".")

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "frequency_hz": self.frequency_hz,
            "scale_const": self.scale_const,
            "noise": self.noise,
            "records": self.records,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def split(self, name: str) -> list[dict]:
        return [r for r in self.records if r.get("split") == name]

    def path(self, rec: dict, key: str) -> Path:
        return self.root / rec["files"][key]


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {doc.get('version')}")
    m = DatasetManifest(doc["frequency_hz"], doc["scale_const"], doc["noise"], doc["records"],
                        doc["version"], path.parent)
    check_manifest(m)
    return m


def check_manifest(m: DatasetManifest) -> None:
    """Referential integrity: unique ids and every file present and parseable."""
    ids = [r["id"] for r in m.records]
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate record ids")
    for r in m.records:
        for key in FILE_KEYS:
            p = m.path(r, key)
            if not p.is_file():
                raise ManifestError(f"record {r['id']}: missing {key} file {p}")
            with open(p, "rb") as f:
                if f.read(2) != b"Pf":
                    raise ManifestError(f"record {r['id']}: {p} is not a grayscale PFM")


def write_record(root: Path, rec_id: str, rec: SampleRecord) -> dict:
    rdir = root / "records" / rec_id
    rdir.mkdir(parents=True, exist_ok=True)
    planes = {
        "ideal_i": rec.ideal_raw[0], "ideal_q": rec.ideal_raw[1],
        "noisy_i": rec.noisy_raw[0], "noisy_q": rec.noisy_raw[1],
        "gt_depth": rec.gt_depth, "gt_valid": rec.gt_valid.astype(np.float64),
        "noisy_depth": rec.noisy_depth, "noisy_valid": rec.noisy_valid.astype(np.float64),
        "confidence": rec.confidence,
    }
    files = {}
    for key, img in planes.items():
        write_pfm(rdir / f"{key}.pfm", img)
        files[key] = f"records/{rec_id}/{key}.pfm"
    return {"id": rec_id, "seed": int(rec.seed), "files": files}


def write_manifest(m: DatasetManifest, path) -> None:
    write_atomic(path, m.to_json().encode())


def load_record(m: DatasetManifest, rec: dict) -> SampleRecord:
    """Rebuild the in-memory record (normalized planes are derived, not stored)."""
    img = {k: read_pfm(m.path(rec, k)).astype(np.float64) for k in FILE_KEYS}
    ideal = RawFrame(img["ideal_i"], img["ideal_q"], m.frequency_hz)
    noisy = RawFrame(img["noisy_i"], img["noisy_q"], m.frequency_hz)
    ideal_n = normalize_pair(ideal, m.scale_const)
    noisy_n = normalize_pair(noisy, m.scale_const)
    gt_valid = img["gt_valid"] > 0.5
    noisy_valid = img["noisy_valid"] > 0.5
    return SampleRecord(
        ideal=np.stack([ideal_n.i_plane, ideal_n.q_plane]),
        noisy=np.stack([noisy_n.i_plane, noisy_n.q_plane]),
        ideal_raw=np.stack([ideal.i_plane, ideal.q_plane]),
        noisy_raw=np.stack([noisy.i_plane, noisy.q_plane]),
        confidence=img["confidence"],
        gt_depth=np.where(gt_valid, img["gt_depth"], 0.0),
        gt_valid=gt_valid,
        noisy_depth=np.where(noisy_valid, img["noisy_depth"], 0.0),
        noisy_valid=noisy_valid,
        seed=int(rec["seed"]),
        frequency_hz=m.frequency_hz,
    )


def load_split(m: DatasetManifest, split: str) -> list[SampleRecord]:
    recs = m.split(split)
    if not recs:
        raise ManifestError(f"manifest has no {split!r} records")
    return [load_record(m, r) for r in recs]


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
