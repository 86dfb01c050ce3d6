"""Checkpoint archives.

A checkpoint is a zip file with:
  meta.json            format_version, model config, ordered parameter index
  params/<name>        raw little-endian float32 values, C order
  extras/<key>         optional UTF-8 text members (vocab tables, label maps)

Zip timestamps are pinned so identical state produces byte-identical files.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    extras: dict[str, str] = field(default_factory=dict)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path, params: dict[str, np.ndarray], config: dict, extras: dict[str, str] | None = None) -> None:
    names = sorted(params)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "params": [{"name": n, "shape": list(np.asarray(params[n]).shape)} for n in names],
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr(_member("meta.json"), json.dumps(meta, sort_keys=True, indent=1))
        for n in names:
            zf.writestr(_member(f"params/{n}"), np.ascontiguousarray(params[n], dtype="<f4").tobytes())
        for key in sorted(extras or {}):
            zf.writestr(_member(f"extras/{key}"), extras[key])


def load_checkpoint(path) -> Checkpoint:
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json").decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {meta.get('format_version')!r}")
        params = {}
        for entry in meta["params"]:
            raw = zf.read(f"params/{entry['name']}")
            arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            params[entry["name"]] = arr.reshape(entry["shape"])
        extras = {}
        for info in zf.infolist():
            if info.filename.startswith("extras/"):
                extras[info.filename[len("extras/"):]] = zf.read(info).decode("utf-8")
    return Checkpoint(config=meta["config"], params=params, extras=extras)
