"""File formats: curve JSON, binary field files, CSV tables and run manifests.

Every writer goes through ``atomic_write`` (temp file in the target directory,
then ``os.replace``), so a crashed run never leaves a half-written output.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .propagator import SpatialGrid, WaveField
from .selfaffine import SelfAffineCurve

try:
    from importlib.metadata import version as _dist_version

    __version__ = _dist_version("fdl")
except Exception:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


# curves


def save_curve(curve: SelfAffineCurve, path) -> str:
    """Write the curve as JSON and return the sha256 of the bytes written."""
    data = json.dumps(curve.to_dict(), separators=(",", ":"), sort_keys=True).encode() + b"\n"
    atomic_write(path, data)
    return hashlib.sha256(data).hexdigest()


def load_curve(path) -> tuple[SelfAffineCurve, str]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"curve file {path} does not exist")
    raw = path.read_bytes()
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None
    return SelfAffineCurve.from_dict(obj), hashlib.sha256(raw).hexdigest()


# fields


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_field(field_: WaveField, path) -> str:
    """Little-endian interleaved (re, im) float64 plus a ``<name>.json`` sidecar."""
    v = np.ascontiguousarray(field_.values, dtype=np.complex128)
    data = v.view(np.float64).astype("<f8").tobytes()
    atomic_write(_sidecar(path), _json_bytes(field_.grid.to_dict()))
    atomic_write(path, data)
    return hashlib.sha256(data).hexdigest()


def load_field(path) -> WaveField:
    side = _sidecar(path)
    if not side.is_file():
        raise ValidationError(f"missing field sidecar {side}")
    meta = json.loads(side.read_text())
    grid = SpatialGrid(int(meta["d"]), int(meta["Nx"]), float(meta["L"]))
    flat = np.fromfile(path, dtype="<f8")
    if flat.size != 2 * grid.nx**grid.d:
        raise ValidationError(f"{path} holds {flat.size} floats, expected {2 * grid.nx ** grid.d}")
    values = flat.astype(np.float64).view(np.complex128).reshape(grid.shape)
    return WaveField(grid, values)


# tables


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path, columns, rows) -> Path:
    return atomic_write(path, csv_bytes(columns, rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    return atomic_write(path, _json_bytes(obj))


# manifests


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class ExperimentManifest:
    command: str
    params: dict
    input_hashes: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    exit_status: int | None = None
    outputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def close(self, status: int) -> None:
        self.finished = _now()
        self.exit_status = status

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "input_hashes": self.input_hashes,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "exit_status": self.exit_status,
            "outputs": self.outputs,
            "results": self.results,
        }

    def write(self, path) -> Path:
        return write_json(path, self.to_dict())


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
