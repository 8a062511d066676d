"""Field snapshots, output directories and run manifests.

Snapshot layout (all little-endian)::

    b"PHI4"  u32 version  u32 d  u32 N  u32 kind  f64 t  payload

``kind`` 0 is a real field: ``N**d`` float64 samples in C (lexicographic)
order.  ``kind`` 1 is a spectrum: all ``N**d`` modes with each component
running over ``-N/2+1 .. N/2`` in ascending lexicographic order, stored as
interleaved ``(re, im)`` float64 pairs, normalised like the forward
transform (divided by ``N**d``).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import TimeField, TorusGrid, full_spectrum

MAGIC = b"PHI4"
FORMAT_VERSION = 1
KIND_REAL, KIND_SPECTRAL = 0, 1
_HEADER = struct.Struct("<4sIIIId")
OUT_ROOT_ENV = "PHI43_OUT_ROOT"


class SnapshotError(ValueError):
    """Malformed or mismatched snapshot."""


@dataclass
class Snapshot:
    d: int
    N: int
    kind: int
    t: float
    data: np.ndarray


def _ordered_index(N: int) -> np.ndarray:
    """fftn positions of ``k = -N/2+1 .. N/2`` in ascending order."""
    return np.arange(-N // 2 + 1, N // 2 + 1) % N


def encode_snapshot(field_: np.ndarray, t: float, kind: str = "real") -> bytes:
    f = np.asarray(field_, dtype=float)
    d, N = f.ndim, f.shape[0]
    if any(n != N for n in f.shape):
        raise SnapshotError("snapshots need one shared N per axis")
    if kind == "real":
        payload = f.astype("<f8").tobytes(order="C")
        code = KIND_REAL
    elif kind == "spectral":
        F = full_spectrum(TorusGrid(d, N), f)
        idx = _ordered_index(N)
        F = F[np.ix_(*([idx] * d))]
        pairs = np.stack([F.real, F.imag], axis=-1)
        payload = pairs.astype("<f8").tobytes(order="C")
        code = KIND_SPECTRAL
    else:
        raise SnapshotError(f"unknown snapshot kind {kind!r}")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, d, N, code, float(t)) + payload


def decode_snapshot(buf: bytes) -> Snapshot:
    if len(buf) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, d, N, kind, t = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported format version {version}")
    body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if kind == KIND_REAL:
        if body.size != N**d:
            raise SnapshotError("payload size does not match header")
        return Snapshot(d, N, kind, t, body.reshape((N,) * d).astype(float))
    if kind == KIND_SPECTRAL:
        if body.size != 2 * N**d:
            raise SnapshotError("payload size does not match header")
        pairs = body.reshape((N,) * d + (2,))
        return Snapshot(d, N, kind, t, pairs[..., 0] + 1j * pairs[..., 1])
    raise SnapshotError(f"unknown payload kind {kind}")


def snapshot_to_real(s: Snapshot) -> np.ndarray:
    """Physical field of either snapshot kind."""
    if s.kind == KIND_REAL:
        return s.data
    full = np.empty((s.N,) * s.d, dtype=complex)
    idx = _ordered_index(s.N)
    full[np.ix_(*([idx] * s.d))] = s.data
    return np.real(np.fft.ifftn(full) * s.N**s.d)


def write_snapshot(path, field_: np.ndarray, t: float, kind: str = "real") -> None:
    Path(path).write_bytes(encode_snapshot(field_, t, kind))


def read_snapshot(path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


def encode_timefield(tf: TimeField, kind: str = "real") -> bytes:
    """Concatenated snapshots, one per stored time."""
    return b"".join(encode_snapshot(f, t, kind) for f, t in zip(tf.data, tf.times))


def decode_timefield(buf: bytes) -> list[Snapshot]:
    out, pos = [], 0
    while pos < len(buf):
        _, _, d, N, kind, _ = _HEADER.unpack_from(buf, pos)
        size = _HEADER.size + 8 * N**d * (2 if kind == KIND_SPECTRAL else 1)
        out.append(decode_snapshot(buf[pos:pos + size]))
        pos += size
    return out


# -- output directories -------------------------------------------------------------

def resolve_out(out: str | os.PathLike) -> Path:
    """Relative paths are taken under ``$PHI43_OUT_ROOT`` when it is set."""
    p = Path(out)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class OutputDir:
    """Single writer for one output directory; records every file it writes."""

    path: Path
    files: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def create(cls, out) -> "OutputDir":
        p = resolve_out(out)
        if not p.parent.exists():
            raise FileNotFoundError(f"parent of output directory does not exist: {p.parent}")
        p.mkdir(exist_ok=True)
        return cls(p)

    def write_bytes(self, name: str, data: bytes) -> Path:
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.files[name] = {"bytes": len(data), "sha256": _sha256(data)}
        return target

    def write_json(self, name: str, obj) -> Path:
        return self.write_bytes(name, (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode())

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        return self.write_bytes(name, buf.getvalue().encode())

    def write_jsonl(self, name: str, records) -> Path:
        text = "".join(json.dumps(r, sort_keys=True, default=_jsonable) + "\n" for r in records)
        return self.write_bytes(name, text.encode())

    def write_manifest(self, manifest: "Manifest") -> Path:
        manifest.files = dict(sorted(self.files.items()))
        target = self.path / "manifest.json"
        target.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        return target


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


@dataclass
class Manifest:
    """Reproducibility record; ``config`` alone is enough to re-run."""

    command: str
    config: dict
    config_hash: str
    code_version: str
    constants: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    finished: float | None = None
    files: dict[str, dict] = field(default_factory=dict)

    def finish(self) -> "Manifest":
        self.finished = time.time()
        return self

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "config_hash": self.config_hash,
                "code_version": self.code_version, "constants": self.constants,
                "started": self.started, "finished": self.finished, "files": self.files}


def read_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    return json.loads(p.read_text())
