"""On-disk formats: latent files and key files.

Binary latent file (canonical, any extension other than ``.json``)::

    b"GSLT" | uint32 LE header length | UTF-8 JSON header | n_dims float64 LE

The header is compact, key-sorted JSON with ``format_version``, ``n_dims``,
``window`` and an optional ``manifest`` object. The JSON variant stores the
same header keys plus ``values`` in a single object.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cipher import KeyMaterial
from .exceptions import GaussianShadingError

FORMAT_VERSION = 1
MAGIC = b"GSLT"


class LatentFormatError(GaussianShadingError, ValueError):
    pass


@dataclass
class LatentFile:
    values: np.ndarray
    window: int = 1
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise LatentFormatError("latent body must be a non-empty vector")
        if not np.isfinite(self.values).all():
            raise LatentFormatError("latent body contains non-finite values")
        if not isinstance(self.window, int) or not 1 <= self.window <= 16:
            raise LatentFormatError(f"invalid window {self.window!r}")

    @property
    def n_dims(self) -> int:
        return int(self.values.size)

    @property
    def n_bits(self) -> int:
        return int(self.manifest.get("n_bits", self.n_dims * self.window))

    def header(self) -> dict:
        out = {"format_version": FORMAT_VERSION, "n_dims": self.n_dims, "window": self.window}
        if self.manifest:
            out["manifest"] = self.manifest
        return out


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _check_header(header) -> tuple[int, int, dict]:
    if not isinstance(header, dict):
        raise LatentFormatError("header must be a JSON object")
    if header.get("format_version") != FORMAT_VERSION:
        raise LatentFormatError(f"unsupported format_version {header.get('format_version')!r}")
    n_dims, window = header.get("n_dims"), header.get("window")
    if not isinstance(n_dims, int) or n_dims < 1:
        raise LatentFormatError("header n_dims must be a positive integer")
    if not isinstance(window, int):
        raise LatentFormatError("header window must be an integer")
    manifest = header.get("manifest", {})
    if not isinstance(manifest, dict):
        raise LatentFormatError("manifest must be an object")
    return n_dims, window, manifest


def dumps_latent(latent: LatentFile, as_json: bool = False) -> bytes:
    if as_json:
        obj = latent.header()
        obj["values"] = latent.values.tolist()
        return _canonical(obj) + b"\n"
    header = _canonical(latent.header())
    return MAGIC + struct.pack("<I", len(header)) + header + latent.values.astype("<f8").tobytes()


def loads_latent(data: bytes, as_json: bool = False) -> LatentFile:
    if as_json:
        try:
            obj = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise LatentFormatError(f"corrupt JSON latent file: {exc}") from exc
        n_dims, window, manifest = _check_header(obj)
        values = obj.get("values")
        if not isinstance(values, list) or len(values) != n_dims:
            raise LatentFormatError("values length does not match n_dims")
        return LatentFile(np.array(values, dtype=np.float64), window, manifest)

    if len(data) < 8 or data[:4] != MAGIC:
        raise LatentFormatError("not a latent file (bad magic)")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LatentFormatError(f"corrupt header: {exc}") from exc
    n_dims, window, manifest = _check_header(header)
    body = data[8 + hlen:]
    if len(body) != 8 * n_dims:
        raise LatentFormatError(f"body holds {len(body)} bytes, header promises {n_dims} float64 values")
    return LatentFile(np.frombuffer(body, dtype="<f8").astype(np.float64), window, manifest)


def _is_json(path) -> bool:
    return Path(path).suffix.lower() == ".json"


def write_latent(path, latent: LatentFile) -> Path:
    path = Path(path)
    path.write_bytes(dumps_latent(latent, _is_json(path)))
    return path


def read_latent(path) -> LatentFile:
    path = Path(path)
    return loads_latent(path.read_bytes(), _is_json(path))


def write_key(path, key: KeyMaterial, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")
    path.write_text(json.dumps(key.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_key(path) -> KeyMaterial:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return KeyMaterial.from_dict(data)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise GaussianShadingError(f"invalid key file {path}: {exc}") from exc
