"""ITL1 binary container: a small self-describing file format used for every
array artifact in this package (slices, profiles, TL curves, checkpoints, maps).

Layout (all integers little-endian):

    bytes 0..3    magic b"ITL1"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..15   u64 byte length of the JSON header
    next          UTF-8 JSON header
    remainder     float32 little-endian payload, row-major, arrays
                  concatenated in the order listed under header["arrays"]

The header always carries ``arrays`` (list of ``{"name", "shape"}``) and
``dtype`` (``"f32le"``); everything else lives under ``meta``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ITL1"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")


class ContainerError(ValueError):
    """Raised on malformed, truncated, or mismatched container files."""


def write_container(path, arrays, meta=None):
    """Write named float arrays plus a JSON metadata block to ``path``.

    ``arrays`` is a dict name -> ndarray (insertion order is preserved and is
    the payload order). Values are cast to little-endian float32.
    """
    specs = []
    payloads = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        specs.append({"name": name, "shape": list(a.shape)})
        payloads.append(a.tobytes())
    header = {"dtype": "f32le", "arrays": specs, "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def read_container(path):
    """Read a container; returns (dict name -> float32 ndarray, meta dict)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise ContainerError(f"{path}: truncated header")
        magic, version, hlen = _HEAD.unpack(head)
        if magic != MAGIC:
            raise ContainerError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported version {version}")
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise ContainerError(f"{path}: truncated JSON header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: unreadable header: {exc}") from exc
        if header.get("dtype") != "f32le":
            raise ContainerError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ContainerError(f"{path}: truncated payload for array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return arrays, header.get("meta", {})
