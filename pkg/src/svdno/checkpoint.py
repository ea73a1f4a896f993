"""Binary checkpoint container: JSON header (config echo + manifest) followed
by raw row-major little-endian float64 parameter payloads.  Round-trips are
bit-exact."""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"SVDNOCK1"
FORMAT_VERSION = 1

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(path, config_echo: dict, params: dict):
    manifest = []
    payloads = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(arr.tobytes())
        offset += len(payloads[-1])
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "config": config_echo,
        "manifest": manifest,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (config_echo, {name: float64 array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + hlen:
        raise FormatError(f"{path}: truncated header at offset 16")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')}")
    payload = raw[16 + hlen:]
    params = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8 if shape else 8
        lo = entry["offset"]
        if lo + nbytes > len(payload):
            raise FormatError(f"{path}: truncated payload for {entry['name']!r} "
                              f"at offset {16 + hlen + lo}")
        params[entry["name"]] = np.frombuffer(
            payload[lo:lo + nbytes], dtype="<f8").reshape(shape).copy()
    return header["config"], params
