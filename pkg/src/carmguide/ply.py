"""Binary PLY reading and writing for point clouds.

The on-disk format is little-endian binary PLY with exactly three float32
properties x/y/z in millimeters. Round trips are exact at float32 precision;
writing a cloud whose coordinates came from a previous read reproduces the
file byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class PlyError(ValueError):
    """Malformed or unsupported PLY content; message names the file."""


_HEADER = (
    "ply\n"
    "format binary_little_endian 1.0\n"
    "comment units millimeters\n"
    "element vertex {count}\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "end_header\n"
)


def write_ply(path, points: np.ndarray) -> None:
    """Write an (N, 3) array as binary little-endian float32 PLY."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    path = Path(path)
    data = pts.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.format(count=pts.shape[0]).encode("ascii"))
        fh.write(data)


def read_ply(path) -> np.ndarray:
    """Read a PLY written by write_ply; returns float64 (N, 3) in mm."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise PlyError(f"{path}: not a PLY file")
    header = blob[: end + len(b"end_header\n")]
    lines = header.decode("ascii", errors="replace").splitlines()
    if "format binary_little_endian 1.0" not in lines[1]:
        raise PlyError(f"{path}: unsupported PLY format line {lines[1]!r}")
    count = None
    props = []
    for line in lines[2:]:
        if line.startswith("element vertex "):
            try:
                count = int(line.split()[-1])
            except ValueError as exc:
                raise PlyError(f"{path}: bad vertex count in {line!r}") from exc
        elif line.startswith("element "):
            raise PlyError(f"{path}: unexpected element {line!r}")
        elif line.startswith("property "):
            props.append(line.split()[-1])
    if count is None:
        raise PlyError(f"{path}: missing vertex element")
    if props != ["x", "y", "z"]:
        raise PlyError(f"{path}: expected float x/y/z properties, got {props}")
    body = blob[end + len(b"end_header\n"):]
    need = count * 12
    if len(body) < need:
        raise PlyError(
            f"{path}: truncated body, expected {need} bytes for {count} vertices,"
            f" got {len(body)}"
        )
    if len(body) > need:
        raise PlyError(f"{path}: {len(body) - need} trailing bytes after vertex data")
    try:
        flat = struct.unpack(f"<{count * 3}f", body)
    except struct.error as exc:
        raise PlyError(f"{path}: undecodable vertex data") from exc
    return np.asarray(flat, dtype=np.float64).reshape(count, 3)
