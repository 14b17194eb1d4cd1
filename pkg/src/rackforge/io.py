"""Serialization: layout grids (.lay), probability grids (.plf), scenes, poses, JSON artifacts.

Binary header (little-endian, 13 bytes)::

    magic  4s   b"MVRL"
    version u16  1
    view    u8   0 = top, 1 = front
    R       u16  shelf channels
    D       u32  grid side

followed by R*D*D payload cells in channel-major, row-major order: one
byte per cell for ``.lay``, three float32 values per cell for ``.plf``.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
from importlib import resources

import jsonschema
import numpy as np

from .errors import FormatError, ValidationError
from .layout import FRONT, TOP, CameraPose, LayoutStack, ProbabilityStack
from .scene import SceneGraph

MAGIC = b"MVRL"
VERSION = 1
HEADER = struct.Struct("<4sHBHI")
VIEW_CODES = {TOP: 0, FRONT: 1}
VIEW_NAMES = {v: k for k, v in VIEW_CODES.items()}


def _header(view, r, d):
    return HEADER.pack(MAGIC, VERSION, VIEW_CODES[view], r, d)


def parse_header(data, what):
    if len(data) < HEADER.size:
        raise FormatError(f"{what}: truncated header ({len(data)} of {HEADER.size} bytes)", offset=len(data))
    magic, version, view, r, d = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{what}: bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"{what}: unsupported version {version}", offset=4)
    if view not in VIEW_NAMES:
        raise FormatError(f"{what}: unknown view tag {view}", offset=6)
    return VIEW_NAMES[view], r, d


def layout_bytes(stack):
    r, d = stack.num_shelves, stack.resolution
    return _header(stack.view, r, d) + np.ascontiguousarray(stack.channels, dtype=np.uint8).tobytes()


def parse_layout(data, frame_index=0, what="layout"):
    view, r, d = parse_header(data, what)
    n = r * d * d
    end = HEADER.size + n
    if len(data) != end:
        raise FormatError(f"{what}: expected {n} cell bytes, found {len(data) - HEADER.size}",
                          offset=min(len(data), end))
    cells = np.frombuffer(data, dtype=np.uint8, offset=HEADER.size).reshape(r, d, d)
    if cells.size and cells.max() > 2:
        bad = int(np.flatnonzero(cells.ravel() > 2)[0])
        raise FormatError(f"{what}: invalid cell class {int(cells.ravel()[bad])}", offset=HEADER.size + bad)
    return LayoutStack(view, cells.copy(), frame_index)


def probs_bytes(stack):
    p = np.ascontiguousarray(stack.probs, dtype="<f4")
    r, d = p.shape[0], p.shape[1]
    return _header(stack.view, r, d) + p.tobytes()


def parse_probs(data, frame_index=0, what="probabilities"):
    view, r, d = parse_header(data, what)
    n = r * d * d * 3 * 4
    end = HEADER.size + n
    if len(data) != end:
        raise FormatError(f"{what}: expected {n} payload bytes, found {len(data) - HEADER.size}",
                          offset=min(len(data), end))
    p = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(r, d, d, 3)
    return ProbabilityStack(view, p.astype(np.float32), frame_index)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def save_layout(path, stack):
    _write(path, layout_bytes(stack))


def load_layout(path, frame_index=0):
    return parse_layout(_read(path), frame_index, what=str(path))


def save_probs(path, stack):
    _write(path, probs_bytes(stack))


def load_probs(path, frame_index=0):
    return parse_probs(_read(path), frame_index, what=str(path))


# JSON --------------------------------------------------------------------------

def dumps(obj):
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(obj))


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc.msg}", offset=exc.pos) from None


def _schema(name):
    return json.loads(resources.files("rackforge").joinpath("schemas", name).read_text())


def validate(obj, schema_name):
    try:
        jsonschema.validate(obj, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{schema_name}: field {field}: {exc.message}", field=field) from None


def scene_to_json(scene):
    return dumps(scene.to_dict())


def save_scene(path, scene):
    save_json(path, scene.to_dict())


def load_scene(path):
    d = load_json(path)
    validate(d, "scene.schema.json")
    try:
        return SceneGraph.from_dict(d)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# poses CSV ---------------------------------------------------------------------

POSE_FIELDS = ("frame", "x", "y", "z", "yaw")


def poses_to_csv(poses):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POSE_FIELDS)
    for k, p in enumerate(poses):
        w.writerow([k, repr(p.position[0]), repr(p.position[1]), repr(p.position[2]), repr(p.yaw)])
    return buf.getvalue()


def save_poses(path, poses):
    with open(path, "w", newline="") as fh:
        fh.write(poses_to_csv(poses))


def load_poses(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != POSE_FIELDS:
        raise ValidationError(f"{path}: header must be {','.join(POSE_FIELDS)}", field="header")
    poses = []
    for n, row in enumerate(rows[1:], start=1):
        try:
            k, x, y, z, yaw = int(row[0]), *map(float, row[1:5])
        except (ValueError, IndexError):
            raise ValidationError(f"{path}: malformed pose on line {n + 1}", field=f"line {n + 1}") from None
        if k != n - 1:
            raise ValidationError(f"{path}: frame numbers must count from 0, got {k} on line {n + 1}",
                                  field="frame")
        poses.append(CameraPose((x, y, z), yaw))
    return poses


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
