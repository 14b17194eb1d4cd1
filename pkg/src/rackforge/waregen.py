"""Seeded, domain-randomized warehouse scenes, camera paths and layout sequences."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GenerationInfeasible, InvalidSplit, NoVisibleRack
from .layout import (FRONT, TOP, CameraPose, GridSpec, empty_stack, make_shelf_frame,
                     rasterize_front_view, rasterize_top_view, visible_racks)
from .scene import BoxInstance, Rack, SceneGraph, Shelf

DENSITY_MODES = ("dense", "moderate", "sparse")
MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class GenConfig:
    rack_count: tuple = (2, 5)
    shelves_per_rack: tuple = (2, 3)
    first_shelf_height: tuple = (0.15, 0.4)
    shelf_gap: tuple = (0.9, 1.3)
    rack_width: tuple = (1.2, 2.2)
    rack_depth: tuple = (0.6, 1.0)
    rack_spacing: tuple = (0.4, 1.0)
    box_count: tuple = (1, 6)  # stacks per shelf
    density_weights: dict = field(default_factory=lambda: {"dense": 1.0, "moderate": 1.0, "sparse": 1.0})
    # gap between neighbouring stacks along the shelf, per density mode (m)
    density_gaps: dict = field(default_factory=lambda: {
        "dense": (0.08, 0.2), "moderate": (0.2, 0.5), "sparse": (0.5, 1.2)})
    box_width: tuple = (0.25, 0.6)
    box_depth: tuple = (0.25, 0.55)
    box_height: tuple = (0.2, 0.45)
    stack_height: tuple = (1, 3)
    rotate_prob: float = 0.3
    max_yaw: float = 0.35
    background_warehouse_prob: float = 0.5
    fov: float = math.pi / 2
    max_range: float = 8.0
    standoff: tuple = (1.5, 3.5)
    camera_height: tuple = (1.0, 1.8)
    lead: float = 1.0  # path overshoot beyond the first/last rack (m)
    max_step: float = 0.5
    frames: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("rack_count", "shelves_per_rack", "first_shelf_height", "shelf_gap", "rack_width",
                     "rack_depth", "rack_spacing", "box_count", "box_width", "box_depth", "box_height",
                     "stack_height", "standoff", "camera_height"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: min {lo} exceeds max {hi}")
        for mode, (lo, hi) in self.density_gaps.items():
            if lo > hi or lo < 0:
                raise ValueError(f"density_gaps[{mode}] is not a valid range")
        if set(self.density_weights) - set(DENSITY_MODES) or sum(self.density_weights.values()) <= 0:
            raise ValueError("density_weights must weight dense/moderate/sparse")
        if self.rack_count[0] < 1 or self.shelves_per_rack[0] < 1 or self.stack_height[0] < 1:
            raise ValueError("rack, shelf and stack counts must be >= 1")
        if self.frames < 2:
            raise ValueError("frames per sequence must be >= 2")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                raise ValueError(f"unknown generator option {k!r}")
            if isinstance(v, list):
                v = tuple(v)
            if k == "density_gaps":
                v = {m: tuple(r) for m, r in v.items()}
            kw[k] = v
        return cls(**kw)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sequence_seed(master_seed, index):
    """Per-sequence seed derived from (master seed, sequence index)."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _u(rng, r):
    return float(rng.uniform(r[0], r[1])) if r[1] > r[0] else float(r[0])


def _i(rng, r):
    return int(rng.integers(r[0], r[1] + 1))


def _place_stacks(rng, cfg, rack_id, level, extent, elevation, clearance, mode, next_id):
    """Place box stacks left to right along one shelf; returns (boxes, next_id)."""
    xmin, xmax, zmin, zmax = extent
    target = _i(rng, cfg.box_count)
    gap_lo, gap_hi = cfg.density_gaps[mode]
    boxes = []
    cursor = xmin + _u(rng, (gap_lo, gap_hi)) / 2
    placed = 0
    attempts = 0
    while placed < target:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            if placed == 0:
                raise GenerationInfeasible(
                    f"rack {rack_id} level {level}: no box fits a {xmax - xmin:.2f} x {zmax - zmin:.2f} m "
                    f"shelf with clearance {clearance:.2f} m after {MAX_ATTEMPTS} attempts")
            break
        sx, sz = _u(rng, cfg.box_width), _u(rng, cfg.box_depth)
        sy = _u(rng, cfg.box_height)
        yaw = _u(rng, (-cfg.max_yaw, cfg.max_yaw)) if rng.random() < cfg.rotate_prob else 0.0
        c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
        ex, ez = sx / 2 * c + sz / 2 * s, sx / 2 * s + sz / 2 * c
        if sy >= clearance or 2 * ez > zmax - zmin:
            continue
        if cursor + 2 * ex > xmax:
            if placed > 0 and attempts > 50:
                break
            continue
        cx = cursor + ex
        cz = _u(rng, (zmin + ez, zmax - ez))
        base_id = next_id
        layers = _i(rng, cfg.stack_height)
        bottom = elevation
        w, d = sx, sz
        ox, oz = cx, cz
        for k in range(layers):
            h = sy if k == 0 else _u(rng, cfg.box_height)
            if bottom - elevation + h >= clearance:
                break
            if k > 0:
                shrink = _u(rng, (0.7, 1.0))
                nw, nd = w * shrink, d * shrink
                # offset in the box's own axes so the upper footprint stays inside the lower one
                du = _u(rng, (-(w - nw) / 2, (w - nw) / 2))
                dv = _u(rng, (-(d - nd) / 2, (d - nd) / 2))
                cos_y, sin_y = math.cos(yaw), math.sin(yaw)
                ox, oz = ox + du * cos_y + dv * sin_y, oz - du * sin_y + dv * cos_y
                w, d = nw, nd
            boxes.append(BoxInstance(
                id=next_id, center=(ox, bottom + h / 2, oz), size=(w, h, d), yaw=yaw, stack_level=k,
                stack_id=base_id, texture_id=int(rng.integers(0, 64)), color_id=int(rng.integers(0, 32)),
                reflectance=float(rng.uniform(0.0, 1.0)),
            ))
            next_id += 1
            bottom += h
        placed += 1
        cursor = cx + ex + _u(rng, (gap_lo, gap_hi))
    return boxes, next_id


def _build_rack(rng, cfg, rack_id, xmin, row_z, clearance, next_id, distractor=False, with_boxes=True):
    width, depth = _u(rng, cfg.rack_width), _u(rng, cfg.rack_depth)
    n_shelves = _i(rng, cfg.shelves_per_rack)
    heights = [_u(rng, cfg.first_shelf_height)]
    for _ in range(n_shelves - 1):
        heights.append(heights[-1] + _u(rng, cfg.shelf_gap))
    x, z = xmin + width / 2, row_z - depth / 2
    ext = (xmin, xmin + width, row_z - depth, row_z)
    names = list(cfg.density_weights)
    w = np.array([cfg.density_weights[k] for k in names], float)
    mode = names[int(rng.choice(len(names), p=w / w.sum()))]
    shelves = []
    for lvl, h in enumerate(heights):
        band = (heights[lvl + 1] if lvl + 1 < len(heights) else h + clearance) - h
        boxes = []
        if with_boxes:
            boxes, next_id = _place_stacks(rng, cfg, rack_id, lvl, ext, h, band, mode, next_id)
        shelves.append(Shelf(rack_id, lvl, ext, h, tuple(boxes)))
    rack = Rack(rack_id, (x, 0.0, z), width, depth, tuple(heights), tuple(shelves), distractor,
                int(rng.integers(0, 16)), int(rng.integers(0, 16)))
    return rack, mode, next_id


def generate_warehouse(config, seed=None, spec=None):
    """Racks in a row along +X with front faces on ``z = 0``."""
    spec = spec or GridSpec()
    if config.shelves_per_rack[1] > spec.num_shelves:
        raise ValueError("shelves_per_rack exceeds the grid's shelf channels")
    rng = _rng(config.seed if seed is None else seed)
    row_z = 0.0
    n_racks = _i(rng, config.rack_count)
    racks, modes, spacings = [], [], []
    xmin = 0.0
    next_id = 0
    for rid in range(n_racks):
        rack, mode, next_id = _build_rack(rng, config, rid, xmin, row_z, spec.top_clearance, next_id)
        racks.append(rack)
        modes.append(mode)
        gap = _u(rng, config.rack_spacing)
        spacings.append(gap)
        xmin = rack.extent[1] + gap
    spacings = spacings[:-1]
    background = "warehouse" if rng.random() < config.background_warehouse_prob else "wall"
    if background == "warehouse":
        # distractor racks sit beyond the camera range, so they never enter a layout
        far_z = row_z - config.standoff[1] - config.max_range - 2.0
        x = racks[0].extent[0]
        for k in range(int(rng.integers(1, 4))):
            rack, _, next_id = _build_rack(rng, config, n_racks + k, x, far_z, spec.top_clearance,
                                           next_id, distractor=True, with_boxes=False)
            racks.append(rack)
            x = rack.extent[1] + _u(rng, config.rack_spacing)
    return SceneGraph(
        racks=tuple(racks), row_z=row_z, spacings=tuple(spacings),
        floor_texture=int(rng.integers(0, 32)), floor_color=int(rng.integers(0, 32)),
        wall_texture=int(rng.integers(0, 32)), wall_color=int(rng.integers(0, 32)),
        background=background, attributes={"density": modes},
    )


def row_racks(scene):
    return [r for r in scene.racks if not r.distractor]


def generate_trajectory(config, scene, seed=None):
    """Camera path parallel to the rack row at a fixed standoff and height."""
    racks = row_racks(scene)
    if not racks:
        raise ValueError("scene has no racks")
    rng = _rng([int(config.seed if seed is None else seed), 1])
    standoff = _u(rng, config.standoff)
    height = _u(rng, config.camera_height)
    start = min(r.extent[0] for r in racks) - config.lead
    end = max(r.extent[1] for r in racks) + config.lead
    n = config.frames
    step = min(config.max_step, (end - start) / (n - 1))
    # centre the path on the row when it does not reach both ends
    x0 = (start + end) / 2 - step * (n - 1) / 2
    z = scene.row_z + standoff
    return [CameraPose((x0 + k * step, height, z), 0.0) for k in range(n)]


@dataclass(frozen=True)
class Frame:
    index: int
    pose: CameraPose
    top: object
    front: object
    origin: tuple | None  # shelf-frame origin (world), shared by both views
    visible: tuple = ()

    @property
    def empty(self):
        return self.origin is None


@dataclass(frozen=True)
class Sequence:
    scene_id: str
    frames: tuple

    def __len__(self):
        return len(self.frames)


def render_frame(scene, pose, spec, index=0, fov=math.pi / 2, max_range=8.0):
    vis = visible_racks(scene, pose, fov, max_range)
    try:
        top_frame = make_shelf_frame(scene, vis, TOP, spec)
    except NoVisibleRack:
        return Frame(index, pose, empty_stack(TOP, spec, index), empty_stack(FRONT, spec, index), None, tuple(vis))
    front_frame = make_shelf_frame(scene, vis, FRONT, spec)
    top = rasterize_top_view(scene, top_frame, spec, vis, index)
    front = rasterize_front_view(scene, front_frame, spec, vis, index)
    return Frame(index, pose, top, front, top_frame.origin, tuple(vis))


def render_sequence(scene, trajectory, spec, fov=math.pi / 2, max_range=8.0, scene_id="seq"):
    if not trajectory:
        raise ValueError("trajectory is empty")
    frames = tuple(render_frame(scene, pose, spec, k, fov, max_range) for k, pose in enumerate(trajectory))
    return Sequence(scene_id, frames)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    validation: tuple
    seed: int = 0

    def to_dict(self):
        return {"train": list(self.train), "test": list(self.test), "validation": list(self.validation),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["train"]), tuple(d["test"]), tuple(d["validation"]), int(d.get("seed", 0)))


def split_dataset(sequences, ratios=(0.9, 0.05, 0.05), seed=0):
    """Shuffle sequence ids with ``seed`` and cut into train/test/validation.

    ``ratios`` are either absolute counts summing to ``len(sequences)`` or
    fractions summing to 1 (rounded by largest remainder).
    """
    ids = list(sequences)
    n = len(ids)
    r = [float(x) for x in ratios]
    if len(r) != 3 or any(x < 0 for x in r):
        raise InvalidSplit("ratios must be three non-negative numbers")
    if all(float(x).is_integer() for x in r) and sum(r) == n and not math.isclose(sum(r), 1.0):
        counts = [int(x) for x in r]
    elif math.isclose(sum(r), 1.0, abs_tol=1e-9):
        raw = [x * n for x in r]
        counts = [int(math.floor(x)) for x in raw]
        order = sorted(range(3), key=lambda k: (-(raw[k] - counts[k]), k))
        for k in order[: n - sum(counts)]:
            counts[k] += 1
    else:
        raise InvalidSplit(f"ratios {tuple(ratios)} sum to {sum(r)}, expected {n} or 1")
    perm = _rng([int(seed), 7]).permutation(n)
    shuffled = [ids[k] for k in perm]
    a, b = counts[0], counts[0] + counts[1]
    return DatasetSplit(tuple(shuffled[:a]), tuple(shuffled[a:b]), tuple(shuffled[b:]), int(seed))


def shelf_fill_fraction(scene):
    """Fraction of total shelf length covered by stack footprints (row racks only)."""
    covered = total = 0.0
    for rack in row_racks(scene):
        for s in rack.shelves:
            total += s.extent[1] - s.extent[0]
            covered += sum(2 * b.half_extent_xz()[0] for b in s.boxes if b.stack_level == 0)
    return covered / total if total else 0.0
