"""Multi-frame stitching of per-frame reconstructions into one warehouse model.

All world-model coordinates live in the shelf frame of the first frame.
A frame-to-frame *shift* is the displacement of persistent content from
frame t to frame t+1 (``center_next - center_t``); the motion direction is
the sign of its dominant X component (the camera itself moves the opposite way).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoOverlap
from .recon import Box3D, FrameRecon

GATE_CELLS = 1.5
SIZE_TOL = 0.2
SIZE_SLACK_CELLS = 4  # absolute size slack, absorbs boundary jitter on small boxes


@dataclass(frozen=True)
class FrameMatch:
    pairs: tuple          # (index in f_t.boxes, index in f_next.boxes)
    shift: tuple          # metres, shelf frame
    direction: int        # sign of the X shift when X dominates: +1, -1 or 0


def _candidates(a_items, b_items, size_tol, slack=0.0):
    out = []
    for i, a in enumerate(a_items):
        if a.boundary:
            continue
        for j, b in enumerate(b_items):
            if b.boundary or a.level != b.level:
                continue
            if all(abs(sa - sb) <= max(size_tol * max(sa, sb), slack) for sa, sb in zip(a.size, b.size)):
                out.append((i, j))
    return out


def consensus_shift(disp, gate, prior=None):
    """Robust common displacement of matched box centers.

    The best-supported hypothesis (ties go to the one closest to ``prior``,
    by default no motion) seeds a median; candidates within ``gate``
    of that median are the inliers, and the shift is their mean. Rasterized
    edges sit on the cell lattice, so single displacements come in half-cell
    steps; averaging the inliers recovers the sub-cell part.
    ``disp`` is (n, 3). Returns (shift, inlier mask).
    """
    disp = np.asarray(disp, dtype=float)
    dev = np.abs(disp[:, None, :] - disp[None, :, :]).max(-1)
    support = (dev <= gate).sum(1)
    best = support.max()
    tied = np.flatnonzero(support == best)
    ref = np.zeros(3) if prior is None else np.asarray(prior, dtype=float)
    k = tied[np.argmin(np.linalg.norm(disp[tied] - ref, axis=1))]
    inl = np.abs(disp - disp[k]).max(-1) <= gate
    med = np.median(disp[inl], axis=0)
    inl = np.abs(disp - med).max(-1) <= gate
    return disp[inl].mean(axis=0), inl


def match_frames(f_t, f_next, cell=None, gate_cells=GATE_CELLS, size_tol=SIZE_TOL, vertical=True, prior=None):
    """Corresponding boxes, consensus shift and motion direction between two frames.

    Boxes pair up when they share a shelf level and agree in size within
    ``size_tol`` per axis (or ``SIZE_SLACK_CELLS`` cells, whichever is larger); clipped boxes are ignored. Falls back to shelf
    slabs when no box pair exists. ``vertical=False`` pins the Y shift to 0.
    ``prior`` (e.g. the previous step) breaks ties between equally supported shifts.
    """
    cell = cell or f_t.cell or f_next.cell
    gate = gate_cells * cell
    a_items, b_items = f_t.boxes, f_next.boxes
    slack = SIZE_SLACK_CELLS * cell
    cand = _candidates(a_items, b_items, size_tol, slack)
    if not cand:
        a_items, b_items = f_t.slabs, f_next.slabs
        cand = _candidates(a_items, b_items, size_tol, slack)
    if not cand:
        raise NoOverlap(f"frames {f_t.index} and {f_next.index} share no comparable boxes", f_next.index)
    disp = np.array([np.subtract(b_items[j].center, a_items[i].center) for i, j in cand])
    if not vertical:
        disp[:, 1] = 0.0
    shift, inl = consensus_shift(disp, gate, prior)
    # one-to-one correspondences among inliers, closest to the consensus first
    resid = np.abs(disp - shift).max(-1)
    used_a, used_b, pairs = set(), set(), []
    for n in sorted(np.flatnonzero(inl), key=lambda n: (resid[n], n)):
        i, j = cand[n]
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    shift = tuple(float(v) for v in shift)
    return FrameMatch(tuple(sorted(pairs)), shift, motion_direction(shift))


def motion_direction(shift):
    """Sign of the shift along X (+1/-1) when X is its dominant component, else 0."""
    k = int(np.argmax(np.abs(shift)))
    if k != 0 or shift[0] == 0:
        return 0
    return int(math.copysign(1, shift[0]))


@dataclass
class WorldRecon:
    slabs: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    shifts: list = field(default_factory=list)  # per-frame content shift, first entry zero
    direction: int = 0
    cell: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_frame(cls, f):
        return cls(list(f.slabs), list(f.boxes), [(0.0, 0.0, 0.0)], 0, f.cell, dict(f.meta))

    def copy(self):
        return WorldRecon(list(self.slabs), list(self.boxes), list(self.shifts), self.direction, self.cell,
                          dict(self.meta))

    def to_dict(self):
        return {"slabs": [s.to_dict() for s in self.slabs], "boxes": [b.to_dict() for b in self.boxes],
                "shifts": [list(s) for s in self.shifts], "direction": self.direction, "cell": self.cell,
                "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        return cls([Box3D.from_dict(s) for s in d["slabs"]], [Box3D.from_dict(b) for b in d["boxes"]],
                   [tuple(s) for s in d.get("shifts", [])], int(d.get("direction", 0)), float(d.get("cell", 0.0)),
                   dict(d.get("meta", {})))


def _overlap_xz(a, b):
    dx = min(a.hi[0], b.hi[0]) - max(a.lo[0], b.lo[0])
    dz = min(a.hi[2], b.hi[2]) - max(a.lo[2], b.lo[2])
    return dx * dz if dx > 0 and dz > 0 else 0.0


def _union(a, b, boundary):
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    return Box3D.from_bounds(lo, hi, level=a.level, kind=a.kind, provenance=a.provenance, boundary=boundary)


def _fuse(g, n):
    """Global item ``g`` updated with a new observation ``n`` of the same object."""
    if g.boundary and not n.boundary:
        return replace(n, provenance=g.provenance)
    if g.boundary and n.boundary:
        return _union(g, n, boundary=True)
    return g


def _merge_items(items, new, gate, by_overlap_only=False):
    items = list(items)
    taken = set()
    for n in new:
        best, best_key = None, None
        for k, g in enumerate(items):
            if k in taken or g.level != n.level:
                continue
            dist = max(abs(a - b) for a, b in zip(g.center, n.center))
            ov = _overlap_xz(g, n)
            if not by_overlap_only and dist <= gate:
                key = (0, dist)
            elif (by_overlap_only or g.boundary or n.boundary) and ov > 0:
                key = (1, -ov)
            else:
                continue
            if best_key is None or key < best_key:
                best, best_key = k, key
        if best is None:
            items.append(n)
            taken.add(len(items) - 1)
        else:
            items[best] = _fuse(items[best], n)
            taken.add(best)
    return items


def _fuse_slab(g, n):
    if g.boundary or n.boundary:
        return _union(g, n, boundary=g.boundary and n.boundary)
    return g


def merge_frame(world, f_next, shift, direction=0, gate_cells=GATE_CELLS):
    """Merge ``f_next`` into ``world``; ``shift`` maps world (first-frame) coordinates to ``f_next``'s frame.

    Observed boxes within the gate of a global box (or overlapping it when one
    of them is clipped by the grid edge) are fused; the rest are appended.
    """
    cell = world.cell or f_next.cell
    gate = gate_cells * cell
    back = tuple(-s for s in shift)
    boxes = [b.translated(back) for b in f_next.boxes]
    slabs = [s.translated(back) for s in f_next.slabs]
    out = world.copy()
    out.boxes = _merge_items(out.boxes, boxes, gate)
    merged = list(out.slabs)
    taken = set()
    for n in slabs:
        hits = [k for k, g in enumerate(merged) if k not in taken and g.level == n.level and _overlap_xz(g, n) > 0]
        if hits:
            k = max(hits, key=lambda k: (_overlap_xz(merged[k], n), -k))
            merged[k] = _fuse_slab(merged[k], n)
            taken.add(k)
        else:
            merged.append(n)
            taken.add(len(merged) - 1)
    out.slabs = merged
    out.shifts = out.shifts + [tuple(shift)]
    if direction:
        out.direction = direction
    return out


def stitch_sequence(frames, cell=None, gate_cells=GATE_CELLS, size_tol=SIZE_TOL, vertical=True,
                    fallback_shifts=None):
    """Fold consecutive frames into a WorldRecon anchored at the first frame.

    ``shifts`` in the result are cumulative (first frame -> frame t). Frames
    without any detection keep the previous shift. ``fallback_shifts`` (per-frame
    content shifts, e.g. from odometry) are used where no boxes correspond.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to stitch")
    world = WorldRecon.from_frame(frames[0])
    if cell:
        world.cell = cell
    acc = np.zeros(3)
    last = None
    ref = frames[0]
    for f in frames[1:]:
        if f.empty:
            world.shifts.append(tuple(acc))
            continue
        if ref.empty:
            # nothing to register against yet: start a fresh anchor here
            world = _reanchor(world, f)
            ref = f
            continue
        try:
            m = match_frames(ref, f, world.cell, gate_cells, size_tol, vertical, prior=last)
            step, direction = np.array(m.shift), m.direction
        except NoOverlap:
            if fallback_shifts is None:
                raise NoOverlap(f"frame {f.index}: no overlap with frame {ref.index}", f.index) from None
            step = np.asarray(fallback_shifts[f.index], dtype=float)
            direction = motion_direction(tuple(step))
        acc = acc + step
        last = step
        world = merge_frame(world, f, tuple(acc), direction, gate_cells)
        ref = f
    world.shifts = [tuple(float(v) for v in s) for s in world.shifts]
    seen = sorted({int(r) for f in frames for r in f.meta.get("visible", [])})
    if seen:
        world.meta["seen_racks"] = seen
    return world


def _reanchor(world, f):
    w = WorldRecon.from_frame(f)
    w.shifts = world.shifts + [(0.0, 0.0, 0.0)]
    w.cell = world.cell or f.cell
    return w


def frame_shifts(world):
    """Per-frame (non-cumulative) shifts from a stitched world."""
    s = np.asarray(world.shifts, dtype=float)
    return np.diff(s, axis=0, prepend=s[:1])


# ground-truth comparison ---------------------------------------------------------

def truth_boxes(scene, origin, num_shelves=3, racks=None):
    """Stack-level ground-truth cuboids in the shelf frame anchored at ``origin``.

    Boxes stacked on each other cannot be separated in either layout view, so
    each stack is one cuboid: the bounding box of its members' rotated footprints
    and their vertical span.
    """
    from .layout import ShelfFrame
    frame = ShelfFrame(tuple(origin), "top", 0.0)
    out = []
    for rack in scene.racks:
        if rack.distractor or (racks is not None and rack.id not in racks):
            continue
        for shelf in rack.shelves:
            if shelf.level >= num_shelves:
                continue
            stacks = {}
            for b in shelf.boxes:
                stacks.setdefault(b.stack_id if b.stack_id >= 0 else b.id, []).append(b)
            for sid in sorted(stacks):
                members = stacks[sid]
                xs, zs, ys = [], [], []
                for b in members:
                    ex, ez = b.half_extent_xz()
                    xs += [b.center[0] - ex, b.center[0] + ex]
                    zs += [b.center[2] - ez, b.center[2] + ez]
                    ys += [b.bottom, b.top]
                p0 = frame.world_to_shelf((min(xs), max(ys), max(zs)))
                p1 = frame.world_to_shelf((max(xs), min(ys), min(zs)))
                out.append(Box3D.from_bounds(p0, p1, level=shelf.level, kind="box", provenance=(sid, sid)))
    return out


def _diag(b):
    return math.sqrt(sum(s * s for s in b.size))


def compare_to_truth(world, scene, alignment, num_shelves=3, racks=None):
    """Greedy nearest-center matching of world boxes to ground-truth stacks.

    ``alignment`` is the world-frame origin of the first frame's shelf frame.
    A pair is accepted when the center distance is at most half the smaller
    diagonal. With no boxes on either side precision and recall are 1.
    """
    truth = truth_boxes(scene, alignment, num_shelves, racks)
    boxes = list(world.boxes)
    cands = []
    for i, b in enumerate(boxes):
        for j, t in enumerate(truth):
            if b.level != t.level:
                continue
            d = math.dist(b.center, t.center)
            if d <= 0.5 * min(_diag(b), _diag(t)):
                cands.append((d, i, j))
    cands.sort()
    used_b, used_t, matches = set(), set(), []
    for d, i, j in cands:
        if i in used_b or j in used_t:
            continue
        used_b.add(i)
        used_t.add(j)
        matches.append((i, j, d))
    n = len(matches)
    precision = n / len(boxes) if boxes else (1.0 if not truth else 0.0)
    recall = n / len(truth) if truth else 1.0
    center_err = float(np.mean([d for _, _, d in matches])) if matches else None
    size_err = float(np.mean([math.dist(boxes[i].size, truth[j].size) for i, j, _ in matches])) if matches else None
    return {"precision": precision, "recall": recall, "matched": n, "world_boxes": len(boxes),
            "truth_boxes": len(truth), "mean_center_error": center_err, "mean_size_error": size_err}


# export ----------------------------------------------------------------------

_FACES = ((1, 2, 3, 4), (5, 8, 7, 6), (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 8, 4), (4, 8, 5, 1))


def _rack_groups(slabs):
    """Group shelf slabs into racks by overlapping X ranges (union-find)."""
    parent = list(range(len(slabs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, a in enumerate(slabs):
        for j in range(i + 1, len(slabs)):
            b = slabs[j]
            if min(a.hi[0], b.hi[0]) > max(a.lo[0], b.lo[0]):
                parent[find(i)] = find(j)
    left = {}
    for i, s in enumerate(slabs):
        r = find(i)
        left[r] = min(left.get(r, math.inf), s.lo[0])
    ids = {r: k for k, r in enumerate(sorted(left, key=lambda r: (left[r], r)))}
    return [ids[find(i)] for i in range(len(slabs))]


def world_to_obj(world, slab_thickness=None):
    """Wavefront OBJ text: one group per shelf slab and per box, named by rack."""
    rack_of = _rack_groups(world.slabs)
    thick = slab_thickness if slab_thickness is not None else max(world.cell, 0.02)
    lines = ["# rackforge world model", "# shelf-frame metres: X right, Y down, Z into the scene"]
    nv = 0

    def cuboid(name, lo, hi):
        nonlocal nv
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        lines.append(f"o {name}")
        lines.append(f"g {name}")
        for x, y, z in ((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1),
                        (x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1)):
            lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
        for f in _FACES:
            lines.append("f " + " ".join(str(nv + i) for i in f))
        nv += 8

    for k, s in enumerate(world.slabs):
        # the slab's band bottom (largest Y) is the shelf surface
        y = s.hi[1]
        cuboid(f"rack{rack_of[k]}_shelf{s.level}_{k}", (s.lo[0], y, s.lo[2]), (s.hi[0], y + thick, s.hi[2]))
    for k, b in enumerate(world.boxes):
        owner = next((rack_of[i] for i, s in enumerate(world.slabs)
                      if s.level == b.level and s.lo[0] <= b.center[0] <= s.hi[0]), -1)
        cuboid(f"rack{owner}_box{k}", b.lo, b.hi)
    return "\n".join(lines) + "\n"
