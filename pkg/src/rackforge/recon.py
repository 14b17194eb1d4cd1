"""Per-frame 3D reconstruction from top-view and front-view layout stacks.

X and Z come from the top view, Y from the front view. All coordinates are
metres in the frame's shelf-centric frame (X right, Y down, Z into the scene).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .layout import FRONT, TOP, CellClass
from .metrics import BOX, RACK

FOUR = ndimage.generate_binary_structure(2, 1)
MIN_AREA = 4
MIN_X_IOU = 0.25
FIT_ANGLES = np.deg2rad(np.arange(0.0, 90.0, 0.5))
FIT_TOL = 0.1


@dataclass(frozen=True)
class Detection2D:
    id: int
    view: str
    channel: int
    cls: str  # "rack" (shelf extent) or "box"
    col_min: int
    col_max: int
    row_min: int
    row_max: int
    area: int
    border: bool = False  # rectangle touches the grid edge
    extent: tuple | None = None  # fitted (col lo, col hi, row lo, row hi) cell edges, rotated blobs only

    @property
    def cols(self):
        return self.col_max - self.col_min + 1

    @property
    def edges(self):
        if self.extent is not None:
            return self.extent
        return float(self.col_min), self.col_max + 1.0, float(self.row_min), self.row_max + 1.0


def fit_footprint(rows, cols, tol=FIT_TOL):
    """Axis-aligned cell-edge extent of the rotated rectangle that best explains a blob.

    A rotated box rasterizes to a staircase whose extreme rows and columns miss
    the thin corner tips, so the bounding rectangle of the cells undershoots.
    For each candidate angle the side lengths come from second moments along the
    rotated axes (a filled a x b rectangle has variances a^2/12, b^2/12); the
    angle whose rectangle disagrees with the blob on the fewest cells wins.
    Returns None when the blob is a filled axis-aligned rectangle or no
    rectangle explains it within ``tol`` of its area.
    """
    rows, cols = np.asarray(rows), np.asarray(cols)
    r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
    n = rows.size
    if n == (r1 - r0 + 1) * (c1 - c0 + 1):
        return None
    pts = np.column_stack([cols, rows]) + 0.5
    mu = pts.mean(0)
    gr, gc = np.mgrid[r0 - 1:r1 + 2, c0 - 1:c1 + 2]
    window = np.column_stack([gc.ravel(), gr.ravel()]) + 0.5 - mu
    blob = np.zeros(gr.shape, bool)
    blob[rows - r0 + 1, cols - c0 + 1] = True
    c, s = np.cos(FIT_ANGLES), np.sin(FIT_ANGLES)
    u_axis, v_axis = np.vstack([c, s]), np.vstack([-s, c])
    a = np.sqrt(12 * ((pts - mu) @ u_axis).var(0) + 1)
    b = np.sqrt(12 * ((pts - mu) @ v_axis).var(0) + 1)
    model = (np.abs(window @ u_axis) <= a / 2) & (np.abs(window @ v_axis) <= b / 2)
    miss = (model != blob.ravel()[:, None]).sum(0)
    k = int(np.argmin(miss))
    if miss[k] > tol * n or abs(a[k] * b[k] - n) > tol * n:
        return None
    hx = 0.5 * (a[k] * abs(c[k]) + b[k] * abs(s[k]))
    hy = 0.5 * (a[k] * abs(s[k]) + b[k] * abs(c[k]))
    return (float(mu[0] - hx), float(mu[0] + hx), float(mu[1] - hy), float(mu[1] + hy))


def extract_components(stack, min_area=MIN_AREA):
    """Bounding rectangles of 4-connected box blobs and shelf-extent blobs per channel."""
    dets = []
    d = stack.resolution
    for ch in range(stack.num_shelves):
        grid = stack.channels[ch]
        for cls, mask in ((RACK, grid != CellClass.BACKGROUND), (BOX, grid == CellClass.OCCUPIED)):
            if not mask.any():
                continue
            lab, n = ndimage.label(mask, structure=FOUR)
            areas = np.bincount(lab.ravel(), minlength=n + 1)
            for k, sl in enumerate(ndimage.find_objects(lab), start=1):
                if areas[k] < min_area:
                    continue
                r0, r1 = sl[0].start, sl[0].stop - 1
                c0, c1 = sl[1].start, sl[1].stop - 1
                border = r0 == 0 or c0 == 0 or r1 == d - 1 or c1 == d - 1
                extent = None
                if cls == BOX and stack.view == TOP:  # boxes only rotate about the vertical axis
                    rr, cc = np.nonzero(lab[sl] == k)
                    extent = fit_footprint(rr + r0, cc + c0)
                dets.append(Detection2D(len(dets), stack.view, ch, cls, c0, c1, r0, r1, int(areas[k]), border,
                                        extent))
    return dets


def x_iou(a, b):
    inter = min(a.col_max, b.col_max) - max(a.col_min, b.col_min) + 1
    if inter <= 0:
        return 0.0
    return inter / (a.cols + b.cols - inter)


def match_top_front(top, front, level, min_iou=MIN_X_IOU, cls=None):
    """One-to-one top/front correspondences at one shelf level maximizing total column IoU.

    Pairs below ``min_iou`` are never formed. Detections of different classes
    are never paired. Returns ``[(top_id, front_id), ...]`` sorted by top id.
    """
    pairs = []
    classes = (cls,) if cls else (RACK, BOX)
    for c in classes:
        t = [d for d in top if d.channel == level and d.cls == c]
        f = [d for d in front if d.channel == level and d.cls == c]
        if not t or not f:
            continue
        w = np.array([[x_iou(a, b) for b in f] for a in t])
        w[w < min_iou] = 0.0
        rows, cols = linear_sum_assignment(w, maximize=True)
        pairs += [(t[i].id, f[j].id) for i, j in zip(rows, cols) if w[i, j] > 0]
    return sorted(pairs)


@dataclass(frozen=True)
class Box3D:
    center: tuple
    size: tuple
    level: int
    kind: str = "box"  # "box" or "shelf"
    provenance: tuple = (-1, -1)  # (top detection id, front detection id)
    boundary: bool = False

    @property
    def lo(self):
        return tuple(c - s / 2 for c, s in zip(self.center, self.size))

    @property
    def hi(self):
        return tuple(c + s / 2 for c, s in zip(self.center, self.size))

    @classmethod
    def from_bounds(cls, lo, hi, **kw):
        return cls(tuple((a + b) / 2 for a, b in zip(lo, hi)), tuple(b - a for a, b in zip(lo, hi)), **kw)

    def translated(self, offset):
        return replace(self, center=tuple(c + o for c, o in zip(self.center, offset)))

    def to_dict(self):
        return {"center": list(self.center), "size": list(self.size), "level": self.level, "kind": self.kind,
                "provenance": list(self.provenance), "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["center"]), tuple(d["size"]), int(d["level"]), d.get("kind", "box"),
                   tuple(d.get("provenance", (-1, -1))), bool(d.get("boundary", False)))


@dataclass(frozen=True)
class FrameRecon:
    index: int
    slabs: tuple = ()
    boxes: tuple = ()
    cell: float = 0.0  # metres per cell of the source grids
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def empty(self):
        return not self.slabs and not self.boxes

    def to_dict(self):
        return {"index": self.index, "cell": self.cell, "slabs": [s.to_dict() for s in self.slabs],
                "boxes": [b.to_dict() for b in self.boxes], "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["index"]), tuple(Box3D.from_dict(s) for s in d["slabs"]),
                   tuple(Box3D.from_dict(b) for b in d["boxes"]), float(d.get("cell", 0.0)), dict(d.get("meta", {})))


def _x_range(t, f, m, half):
    c0, c1 = max(t.edges[0], f.col_min), min(t.edges[1], f.col_max + 1)
    return (c0 - half) * m, (c1 - half) * m


def _lift(t, f, spec, kind):
    m, half = spec.meters_per_cell, spec.resolution / 2
    x0, x1 = _x_range(t, f, m, half)
    z0, z1 = (half - t.edges[3]) * m, (half - t.edges[2]) * m
    y0, y1 = (f.row_min - half) * m, (f.row_max + 1 - half) * m
    return Box3D.from_bounds((x0, y0, z0), (x1, y1, z1), level=t.channel, kind=kind,
                             provenance=(t.id, f.id), boundary=t.border or f.border)


def _inside_xz(box, slab, tol):
    return (box.lo[0] >= slab.lo[0] - tol and box.hi[0] <= slab.hi[0] + tol
            and box.lo[2] >= slab.lo[2] - tol and box.hi[2] <= slab.hi[2] + tol)


def lift_to_3d(pairs, top, front, spec, frame_index=0, meta=None):
    """Lift matched (top id, front id) detection pairs to shelf slabs and boxes.

    Boxes outside every shelf slab of their level (expanded by one cell) are dropped.
    """
    tmap = {d.id: d for d in top}
    fmap = {d.id: d for d in front}
    slabs, boxes = [], []
    for ti, fi in pairs:
        t, f = tmap[ti], fmap[fi]
        if t.cls != f.cls or t.channel != f.channel:
            raise ValueError(f"pair ({ti}, {fi}) mixes classes or levels")
        if min(t.col_max, f.col_max) < max(t.col_min, f.col_min):
            continue
        (slabs if t.cls == RACK else boxes).append(_lift(t, f, spec, "shelf" if t.cls == RACK else "box"))
    tol = spec.meters_per_cell
    boxes = [b for b in boxes if any(s.level == b.level and _inside_xz(b, s, tol) for s in slabs)]
    return FrameRecon(frame_index, tuple(slabs), tuple(boxes), spec.meters_per_cell, dict(meta or {}))


def reconstruct_frame(top_stack, front_stack, spec, frame_index=None, min_area=MIN_AREA,
                      min_iou=MIN_X_IOU, meta=None):
    """extract -> match per level -> lift, for one frame."""
    if top_stack.view != TOP or front_stack.view != FRONT:
        raise ValueError("expected a top-view and a front-view stack")
    top = extract_components(top_stack, min_area)
    front = extract_components(front_stack, min_area)
    pairs = []
    for level in range(top_stack.num_shelves):
        pairs += match_top_front(top, front, level, min_iou)
    idx = top_stack.frame_index if frame_index is None else frame_index
    return lift_to_3d(pairs, top, front, spec, idx, meta)
