"""Grid geometry, shelf-centric frames and ground-truth rasterization.

Shelf frame axes: X right (world +X), Y down (world -Y), Z into the scene
(world -Z). Grid conventions, with ``m`` the cell size and ``D`` the
resolution:

* column ``c`` covers shelf-frame x in ``[(c - D/2) m, (c + 1 - D/2) m)``
* top view row ``r`` covers z in ``((D/2 - r - 1) m, (D/2 - r) m]``, so the
  far side of the shelves is at the top of the grid and the camera at the
  bottom.
* front view row ``r`` covers y in ``[(r - D/2) m, (r + 1 - D/2) m)``, i.e. row 0
  is the highest elevation.

A cell belongs to a shape when its center lies inside the shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import NoVisibleRack, ShapeError

TOP = "top"
FRONT = "front"
VIEWS = (TOP, FRONT)


class CellClass(IntEnum):
    BACKGROUND = 0
    UNOCCUPIED = 1
    OCCUPIED = 2


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 256
    extent: float = 10.0
    num_shelves: int = 3
    top_clearance: float = 2.0

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if self.num_shelves < 1:
            raise ValueError("num_shelves must be >= 1")
        if not self.top_clearance > 0:
            raise ValueError("top_clearance must be positive")

    @property
    def meters_per_cell(self):
        return self.extent / self.resolution

    def cell_centers(self):
        """Shelf-frame coordinate of each column center (also used for rows)."""
        d = self.resolution
        return (np.arange(d) + 0.5 - d / 2) * self.meters_per_cell

    def to_dict(self):
        return {"resolution": self.resolution, "extent": self.extent,
                "num_shelves": self.num_shelves, "top_clearance": self.top_clearance}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["resolution"]), float(d["extent"]), int(d["num_shelves"]),
                   float(d.get("top_clearance", 2.0)))


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LayoutStack:
    view: str
    channels: np.ndarray  # (R, D, D) uint8 CellClass values
    frame_index: int = 0

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}")
        ch = np.asarray(self.channels)
        if ch.ndim != 3 or ch.shape[1] != ch.shape[2]:
            raise ShapeError(f"layout channels must be (R, D, D), got {ch.shape}")
        if ch.size and ch.max() > 2:
            raise ValueError("cell values must be 0, 1 or 2")
        object.__setattr__(self, "channels", _frozen(ch.astype(np.uint8, copy=False)))

    @property
    def num_shelves(self):
        return self.channels.shape[0]

    @property
    def resolution(self):
        return self.channels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LayoutStack):
            return NotImplemented
        return self.view == other.view and np.array_equal(self.channels, other.channels)

    def __hash__(self):
        return hash((self.view, self.channels.tobytes()))


@dataclass(frozen=True, eq=False)
class ProbabilityStack:
    view: str
    probs: np.ndarray  # (R, D, D, 3)
    frame_index: int = 0

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}")
        p = np.asarray(self.probs)
        if p.ndim != 4 or p.shape[-1] != 3 or p.shape[1] != p.shape[2]:
            raise ShapeError(f"probabilities must be (R, D, D, 3), got {p.shape}")
        object.__setattr__(self, "probs", _frozen(p))

    def validate(self, tol=1e-6):
        p = self.probs
        if (p < 0).any() or not np.allclose(p.sum(-1), 1.0, atol=tol, rtol=0):
            raise ValueError("cell probabilities must be non-negative and sum to 1")
        return self

    def hard_labels(self):
        # np.argmax returns the first maximum, i.e. ties go to the lower class id
        return LayoutStack(self.view, np.argmax(self.probs, axis=-1).astype(np.uint8), self.frame_index)

    @classmethod
    def one_hot(cls, stack, dtype=np.float32):
        p = np.eye(3, dtype=dtype)[stack.channels]
        return cls(stack.view, p, stack.frame_index)

    def __eq__(self, other):
        if not isinstance(other, ProbabilityStack):
            return NotImplemented
        return self.view == other.view and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    yaw: float = 0.0

    def forward_xz(self):
        """Unit viewing direction in the X-Z plane; yaw 0 looks toward -Z."""
        return (-math.sin(self.yaw), -math.cos(self.yaw))


WORLD_TO_SHELF_AXES = ((1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, -1.0))


@dataclass(frozen=True)
class ShelfFrame:
    origin: tuple[float, float, float]
    view: str
    extent: float
    axes: tuple = WORLD_TO_SHELF_AXES  # rows: shelf X, Y, Z expressed in world coordinates

    @property
    def omega_rect(self):
        """Region of interest in world coordinates: (xmin, xmax, amin, amax).

        The second axis is world Z for the top view and world Y for the front view.
        """
        h = self.extent / 2
        ox, oy, oz = self.origin
        second = oz if self.view == TOP else oy
        return (ox - h, ox + h, second - h, second + h)

    def world_to_shelf(self, p):
        ox, oy, oz = self.origin
        return (p[0] - ox, -(p[1] - oy), -(p[2] - oz))

    def shelf_to_world(self, p):
        ox, oy, oz = self.origin
        return (p[0] + ox, oy - p[1], oz - p[2])


# ---------------------------------------------------------------- visibility

def _convex_intersect(a, b):
    """Separating-axis test for two convex polygons given as vertex lists."""
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            x0, z0 = poly[i]
            x1, z1 = poly[(i + 1) % n]
            ax, az = z0 - z1, x1 - x0
            pa = [ax * x + az * z for x, z in a]
            pb = [ax * x + az * z for x, z in b]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True


def frustum_triangle(pose, fov, max_range):
    """Horizontal view frustum as a triangle in the world X-Z plane."""
    cx, _, cz = pose.position
    fx, fz = pose.forward_xz()
    half = max_range * math.tan(fov / 2)
    px, pz = -fz, fx
    far = (cx + fx * max_range, cz + fz * max_range)
    return [(cx, cz), (far[0] + px * half, far[1] + pz * half), (far[0] - px * half, far[1] - pz * half)]


def visible_racks(scene, pose, fov=math.pi / 2, max_range=8.0):
    if not 0 < fov < math.pi:
        raise ValueError("fov must lie in (0, pi)")
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    tri = frustum_triangle(pose, fov, max_range)
    out = []
    for rack in scene.racks:
        xmin, xmax, zmin, zmax = rack.extent
        rect = [(xmin, zmin), (xmax, zmin), (xmax, zmax), (xmin, zmax)]
        if _convex_intersect(tri, rect):
            out.append(rack.id)
    return sorted(out)


# ---------------------------------------------------------------- frames

def shelf_volumes(scene, visible, spec):
    """Bounding volumes (xmin, xmax, ymin, ymax, zmin, zmax) of shelf bands in channel range."""
    vols = []
    for rid in visible:
        rack = scene.rack(rid)
        for shelf in rack.shelves:
            if shelf.level >= spec.num_shelves:
                continue
            xmin, xmax, zmin, zmax = shelf.extent
            vols.append((xmin, xmax, shelf.elevation, rack.band_top(shelf.level, spec.top_clearance), zmin, zmax))
    return vols


def make_shelf_frame(scene, visible, view=TOP, spec=None):
    spec = spec or GridSpec()
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}")
    if not visible:
        raise NoVisibleRack("cannot build a shelf frame without visible racks")
    vols = np.array(shelf_volumes(scene, visible, spec), dtype=float)
    if not len(vols):
        raise NoVisibleRack(f"racks {list(visible)} have no shelves in channel range")
    lo = vols[:, [0, 2, 4]].min(axis=0)
    hi = vols[:, [1, 3, 5]].max(axis=0)
    origin = tuple(float(v) for v in (lo + hi) / 2)
    return ShelfFrame(origin, view, spec.extent)


# ---------------------------------------------------------------- rasterization

def _window(centers, lo, hi):
    """Index slice of sorted ``centers`` that may fall inside [lo, hi]."""
    i0 = int(np.searchsorted(centers, lo, side="left"))
    i1 = int(np.searchsorted(centers, hi, side="right"))
    return slice(max(i0 - 1, 0), min(i1 + 1, len(centers)))


def _fill_rect(mask, xs, rows_coord, xlo, xhi, alo, ahi, a_half_open=False):
    """Set cells whose center x in [xlo, xhi] and second coord in [alo, ahi] (or [alo, ahi))."""
    order = np.argsort(rows_coord)
    rc_sorted = rows_coord[order]
    cs = _window(xs, xlo, xhi)
    rs = _window(rc_sorted, alo, ahi)
    if cs.start >= cs.stop or rs.start >= rs.stop:
        return
    rows = order[rs]
    x = xs[cs]
    a = rows_coord[rows]
    in_x = (x >= xlo) & (x <= xhi)
    in_a = (a >= alo) & ((a < ahi) if a_half_open else (a <= ahi))
    sub = in_a[:, None] & in_x[None, :]
    mask[rows[:, None], np.arange(cs.start, cs.stop)[None, :]] |= sub


def _fill_rotated(mask, xs, zs, center, half, yaw):
    """Set cells whose (x, z) center lies in the yaw-rotated rectangle."""
    cx, cz = center
    hx, hz = half
    c, s = math.cos(yaw), math.sin(yaw)
    ex, ez = hx * abs(c) + hz * abs(s), hx * abs(s) + hz * abs(c)
    order = np.argsort(zs)
    cs = _window(xs, cx - ex, cx + ex)
    rs = _window(zs[order], cz - ez, cz + ez)
    if cs.start >= cs.stop or rs.start >= rs.stop:
        return
    rows = order[rs]
    dx = xs[cs][None, :] - cx
    dz = zs[rows][:, None] - cz
    # inverse rotation of x' = u c + v s, z' = -u s + v c
    u = dx * c - dz * s
    v = dx * s + dz * c
    sub = (np.abs(u) <= hx) & (np.abs(v) <= hz)
    mask[rows[:, None], np.arange(cs.start, cs.stop)[None, :]] |= sub


def _top_rows(frame, spec):
    # shelf z of row r is (D/2 - r - 0.5) m = -c[r]; world z = oz - shelf z = oz + c[r]
    return frame.origin[2] + spec.cell_centers()


def _front_rows(frame, spec):
    # shelf y of row r is c[r]; elevation = oy - shelf y
    return frame.origin[1] - spec.cell_centers()


def _empty(spec):
    d = spec.resolution
    return np.zeros((spec.num_shelves, d, d), dtype=bool)


def rasterize_top_view(scene, frame, spec, visible, frame_index=0):
    if frame.view != TOP:
        raise ValueError("rasterize_top_view needs a top-view frame")
    xs = frame.origin[0] + spec.cell_centers()
    zs = _top_rows(frame, spec)
    shelf, box = _empty(spec), _empty(spec)
    for rid in visible:
        rack = scene.rack(rid)
        for s in rack.shelves:
            if s.level >= spec.num_shelves:
                continue
            xmin, xmax, zmin, zmax = s.extent
            _fill_rect(shelf[s.level], xs, zs, xmin, xmax, zmin, zmax)
            for b in s.boxes:
                _fill_rotated(box[s.level], xs, zs, (b.center[0], b.center[2]),
                              (b.size[0] / 2, b.size[2] / 2), b.yaw)
    return LayoutStack(TOP, _classes(shelf, box), frame_index)


def rasterize_front_view(scene, frame, spec, visible, frame_index=0):
    if frame.view != FRONT:
        raise ValueError("rasterize_front_view needs a front-view frame")
    xs = frame.origin[0] + spec.cell_centers()
    ys = _front_rows(frame, spec)
    band, box = _empty(spec), _empty(spec)
    for rid in visible:
        rack = scene.rack(rid)
        for s in rack.shelves:
            if s.level >= spec.num_shelves:
                continue
            xmin, xmax, _, _ = s.extent
            top = rack.band_top(s.level, spec.top_clearance)
            _fill_rect(band[s.level], xs, ys, xmin, xmax, s.elevation, top, a_half_open=True)
            for b in s.boxes:
                ex, _ = b.half_extent_xz()
                _fill_rect(box[s.level], xs, ys, b.center[0] - ex, b.center[0] + ex, b.bottom, b.top)
    return LayoutStack(FRONT, _classes(band, box), frame_index)


def _classes(region, box):
    out = np.where(region, np.uint8(CellClass.UNOCCUPIED), np.uint8(CellClass.BACKGROUND))
    out[region & box] = CellClass.OCCUPIED
    return out


def rasterize(scene, frame, spec, visible, frame_index=0):
    if frame.view == TOP:
        return rasterize_top_view(scene, frame, spec, visible, frame_index)
    return rasterize_front_view(scene, frame, spec, visible, frame_index)


def empty_stack(view, spec, frame_index=0):
    d = spec.resolution
    return LayoutStack(view, np.zeros((spec.num_shelves, d, d), np.uint8), frame_index)
