"""Ground-truth warehouse scene graph.

World frame: X runs along the rack row, Y is up, Z points from the racks
toward the aisle (right-handed, OpenGL style). Racks occupy
``z in [row_z - depth, row_z]`` and cameras sit at ``z > row_z`` looking
toward -Z. Elevations (``shelf_heights``, box ``center[1]``) are world Y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class BoxInstance:
    id: int
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # (x, y, z) extents before yaw
    yaw: float = 0.0
    stack_level: int = 0
    stack_id: int = -1  # id of the bottom box of this stack
    texture_id: int = 0
    color_id: int = 0
    reflectance: float = 0.0

    def footprint(self):
        """Corners of the rotated X-Z footprint, counter-clockwise seen from +Y."""
        cx, _, cz = self.center
        hx, hz = self.size[0] / 2, self.size[2] / 2
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        corners = []
        for u, v in ((-hx, -hz), (-hx, hz), (hx, hz), (hx, -hz)):
            corners.append((cx + u * c + v * s, cz - u * s + v * c))
        return corners

    def half_extent_xz(self):
        """Half widths of the footprint's axis-aligned bounding box."""
        hx, hz = self.size[0] / 2, self.size[2] / 2
        c, s = abs(math.cos(self.yaw)), abs(math.sin(self.yaw))
        return hx * c + hz * s, hx * s + hz * c

    @property
    def bottom(self):
        return self.center[1] - self.size[1] / 2

    @property
    def top(self):
        return self.center[1] + self.size[1] / 2


@dataclass(frozen=True)
class Shelf:
    rack_id: int
    level: int
    extent: tuple[float, float, float, float]  # xmin, xmax, zmin, zmax
    elevation: float
    boxes: tuple[BoxInstance, ...] = ()


@dataclass(frozen=True)
class Rack:
    id: int
    position: tuple[float, float, float]  # footprint center at floor level
    width: float
    depth: float
    shelf_heights: tuple[float, ...]
    shelves: tuple[Shelf, ...] = ()
    distractor: bool = False
    texture_id: int = 0
    color_id: int = 0

    def __post_init__(self):
        h = self.shelf_heights
        if any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError(f"rack {self.id}: shelf_heights must be strictly increasing")

    @property
    def extent(self):
        x, _, z = self.position
        return (x - self.width / 2, x + self.width / 2, z - self.depth / 2, z + self.depth / 2)

    def band_top(self, level, clearance):
        """Elevation where the band above shelf ``level`` ends."""
        if level + 1 < len(self.shelf_heights):
            return self.shelf_heights[level + 1]
        return self.shelf_heights[level] + clearance

    def boxes(self):
        return [b for shelf in self.shelves for b in shelf.boxes]


@dataclass(frozen=True)
class SceneGraph:
    racks: tuple[Rack, ...] = ()
    row_z: float = 0.0
    spacings: tuple[float, ...] = ()
    floor_texture: int = 0
    floor_color: int = 0
    wall_texture: int = 0
    wall_color: int = 0
    background: str = "wall"
    attributes: dict = field(default_factory=dict, compare=False)

    def rack(self, rack_id):
        for r in self.racks:
            if r.id == rack_id:
                return r
        raise KeyError(rack_id)

    def translated(self, offset):
        """Copy with every coordinate shifted by ``offset`` (world frame)."""
        dx, dy, dz = offset

        def mv(p):
            return (p[0] + dx, p[1] + dy, p[2] + dz)

        racks = []
        for r in self.racks:
            shelves = []
            for s in r.shelves:
                xmin, xmax, zmin, zmax = s.extent
                boxes = tuple(replace(b, center=mv(b.center)) for b in s.boxes)
                shelves.append(Shelf(s.rack_id, s.level, (xmin + dx, xmax + dx, zmin + dz, zmax + dz),
                                     s.elevation + dy, boxes))
            racks.append(Rack(r.id, mv(r.position), r.width, r.depth,
                              tuple(h + dy for h in r.shelf_heights), tuple(shelves),
                              r.distractor, r.texture_id, r.color_id))
        return SceneGraph(tuple(racks), self.row_z + dz, self.spacings, self.floor_texture,
                          self.floor_color, self.wall_texture, self.wall_color, self.background,
                          dict(self.attributes))

    # JSON mapping; field names mirror the dataclasses.
    def to_dict(self):
        return {
            "racks": [_rack_to_dict(r) for r in self.racks],
            "row_z": self.row_z,
            "spacings": list(self.spacings),
            "floor_texture": self.floor_texture,
            "floor_color": self.floor_color,
            "wall_texture": self.wall_texture,
            "wall_color": self.wall_color,
            "background": self.background,
            "attributes": self.attributes,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            racks=tuple(_rack_from_dict(r) for r in d["racks"]),
            row_z=float(d["row_z"]),
            spacings=tuple(float(s) for s in d.get("spacings", ())),
            floor_texture=int(d.get("floor_texture", 0)),
            floor_color=int(d.get("floor_color", 0)),
            wall_texture=int(d.get("wall_texture", 0)),
            wall_color=int(d.get("wall_color", 0)),
            background=d.get("background", "wall"),
            attributes=dict(d.get("attributes", {})),
        )


def _box_to_dict(b):
    return {
        "id": b.id, "center": list(b.center), "size": list(b.size), "yaw": b.yaw,
        "stack_level": b.stack_level, "stack_id": b.stack_id, "texture_id": b.texture_id,
        "color_id": b.color_id, "reflectance": b.reflectance,
    }


def _rack_to_dict(r):
    return {
        "id": r.id, "position": list(r.position), "width": r.width, "depth": r.depth,
        "shelf_heights": list(r.shelf_heights), "distractor": r.distractor,
        "texture_id": r.texture_id, "color_id": r.color_id,
        "shelves": [
            {"rack_id": s.rack_id, "level": s.level, "extent": list(s.extent),
             "elevation": s.elevation, "boxes": [_box_to_dict(b) for b in s.boxes]}
            for s in r.shelves
        ],
    }


def _vec(v, n, name):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ValueError(f"{name} must be a list of {n} numbers")
    return tuple(float(x) for x in v)


def _rack_from_dict(d):
    shelves = []
    for s in d["shelves"]:
        boxes = tuple(
            BoxInstance(
                id=int(b["id"]), center=_vec(b["center"], 3, "center"), size=_vec(b["size"], 3, "size"),
                yaw=float(b.get("yaw", 0.0)), stack_level=int(b.get("stack_level", 0)),
                stack_id=int(b.get("stack_id", -1)), texture_id=int(b.get("texture_id", 0)),
                color_id=int(b.get("color_id", 0)), reflectance=float(b.get("reflectance", 0.0)),
            )
            for b in s["boxes"]
        )
        shelves.append(Shelf(int(s["rack_id"]), int(s["level"]), _vec(s["extent"], 4, "extent"),
                             float(s["elevation"]), boxes))
    return Rack(
        id=int(d["id"]), position=_vec(d["position"], 3, "position"), width=float(d["width"]),
        depth=float(d["depth"]), shelf_heights=tuple(float(h) for h in d["shelf_heights"]),
        shelves=tuple(shelves), distractor=bool(d.get("distractor", False)),
        texture_id=int(d.get("texture_id", 0)), color_id=int(d.get("color_id", 0)),
    )


def make_rack(rack_id, x, z, width, depth, shelf_heights, boxes_per_level=None, **kw):
    """Convenience constructor: a rack whose shelves span its full footprint.

    ``boxes_per_level`` maps level -> list of BoxInstance.
    """
    boxes_per_level = boxes_per_level or {}
    ext = (x - width / 2, x + width / 2, z - depth / 2, z + depth / 2)
    shelves = tuple(
        Shelf(rack_id, lvl, ext, h, tuple(boxes_per_level.get(lvl, ())))
        for lvl, h in enumerate(shelf_heights)
    )
    return Rack(rack_id, (x, 0.0, z), width, depth, tuple(shelf_heights), shelves, **kw)
