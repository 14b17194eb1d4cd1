"""On-disk datasets: per-sequence directories indexed by ``manifest.json``.

Layout of a dataset root::

    manifest.json
    seq_0000/scene.json     scene graph
    seq_0000/poses.csv      frame,x,y,z,yaw
    seq_0000/frames.json    per-frame visible racks and shelf-frame origin
    seq_0000/top_0000.lay   top-view layout stack of frame 0
    seq_0000/front_0000.lay
    seq_0000/top_0000.plf   (predictions only) probability stacks
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import io
from .errors import FormatError, ValidationError
from .layout import FRONT, TOP, GridSpec, ProbabilityStack
from .predictor import degrade
from .waregen import (GenConfig, generate_trajectory, generate_warehouse, render_sequence,
                      sequence_seed, split_dataset)

MANIFEST = "manifest.json"


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass
class Manifest:
    root: str
    kind: str  # "truth" or "prediction"
    grid: GridSpec
    config: dict
    config_hash: str
    sequences: list = field(default_factory=list)
    splits: dict = field(default_factory=dict)
    seed: int = 0
    noise: dict | None = None

    def to_dict(self):
        d = {"format": "rackforge-dataset", "version": 1, "root": ".", "kind": self.kind,
             "grid": self.grid.to_dict(), "config": self.config, "config_hash": self.config_hash,
             "sequences": self.sequences, "splits": self.splits, "seed": self.seed}
        if self.noise is not None:
            d["noise"] = self.noise
        return d

    def path(self, rel):
        return os.path.join(self.root, rel)

    def sequence(self, seq_id):
        for s in self.sequences:
            if s["id"] == seq_id:
                return s
        raise KeyError(seq_id)

    def ids(self, split=None):
        if split is None:
            return [s["id"] for s in self.sequences]
        return list(self.splits[split])


def _require(d, key, where):
    if key not in d:
        raise ValidationError(f"{where}: missing field {key!r}", field=key)
    return d[key]


def load_manifest(root, check=True):
    """Read and validate a manifest; with ``check`` every referenced file must exist and parse."""
    path = os.path.join(root, MANIFEST)
    if not os.path.exists(path):
        raise ValidationError(f"{root}: no {MANIFEST}", field=MANIFEST)
    d = io.load_json(path)
    grid = GridSpec.from_dict(_require(d, "grid", path))
    cfg = _require(d, "config", path)
    h = _require(d, "config_hash", path)
    if config_hash(cfg) != h:
        raise ValidationError(f"{path}: config hash does not match recorded config", field="config_hash")
    m = Manifest(root, _require(d, "kind", path), grid, cfg, h, _require(d, "sequences", path),
                 d.get("splits", {}), int(d.get("seed", 0)), d.get("noise"))
    if check:
        for s in m.sequences:
            for key in ("scene", "poses", "meta"):
                _check_file(m, s, _require(s, key, f"sequence {s.get('id')}"), key)
            for key in ("top", "front", "top_probs", "front_probs"):
                paths = s.get(key)
                if paths is None:
                    continue
                if len(paths) != s["frames"]:
                    raise ValidationError(f"sequence {s['id']}: {key} lists {len(paths)} of {s['frames']} frames",
                                          field=key)
                for k, rel in enumerate(paths):
                    _check_file(m, s, rel, f"{key}[{k}]")
        known = set(m.ids())
        for name, ids in m.splits.items():
            if name == "seed":
                continue
            missing = [i for i in ids if i not in known]
            if missing:
                raise ValidationError(f"split {name} references unknown sequences {missing}", field=f"splits.{name}")
    return m


def _check_file(m, seq, rel, what):
    p = m.path(rel)
    if not os.path.isfile(p):
        raise ValidationError(f"sequence {seq['id']}: missing {what} file {rel}", field=rel)
    with open(p, "rb") as fh:
        head = fh.read(io.HEADER.size)
    if rel.endswith((".lay", ".plf")):
        try:
            io.parse_header(head, rel)
        except FormatError as exc:
            raise ValidationError(f"sequence {seq['id']}: {what} file {rel} does not parse: {exc}", field=rel) from None


def _frames_meta(seq):
    return [{"index": f.index, "visible": list(f.visible),
             "origin": list(f.origin) if f.origin is not None else None} for f in seq.frames]


def _write_sequence(out, seq_id, scene, poses, seq):
    d = io.ensure_dir(os.path.join(out, seq_id))
    io.save_scene(os.path.join(d, "scene.json"), scene)
    io.save_poses(os.path.join(d, "poses.csv"), poses)
    io.save_json(os.path.join(d, "frames.json"), _frames_meta(seq))
    entry = {"id": seq_id, "frames": len(seq), "scene": f"{seq_id}/scene.json",
             "poses": f"{seq_id}/poses.csv", "meta": f"{seq_id}/frames.json", "top": [], "front": []}
    for f in seq.frames:
        for view, stack in ((TOP, f.top), (FRONT, f.front)):
            rel = f"{seq_id}/{view}_{f.index:04d}.lay"
            io.save_layout(os.path.join(out, rel), stack)
            entry[view].append(rel)
    return entry


def build_sequence(config, spec, seed, seq_id="seq"):
    scene = generate_warehouse(config, seed, spec)
    poses = generate_trajectory(config, scene, seed)
    seq = render_sequence(scene, poses, spec, config.fov, config.max_range, seq_id)
    return scene, poses, seq


def generate_dataset(out, config=None, spec=None, sequences=4, seed=None, ratios=(0.5, 0.25, 0.25), jobs=1):
    """Generate and write a dataset; returns the manifest."""
    config = config or GenConfig()
    spec = spec or GridSpec()
    seed = config.seed if seed is None else int(seed)
    io.ensure_dir(out)
    ids = [f"seq_{k:04d}" for k in range(sequences)]
    seeds = [sequence_seed(seed, k) for k in range(sequences)]

    def work(k):
        return build_sequence(config, spec, seeds[k], ids[k])

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        built = list(ex.map(work, range(sequences)))
    entries = []
    for k, (scene, poses, seq) in enumerate(built):  # writes stay in sequence order
        e = _write_sequence(out, ids[k], scene, poses, seq)
        e["seed"] = seeds[k]
        entries.append(e)
    split = split_dataset(ids, ratios, seed)
    cfg = {"generator": config.to_dict(), "sequences": sequences, "ratios": list(ratios)}
    m = Manifest(out, "truth", spec, cfg, config_hash(cfg), entries, split.to_dict(), seed)
    io.save_json(os.path.join(out, MANIFEST), m.to_dict())
    return m


def read_layouts(m, seq_id, view):
    s = m.sequence(seq_id)
    return [io.load_layout(m.path(rel), k) for k, rel in enumerate(s[view])]


def read_probs(m, seq_id, view):
    """Probability stacks, or one-hot stacks from the hard labels when none were stored."""
    s = m.sequence(seq_id)
    key = f"{view}_probs"
    if s.get(key):
        return [io.load_probs(m.path(rel), k) for k, rel in enumerate(s[key])]
    return [ProbabilityStack.one_hot(st) for st in read_layouts(m, seq_id, view)]


def read_frames_meta(m, seq_id):
    return io.load_json(m.path(m.sequence(seq_id)["meta"]))


def degrade_dataset(src, noise, out, jobs=1):
    """Write simulated predictions for every frame of the dataset at ``src``."""
    m = load_manifest(src)
    io.ensure_dir(out)
    entries = []
    for s in m.sequences:
        sid = s["id"]
        io.ensure_dir(os.path.join(out, sid))
        for key in ("scene", "poses", "meta"):
            shutil.copyfile(m.path(s[key]), os.path.join(out, s[key]))
        e = {k: s[k] for k in ("id", "frames", "scene", "poses", "meta")}
        if "seed" in s:
            e["seed"] = s["seed"]
        for view in (TOP, FRONT):
            truths = read_layouts(m, sid, view)
            with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
                outs = list(ex.map(lambda t: degrade(t, noise, _frame_seed(noise.seed, s.get("seed", 0))), truths))
            e[view], e[f"{view}_probs"] = [], []
            for t, (hard, probs) in zip(truths, outs):
                rel = f"{sid}/{view}_{t.frame_index:04d}"
                io.save_layout(os.path.join(out, rel + ".lay"), hard)
                io.save_probs(os.path.join(out, rel + ".plf"), probs)
                e[view].append(rel + ".lay")
                e[f"{view}_probs"].append(rel + ".plf")
        entries.append(e)
    nd = noise.to_dict()
    pm = Manifest(out, "prediction", m.grid, m.config, m.config_hash, entries, m.splits, m.seed, nd)
    io.save_json(os.path.join(out, MANIFEST), pm.to_dict())
    return pm


def _frame_seed(noise_seed, seq_seed):
    return sequence_seed(noise_seed, seq_seed)
