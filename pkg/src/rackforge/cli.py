"""``forge`` command line: dataset generation, degradation, evaluation and reconstruction."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys

import numpy as np

from . import io
from .dataset import (degrade_dataset, generate_dataset, load_manifest, read_frames_meta, read_layouts,
                      read_probs)
from .errors import ForgeError, ValidationError
from .layout import FRONT, TOP, GridSpec
from .losses import LOSS_IDS, gradient_check, l_adv, l_discr, loss_report
from .metrics import evaluate_dataset
from .predictor import NoiseConfig
from .recon import FrameRecon, reconstruct_frame
from .stitch import WorldRecon, compare_to_truth, merge_frame, stitch_sequence, world_to_obj
from .waregen import GenConfig

log = logging.getLogger("forge")


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc.msg}", field="config") from None


def _seed(args, default=0):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("FORGE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"FORGE_SEED={env!r} is not an integer", field="FORGE_SEED") from None
    return default


def _log_resolved(command, resolved):
    log.info("%s resolved configuration: %s", command, json.dumps(resolved, sort_keys=True))


def cmd_gen(args):
    raw = _load_config(args.config)
    unknown = set(raw) - {"generator", "grid", "sequences", "ratios"}
    if unknown:
        raise ValidationError(f"unknown config sections {sorted(unknown)}", field=sorted(unknown)[0])
    try:
        gen = GenConfig.from_dict(raw.get("generator", {}))
        grid = GridSpec.from_dict({**GridSpec().to_dict(), **raw.get("grid", {})})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config: {exc}", field="generator") from None
    n = int(args.sequences if args.sequences is not None else raw.get("sequences", 4))
    ratios = tuple(raw.get("ratios", (0.5, 0.25, 0.25)))
    seed = _seed(args, gen.seed)
    _log_resolved("gen", {"generator": gen.to_dict(), "grid": grid.to_dict(), "sequences": n,
                          "ratios": list(ratios), "seed": seed})
    m = generate_dataset(args.out, gen, grid, n, seed, ratios, args.jobs)
    print(json.dumps({"out": args.out, "sequences": len(m.sequences)}))


def cmd_degrade(args):
    noise = NoiseConfig.from_dict(_load_config(args.noise)) if args.noise else NoiseConfig()
    seed = _seed(args, noise.seed)
    noise = NoiseConfig.from_dict({**noise.to_dict(), "seed": seed})
    _log_resolved("degrade", noise.to_dict())
    m = degrade_dataset(args.inp, noise, args.out, args.jobs)
    print(json.dumps({"out": args.out, "sequences": len(m.sequences)}))


def cmd_eval(args):
    _log_resolved("eval", {"pred": args.pred, "truth": args.truth, "split": args.split})
    table = evaluate_dataset(args.pred, args.truth, args.split)
    if args.out:
        io.save_json(args.out, table.to_dict())
    print(table.format())


def cmd_loss(args):
    truth = load_manifest(args.truth)
    pred = load_manifest(args.pred, check=False)
    disc = _load_config(args.disc) if args.disc else {}
    real, fake = disc.get("real"), disc.get("fake")
    _log_resolved("loss", {"pred": args.pred, "truth": args.truth, "kind": args.kind, "disc": args.disc})
    out = {}
    for view in (TOP, FRONT):
        tot = None
        for sid in truth.ids(args.split):
            rep = loss_report(read_probs(pred, sid, view), read_layouts(truth, sid, view), kind=args.kind)
            d = rep.to_dict()
            tot = d if tot is None else {k: tot[k] + d[k] for k in d}
        if fake is not None:
            tot["l_adv"] = l_adv(fake)
            if real is not None:
                tot["l_discr"] = l_discr(real, fake)
            tot["l_total"] = tot["l_sup"] + tot["l_short"] + tot["l_long"] + tot["l_adv"] + tot["l_discr"]
        out[view] = tot
    text = io.dumps(out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


def cmd_recon(args):
    m = load_manifest(args.layouts)
    _log_resolved("recon", {"layouts": args.layouts, "grid": m.grid.to_dict()})
    io.ensure_dir(args.out)
    index = []
    for sid in m.ids(args.split):
        meta = read_frames_meta(m, sid)
        tops, fronts = read_layouts(m, sid, TOP), read_layouts(m, sid, FRONT)
        d = io.ensure_dir(os.path.join(args.out, sid))
        for t, f in zip(tops, fronts):
            fm = meta[t.frame_index] if t.frame_index < len(meta) else {}
            rec = reconstruct_frame(t, f, m.grid, meta={"origin": fm.get("origin"), "visible": fm.get("visible", [])})
            io.save_json(os.path.join(d, f"frame_{t.frame_index:04d}.json"), rec.to_dict())
        index.append({"id": sid, "frames": len(tops), "scene": os.path.relpath(m.path(m.sequence(sid)["scene"]),
                                                                                  args.out)})
    io.save_json(os.path.join(args.out, "index.json"), {"sequences": index, "grid": m.grid.to_dict()})
    print(json.dumps({"out": args.out, "sequences": len(index)}))


def _frame_files(root, sequence):
    files = sorted(glob.glob(os.path.join(root, "frame_*.json")))
    if files:
        return files
    subs = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if not subs:
        raise ValidationError(f"{root}: no frame_*.json files", field="frames")
    pick = sequence or subs[0]
    if pick not in subs:
        raise ValidationError(f"{root}: no sequence {pick!r}", field="sequence")
    return sorted(glob.glob(os.path.join(root, pick, "frame_*.json")))


def cmd_stitch(args):
    files = _frame_files(args.frames, args.sequence)
    frames = [FrameRecon.from_dict(io.load_json(p)) for p in files]
    _log_resolved("stitch", {"frames": args.frames, "sequence": args.sequence, "count": len(frames),
                             "vertical": not args.no_vertical})
    world = stitch_sequence(frames, vertical=not args.no_vertical)
    if args.into:
        base = WorldRecon.from_dict(io.load_json(args.into))
        world = merge_worlds(base, world, args.offset or (0.0, 0.0, 0.0))
    io.save_json(args.out, world.to_dict())
    print(json.dumps({"out": args.out, "boxes": len(world.boxes), "slabs": len(world.slabs)}))


def merge_worlds(base, other, offset):
    """Append another sequence's world model at a user-supplied offset (base frame coordinates)."""
    f = FrameRecon(len(base.shifts), tuple(other.slabs), tuple(other.boxes), other.cell or base.cell)
    out = merge_frame(base, f, tuple(-float(v) for v in offset))
    seen = sorted(set(base.meta.get("seen_racks", [])) | set(other.meta.get("seen_racks", [])))
    out.meta = {**base.meta, "seen_racks": seen}
    return out


def cmd_export_obj(args):
    world = WorldRecon.from_dict(io.load_json(args.world))
    with open(args.out, "w", newline="\n") as fh:
        fh.write(world_to_obj(world))
    print(json.dumps({"out": args.out, "objects": len(world.slabs) + len(world.boxes)}))


def cmd_compare(args):
    world = WorldRecon.from_dict(io.load_json(args.world))
    scene = io.load_scene(args.scene)
    origin = args.origin or world.meta.get("origin")
    if origin is None:
        raise ValidationError("world has no recorded anchor origin; pass --origin", field="origin")
    racks = world.meta.get("seen_racks") or None
    _log_resolved("compare", {"world": args.world, "scene": args.scene, "origin": list(origin)})
    rep = compare_to_truth(world, scene, origin, args.num_shelves, racks)
    text = io.dumps(rep)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


def selftest(seed=0, trials=5):
    """Gradient checks on random small inputs plus a rasterization spot check; returns failures."""
    from .layout import CameraPose, make_shelf_frame, rasterize_top_view, visible_racks
    from .scene import BoxInstance, SceneGraph, make_rack

    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(trials):
        p = rng.uniform(0.05, 1.0, size=(2, 2, 4, 4, 3))
        p /= p.sum(-1, keepdims=True)
        inputs = {"preds": p, "truths": rng.integers(0, 3, size=(2, 2, 4, 4)),
                  "seq": rng.dirichlet(np.ones(3), size=(4, 1, 3, 3)) * 0.9 + 0.1 / 3,
                  "fake": rng.uniform(0.05, 0.95, 5), "real": rng.uniform(0.05, 0.95, 4)}
        for lid in LOSS_IDS:
            err = gradient_check(lid, inputs, 1e-6 if lid in ("l_adv", "l_discr") else 1e-5)
            if err > 1e-4:
                failures.append(f"{lid}: gradient relative error {err:.2e}")
    box = BoxInstance(0, (0.0, 0.5, -0.5), (1.0, 0.5, 1.0))
    scene = SceneGraph((make_rack(0, 0.0, -0.5, 4.0, 4.0, (0.2,), {0: [box]}),))
    vis = visible_racks(scene, CameraPose((0.0, 1.0, 2.0)))
    spec = GridSpec(64, 8.0, 1)
    top = rasterize_top_view(scene, make_shelf_frame(scene, vis, TOP, spec), spec, vis)
    if int((top.channels[0] == 2).sum()) != 64:
        failures.append("rasterization: 1 m box did not cover 8x8 cells")
    return failures


def cmd_selftest(args):
    failures = selftest(_seed(args, 0))
    if failures:
        for f in failures:
            print(f"FAIL {f}")
        raise ForgeError("; ".join(failures))
    print("selftest: ok")


def build_parser():
    p = argparse.ArgumentParser(prog="forge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log resolved configuration")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--jobs", type=int, default=1)
        return sp

    g = common(sub.add_parser("gen", help="generate a synthetic dataset"))
    g.add_argument("--sequences", type=int, default=None)
    g.set_defaults(func=cmd_gen)

    d = common(sub.add_parser("degrade", help="simulate network predictions"))
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--noise", default=None)
    d.set_defaults(func=cmd_degrade)

    e = common(sub.add_parser("eval", help="mIoU / mAP table"), out_required=False)
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--split", default=None)
    e.set_defaults(func=cmd_eval)

    lo = common(sub.add_parser("loss", help="loss terms of predictions against ground truth"), out_required=False)
    lo.add_argument("--pred", required=True)
    lo.add_argument("--truth", required=True)
    lo.add_argument("--split", default=None)
    lo.add_argument("--disc", default=None, help="JSON with discriminator outputs {'real': [...], 'fake': [...]}")
    lo.add_argument("--kind", choices=("sym_kl", "l2"), default="sym_kl")
    lo.set_defaults(func=cmd_loss)

    r = common(sub.add_parser("recon", help="per-frame 3D reconstruction"))
    r.add_argument("--layouts", required=True)
    r.add_argument("--split", default=None)
    r.set_defaults(func=cmd_recon)

    s = common(sub.add_parser("stitch", help="stitch frames into one world model"))
    s.add_argument("--frames", required=True)
    s.add_argument("--sequence", default=None)
    s.add_argument("--into", default=None, help="existing world.json to merge this sequence into")
    s.add_argument("--offset", type=float, nargs=3, default=None,
                   help="position of this sequence's anchor in the --into world's frame (m)")
    s.add_argument("--no-vertical", action="store_true", help="pin the vertical shift to 0")
    s.set_defaults(func=cmd_stitch)

    x = common(sub.add_parser("export-obj", help="world model as Wavefront OBJ"))
    x.add_argument("--world", required=True)
    x.set_defaults(func=cmd_export_obj)

    c = common(sub.add_parser("compare", help="world model against a scene graph"), out_required=False)
    c.add_argument("--world", required=True)
    c.add_argument("--scene", required=True)
    c.add_argument("--origin", type=float, nargs=3, default=None)
    c.add_argument("--num-shelves", type=int, default=3)
    c.set_defaults(func=cmd_compare)

    t = common(sub.add_parser("selftest", help="gradient and rasterization checks"), out_required=False)
    t.set_defaults(func=cmd_selftest)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except ForgeError as exc:
        print("error: " + json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print("error: " + json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
