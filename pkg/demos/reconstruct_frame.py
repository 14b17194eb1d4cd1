"""Lift one frame's top and front layouts to 3D boxes and compare with the generator's boxes."""
import argparse

import numpy as np

from rackforge import GenConfig, GridSpec, generate_trajectory, generate_warehouse, reconstruct_frame, \
    render_sequence
from rackforge.stitch import truth_boxes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=16)
    ap.add_argument("--frame", type=int, default=4)
    args = ap.parse_args()

    spec = GridSpec()
    cfg = GenConfig()
    scene = generate_warehouse(cfg, args.seed, spec)
    seq = render_sequence(scene, generate_trajectory(cfg, scene, args.seed), spec, cfg.fov, cfg.max_range)
    f = seq.frames[args.frame]
    rec = reconstruct_frame(f.top, f.front, spec)
    truth = truth_boxes(scene, f.origin, spec.num_shelves, racks=f.visible)
    m = spec.meters_per_cell
    print(f"frame {f.index}: {len(rec.slabs)} shelf slabs, {len(rec.boxes)} boxes; {len(truth)} stacks in view")
    print("center and size errors in cells (x, y, z):")
    for b in rec.boxes:
        t = min((t for t in truth if t.level == b.level), key=lambda t: np.linalg.norm(np.subtract(t.center, b.center)))
        dc = np.subtract(b.center, t.center) / m
        ds = np.subtract(b.size, t.size) / m
        tag = " (clipped by the grid edge)" if b.boundary else ""
        print(f"  level {b.level} at x={b.center[0]:+.2f} m  center {np.round(dc, 2)}  size {np.round(ds, 2)}{tag}")


if __name__ == "__main__":
    main()
