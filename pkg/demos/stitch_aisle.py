"""Walk a 4-rack aisle, reconstruct each frame and stitch the frames into one warehouse model.

Optionally degrades the layouts first to show the stitcher coping with prediction noise.
Writes the stitched model as a Wavefront OBJ.
"""
import argparse

import numpy as np

from rackforge import NOISE_A, GenConfig, GridSpec, compare_to_truth, degrade, generate_trajectory, \
    generate_warehouse, reconstruct_frame, render_sequence, stitch_sequence, world_to_obj


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--noisy", action="store_true", help="degrade layouts with the reference noise level")
    ap.add_argument("--obj", default="aisle.obj")
    args = ap.parse_args()

    spec = GridSpec()
    cfg = GenConfig(rack_count=(4, 4), frames=20)
    scene = generate_warehouse(cfg, args.seed, spec)
    seq = render_sequence(scene, generate_trajectory(cfg, scene, args.seed), spec, cfg.fov, cfg.max_range)
    recs = []
    for f in seq.frames:
        top, front = f.top, f.front
        if args.noisy:
            top, front = degrade(top, NOISE_A, args.seed)[0], degrade(front, NOISE_A, args.seed)[0]
        recs.append(reconstruct_frame(top, front, spec, meta={"visible": list(f.visible)}))
    world = stitch_sequence(recs)
    print("frame  boxes  visible racks  cumulative shift (m)")
    for f, r, s in zip(seq.frames, recs, world.shifts):
        print(f"{f.index:5d}  {len(r.boxes):5d}  {str(list(f.visible)):13s}  {np.round(s, 3)}")
    rep = compare_to_truth(world, scene, seq.frames[0].origin, spec.num_shelves, racks=world.meta["seen_racks"])
    print(f"\nstitched model: {len(world.boxes)} boxes on {len(world.slabs)} shelf slabs")
    print(f"precision {rep['precision']:.3f}  recall {rep['recall']:.3f}  "
          f"mean center error {rep['mean_center_error'] / spec.meters_per_cell:.2f} cells")
    with open(args.obj, "w") as fh:
        fh.write(world_to_obj(world))
    print(f"wrote {args.obj}")


if __name__ == "__main__":
    main()
