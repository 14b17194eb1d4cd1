"""Rasterize one generated frame into top-view and front-view layouts and print them as text."""
import argparse

from rackforge import FRONT, TOP, GenConfig, GridSpec, generate_trajectory, generate_warehouse, render_sequence

GLYPH = {0: " ", 1: ".", 2: "#"}


def show(stack, level, step):
    grid = stack.channels[level]
    rows = [r for r in grid[::step] if r.any()]  # all-background rows carry nothing
    for row in rows:
        print("  |" + "".join(GLYPH[int(v)] for v in row[::step]) + "|")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--frame", type=int, default=5)
    ap.add_argument("--level", type=int, default=0)
    args = ap.parse_args()

    spec = GridSpec(64, 10.0, 3)
    cfg = GenConfig(frames=10)
    scene = generate_warehouse(cfg, args.seed, spec)
    seq = render_sequence(scene, generate_trajectory(cfg, scene, args.seed), spec, cfg.fov, cfg.max_range)
    f = seq.frames[args.frame]
    print(f"scene: {len(scene.racks)} racks; frame {f.index} sees racks {list(f.visible)}")
    print(f"shelf-frame origin (world, m): {tuple(round(v, 3) for v in f.origin)}")
    print(f"\ntop view, shelf level {args.level}  ('#' occupied, '.' free shelf, blank background)")
    show(f.top, args.level, 2)
    print(f"\nfront view, shelf level {args.level}")
    show(f.front, args.level, 2)
    for view, st in ((TOP, f.top), (FRONT, f.front)):
        counts = [int((st.channels == c).sum()) for c in range(3)]
        print(f"{view:>5}: cells per class (background, unoccupied, occupied) = {counts}")


if __name__ == "__main__":
    main()
