import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rackforge.layout import FRONT, TOP, GridSpec, LayoutStack, make_shelf_frame, rasterize_front_view, \
    rasterize_top_view
from rackforge.metrics import BOX, RACK
from rackforge.recon import (Detection2D, FrameRecon, extract_components, fit_footprint, lift_to_3d,
                             match_top_front, reconstruct_frame, x_iou)
from rackforge.scene import BoxInstance, SceneGraph, make_rack
from rackforge.stitch import truth_boxes

import oracles


def stack(a, view=TOP):
    a = np.asarray(a, np.uint8)
    return LayoutStack(view, a if a.ndim == 3 else a[None])


def det(i, c0, c1, view=TOP, cls=BOX, level=0):
    return Detection2D(i, view, level, cls, c0, c1, 0, 3, (c1 - c0 + 1) * 4)


# ----------------------------------------------------------------- components

def test_background_has_no_components():
    assert extract_components(stack(np.zeros((16, 16)))) == []


def test_single_square():
    g = np.ones((32, 32), np.uint8)
    g[10:18, 5:13] = 2
    boxes = [d for d in extract_components(stack(g)) if d.cls == BOX]
    assert len(boxes) == 1
    b = boxes[0]
    assert (b.row_min, b.row_max, b.col_min, b.col_max, b.area) == oracles.flood_fill_rects(g == 2)[0]


def test_one_free_column_separates_boxes():
    g = np.ones((16, 16), np.uint8)
    g[4:10, 2:6] = 2
    g[4:10, 7:11] = 2
    assert len([d for d in extract_components(stack(g)) if d.cls == BOX]) == 2


def test_diagonal_contact_stays_separate():
    g = np.ones((8, 8), np.uint8)
    g[0:2, 0:2] = 2
    g[2:4, 2:4] = 2
    assert len([d for d in extract_components(stack(g)) if d.cls == BOX]) == 2


@settings(max_examples=40, deadline=None)
@given(g=arrays(np.uint8, (12, 12), elements=st.integers(0, 2)))
def test_components_match_flood_fill(g):
    dets = extract_components(stack(g), min_area=4)
    for cls, mask in ((BOX, g == 2), (RACK, g != 0)):
        got = sorted((d.row_min, d.row_max, d.col_min, d.col_max, d.area) for d in dets if d.cls == cls)
        assert got == oracles.flood_fill_rects(mask, min_area=4)


def rotated_blob(w, h, yaw, cx=20.3, cy=19.7):
    c, s = np.cos(yaw), np.sin(yaw)
    corners = [(cx + u * c - v * s, cy + u * s + v * c) for u, v in ((-w / 2, -h / 2), (w / 2, -h / 2),
                                                                      (w / 2, h / 2), (-w / 2, h / 2))]
    rows, cols = zip(*[(r, q) for r in range(40) for q in range(40) if oracles.in_convex((q + 0.5, r + 0.5), corners)])
    xs, ys = [p[0] for p in corners], [p[1] for p in corners]
    return np.array(rows), np.array(cols), (min(xs), max(xs), min(ys), max(ys))


def test_filled_rectangle_needs_no_fit():
    rows, cols = np.mgrid[3:9, 4:15]
    assert fit_footprint(rows.ravel(), cols.ravel()) is None


@pytest.mark.parametrize("w,h,yaw", [(11.0, 12.9, 0.1), (8.3, 14.2, -0.3), (13.0, 13.0, 0.2), (6.5, 9.1, 0.35)])
def test_rotated_blob_extent_within_one_cell(w, h, yaw):
    rows, cols, truth = rotated_blob(w, h, yaw)
    fit = fit_footprint(rows, cols)
    assert fit is not None
    assert max(abs((fit[1] - fit[0]) - (truth[1] - truth[0])), abs((fit[3] - fit[2]) - (truth[3] - truth[2]))) <= 1
    assert abs((fit[0] + fit[1]) - (truth[0] + truth[1])) / 2 <= 0.5
    # the plain bounding rectangle of the cells falls short on the same blob
    assert (cols.max() + 1 - cols.min()) < truth[1] - truth[0]


def test_l_shape_is_not_fitted():
    g = np.zeros((20, 20), bool)
    g[2:16, 2:6] = True
    g[12:16, 2:16] = True
    rows, cols = np.nonzero(g)
    assert fit_footprint(rows, cols) is None


# ----------------------------------------------------------------- top/front matching

def test_single_identical_pair():
    assert match_top_front([det(0, 3, 9)], [det(0, 3, 9, FRONT)], 0) == [(0, 0)]


def test_two_boxes_disjoint_ranges_do_not_cross():
    top = [det(0, 2, 6), det(1, 10, 14)]
    front = [det(0, 10, 15, FRONT), det(1, 1, 6, FRONT)]
    assert match_top_front(top, front, 0) == [(0, 1), (1, 0)]


def test_unmatched_front_detection():
    assert match_top_front([det(0, 0, 4)], [det(0, 20, 25, FRONT)], 0) == []
    # overlap below the IoU threshold is also left alone
    assert match_top_front([det(0, 0, 9)], [det(0, 8, 20, FRONT)], 0) == []


def test_classes_and_levels_never_mix():
    assert match_top_front([det(0, 0, 5, cls=RACK)], [det(0, 0, 5, FRONT)], 0) == []
    assert match_top_front([det(0, 0, 5, level=1)], [det(0, 0, 5, FRONT)], 0) == []


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_assignment_is_optimal(data):
    n = data.draw(st.integers(1, 5))
    k = data.draw(st.integers(1, 5))
    span = st.tuples(st.integers(0, 40), st.integers(1, 12))
    top = [det(i, a, a + w) for i, (a, w) in enumerate(data.draw(st.lists(span, min_size=n, max_size=n)))]
    front = [det(i, a, a + w, FRONT) for i, (a, w) in enumerate(data.draw(st.lists(span, min_size=k, max_size=k)))]
    pairs = match_top_front(top, front, 0)
    w = np.array([[x_iou(a, b) for b in front] for a in top])
    w[w < 0.25] = 0.0
    assert sum(w[i, j] for i, j in pairs) == pytest.approx(oracles.exhaustive_assignment(w))
    assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})


# ----------------------------------------------------------------- lifting

def single_box_scene(center_x=0.0, heights=(0.2, 1.4)):
    band = heights[1] - heights[0]
    box = BoxInstance(0, (center_x, heights[0] + band / 2, -0.5), (1.0, band, 1.0), stack_id=0)
    return SceneGraph((make_rack(0, 0.0, -0.5, 4.0, 2.0, heights, {0: [box]}),))


def recon_scene(scene, spec, vis=(0,)):
    tf, ff = make_shelf_frame(scene, vis, TOP, spec), make_shelf_frame(scene, vis, FRONT, spec)
    top = rasterize_top_view(scene, tf, spec, vis)
    front = rasterize_front_view(scene, ff, spec, vis)
    return reconstruct_frame(top, front, spec), tf.origin


def test_unit_box_recovered_within_one_cell():
    spec = GridSpec(128, 10.0, 2)
    scene = single_box_scene()
    rec, origin = recon_scene(scene, spec)
    truth = truth_boxes(scene, origin, spec.num_shelves)
    assert len(rec.boxes) == 1 and len(truth) == 1
    m = spec.meters_per_cell
    assert np.all(np.abs(np.subtract(rec.boxes[0].center, truth[0].center)) <= m)
    assert np.all(np.abs(np.subtract(rec.boxes[0].size, truth[0].size)) <= m)
    assert not rec.boxes[0].boundary
    assert {s.level for s in rec.slabs} == {0, 1}


def test_no_detections_empty_frame():
    spec = GridSpec(32, 10.0, 2)
    z = np.zeros((2, 32, 32), np.uint8)
    rec = reconstruct_frame(LayoutStack(TOP, z), LayoutStack(FRONT, z), spec)
    assert rec.empty and rec.boxes == ()
    assert lift_to_3d([], [], [], spec).boxes == ()


def test_box_at_grid_edge_is_flagged():
    spec = GridSpec(64, 4.0, 1)
    box = BoxInstance(0, (1.8, 0.5, -0.5), (0.6, 0.5, 0.6), stack_id=0)
    scene = SceneGraph((make_rack(0, 0.0, -0.5, 6.0, 1.0, (0.2,), {0: [box]}),))
    rec, _ = recon_scene(scene, spec)
    assert len(rec.boxes) == 1 and rec.boxes[0].boundary


def test_frame_recon_roundtrip():
    spec = GridSpec(64, 10.0, 2)
    rec, _ = recon_scene(single_box_scene(), spec)
    again = FrameRecon.from_dict(rec.to_dict())
    assert again == rec
