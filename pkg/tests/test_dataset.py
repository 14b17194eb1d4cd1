import filecmp
import os
import shutil

import numpy as np
import pytest

from rackforge import io
from rackforge.dataset import degrade_dataset, generate_dataset, load_manifest, read_layouts, read_probs
from rackforge.errors import AlignmentError, ValidationError
from rackforge.layout import FRONT, TOP, GridSpec, LayoutStack, ProbabilityStack
from rackforge.metrics import evaluate_dataset
from rackforge.predictor import NOISE_A, NoiseConfig
from rackforge.waregen import GenConfig

SMALL = GridSpec(64, 10.0, 3)
CFG = GenConfig(frames=4)


@pytest.fixture(scope="module")
def truth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("truth")
    generate_dataset(str(out), CFG, SMALL, sequences=3, seed=5, ratios=(1, 1, 1))
    return str(out)


def tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(tree_equal(os.path.join(a, d), os.path.join(b, d))
                                               for d in cmp.common_dirs)


def test_manifest_describes_everything(truth_dir):
    m = load_manifest(truth_dir)
    assert m.kind == "truth" and m.grid == SMALL
    assert len(m.sequences) == 3
    assert sorted(m.ids("train") + m.ids("test") + m.ids("validation")) == m.ids()
    s = m.sequences[0]
    assert len(s["top"]) == len(s["front"]) == s["frames"] == 4
    stacks = read_layouts(m, s["id"], TOP)
    assert all(st.channels.shape == (3, 64, 64) for st in stacks)


def test_parallel_generation_is_byte_identical(truth_dir, tmp_path):
    generate_dataset(str(tmp_path / "b"), CFG, SMALL, sequences=3, seed=5, ratios=(1, 1, 1), jobs=3)
    assert tree_equal(truth_dir, str(tmp_path / "b"))


def test_manifest_tampering_is_caught(truth_dir, tmp_path):
    root = tmp_path / "copy"
    shutil.copytree(truth_dir, root)
    d = io.load_json(root / "manifest.json")
    d["config"]["sequences"] = 99
    io.save_json(root / "manifest.json", d)
    with pytest.raises(ValidationError) as e:
        load_manifest(str(root))
    assert e.value.field == "config_hash"

    shutil.rmtree(root)
    shutil.copytree(truth_dir, root)
    os.remove(root / "seq_0001" / "front_0002.lay")
    with pytest.raises(ValidationError) as e:
        load_manifest(str(root))
    assert "seq_0001/front_0002.lay" in str(e.value)

    (root / "seq_0001" / "front_0002.lay").write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(ValidationError):
        load_manifest(str(root))


def test_truth_against_itself_is_perfect(truth_dir):
    table = evaluate_dataset(truth_dir, truth_dir).to_dict()
    assert all(m == 100.0 for row in table.values() for c in row.values() for m in c.values())


def test_degraded_predictions(truth_dir, tmp_path):
    pred = str(tmp_path / "pred")
    m = degrade_dataset(truth_dir, NOISE_A, pred)
    assert m.kind == "prediction" and m.noise == NOISE_A.to_dict()
    pm = load_manifest(pred)
    probs = read_probs(pm, "seq_0000", FRONT)
    assert probs[0].probs.dtype == np.float32
    table = evaluate_dataset(pred, truth_dir).to_dict()
    assert all(0.0 <= m <= 100.0 for row in table.values() for c in row.values() for m in c.values())
    again = str(tmp_path / "again")
    degrade_dataset(truth_dir, NOISE_A, again, jobs=4)
    assert tree_equal(pred, again)


def test_all_background_predictions_score_zero(truth_dir, tmp_path):
    pred = str(tmp_path / "bg")
    degrade_dataset(truth_dir, NoiseConfig(), pred)
    pm = load_manifest(pred)
    for s in pm.sequences:
        for view in (TOP, FRONT):
            bg = LayoutStack(view, np.zeros((3, 64, 64), np.uint8))
            for rel, prel in zip(s[view], s[f"{view}_probs"]):
                io.save_layout(pm.path(rel), bg)
                io.save_probs(pm.path(prel), ProbabilityStack.one_hot(bg))
    table = evaluate_dataset(pred, truth_dir).to_dict()
    for view in (TOP, FRONT):
        assert table[view]["rack"]["miou"] == 0.0 and table[view]["box"]["miou"] == 0.0


def test_missing_prediction_frames_are_listed(truth_dir, tmp_path):
    pred = str(tmp_path / "pred")
    degrade_dataset(truth_dir, NoiseConfig(), pred)
    os.remove(os.path.join(pred, "seq_0002", "top_0001.lay"))
    with pytest.raises(AlignmentError) as e:
        evaluate_dataset(pred, truth_dir)
    assert e.value.offenders == ["seq_0002: top has 3 of 4 frames"]
    d = io.load_json(os.path.join(pred, "manifest.json"))
    d["sequences"] = d["sequences"][:1]
    io.save_json(os.path.join(pred, "manifest.json"), d)
    with pytest.raises(AlignmentError) as e:
        evaluate_dataset(pred, truth_dir)
    assert "seq_0001: missing sequence" in e.value.offenders
