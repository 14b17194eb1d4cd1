from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rackforge.layout import TOP, LayoutStack
from rackforge.predictor import NOISE_A, NoiseConfig, degrade

ROOT = Path(__file__).resolve().parents[1]


def square_stack(d=16, lo=4, hi=12):
    ch = np.ones((1, d, d), np.uint8)
    ch[0, lo:hi, lo:hi] = 2
    ch[0, :, :1] = 0
    return LayoutStack(TOP, ch, 3)


def test_zero_noise_is_identity():
    s = square_stack()
    hard, probs = degrade(s, NoiseConfig())
    assert hard == s
    assert np.array_equal(probs.probs, np.eye(3, dtype=np.float32)[s.channels])


def test_forced_flip_changes_every_rack_cell():
    s = square_stack()
    hard, _ = degrade(s, NoiseConfig(flip_prob=1.0, flip_table={1: (2,), 2: (1,)}))
    rack = s.channels != 0
    assert (hard.channels[rack] != s.channels[rack]).all()
    assert (hard.channels[~rack] == 0).all()


def erode_oracle(mask):
    out = np.zeros_like(mask)
    h, w = mask.shape
    for i in range(h):
        for j in range(w):
            win = [mask[a, b] if 0 <= a < h and 0 <= b < w else True
                   for a in range(i - 1, i + 2) for b in range(j - 1, j + 2)]
            out[i, j] = all(win)
    return out


def test_erosion_shrinks_square_to_six():
    spec_square = square_stack(d=32, lo=12, hi=20)          # the 8x8 unit box
    hard, _ = degrade(spec_square, NoiseConfig(morph_radius=(-1, -1)))
    occ = hard.channels[0] == 2
    assert np.array_equal(occ, erode_oracle(spec_square.channels[0] == 2))
    rows, cols = np.nonzero(occ)
    assert (np.ptp(rows) + 1, np.ptp(cols) + 1, occ.sum()) == (6, 6, 36)


def test_dilation_stays_on_the_shelf():
    s = square_stack()
    hard, _ = degrade(s, NoiseConfig(morph_radius=(2, 2)))
    assert (hard.channels[s.channels == 0] == 0).all()
    assert (hard.channels == 2).sum() > (s.channels == 2).sum()


def test_dropout_one_removes_all_boxes():
    hard, _ = degrade(square_stack(), NoiseConfig(dropout=1.0))
    assert not (hard.channels == 2).any()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.0, 0.49), temp=st.floats(0.2, 5.0))
def test_soft_probs_are_valid_and_argmax_matches(seed, eps, temp):
    cfg = NoiseConfig(dropout=0.1, morph_radius=(-1, 1), blob_rate=1.0, flip_prob=0.05, epsilon=eps,
                      temperature=temp, seed=seed)
    hard, probs = degrade(square_stack(), cfg)
    probs.validate(tol=1e-5)
    assert np.array_equal(np.argmax(probs.probs, -1), hard.channels)
    assert probs.probs.dtype == np.float32


def test_seeded_and_reproducible():
    a = degrade(square_stack(), NOISE_A)
    b = degrade(square_stack(), NOISE_A)
    assert a[0] == b[0] and a[1] == b[1]
    c = degrade(square_stack(), NOISE_A, seed=8)
    assert not (a[1] == c[1])


def test_invalid_configs():
    with pytest.raises(ValueError):
        NoiseConfig(flip_prob=1.5)
    with pytest.raises(ValueError):
        NoiseConfig(epsilon=0.5)
    with pytest.raises(ValueError):
        NoiseConfig(flip_table={1: (1,)})
    with pytest.raises(ValueError):
        NoiseConfig.from_dict({"bogus": 1})


def test_reference_noise_file_matches_builtin():
    cfg = NoiseConfig.load(ROOT / "configs" / "noise_a.json")
    assert cfg == NOISE_A
    assert NoiseConfig.from_dict(NOISE_A.to_dict()) == NOISE_A
