import math

import numpy as np
import pytest

from rackforge.errors import EmptyBatch, SequenceTooShort, ShapeError
from rackforge.layout import TOP, LayoutStack, ProbabilityStack
from rackforge.losses import (LOSS_IDS, DiscriminatorOutputs, LossReport, cell_divergence, cell_divergence_grad,
                              gradient_check, l_adv, l_discr, l_long, l_long_grad, l_short, l_short_grad, l_sup,
                              l_sup_grad, long_pairs, loss_report, pair_divergence)

import oracles


def rand_probs(rng, shape, floor=0.02):
    p = rng.dirichlet(np.ones(3), size=shape)
    return p * (1 - 3 * floor) + floor


def skl(p, q):
    return 0.5 * sum((a - b) * (math.log(a) - math.log(b)) for a, b in zip(p, q))


# ----------------------------------------------------------------- cell term

def test_cell_divergence_examples():
    assert cell_divergence([0.0, 1.0, 0.0], 1) == 0.0
    assert cell_divergence([1 / 3] * 3, 2) == pytest.approx(math.log(3), abs=1e-10)
    assert cell_divergence([0.7, 0.2, 0.1], 0) == pytest.approx(0.35667494, abs=1e-8)


def test_cell_divergence_grad():
    p = np.array([0.5, 0.3, 0.2])
    g = cell_divergence_grad(p, 1)
    assert g == pytest.approx(oracles.central_difference(lambda x: cell_divergence(x, 1), p), rel=1e-6)


# ----------------------------------------------------------------- supervised

def test_l_sup_perfect_is_zero():
    lab = np.random.default_rng(0).integers(0, 3, size=(2, 3, 4, 4))
    assert l_sup(np.eye(3)[lab], lab) == 0.0


def test_l_sup_is_linear_in_batch():
    rng = np.random.default_rng(1)
    p, t = rand_probs(rng, (1, 2, 4, 4)), rng.integers(0, 3, size=(1, 2, 4, 4))
    assert l_sup(np.concatenate([p, p]), np.concatenate([t, t])) == 2 * l_sup(p, t)


def test_l_sup_hand_summed_two_by_two():
    p = np.array([[[[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]],
                   [[0.25, 0.25, 0.5], [0.6, 0.3, 0.1]]]])[None]    # (1, 1, 2, 2, 3)
    t = np.array([[[[0, 1], [2, 1]]]])
    want = -(math.log(0.7) + math.log(0.8) + math.log(0.5) + math.log(0.3)) / 4
    assert l_sup(p, t) == pytest.approx(want, rel=1e-10)


def test_l_sup_accepts_stacks_and_checks_shapes():
    lab = LayoutStack(TOP, np.zeros((1, 4, 4), np.uint8))
    assert l_sup([ProbabilityStack.one_hot(lab)], [lab]) == 0.0
    with pytest.raises(ShapeError):
        l_sup(np.full((1, 1, 4, 4, 3), 1 / 3), np.zeros((1, 1, 4, 5), int))


# ----------------------------------------------------------------- adversarial

def test_l_adv_examples():
    assert l_adv([1.0, 1.0]) == 0.0
    assert l_adv([0.0, 0.0, 0.0]) == 1.0
    assert l_adv([0.5, 0.75]) == 0.15625
    with pytest.raises(EmptyBatch):
        l_adv([])


def test_l_discr_examples():
    assert l_discr([1.0, 1.0], [0.0]) == 0.0
    assert l_discr([0.0], [1.0, 1.0]) == 2.0
    assert l_discr([0.9], [0.2]) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(EmptyBatch):
        l_discr([0.5], [])


def test_discriminator_outputs_validation():
    d = DiscriminatorOutputs([0.2, 0.9], "fake")
    assert l_adv(d) == l_adv([0.2, 0.9])
    with pytest.raises(ValueError):
        DiscriminatorOutputs([1.2], "real")
    with pytest.raises(ValueError):
        DiscriminatorOutputs([0.2], "other")


# ----------------------------------------------------------------- consistency

def test_identical_frames_cost_nothing():
    p = rand_probs(np.random.default_rng(2), (1, 3, 3))
    seq = np.stack([p] * 4)
    assert l_short(seq) == 0.0 and l_long(seq) == 0.0


def test_short_of_two_frames_is_one_pair():
    rng = np.random.default_rng(3)
    a, b = rand_probs(rng, (2, 4, 4)), rand_probs(rng, (2, 4, 4))
    assert l_short([a, b]) == pair_divergence(a, b)
    assert l_long([a, b]) == 0
    with pytest.raises(SequenceTooShort):
        l_short([a])


def test_short_hand_summed_three_frames():
    f = [[[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]],
         [[0.5, 0.4, 0.1], [0.1, 0.3, 0.6]],
         [[0.2, 0.5, 0.3], [0.3, 0.3, 0.4]]]
    seq = np.array(f)[:, None, None]                  # (3, 1, 1, 2, 3): one channel, 2 cells
    want = sum((skl(f[j][0], f[j + 1][0]) + skl(f[j][1], f[j + 1][1])) / 2 for j in range(2))
    assert l_short(seq) == pytest.approx(want, rel=1e-10)


def test_long_pairs_and_hand_sum():
    assert long_pairs(4) == [(0, 2), (0, 3), (1, 3)]
    rng = np.random.default_rng(4)
    seq = rand_probs(rng, (4, 1, 2, 2))
    want = pair_divergence(seq[0], seq[2]) + pair_divergence(seq[0], seq[3]) + pair_divergence(seq[1], seq[3])
    assert l_long(seq) == pytest.approx(want, rel=1e-12)


def test_pairwise_l2_option():
    a = np.array([[[[1.0, 0.0, 0.0]]]])
    b = np.array([[[[0.0, 1.0, 0.0]]]])
    assert pair_divergence(a, b, "l2") == 2.0
    with pytest.raises(ValueError):
        pair_divergence(a, b, "cosine")


def test_consistency_grads_match_finite_differences():
    seq = rand_probs(np.random.default_rng(5), (4, 1, 2, 2))
    for f, g in ((l_short, l_short_grad), (l_long, l_long_grad)):
        assert g(seq) == pytest.approx(oracles.central_difference(f, seq), rel=1e-5, abs=1e-9)
    t = np.random.default_rng(6).integers(0, 3, size=(4, 1, 2, 2))
    assert l_sup_grad(seq, t) == pytest.approx(oracles.central_difference(lambda x: l_sup(x, t), seq), rel=1e-5)


# ----------------------------------------------------------------- report and checks

def test_total_is_exact_sum():
    rng = np.random.default_rng(7)
    seq = rand_probs(rng, (3, 2, 4, 4))
    rep = loss_report(seq, rng.integers(0, 3, size=(3, 2, 4, 4)), real=[0.8, 0.7], fake=[0.3])
    assert rep.l_total == rep.l_sup + rep.l_short + rep.l_long + rep.l_adv + rep.l_discr
    assert all(v >= 0 for v in rep.to_dict().values())
    assert LossReport(1.0, 2.0, 3.0, 4.0, 5.0).l_total == 15.0


def test_gradient_check_on_quadratics_is_exact():
    rng = np.random.default_rng(8)
    inputs = {"fake": rng.uniform(0, 1, 6), "real": rng.uniform(0, 1, 5)}
    assert gradient_check("l_adv", inputs, 1e-3) <= 1e-9
    assert gradient_check("l_discr", inputs, 1e-3) <= 1e-9


def test_gradient_check_examples():
    rng = np.random.default_rng(9)
    assert gradient_check("l_adv", {"fake": rng.uniform(0, 1, 8)}, 1e-5) <= 1e-6
    inputs = {"preds": rand_probs(rng, (1, 2, 4, 4)), "truths": rng.integers(0, 3, size=(1, 2, 4, 4)),
              "seq": rand_probs(rng, (3, 1, 4, 4))}
    for lid in ("l_sup", "l_short", "l_long"):
        assert gradient_check(lid, inputs) <= 1e-4


def test_gradient_check_rejects_bad_epsilon():
    for eps in (0.0, 0.1, -1e-5):
        with pytest.raises(ValueError):
            gradient_check("l_adv", {"fake": [0.5]}, eps)
    with pytest.raises(ValueError):
        gradient_check("l_nope", {"fake": [0.5]})
    assert set(LOSS_IDS) == {"l_sup", "l_short", "l_long", "l_adv", "l_discr"}
