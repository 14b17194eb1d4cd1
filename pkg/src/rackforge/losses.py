"""Reference loss kernels with analytic gradients.

Probability inputs are arrays shaped (..., R, D, D, 3) or ProbabilityStack
objects; labels are (..., R, D, D) integer arrays or LayoutStack objects.
Cell terms are averaged over the D*D cells of a channel and summed over
channels, batch members and frame pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, SequenceTooShort, ShapeError

EPS = 1e-12


def _probs(x):
    if hasattr(x, "probs"):
        return np.asarray(x.probs, dtype=np.float64)
    if isinstance(x, (list, tuple)):
        return np.stack([_probs(v) for v in x])
    return np.asarray(x, dtype=np.float64)


def _labels(x):
    if hasattr(x, "channels"):
        return np.asarray(x.channels, dtype=np.intp)
    if isinstance(x, (list, tuple)):
        return np.stack([_labels(v) for v in x])
    return np.asarray(x, dtype=np.intp)


def _cells(p):
    return p.shape[-3] * p.shape[-2]


def _nll(pt):
    # -log(pt + EPS), capped so a certain correct cell costs exactly 0
    return -np.log(np.minimum(pt + EPS, 1.0))


def _nll_grad(pt):
    return np.where(pt + EPS < 1.0, -1.0 / (pt + EPS), 0.0)


def cell_divergence(p, truth):
    """Cross-entropy of one cell: -log(p[truth] + EPS)."""
    p = np.asarray(p, dtype=np.float64)
    return float(_nll(p[int(truth)]))


def cell_divergence_grad(p, truth):
    p = np.asarray(p, dtype=np.float64)
    g = np.zeros_like(p)
    g[int(truth)] = _nll_grad(p[int(truth)])
    return g


def _pick(p, t):
    return np.take_along_axis(p, t[..., None], axis=-1)[..., 0]


def l_sup(preds, truths):
    p, t = _probs(preds), _labels(truths)
    if p.shape[:-1] != t.shape:
        raise ShapeError(f"prediction shape {p.shape[:-1]} does not match labels {t.shape}")
    # per channel mean, summed over channels per item, then over items (so identical items add exactly)
    per_channel = _nll(_pick(p, t)).sum(axis=(-2, -1)) / _cells(p)
    per_item = per_channel.reshape(-1, per_channel.shape[-1]).sum(-1)
    return float(per_item.sum())


def l_sup_grad(preds, truths):
    p, t = _probs(preds), _labels(truths)
    if p.shape[:-1] != t.shape:
        raise ShapeError(f"prediction shape {p.shape[:-1]} does not match labels {t.shape}")
    g = np.zeros_like(p)
    np.put_along_axis(g, t[..., None], (_nll_grad(_pick(p, t)) / _cells(p))[..., None], axis=-1)
    return g


# pairwise term between two predicted distributions ---------------------------

def pair_divergence(p, q, kind="sym_kl"):
    """Divergence between two probability stacks, cell-mean per channel, summed.

    ``sym_kl`` is 0.5 * (KL(p||q) + KL(q||p)); ``l2`` is the squared distance.
    Both vanish when p == q.
    """
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {q.shape}")
    if kind == "sym_kl":
        cell = 0.5 * ((p - q) * (np.log(p + EPS) - np.log(q + EPS))).sum(-1)
    elif kind == "l2":
        cell = ((p - q) ** 2).sum(-1)
    else:
        raise ValueError(f"unknown divergence {kind!r}")
    return float(cell.sum() / _cells(p))


def pair_divergence_grad(p, q, kind="sym_kl"):
    p, q = _probs(p), _probs(q)
    n = _cells(p)
    if kind == "sym_kl":
        lr = np.log(p + EPS) - np.log(q + EPS)
        gp = 0.5 * (lr + (p - q) / (p + EPS))
        gq = 0.5 * (-lr - (p - q) / (q + EPS))
    elif kind == "l2":
        gp = 2 * (p - q)
        gq = -gp
    else:
        raise ValueError(f"unknown divergence {kind!r}")
    return gp / n, gq / n


def _seq(seq):
    s = _probs(list(seq)) if isinstance(seq, (list, tuple)) else _probs(seq)
    return s


def l_short(seq, kind="sym_kl"):
    s = _seq(seq)
    if len(s) < 2:
        raise SequenceTooShort("short-range consistency needs at least 2 frames")
    return sum(pair_divergence(s[j], s[j + 1], kind) for j in range(len(s) - 1))


def l_short_grad(seq, kind="sym_kl"):
    s = _seq(seq)
    if len(s) < 2:
        raise SequenceTooShort("short-range consistency needs at least 2 frames")
    g = np.zeros_like(s)
    for j in range(len(s) - 1):
        gp, gq = pair_divergence_grad(s[j], s[j + 1], kind)
        g[j] += gp
        g[j + 1] += gq
    return g


def long_pairs(n):
    """Frame index pairs (j, k) with k >= j + 2."""
    return [(j, k) for j in range(n) for k in range(j + 2, n)]


def l_long(seq, kind="sym_kl"):
    s = _seq(seq)
    return sum(pair_divergence(s[j], s[k], kind) for j, k in long_pairs(len(s)))


def l_long_grad(seq, kind="sym_kl"):
    s = _seq(seq)
    g = np.zeros_like(s)
    for j, k in long_pairs(len(s)):
        gp, gq = pair_divergence_grad(s[j], s[k], kind)
        g[j] += gp
        g[k] += gq
    return g


# least-squares adversarial terms ---------------------------------------------

def _outputs(v, name):
    v = np.asarray(getattr(v, "values", v), dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyBatch(f"{name} batch is empty")
    return v


def l_adv(fake):
    f = _outputs(fake, "fake")
    return float(np.mean((f - 1.0) ** 2))


def l_adv_grad(fake):
    f = _outputs(fake, "fake")
    return 2.0 * (f - 1.0) / f.size


def l_discr(real, fake):
    r, f = _outputs(real, "real"), _outputs(fake, "fake")
    return float(np.mean((r - 1.0) ** 2) + np.mean(f ** 2))


def l_discr_grad(real, fake):
    r, f = _outputs(real, "real"), _outputs(fake, "fake")
    return 2.0 * (r - 1.0) / r.size, 2.0 * f / f.size


@dataclass(frozen=True)
class DiscriminatorOutputs:
    values: np.ndarray
    source: str  # "real" or "fake"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if ((v < 0) | (v > 1)).any():
            raise ValueError("discriminator outputs must lie in [0, 1]")
        if self.source not in ("real", "fake"):
            raise ValueError("source must be 'real' or 'fake'")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class LossReport:
    l_sup: float
    l_adv: float
    l_short: float
    l_long: float
    l_discr: float

    @property
    def l_total(self):
        return self.l_sup + self.l_short + self.l_long + self.l_adv + self.l_discr

    def to_dict(self):
        return {"l_sup": self.l_sup, "l_adv": self.l_adv, "l_short": self.l_short,
                "l_long": self.l_long, "l_discr": self.l_discr, "l_total": self.l_total}


def loss_report(seq_preds, seq_truths, real=None, fake=None, kind="sym_kl"):
    """All loss terms for one predicted sequence; adversarial terms are 0 without discriminator outputs."""
    adv = l_adv(fake) if fake is not None else 0.0
    discr = l_discr(real, fake) if real is not None and fake is not None else 0.0
    short = l_short(seq_preds, kind) if len(seq_preds) >= 2 else 0.0
    return LossReport(l_sup(seq_preds, seq_truths), adv, short, l_long(seq_preds, kind), discr)


# finite-difference check -------------------------------------------------------

def _kernels(kind):
    return {
        "l_sup": (lambda x, a: l_sup(x, a["truths"]), lambda x, a: l_sup_grad(x, a["truths"]), "preds"),
        "l_short": (lambda x, a: l_short(x, kind), lambda x, a: l_short_grad(x, kind), "seq"),
        "l_long": (lambda x, a: l_long(x, kind), lambda x, a: l_long_grad(x, kind), "seq"),
        "l_adv": (lambda x, a: l_adv(x), lambda x, a: l_adv_grad(x), "fake"),
        "l_discr_real": (lambda x, a: l_discr(x, a["fake"]), lambda x, a: l_discr_grad(x, a["fake"])[0], "real"),
        "l_discr_fake": (lambda x, a: l_discr(a["real"], x), lambda x, a: l_discr_grad(a["real"], x)[1], "fake"),
    }


LOSS_IDS = ("l_sup", "l_short", "l_long", "l_adv", "l_discr")


def gradient_check(loss_id, inputs, epsilon=1e-5, kind="sym_kl"):
    """Max relative error between analytic and central-difference gradients.

    ``inputs`` holds the arrays the loss needs: ``preds``/``truths`` for l_sup,
    ``seq`` for l_short/l_long, ``fake`` (and ``real``) for the adversarial terms.
    ``l_discr`` checks both of its arguments.
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    if loss_id == "l_discr":
        return max(gradient_check("l_discr_real", inputs, epsilon, kind),
                   gradient_check("l_discr_fake", inputs, epsilon, kind))
    table = _kernels(kind)
    if loss_id not in table:
        raise ValueError(f"unknown loss {loss_id!r}")
    f, grad, key = table[loss_id]
    x = np.array(inputs[key], dtype=np.float64)
    analytic = np.asarray(grad(x, inputs), dtype=np.float64)
    numeric = np.zeros_like(x)
    flat, nflat = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = f(x, inputs)
        flat[i] = orig - epsilon
        lo = f(x, inputs)
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * epsilon)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))
