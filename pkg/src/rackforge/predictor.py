"""Simulated network predictions: seeded degradation of ground-truth stacks.

Degradations run in a fixed order: box dropout, boundary morphology,
false-positive blobs, label flips, probability softening.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from .layout import CellClass, LayoutStack, ProbabilityStack

BG, UN, OC = int(CellClass.BACKGROUND), int(CellClass.UNOCCUPIED), int(CellClass.OCCUPIED)
FOUR = ndimage.generate_binary_structure(2, 1)

DEFAULT_FLIPS = {BG: (UN, OC), UN: (BG, OC), OC: (BG, UN)}


@dataclass(frozen=True)
class NoiseConfig:
    dropout: float = 0.0            # probability of deleting a whole box blob
    morph_radius: tuple = (0, 0)    # signed radius range; < 0 erodes boxes, > 0 dilates
    blob_rate: float = 0.0          # expected false-positive box blobs per channel
    blob_size: tuple = (2, 6)       # blob side length range (cells)
    flip_prob: float = 0.0
    flip_table: dict = field(default_factory=lambda: dict(DEFAULT_FLIPS))
    epsilon: float = 0.0            # max probability mass moved off the emitted class
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout", "flip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.blob_rate < 0:
            raise ValueError("blob_rate must be >= 0")
        if self.morph_radius[0] > self.morph_radius[1]:
            raise ValueError("morph_radius range is empty")
        if not (1 <= self.blob_size[0] <= self.blob_size[1]):
            raise ValueError("blob_size must be a range of positive ints")
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must lie in [0, 0.5)")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        for src, dst in self.flip_table.items():
            if int(src) in map(int, dst) or not set(map(int, dst)) <= {BG, UN, OC}:
                raise ValueError(f"flip_table[{src}] must list other classes")

    def to_dict(self):
        d = asdict(self)
        d["morph_radius"] = list(self.morph_radius)
        d["blob_size"] = list(self.blob_size)
        d["flip_table"] = {str(k): list(v) for k, v in sorted(self.flip_table.items())}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise options: {sorted(unknown)}")
        for k in ("morph_radius", "blob_size"):
            if k in d:
                d[k] = tuple(int(v) for v in d[k])
        if "flip_table" in d:
            d["flip_table"] = {int(k): tuple(int(x) for x in v) for k, v in d["flip_table"].items()}
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_flip(self, p):
        return replace(self, flip_prob=p)


# Reference noise level used by the robustness checks and the pinned regression
# tables. Mild boundary jitter, occasional lost boxes and spurious blobs.
NOISE_A = NoiseConfig(
    dropout=0.02,
    morph_radius=(-1, 1),
    blob_rate=0.3,
    blob_size=(2, 5),
    flip_prob=0.01,
    flip_table={UN: (OC,), OC: (UN,)},
    epsilon=0.3,
    temperature=1.0,
    seed=7,
)


def _stream(cfg, stack, seed):
    base = cfg.seed if seed is None else seed
    view = 0 if stack.view == "top" else 1
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(base), int(stack.frame_index), view])))


def _square(r):
    return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)


def _degrade_channel(ch, cfg, rng):
    ch = ch.copy()
    rack = ch != BG
    box = ch == OC
    if cfg.dropout > 0 and box.any():
        lab, n = ndimage.label(box, structure=FOUR)
        drop = np.flatnonzero(rng.random(n) < cfg.dropout) + 1
        if len(drop):
            box &= ~np.isin(lab, drop)
    lo, hi = cfg.morph_radius
    if hi > lo or lo != 0:
        r = int(rng.integers(lo, hi + 1))
        if r < 0:
            box = ndimage.binary_erosion(box, _square(-r), border_value=1)
        elif r > 0:
            box = ndimage.binary_dilation(box, _square(r)) & rack
    if cfg.blob_rate > 0:
        d = ch.shape[0]
        for _ in range(int(rng.poisson(cfg.blob_rate))):
            h, w = rng.integers(cfg.blob_size[0], cfg.blob_size[1] + 1, size=2)
            r0, c0 = rng.integers(0, d - h + 1), rng.integers(0, d - w + 1)
            box[r0:r0 + h, c0:c0 + w] |= rack[r0:r0 + h, c0:c0 + w]
    out = np.where(rack, np.uint8(UN), np.uint8(BG))
    out[box] = OC
    if cfg.flip_prob > 0:
        hit = rng.random(out.shape) < cfg.flip_prob
        pick = rng.random(out.shape)
        flipped = out.copy()
        for src, dst in cfg.flip_table.items():
            if not dst:
                continue
            sel = hit & (out == int(src))
            choice = np.minimum((pick[sel] * len(dst)).astype(int), len(dst) - 1)
            flipped[sel] = np.asarray(dst, dtype=np.uint8)[choice]
        out = flipped
    return out


def soften(labels, cfg, rng):
    """One-hot labels with a random share of mass moved to the other classes."""
    shape = labels.shape
    if cfg.epsilon == 0:
        return np.eye(3, dtype=np.float32)[labels]
    eps = cfg.epsilon * rng.random(shape) ** (1.0 / cfg.temperature)
    split = rng.random(shape)
    p = np.zeros(shape + (3,), dtype=np.float64)
    others = (labels[..., None] + np.array([1, 2])) % 3
    np.put_along_axis(p, labels[..., None], (1.0 - eps)[..., None], axis=-1)
    np.put_along_axis(p, others[..., :1], (eps * split)[..., None], axis=-1)
    np.put_along_axis(p, others[..., 1:], (eps * (1 - split))[..., None], axis=-1)
    return p.astype(np.float32)


def degrade(truth, cfg, seed=None):
    """Return (hard labels, probabilities) simulating a network prediction of ``truth``."""
    rng = _stream(cfg, truth, seed)
    hard = np.stack([_degrade_channel(ch, cfg, rng) for ch in truth.channels])
    probs = soften(hard, cfg, rng)
    labels = np.argmax(probs, axis=-1).astype(np.uint8)
    return LayoutStack(truth.view, labels, truth.frame_index), ProbabilityStack(truth.view, probs, truth.frame_index)
