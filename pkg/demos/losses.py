"""Evaluate every training loss on a toy sequence and verify the analytic gradients."""
import numpy as np

from rackforge.losses import LOSS_IDS, gradient_check, loss_report

rng = np.random.default_rng(0)
frames, levels, d = 4, 2, 6
truth = rng.integers(0, 3, size=(frames, levels, d, d))

# a confident, mostly right prediction and a noisy one
sharp = np.eye(3)[truth] * 0.9 + 0.1 / 3
# keep probabilities away from 0, where finite differences of log p get inaccurate
noisy = rng.dirichlet(np.ones(3), size=(frames, levels, d, d)) * 0.94 + 0.02

for name, pred in (("perfect", np.eye(3)[truth].astype(float)), ("sharp", sharp), ("noisy", noisy)):
    rep = loss_report(pred, truth, real=[0.9, 0.8], fake=[0.2, 0.4])
    print(name.ljust(8), "  ".join(f"{k}={v:.4f}" for k, v in rep.to_dict().items()))

# constant sequences carry no temporal penalty
static = np.stack([noisy[0]] * frames)
print("\nconstant sequence:", {k: v for k, v in loss_report(static, truth).to_dict().items() if k in ("l_short", "l_long")})

inputs = {"preds": sharp[:1], "truths": truth[:1], "seq": noisy[:, :1, :3, :3], "fake": rng.uniform(0, 1, 4),
          "real": rng.uniform(0, 1, 4)}
print("\nmax relative gradient error (central differences):")
for lid in LOSS_IDS:
    print(f"  {lid:8s} {gradient_check(lid, inputs):.2e}")
