"""Soft-vote member scores and measure recall on the L2 pool.

The ensemble score of a sample is the plain mean of its members' lens
probabilities; members without a score are left out of the mean.  L2 contains
lenses only, so recall is the fraction of its 138 members above 0.5.
"""
import numpy as np

from lensfind.ensemble import EnsembleInput, ensemble_predict
from lensfind.harness.l2 import infer_l2

rng = np.random.default_rng(0)
members = {name: rng.beta(5, 2, size=138) for name in ("vit", "deit", "mlp_mixer")}
members["cait"] = None  # a member that failed to train

inp = EnsembleInput(tuple(f"L2#{i}" for i in range(138)), members)
print(f"{inp.n} members contribute to the ensemble")
members["ensemble"] = ensemble_predict(inp)

for result in infer_l2({k: v for k, v in members.items() if v is not None}):
    print(f"{result.model:10s} {result.detections:3d}/138 = {result.recall_pct:.2f}%")
