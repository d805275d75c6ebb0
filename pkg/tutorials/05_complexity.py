"""Parameter and multiply-accumulate counts for the backbones.

Full-size counts are taken on the meta device, so nothing is downloaded and
no weights are allocated.  FLOPs are reported as 2 x MACs.
"""
from lensfind.backbones import MODEL_NAMES
from lensfind.harness.reports import complexity_report

for row in complexity_report(MODEL_NAMES):
    print(f"{row['model']:14s} {row['params'] / 1e6:7.1f} M params  {row['macs'] / 1e9:6.2f} GMACs")

# The MLP-Mixer cost is linear in the token count.
for side in (32, 48, 64):
    (row,) = complexity_report(["mlp_mixer"], side, "toy")
    print(f"toy mlp_mixer at {side}px: {row['macs']:,} MACs")
