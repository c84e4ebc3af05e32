"""Fuzzy prompt generation: how a clean lesion mask turns into the blurred,
sometimes-absent ROI prompts used during training.

Run:  python demos/02_fuzzy_prompts.py
Writes a handful of PGM masks into demos/out/.
"""

import os

import numpy as np

from tlp.fpg import PromptConfig, build_kernel_set, generate_prompt, scale_step
from tlp.io import write_pgm

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)


def show(mask, title):
    art = "\n".join("".join("#" if v else "." for v in row) for row in mask.astype(int))
    print(f"\n{title}  (area {int(mask.sum())})\n{art}")


# A 24x24 mask with a single blob, like a small lesion label.
label = np.zeros((24, 24), np.float32)
yy, xx = np.mgrid[0:24, 0:24]
label[(yy - 12) ** 2 + (xx - 11) ** 2 <= 9] = 1.0
show(label, "input label")

# The kernel set: eight directional kernels plus the cross.
kernels = build_kernel_set()
print("\nkernel set:", kernels.shape[0], "kernels; cross kernel:")
print(kernels[8].astype(int))

# One dilation step in a single direction stretches the blob that way.
show(scale_step(label, kernels[0], "dilate"), "one dilation, north-west kernel")

# The full procedure: with q=0.5 half the prompts vanish; survivors wander.
for seed in range(4):
    cfg = PromptConfig(p=0.9, q=0.5, t=5, seed=seed)
    prompt = generate_prompt(label, cfg)
    show(prompt, f"prompt with seed {seed}" + ("  [dropped]" if prompt.sum() == 0 else ""))
    write_pgm(os.path.join(out_dir, f"prompt_{seed}.pgm"), prompt)

print(f"\nwrote PGM files to {out_dir}")
