"""Synthetic matrices and the seven training-set samplers.

Run: python demos/01_synthetic_and_sampling.py
Writes PGM images of the 8-type matrix and of one mask per sampler into
``demo_out/``.
"""

from pathlib import Path

import numpy as np

from reprocf.matrix import training_ratio, validate_time_constraint
from reprocf.render import render_matrix, write_pgm
from reprocf.sampling import ALL_METHODS, SamplingSpec, sample_mask
from reprocf.synthgen import STANDARD_TYPES, SyntheticSpec, generate_synthetic

out = Path("demo_out")
out.mkdir(exist_ok=True)

# one matrix per number of subject types; rows are files in creation order
for n in STANDARD_TYPES:
    m = generate_synthetic(SyntheticSpec(n, 100, 100))
    print(f"{n:>2} types: shape {m.shape}, fraction of error cells {m.cells.mean():.3f}")
matrix = generate_synthetic(SyntheticSpec(8, 100, 100))
render_matrix(matrix, out / "synthetic8.pgm")

# every sampler hits the target ratio; all but Random Unreal keep file order
for method in ALL_METHODS:
    mask = sample_mask(SamplingSpec(method, 0.7, seed=1), matrix.shape)
    counts = mask.bits.sum(axis=0)
    print(f"{method.value:>16}: ratio {training_ratio(mask):.3f}, "
          f"prefix ok {validate_time_constraint(mask)}, per-subject cells {counts.min()}..{counts.max()}")
    write_pgm(out / f"mask_{method.value}.pgm", np.where(mask.bits, 255, 0).astype(np.uint8))
