"""Number of latent factors on the 8-type matrix, and the learned factors.

Run: python demos/04_factor_study.py
"""

import numpy as np

from reprocf import experiment as ex
from reprocf.factorize import AlsConfig, fit_als
from reprocf.matrix import CellMask
from reprocf.sampling import Method

source = ex.DatasetSource.synthetic(8)
study = ex.hyper_study(source, Method.RFNU, "factors", [2, 3, 10, 50], alphas=(0.7,), repetitions=5, master_seed=2018)
for f in (2, 3, 10, 50):
    print(f"f={f:>2}: accuracy {ex.mean_accuracy([r for v, r in study if v == f]):.3f}")

# on the fully observed matrix three factors recover the 8 types and 3 blocks
matrix = source.load()
model = fit_als(matrix, CellMask.full(matrix.shape), AlsConfig(n_factors=3))
print("distinct subject vectors:", len(np.unique(np.round(model.subject_factors, 2), axis=0)))
print("distinct file vectors:   ", len(np.unique(np.round(model.file_factors, 2), axis=0)))
