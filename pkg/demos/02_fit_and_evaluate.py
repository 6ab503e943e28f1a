"""Fit ALS on an RFNU training set and score the predicted test cells.

Run: python demos/02_fit_and_evaluate.py
"""

from pathlib import Path

from reprocf.evaluate import accuracy, confusion, dummy_predict, metrics
from reprocf.factorize import AlsConfig, fit_als
from reprocf.render import render_overlay
from reprocf.sampling import Method, SamplingSpec, sample_mask
from reprocf.synthgen import SyntheticSpec, generate_synthetic

matrix = generate_synthetic(SyntheticSpec(8, 100, 100))
train = sample_mask(SamplingSpec(Method.RFNU, 0.9, seed=3), matrix.shape)
test = train.complement()

model = fit_als(matrix, train, AlsConfig(n_factors=50, max_iterations=5, seed=3))
pred = model.predict_binary()
print("objective per round:", " ".join(f"{v:.2f}" for v in model.objective_trace))
print(f"ALS accuracy   {accuracy(matrix, pred, test):.3f}")
print(f"dummy accuracy {accuracy(matrix, dummy_predict(matrix, train), test):.3f}")
print(metrics(confusion(matrix, pred, test)))

# bias terms hurt on this kind of matrix
biased = fit_als(matrix, train, AlsConfig(use_bias=True, seed=3))
print(f"with bias      {accuracy(matrix, biased.predict_binary(), test):.3f}")

Path("demo_out").mkdir(exist_ok=True)
render_overlay(matrix, train, pred, "demo_out/overlay_rfnu.ppm")
