"""
Which features does the model use?
==================================

Attention maps, integrated gradients and permutation importance on a
synthetic task where only the first 50 of 100 features matter.
"""

import numpy as np

from tabdl import training
from tabdl.explain import (
    attention_importance,
    correlation_report,
    ig_importance,
    integrated_gradients,
    model_permutation_importance,
)
from tabdl.models import FTTransformerConfig, build_model
from tabdl.synth import SyntheticTaskSpec, make_task
from tabdl.training import TrainConfig, train

ds = make_task(SyntheticTaskSpec(alpha=0.5, n_train=3000, n_val=500, n_test=500))
model = build_model(FTTransformerConfig(n_num=100, n_layers=1, d_token=32, n_heads=2, attention_dropout=0.0), seed=0)
train(model, ds, TrainConfig(lr=1e-3, patience=3, max_epochs=8), evaluate_test=False)

x, _, y = ds.get("val")
am = attention_importance(model, x)
ig = ig_importance(model, x[:200], steps=32)
pt = model_permutation_importance(model, "regression", x, None, y, repeats=2)

for vec in (am, ig, pt):
    s = vec.scores
    print(f"{vec.method}: informative mean {s[:50].mean():.4f}, noise mean {s[50:].mean():.4f}")
for a, b in ((am, ig), (am, pt), (ig, pt)):
    rep = correlation_report(a, b)
    print(f"Spearman({rep.methods[0]}, {rep.methods[1]}) = {rep.rho:.3f}")

# completeness: attributions add up to the change in output along the path
xs = x[:4]
attr = integrated_gradients(model, xs, steps=256)
delta = training.predict(model, xs)[:, 0] - training.predict(model, np.zeros_like(xs))[:, 0]
print("sum of attributions:", np.round(attr.sum(axis=1), 4))
print("f(x) - f(0):        ", np.round(delta, 4))
