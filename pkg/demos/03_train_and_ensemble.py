"""
Training, early stopping and ensembles
======================================

Train a few seeds of each family on a toy regression task, then average
predictions within groups.
"""

import numpy as np

from tabdl.data import TabularDataset, rmse
from tabdl.models import FTTransformerConfig, MLPConfig, ResNetConfig
from tabdl.training import TrainConfig, ensemble_predict, make_groups, run_seeds

rng = np.random.default_rng(0)
x = {s: rng.standard_normal((n, 8)) for s, n in (("train", 800), ("val", 200), ("test", 200))}
w = rng.standard_normal(8)
y = {s: np.sin(v @ w) + 0.3 * v[:, 0] * v[:, 1] for s, v in x.items()}
ds = TabularDataset("regression", x, {}, y)

configs = {
    "mlp": MLPConfig(n_num=8, d_layers=[64, 64]),
    "resnet": ResNetConfig(n_num=8, n_blocks=1, d_main=32),
    "ft_transformer": FTTransformerConfig(n_num=8, n_layers=1, d_token=16, n_heads=2),
}
cfg = TrainConfig(lr=1e-3, batch_size=64, patience=8, max_epochs=30)

for name, mcfg in configs.items():
    runs = run_seeds(mcfg, ds, cfg, n_seeds=6)
    s = runs.summary()
    print(f"{name:>15}: test RMSE {s['mean']:.3f} ± {s['std']:.3f}, "
          f"stopped after {[len(r.epochs) for r in runs.reports]} epochs")

    # two ensembles of three; the averaged prediction is never worse than the average member
    x_test, _, y_test = ds.get("test")
    for group in make_groups(runs.models, n_groups=2):
        print(f"{'':>17}ensemble of {len(group)}: {rmse(ensemble_predict(group, 'regression', x_test), y_test):.3f}")
