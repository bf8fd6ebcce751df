"""
Anatomy of an FT-Transformer
============================

Parameter budget of the default configuration and the CLS attention map of
a small model.
"""

import numpy as np

from tabdl.models import FTTransformerConfig, build_model, count_parameters, param_groups

# the default configuration for 100 numerical features and a scalar output
cfg = FTTransformerConfig.default(n_num=100)
print("default FT-Transformer parameters:", count_parameters(cfg))

# parameters excluded from weight decay: tokenizer, norms and biases
model = build_model(cfg, dtype=np.float32)
excluded = sum(p.size for _, p, eligible in param_groups(model) if not eligible)
print(f"excluded from weight decay: {excluded} ({excluded / model.n_parameters():.1%})")

# a small model: every token is [CLS] + one token per feature
small = build_model(FTTransformerConfig(n_num=5, cardinalities=[3], n_layers=2, d_token=16, n_heads=4), seed=0)
small.eval()
rng = np.random.default_rng(0)
x_num = rng.standard_normal((8, 5))
x_cat = rng.integers(0, 3, (8, 1))
out = small(x_num, x_cat, record_attention=True)
print("output shape:", out.shape)

# attention of [CLS] over its 7 tokens, averaged over samples, layers and heads
maps = small.attention_maps
print("attention maps (n, layers, heads, tokens):", maps.shape)
print("mean CLS attention:", np.round(maps.mean(axis=(0, 1, 2)), 3))
