# Multi-head self-attentive pooling and the spiky/smooth penalty.
#
# Run:  python3 demos/02_attention_pooling.py

import numpy as np

from emobranch import Tensor
from emobranch.layers import AttentionConfig, attention_penalty, self_attentive_pool

rng = np.random.default_rng(1)

# a 12-frame sequence of 8-d hidden vectors with two masked slots
T, D = 12, 8
hidden = Tensor(rng.standard_normal((T, D)))
mask = np.ones(T)
mask[[3, 7]] = 0.0

w1 = Tensor(rng.standard_normal((6, D)) * 0.5)   # attention hidden size 6
w2 = Tensor(rng.standard_normal((5, 6)) * 0.5)   # five heads

pooled, attention = self_attentive_pool(hidden, mask, w1, w2)
print("pooled embedding:", pooled.data.shape, " (5 heads x 8 dims)")
print("attention rows sum to:", attention.data.sum(axis=1))
print("weight on masked slots:", attention.data[:, mask == 0.0].max())

# masked slots cannot leak into the embedding: overwrite them with garbage
hacked = hidden.data.copy()
hacked[3] = 1e9
pooled_b, _ = self_attentive_pool(Tensor(hacked), mask, w1, w2)
print("max output change after corrupting a masked slot:",
      np.abs(pooled.data - pooled_b.data).max())

# penalty: three heads are pushed toward one-hot rows, two toward uniform
cfg = AttentionConfig(n_heads=5, spiky_heads=3, smooth_heads=2,
                      penalty_weight=1.0, attn_hidden=6)
print("\npenalty at a random attention matrix:",
      float(attention_penalty(attention, mask, cfg).data))

ideal = np.zeros((5, T))
ideal[:3, 5] = 1.0                    # spiky heads: all weight on one frame
ideal[3:, mask == 1.0] = 1.0 / mask.sum()  # smooth heads: uniform over unmasked
print("penalty at the ideal spiky/smooth matrix:",
      float(attention_penalty(Tensor(ideal), mask, cfg).data))
