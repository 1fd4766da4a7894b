"""Walk through each architectural block at toy size.

Run from the repository root:  python3 demos/blocks_tour.py
"""
import numpy as np

from dunp import blocks
from dunp.autodiff import Tensor

rng = np.random.default_rng(0)
x = Tensor(rng.uniform(0.0, 1.0, (1, 8, 8, 8)).astype(np.float32))


def show(name, module, out):
    print(f"{name:<18} in {tuple(x.shape)} -> out {tuple(out.shape)}  "
          f"params {module.param_count():,}")


print("attention blocks rescale, never reshape:")
se = blocks.SEBlock(8, rng)
show("SEBlock", se, se(x))
s = se.scale(x).data
print(f"  per-channel scales in ({s.min():.3f}, {s.max():.3f}), one per channel")

ca = blocks.ChannelAttention(8, rng)
show("ChannelAttention", ca, ca(x))

sa = blocks.SpatialAttention(rng)
show("SpatialAttention", sa, sa(x))
print(f"  spatial map shape {tuple(sa.scale(x).shape)}: one scale per pixel")

tam = blocks.TAM(8, 8, rng)
show("TAM", tam, tam(x))

print("\nfeature extractors:")
ag = blocks.AGResidual(8, 16, rng)
show("AGResidual", ag, ag(x))

mk = blocks.MKRC(8, 16, rng)
show("MKRC", mk, mk(x))
print(f"  parallel kernels: {mk.kernels}")

aspp = blocks.SEASPP(8, 16, rng)
show("SEASPP", aspp, aspp(x))
print(f"  branch dilations: {aspp.dilations}")

print("\ngated skip connection:")
skip = Tensor(rng.uniform(0.0, 1.0, (1, 8, 8, 8)).astype(np.float32))
gate_in = Tensor(rng.uniform(0.0, 1.0, (1, 16, 4, 4)).astype(np.float32))
gs = blocks.GatingSignal(16, 8, rng)
gate = gs(gate_in)
tag = blocks.TAG(8, 8, rng)
att = tag.attention_map(skip, gate).data
print(f"TAG alpha map shape {att.shape}, range ({att.min():.3f}, {att.max():.3f})")
print(f"gated skip = skip * alpha, shape {tuple(tag(skip, gate).shape)}")

print("\ndisabled variants degrade gracefully:")
off = blocks.TAM(8, 8, rng, enabled=False)
print(f"  TAM off: output is the input object: {off(x) is x}")
tag_off = blocks.TAG(8, 8, rng, enabled=False)
print(f"  TAG off: skip passes through: {tag_off(skip, gate) is skip}")
mk_off = blocks.MKRC(8, 16, rng, enabled=False)
print(f"  MKRC off: single-kernel fallback, kernels {mk_off.kernels}, "
      f"params {mk_off.param_count():,} vs {mk.param_count():,} enabled")
