"""Paired significance testing between two trained models.

Trains the same architecture from two different seeds, scores both on
the same samples, and asks whether the per-sample DSC gap is
statistically significant.  Short desk-scale runs can land anywhere
near the 0.05 line; the point is that the verdict comes from the
paired test, not from eyeballing two means.

Run from the repository root:  python3 demos/significance.py
"""
from dunp.data import generate_synthetic
from dunp.errors import ZeroVarianceError
from dunp.model import DoubleUNetPlus, NetworkConfig
from dunp.stats import paired_t_test
from dunp.train import TrainConfig, evaluate, train

data = generate_synthetic(8, size=16, shape_kind="disk", seed=0, channels=1)
scores = {}
for seed in (1, 2):
    cfg = NetworkConfig(levels=2, base_channels=4, input_size=(16, 16),
                        in_channels=1, seed=seed)
    model = DoubleUNetPlus(cfg)
    train(model, data, data, TrainConfig(lr0=1e-3, batch_size=2,
                                         max_epochs=8, seed=seed))
    report = evaluate(model, data, batch_size=2)
    scores[seed] = {r.sample_id: r.values["dsc"] for r in report.per_sample}
    agg = report.aggregate()
    print(f"seed {seed}: mean DSC {agg['dsc']:.4f}")

ids = sorted(scores[1])
a = [scores[1][i] for i in ids]
b = [scores[2][i] for i in ids]
print(f"\npaired per-sample DSC over {len(ids)} samples:")
for i, sid in enumerate(ids):
    print(f"  {sid}: {a[i]:.4f} vs {b[i]:.4f}  (diff {a[i] - b[i]:+.4f})")

try:
    res = paired_t_test(a, b)
    verdict = "yes" if res.significant(0.05) else "no"
    print(f"\nt = {res.t:.4f}, df = {res.df}, p = {res.p:.4f}")
    print(f"significant at 0.05: {verdict}")
except ZeroVarianceError:
    print("\nidentical score columns: the t statistic is undefined "
          "(zero variance guard)")

print("\nfrozen sanity check, differences [1, 2, 3]:")
res = paired_t_test([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
print(f"t = {res.t:.4f} (analytic 2*sqrt(3) = 3.4641), p = {res.p:.4f}")
