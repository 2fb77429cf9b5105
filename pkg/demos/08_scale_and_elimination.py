"""Per-report rates on a synthetic population, then how fast agents get banned."""
import numpy as np

from sltrust.scenarios import elimination_model, elimination_monte_carlo, large_scale_synthetic

errors = [0.0, 0.2, 0.4]
thetas = [0.04, 0.08]
res = large_scale_synthetic(errors, thetas, reports_per_cell=5000, seed=0)
print("error  theta   p_tp   p_fp")
for e, t, tp, fp in res.rows:
    print(f"{e:5.2f}  {t:5.2f}  {tp:.3f}  {fp:.3f}")

# without corruption nobody deviates, so take the noisiest cell at the strict threshold
tp = float(res.column("p_tp")[-1])
fp = float(res.column("p_fp")[-1])
p_dm, p_wb = elimination_model(tp, fp, batch_size=3, n_batches=15)
print(f"\nwith p_tp={tp:.3f}, p_fp={fp:.3f}: banned after 15 batches of 3 -> "
      f"misbehaving {p_dm:.3f}, honest {p_wb:.4f}")
est, se = elimination_monte_carlo(tp, 3, 15, trials=100_000)
print(f"simulated misbehaving ban rate {est:.3f} +/- {se:.3f}")
print("rates at p_tp=0.45, p_fp=0.10:", np.round(elimination_model(0.45, 0.10), 4))
