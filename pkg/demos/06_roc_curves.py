"""ROC points for a miscalibrated roadside unit, one curve per fault size."""
import numpy as np

from sltrust.scenarios import roc_sweep

faults = [(1.0, 0.75), (0.8, 0.75), (0.25, 0.5)]
thetas = np.round(np.arange(0.0, 0.61, 0.05), 2)
res = roc_sweep(faults, thetas, runs=1000, seed=1)
for f in faults:
    rows = [r for r in res.rows if (r[0], r[1]) == f]
    print(f"mu_est={f[0]}, sigma_est={f[1]}")
    for _, _, t, fp, tp in rows:
        print(f"  theta {t:.2f}  FP {fp:.3f}  TP {tp:.3f}")
