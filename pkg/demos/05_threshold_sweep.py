"""Detection rates of a two-agent attack against the threshold."""
import numpy as np

from sltrust.scenarios import threshold_sweep

thetas = np.round(np.arange(0.10, 0.301, 0.02), 2)
res = threshold_sweep(thetas, runs=2000, seed=0)
print(f"{'theta':>6} {'both':>6} {'one':>6} {'wrong':>6} {'quiet':>6}")
for t, det, one, wrong, quiet in res.rows:
    print(f"{t:6.2f} {det:6.3f} {one:6.3f} {wrong:6.3f} {quiet:6.3f}")
best = res.rows[int(np.argmax(res.column("p_detected")))]
print(f"\nboth attackers caught most often at theta={best[0]:.2f} ({best[1]:.1%})")
