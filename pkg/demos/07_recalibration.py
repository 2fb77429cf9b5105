"""Estimate the calibration of a flagged unit from the reference opinion."""
from sltrust.scenarios import recalibration_study

for fault in [(0.0, 1.0), (1.0, 0.75), (0.25, 0.5)]:
    mu, sigma, n = recalibration_study(0.15, runs=1000, seed=0, fault=fault)
    print(f"assumed (mu, sigma) = {fault} -> recalibrated ({mu:.3f}, {sigma:.3f}) from {n} flagged runs"
          "   [truth (0.25, 0.75)]")
