"""Opinions, evidence and fusion on a small example.

Two sensors count how often a parking spot is free. Their counts become
opinions; cumulative fusion pools the counts, average fusion treats the
sensors as watching the same thing at the same time.
"""
import numpy as np

from sltrust import (
    BINARY,
    EvidenceRecord,
    average_fuse,
    cumulative_fuse,
    dirichlet_pdf,
    from_evidence,
    project,
    to_evidence,
)

a = from_evidence(EvidenceRecord(BINARY, [8, 2]))
b = from_evidence(EvidenceRecord(BINARY, [3, 3]))
print("sensor a:", a.belief.round(4), "u =", round(a.uncertainty, 4), "P =", project(a).round(4))
print("sensor b:", b.belief.round(4), "u =", round(b.uncertainty, 4), "P =", project(b).round(4))

cum = cumulative_fuse(a, b)
print("\ncumulative:", cum.belief.round(4), "u =", round(cum.uncertainty, 4))
print("  evidence behind it:", to_evidence(cum).evidence.round(6), "(= 8+3, 2+3)")

avg = average_fuse([a, b])
print("average:   ", avg.belief.round(4), "u =", round(avg.uncertainty, 4))
print("  evidence behind it:", to_evidence(avg).evidence.round(6), "(mean of the two)")

# the Dirichlet density behind an opinion, on a coarse grid
ev = to_evidence(cum)
grid = np.linspace(0.05, 0.95, 7)
print("\ndensity of p(free) after fusion:")
for p in grid:
    print(f"  p={p:.2f}  {dirichlet_pdf([p, 1 - p], ev):7.3f}")
