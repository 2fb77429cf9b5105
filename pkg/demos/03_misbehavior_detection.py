"""Classify four reports, one of which disagrees, and revise its trust."""
import numpy as np

from sltrust import DetectParams, ReportedOpinion, TrustRecord, TrustStore, detect
from sltrust.opinion import BinomialOpinion
from sltrust.scenarios import HistogramSpec, histogram_opinion

rng = np.random.default_rng(5)
spec = HistogramSpec()
reports = [ReportedOpinion(name, histogram_opinion(rng.standard_normal(50), spec)) for name in ("A", "B", "C")]
reports.append(ReportedOpinion("D", histogram_opinion(rng.standard_normal(50) + 1.5, spec)))

store = TrustStore()
for r in reports:
    store.set(TrustRecord(r.agent_id, BinomialOpinion(0.7, 0.1, 0.2)))

res = detect(reports, store, theta=0.15, params=DetectParams(revise=True))
print("conflict with reference:")
for k, v in sorted(res.conflicts.items()):
    print(f"  {k}: {v:.4f}")
print("honest:     ", sorted(res.honest))
print("misbehaving:", sorted(res.misbehaving))
print(f"max conflict {res.max_conflict:.4f}, average {res.avg_conflict:.4f}")
for k, w in res.revision_weights.items():
    before, after = store.get(k).trust, res.trust.get(k).trust
    print(f"revise {k}: weight {w:.4f}, trust P {before.projected:.4f} -> {after.projected:.4f}")
