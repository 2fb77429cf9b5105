"""Trust bookkeeping for one agent over a few interactions."""
from sltrust import (
    AgingParams,
    BINARY,
    DiscountContext,
    EvidenceRecord,
    TrustRecord,
    accumulate_partially_dependent,
    age_trust,
    discount_opinion,
    from_evidence,
    reward_success,
)
from sltrust.opinion import BinomialOpinion

rec = TrustRecord("rsu-7")
print("start      ", rec.trust, "P =", round(rec.trust.projected, 4))
for i in range(5):
    rec = reward_success(rec, 1.0)
print("5 successes", rec.trust, "P =", round(rec.trust.projected, 4))

aging = AgingParams(P_sa=0.95)
for i in range(10):
    rec = age_trust(rec, aging)
print("10 idle    ", rec.trust, "P =", round(rec.trust.projected, 4))

# two partly overlapping sources of trust evidence
x = BinomialOpinion(0.6, 0.2, 0.2)
y = BinomialOpinion(0.5, 0.3, 0.2)
for lam in (0.0, 0.5, 1.0):
    f = accumulate_partially_dependent(x, y, lam, lam)
    print(f"lambda={lam:.1f}: u={f.u:.4f}  P={f.projected:.4f}")

# discounting a report by distance, age and source trust
op = from_evidence(EvidenceRecord(BINARY, [10, 6]))
ctx = DiscountContext(source_trust_probability=0.8, spatial_decay=0.99, temporal_decay=0.95,
                      distance=10, age=2, prior_weight=1.0)
d = discount_opinion(op, ctx)
print(f"\ndiscount factor {ctx.factor():.6f}: belief {op.belief.round(4)} -> {d.belief.round(4)}, "
      f"u {op.uncertainty:.4f} -> {d.uncertainty:.4f}")
