"""Per-agent trust opinions: rewards, partial dependence, aging, discounting."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, replace
from typing import Dict, Iterator, Optional

import numpy as np

from .errors import ConfigError, DogmaticOpinion
from .opinion import (
    BinomialOpinion,
    Domain,
    EvidenceRecord,
    Opinion,
    average_fuse,
    cumulative_fuse,
    from_evidence,
    to_evidence,
)

TRUST_DOMAIN = Domain(("trustworthy", "untrustworthy"))


@dataclass(frozen=True)
class TrustRecord:
    agent_id: str
    trust: BinomialOpinion = BinomialOpinion.vacuous()
    dependence_factor: float = 0.0
    revision_reward: int = 5

    def __post_init__(self):
        self.trust.validate()
        if not 0.0 <= self.dependence_factor <= 1.0:
            raise ValueError("dependence factor must lie in [0, 1]")
        if self.revision_reward < 1:
            raise ValueError("revision reward must be a positive integer")

    @property
    def projected(self) -> float:
        return self.trust.projected

    def to_json(self) -> dict:
        t = self.trust
        return {"agent_id": self.agent_id, "b": t.b, "d": t.d, "u": t.u, "a": t.a,
                "lambda": self.dependence_factor, "w_tr": self.revision_reward}

    @classmethod
    def from_json(cls, obj: dict) -> "TrustRecord":
        try:
            t = BinomialOpinion(float(obj["b"]), float(obj["d"]), float(obj["u"]), float(obj.get("a", 0.5)))
            return cls(str(obj["agent_id"]), t, float(obj.get("lambda", 0.0)), int(obj.get("w_tr", 5)))
        except KeyError as exc:
            raise ConfigError(f"trust record missing field {exc}") from None


@dataclass(frozen=True)
class DiscountContext:
    source_trust_probability: float = 1.0
    spatial_decay: float = 1.0
    temporal_decay: float = 1.0
    distance: float = 0.0
    age: float = 0.0
    prior_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.source_trust_probability <= 1.0:
            raise ValueError("source trust probability must lie in [0, 1]")
        for name in ("spatial_decay", "temporal_decay", "prior_weight"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.distance < 0 or self.age < 0:
            raise ValueError("distance and age must be non-negative")

    def factor(self) -> float:
        return (self.source_trust_probability
                * self.spatial_decay ** self.distance
                * self.temporal_decay ** self.age
                * self.prior_weight)


@dataclass(frozen=True)
class AgingParams:
    P_sa: float = 0.999

    def __post_init__(self):
        if not 0.0 < self.P_sa <= 1.0:
            raise ValueError("P_sa must lie in (0, 1]")


def _trust_evidence(t: BinomialOpinion) -> EvidenceRecord:
    return to_evidence(t.to_opinion(TRUST_DOMAIN))


def reward_success(tr: TrustRecord, weight: float) -> TrustRecord:
    if weight < 0:
        raise ValueError("reward weight must be non-negative")
    if tr.trust.u <= 0.0:
        raise DogmaticOpinion("dogmatic trust cannot receive evidence")
    if weight == 0:
        return tr
    ev = _trust_evidence(tr.trust)
    ev = EvidenceRecord(ev.domain, ev.evidence + np.array([weight, 0.0]), ev.base_rate)
    return replace(tr, trust=BinomialOpinion.from_opinion(from_evidence(ev)))


def split_dependence(ev: EvidenceRecord, lam: float):
    """Return (independent, dependent) parts of an evidence record."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return ev.scaled(1.0 - lam), ev.scaled(lam)


def accumulate_partially_dependent(a: BinomialOpinion, b: BinomialOpinion,
                                   lam_a: float, lam_b: float) -> BinomialOpinion:
    ind_a, dep_a = split_dependence(to_evidence(a.to_opinion()), lam_a)
    ind_b, dep_b = split_dependence(to_evidence(b.to_opinion()), lam_b)
    parts = []
    if dep_a.evidence.sum() > 0 or dep_b.evidence.sum() > 0:
        parts.append(average_fuse([from_evidence(dep_a), from_evidence(dep_b)]))
    for ind in (ind_a, ind_b):
        if ind.evidence.sum() > 0:
            parts.append(from_evidence(ind))
    if not parts:
        # zero-evidence parts are neutral, so only the base rate survives
        return BinomialOpinion(0.0, 0.0, 1.0, 0.5 * (a.a + b.a))
    acc = parts[0]
    for p in parts[1:]:
        acc = cumulative_fuse(acc, p)
    return BinomialOpinion.from_opinion(acc)


def age_trust(tr: TrustRecord, params: AgingParams) -> TrustRecord:
    t = tr.trust
    b, d = params.P_sa * t.b, params.P_sa * t.d
    return replace(tr, trust=BinomialOpinion(b, d, 1.0 - b - d, t.a))


def discount_opinion(op: Opinion, ctx: DiscountContext) -> Opinion:
    f = ctx.factor()
    b = op.belief * f
    return Opinion(op.domain, b, 1.0 - float(b.sum()), op.base_rate)


class TrustStore:
    """Mutable map of agent id to trust record, single writer."""

    def __init__(self, records: Optional[Dict[str, TrustRecord]] = None, default: Optional[TrustRecord] = None):
        self._records: Dict[str, TrustRecord] = dict(records or {})
        self._default = default

    def get(self, agent_id) -> TrustRecord:
        agent_id = str(agent_id)
        rec = self._records.get(agent_id)
        if rec is None:
            if self._default is not None:
                return replace(self._default, agent_id=agent_id)
            return TrustRecord(agent_id)
        return rec

    def set(self, rec: TrustRecord):
        self._records[rec.agent_id] = rec

    def __contains__(self, agent_id):
        return str(agent_id) in self._records

    def __iter__(self) -> Iterator[TrustRecord]:
        return iter(sorted(self._records.values(), key=lambda r: r.agent_id))

    def __len__(self):
        return len(self._records)

    def copy(self) -> "TrustStore":
        return TrustStore(dict(self._records), self._default)

    def snapshot(self) -> list:
        return [r.to_json() for r in self]

    @classmethod
    def from_snapshot(cls, rows) -> "TrustStore":
        return cls({r.agent_id: r for r in (TrustRecord.from_json(x) for x in rows)})

    def save_jsonl(self, path):
        text = "".join(json.dumps(r) + "\n" for r in self.snapshot())
        atomic_write(path, text)

    @classmethod
    def load_jsonl(cls, path) -> "TrustStore":
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
        return cls.from_snapshot(rows)


def atomic_write(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
