"""Subjective-logic opinions over a finite domain.

Opinions are stored as numpy arrays aligned with the domain's label order.
The array kernels (names starting with ``k_``) broadcast over leading axes so
batch code and the object API share one implementation of every formula.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DogmaticOpinion,
    DogmaticOperand,
    DomainMismatch,
    FusionDomainMismatch,
    InvalidOpinion,
    InvalidProbabilityVector,
    VacuousOperand,
)

TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise InvalidOpinion("domain needs at least two outcomes")
        if len(set(labels)) != len(labels):
            raise InvalidOpinion("domain labels must be unique")

    @property
    def W(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(label)

    @classmethod
    def of_size(cls, n: int, prefix: str = "x") -> "Domain":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))


BINARY = Domain(("x", "not_x"))


def _arr(v) -> np.ndarray:
    a = np.array(v, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------- kernels

def k_from_evidence(r: np.ndarray, W: int):
    """Evidence -> (belief, uncertainty)."""
    s = W + r.sum(axis=-1)
    return r / s[..., None], W / s


def k_to_evidence(b: np.ndarray, u: np.ndarray, W: int) -> np.ndarray:
    return W * b / np.asarray(u)[..., None]


def k_project(b, u, a):
    return b + a * np.asarray(u)[..., None]


def k_cumulative(bA, uA, aA, bB, uB, aB):
    uA = np.asarray(uA, dtype=float)
    uB = np.asarray(uB, dtype=float)
    den = uA + uB - uA * uB
    b = (bA * uB[..., None] + bB * uA[..., None]) / den[..., None]
    u = uA * uB / den
    den_a = uA + uB - 2.0 * uA * uB
    num_a = aA * uB[..., None] + aB * uA[..., None] - (aA + aB) * (uA * uB)[..., None]
    same = (uA == uB)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(same, 0.5 * (aA + aB), num_a / np.where(same[..., 0], 1.0, den_a)[..., None])
    return b, u, a


def k_average_mean(bs: np.ndarray, us: np.ndarray, as_: np.ndarray):
    """n-ary average fusion as the mean of evidence vectors.

    ``bs`` has shape (..., n, W), ``us`` (..., n), ``as_`` (..., n, W).
    """
    W = bs.shape[-1]
    r = k_to_evidence(bs, us, W).mean(axis=-2)
    b, u = k_from_evidence(r, W)
    return b, u, as_.mean(axis=-2)


def chain_weights(n: int) -> np.ndarray:
    """Evidence weights of a left fold of pairwise average fusion."""
    w = 0.5 ** (n - np.arange(n, dtype=float))
    w[0] = w[1]
    return w


# ---------------------------------------------------------------- types

@dataclass(frozen=True, eq=False)
class Opinion:
    domain: Domain
    belief: np.ndarray
    uncertainty: float
    base_rate: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "belief", _arr(self.belief))
        object.__setattr__(self, "base_rate", _arr(self.base_rate))
        object.__setattr__(self, "uncertainty", float(self.uncertainty))

    @classmethod
    def create(cls, domain, belief, uncertainty, base_rate=None) -> "Opinion":
        if not isinstance(domain, Domain):
            domain = Domain(tuple(domain))
        if base_rate is None:
            base_rate = np.full(domain.W, 1.0 / domain.W)
        return validate(cls(domain, belief, uncertainty, base_rate))

    @classmethod
    def vacuous(cls, domain: Domain, base_rate=None) -> "Opinion":
        return cls.create(domain, np.zeros(domain.W), 1.0, base_rate)

    @property
    def W(self) -> int:
        return self.domain.W

    def belief_of(self, label) -> float:
        return float(self.belief[self.domain.index(label)])

    def allclose(self, other: "Opinion", tol: float = TOL) -> bool:
        return (
            self.domain == other.domain
            and abs(self.uncertainty - other.uncertainty) <= tol
            and np.allclose(self.belief, other.belief, rtol=0, atol=tol)
            and np.allclose(self.base_rate, other.base_rate, rtol=0, atol=tol)
        )

    def to_json(self) -> dict:
        return {
            "labels": list(self.domain.labels),
            "belief": [float(x) for x in self.belief],
            "uncertainty": float(self.uncertainty),
            "base_rate": [float(x) for x in self.base_rate],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Opinion":
        try:
            labels = obj["labels"]
            belief = obj["belief"]
            u = obj["uncertainty"]
            a = obj["base_rate"]
        except (KeyError, TypeError) as exc:
            raise InvalidOpinion(f"missing field {exc}") from None
        if len(belief) != len(labels):
            raise InvalidOpinion("field 'belief' length differs from 'labels'")
        if len(a) != len(labels):
            raise InvalidOpinion("field 'base_rate' length differs from 'labels'")
        return validate(cls(Domain(tuple(labels)), belief, u, a))

    def __repr__(self):
        b = ", ".join(f"{x:.4g}" for x in self.belief)
        return f"Opinion(b=[{b}], u={self.uncertainty:.4g})"


@dataclass(frozen=True)
class BinomialOpinion:
    b: float
    d: float
    u: float
    a: float = 0.5

    def to_opinion(self, domain: Domain = BINARY) -> Opinion:
        return Opinion(domain, [self.b, self.d], self.u, [self.a, 1.0 - self.a])

    @classmethod
    def from_opinion(cls, op: Opinion) -> "BinomialOpinion":
        if op.W != 2:
            raise DomainMismatch("binomial opinion needs a two-outcome domain")
        return cls(float(op.belief[0]), float(op.belief[1]), op.uncertainty, float(op.base_rate[0]))

    def validate(self) -> "BinomialOpinion":
        validate(self.to_opinion())
        return self

    @property
    def projected(self) -> float:
        return self.b + self.a * self.u

    @classmethod
    def vacuous(cls, a: float = 0.5) -> "BinomialOpinion":
        return cls(0.0, 0.0, 1.0, a)


@dataclass(frozen=True, eq=False)
class EvidenceRecord:
    domain: Domain
    evidence: np.ndarray
    base_rate: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "evidence", _arr(self.evidence))
        if self.base_rate is None:
            object.__setattr__(self, "base_rate", np.full(self.domain.W, 1.0 / self.domain.W))
        object.__setattr__(self, "base_rate", _arr(self.base_rate))
        if self.evidence.shape != (self.domain.W,):
            raise InvalidOpinion("evidence length differs from domain")
        if np.any(self.evidence < 0) or not np.all(np.isfinite(self.evidence)):
            raise InvalidOpinion("evidence must be finite and non-negative")

    def __add__(self, other: "EvidenceRecord") -> "EvidenceRecord":
        if self.domain != other.domain:
            raise DomainMismatch("evidence records on different domains")
        return EvidenceRecord(self.domain, self.evidence + other.evidence, 0.5 * (self.base_rate + other.base_rate))

    def scaled(self, k: float) -> "EvidenceRecord":
        return EvidenceRecord(self.domain, self.evidence * k, self.base_rate)


# ---------------------------------------------------------------- operations

def validate(op: Opinion) -> Opinion:
    W = op.domain.W
    b, a, u = op.belief, op.base_rate, op.uncertainty
    if b.shape != (W,):
        raise InvalidOpinion(f"belief has {b.size} entries, domain has {W}")
    if a.shape != (W,):
        raise InvalidOpinion(f"base_rate has {a.size} entries, domain has {W}")
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a)) and np.isfinite(u)):
        raise InvalidOpinion("non-finite component")
    for name, v in (("belief", b), ("base_rate", a), ("uncertainty", np.array([u]))):
        if np.any(v < -TOL) or np.any(v > 1 + TOL):
            raise InvalidOpinion(f"{name} outside [0, 1]")
    if abs(b.sum() + u - 1.0) > TOL:
        raise InvalidOpinion(f"belief plus uncertainty sums to {b.sum() + u:.12g}, not 1")
    if abs(a.sum() - 1.0) > TOL:
        raise InvalidOpinion(f"base_rate sums to {a.sum():.12g}, not 1")
    return op


def from_evidence(ev: EvidenceRecord) -> Opinion:
    b, u = k_from_evidence(ev.evidence, ev.domain.W)
    return Opinion(ev.domain, b, float(u), ev.base_rate)


def to_evidence(op: Opinion) -> EvidenceRecord:
    if op.uncertainty <= 0.0:
        raise DogmaticOpinion("evidence mapping undefined for u = 0")
    return EvidenceRecord(op.domain, k_to_evidence(op.belief, op.uncertainty, op.W), op.base_rate)


def project(op: Opinion) -> np.ndarray:
    return k_project(op.belief, op.uncertainty, op.base_rate)


def dirichlet_pdf(p, ev: EvidenceRecord) -> float:
    p = np.asarray(p, dtype=float)
    if p.shape != (ev.domain.W,):
        raise DomainMismatch("probability vector length differs from domain")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > TOL:
        raise InvalidProbabilityVector("p must be strictly positive and sum to 1")
    alpha = ev.evidence + ev.base_rate * ev.domain.W
    if np.any(alpha <= 0):
        raise InvalidProbabilityVector("Dirichlet parameters must be positive")
    return float(stats.dirichlet.pdf(p / p.sum(), alpha))


def _check_pair(a: Opinion, b: Opinion):
    if a.domain != b.domain:
        raise FusionDomainMismatch(f"{a.domain.labels} vs {b.domain.labels}")


def cumulative_fuse(a: Opinion, b: Opinion) -> Opinion:
    _check_pair(a, b)
    for op in (a, b):
        if op.uncertainty <= 0.0:
            raise DogmaticOperand("cumulative fusion needs u > 0")
        if op.uncertainty >= 1.0:
            raise VacuousOperand("cumulative fusion needs u < 1")
    bb, u, aa = k_cumulative(a.belief, a.uncertainty, a.base_rate, b.belief, b.uncertainty, b.base_rate)
    return Opinion(a.domain, bb, float(u), aa)


def _stack(ops: Sequence[Opinion]):
    if len(ops) < 2:
        raise ValueError("average fusion needs at least two operands")
    dom = ops[0].domain
    for op in ops[1:]:
        if op.domain != dom:
            raise FusionDomainMismatch(f"{dom.labels} vs {op.domain.labels}")
    for op in ops:
        if op.uncertainty <= 0.0:
            raise DogmaticOperand("average fusion needs u != 0")
    bs = np.stack([op.belief for op in ops])
    us = np.array([op.uncertainty for op in ops])
    as_ = np.stack([op.base_rate for op in ops])
    return dom, bs, us, as_


def average_fuse(ops: Sequence[Opinion]) -> Opinion:
    """Permutation-invariant n-ary average fusion (mean of evidence)."""
    dom, bs, us, as_ = _stack(list(ops))
    b, u, a = k_average_mean(bs, us, as_)
    return Opinion(dom, b, float(u), a)


def chained_average_fuse(ops: Sequence[Opinion]) -> Opinion:
    """Left fold of the binary average-fusion operator, in the given order."""
    ops = list(ops)
    acc = average_fuse(ops[:2])
    for op in ops[2:]:
        acc = average_fuse([acc, op])
    return acc


def fuse_many(ops: Iterable[Opinion], mode: str = "mean") -> Opinion:
    ops = list(ops)
    if len(ops) == 1:
        return ops[0]
    if mode == "mean":
        return average_fuse(ops)
    if mode == "chain":
        return chained_average_fuse(ops)
    raise ValueError(f"unknown fusion mode {mode!r}")
