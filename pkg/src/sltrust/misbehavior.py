"""Conflict-clustering misbehavior detection and trust revision.

The object API (``detect`` and friends) works on a handful of reports.
``batch_detect`` runs the same decision rules over many independent runs at
once and is what the Monte-Carlo experiments use.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateConflict, DomainMismatch, InsufficientReports
from .opinion import (
    BinomialOpinion,
    Opinion,
    chain_weights,
    fuse_many,
    k_from_evidence,
    k_project,
    k_to_evidence,
    project,
)
from .trust import DiscountContext, TrustStore, discount_opinion


@dataclass(frozen=True)
class ReportedOpinion:
    agent_id: str
    opinion: Opinion
    context: DiscountContext = field(default_factory=DiscountContext)

    def discounted(self, trust: Optional[TrustStore] = None) -> Opinion:
        ctx = self.context
        if trust is not None:
            ctx = replace(ctx, source_trust_probability=trust.get(self.agent_id).projected)
        if ctx.factor() == 1.0:
            return self.opinion
        return discount_opinion(self.opinion, ctx)

    def to_json(self) -> dict:
        c = self.context
        return {"agent": self.agent_id, "opinion": self.opinion.to_json(),
                "context": {"p_src": c.source_trust_probability, "T_g": c.spatial_decay,
                            "T_t": c.temporal_decay, "distance": c.distance, "age": c.age,
                            "p_0": c.prior_weight}}

    @classmethod
    def from_json(cls, obj: dict) -> "ReportedOpinion":
        c = obj.get("context") or {}
        ctx = DiscountContext(c.get("p_src", 1.0), c.get("T_g", 1.0), c.get("T_t", 1.0),
                              c.get("distance", 0.0), c.get("age", 0.0), c.get("p_0", 1.0))
        return cls(str(obj["agent"]), Opinion.from_json(obj["opinion"]), ctx)


@dataclass
class ConflictGraph:
    vertices: tuple
    edges: list            # retained (a, b, dc), ascending in dc
    threshold: float
    all_pairs: list = field(default_factory=list)

    def adjacency(self) -> Dict[str, set]:
        adj = {v: set() for v in self.vertices}
        for a, b, _ in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass
class ClassificationResult:
    reference: Opinion
    candidate_references: List[Opinion]
    honest: frozenset
    misbehaving: frozenset
    revision_weights: Dict[str, float]
    max_conflict: float
    avg_conflict: float
    conflicts: Dict[str, float] = field(default_factory=dict)
    reference_component: tuple = ()
    degenerate: bool = False
    trust: Optional[TrustStore] = None

    def to_json(self) -> dict:
        return {
            "reference": self.reference.to_json(),
            "candidate_references": [c.to_json() for c in self.candidate_references],
            "reference_component": list(self.reference_component),
            "honest": sorted(self.honest),
            "misbehaving": sorted(self.misbehaving),
            "conflicts": {k: self.conflicts[k] for k in sorted(self.conflicts)},
            "revision_weights": {k: self.revision_weights[k] for k in sorted(self.revision_weights)},
            "max_conflict": self.max_conflict,
            "avg_conflict": self.avg_conflict,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class DetectParams:
    """Knobs of the detection pipeline.

    fusion: how a component without a unique hub is fused, ``"mean"`` for the
    permutation-invariant mean of evidence, ``"chain"`` for a left fold in
    report order.
    priority: per-agent credibility used only to break ties between competing
    multi-agent hypotheses (word against word).
    """
    fusion: str = "mean"
    priority: Optional[Mapping[str, float]] = None
    revise: bool = False
    discount_by_trust: bool = True


# ---------------------------------------------------------------- steps

def degree_of_conflict(a: Opinion, b: Opinion) -> float:
    if a.domain != b.domain:
        raise DomainMismatch(f"{a.domain.labels} vs {b.domain.labels}")
    d = 0.5 * np.abs(project(a) - project(b)).sum() * (1 - a.uncertainty) * (1 - b.uncertainty)
    return float(d)


def build_conflict_graph(reports: Sequence[ReportedOpinion], theta: float) -> ConflictGraph:
    """Pairwise conflicts of the given (already discounted) opinions."""
    if len(reports) < 2:
        raise InsufficientReports(f"{len(reports)} report(s); need at least 2")
    dom = reports[0].opinion.domain
    for r in reports:
        if r.opinion.domain != dom:
            raise DomainMismatch("reports on different domains")
    pairs = []
    for x, y in itertools.combinations(reports, 2):
        pairs.append((x.agent_id, y.agent_id, degree_of_conflict(x.opinion, y.opinion)))
    pairs.sort(key=lambda t: t[2])
    kept = [p for p in pairs if p[2] <= theta]
    return ConflictGraph(tuple(r.agent_id for r in reports), kept, theta, pairs)


def _components(adj: np.ndarray) -> List[list]:
    """Connected components as vertex-index lists, ordered by first vertex."""
    _, labels = connected_components(adj, directed=False)
    comps: Dict[int, list] = {}
    for i, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(i)
    return sorted(comps.values(), key=lambda c: c[0])


def dominant_components(g: ConflictGraph) -> List[tuple]:
    """All connected components of maximal size, in vertex order."""
    order = {v: i for i, v in enumerate(g.vertices)}
    adj = np.zeros((len(g.vertices),) * 2, dtype=bool)
    for a, b, _ in g.edges:
        adj[order[a], order[b]] = adj[order[b], order[a]] = True
    comps = _components(adj)
    m = max(len(c) for c in comps)
    return [tuple(g.vertices[i] for i in c) for c in comps if len(c) == m]


def hubs(component: Sequence[str], g: ConflictGraph) -> list:
    adj = g.adjacency()
    return [v for v in component if all(w in adj[v] for w in component if w != v)]


def reference_opinion(component: Sequence[str], reports: Mapping[str, Opinion],
                      g: Optional[ConflictGraph] = None, fusion: str = "mean") -> Opinion:
    """Opinion of a unique hub of the component, otherwise the fused component."""
    component = list(component)
    if len(component) == 1:
        return reports[component[0]]
    if g is not None:
        h = hubs(component, g)
        if len(h) == 1:
            return reports[h[0]]
    return fuse_many([reports[v] for v in component], fusion)


def classify(reports: Mapping[str, Opinion], reference: Opinion, theta: float):
    conflicts = {k: degree_of_conflict(op, reference) for k, op in reports.items()}
    honest = frozenset(k for k, d in conflicts.items() if d <= theta)
    return honest, frozenset(conflicts) - honest, conflicts


@dataclass
class Candidate:
    reference: Opinion
    honest: frozenset
    conflicts: Dict[str, float]
    component: tuple = ()

    @property
    def avg_honest_conflict(self) -> float:
        if not self.honest:
            return 0.0
        return sum(self.conflicts[k] for k in self.honest) / len(self.honest)


def select_reference(candidates: Sequence[Candidate], priority: Optional[Mapping[str, float]] = None) -> int:
    """Index of the most parsimonious candidate.

    Order: most honest agents; between multi-agent hypotheses, highest summed
    priority; lowest average conflict among honest members; lowest agent id.
    """
    if not candidates:
        raise ValueError("no candidate references")
    best = max(len(c.honest) for c in candidates)
    idx = [i for i, c in enumerate(candidates) if len(c.honest) == best]
    if priority and len(idx) > 1 and all(len(candidates[i].component) >= 2 for i in idx):
        score = {i: sum(priority.get(v, 0.0) for v in candidates[i].component) for i in idx}
        top = max(score.values())
        idx = [i for i in idx if score[i] == top]
    if len(idx) > 1:
        low = min(candidates[i].avg_honest_conflict for i in idx)
        idx = [i for i in idx if candidates[i].avg_honest_conflict == low]
    return min(idx, key=lambda i: min(candidates[i].component, default=""))


def revision_weights(conflicts: Mapping[str, float], misbehaving) -> tuple:
    vals = np.array(list(conflicts.values()), dtype=float)
    mc = float(vals.max())
    ac = float(vals.mean())
    if not misbehaving:
        return {}, mc, ac
    if mc - ac <= 0.0:
        raise DegenerateConflict(f"max conflict equals average conflict ({mc:.6g})")
    rw = {k: mc * (conflicts[k] - ac) / (mc - ac) for k in misbehaving}
    return {k: min(max(v, 0.0), mc) for k, v in rw.items()}, mc, ac


def revise_opinion(t: BinomialOpinion, rw: float) -> BinomialOpinion:
    b = (1 - rw) * t.b
    u = (1 - rw) * t.u
    return BinomialOpinion(b, 1.0 - b - u, u, t.a)


def revise_trust(conflicts: Mapping[str, float], misbehaving, trust_store: TrustStore) -> TrustStore:
    weights, _, _ = revision_weights(conflicts, misbehaving)
    out = trust_store.copy()
    for k, rw in weights.items():
        rec = out.get(k)
        out.set(replace(rec, trust=revise_opinion(rec.trust, rw)))
    return out


def detect(reports: Sequence[ReportedOpinion], trust_store: Optional[TrustStore] = None,
           theta: float = 0.15, params: DetectParams = DetectParams()) -> ClassificationResult:
    if len(reports) < 2:
        raise InsufficientReports(f"{len(reports)} report(s); need at least 2")
    use_trust = trust_store if params.discount_by_trust else None
    disc = [ReportedOpinion(r.agent_id, r.discounted(use_trust), r.context) for r in reports]
    ops = {r.agent_id: r.opinion for r in disc}
    g = build_conflict_graph(disc, theta)
    cands = []
    for comp in dominant_components(g):
        ref = reference_opinion(comp, ops, g, params.fusion)
        honest, _, conf = classify(ops, ref, theta)
        cands.append(Candidate(ref, honest, conf, comp))
    k = select_reference(cands, params.priority)
    c = cands[k]
    misb = frozenset(ops) - c.honest
    degenerate = False
    try:
        weights, mc, ac = revision_weights(c.conflicts, misb)
    except DegenerateConflict:
        if params.revise:
            raise
        vals = list(c.conflicts.values())
        weights, mc, ac, degenerate = {}, max(vals), sum(vals) / len(vals), True
    revised = None
    if params.revise and trust_store is not None:
        revised = revise_trust(c.conflicts, misb, trust_store)
    return ClassificationResult(c.reference, [x.reference for x in cands], c.honest, misb,
                                weights, mc, ac, c.conflicts, c.component, degenerate, revised)


# ---------------------------------------------------------------- batch engine

@lru_cache(maxsize=None)
def graph_structure(n: int, mask: int):
    """Dominant components and their unique hub (or -1) for an edge bitmask."""
    pairs = list(itertools.combinations(range(n), 2))
    adj = np.zeros((n, n), dtype=bool)
    for k, (i, j) in enumerate(pairs):
        if mask >> k & 1:
            adj[i, j] = adj[j, i] = True
    comps = _components(adj)
    size = max(len(c) for c in comps)
    out = []
    for c in (c for c in comps if len(c) == size):
        h = [v for v in c if all(adj[v, w] for w in c if w != v)]
        out.append((tuple(c), h[0] if len(c) == 1 or len(h) == 1 else -1))
    return out


def pairwise_dc(b: np.ndarray, u: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Conflicts of every agent pair, shape (R, n*(n-1)/2)."""
    P = k_project(b, u, a)
    n = b.shape[1]
    cols = []
    for i, j in itertools.combinations(range(n), 2):
        cols.append(0.5 * np.abs(P[:, i] - P[:, j]).sum(-1) * (1 - u[:, i]) * (1 - u[:, j]))
    return np.stack(cols, axis=1)


def _fuse_rows(b, u, a, members, fusion):
    W = b.shape[-1]
    m = list(members)
    r = k_to_evidence(b[:, m], u[:, m], W)
    w = np.full(len(m), 1.0 / len(m)) if fusion == "mean" else chain_weights(len(m))
    rb, ru = k_from_evidence(np.tensordot(r, w, axes=([1], [0])), W)
    return rb, ru, np.tensordot(a[:, m], w, axes=([1], [0]))


@dataclass
class BatchResult:
    honest: np.ndarray      # (R, n) bool
    ref_b: np.ndarray       # (R, W)
    ref_u: np.ndarray       # (R,)
    ref_a: np.ndarray       # (R, W)
    conflicts: np.ndarray   # (R, n)


def batch_detect(b: np.ndarray, u: np.ndarray, a: np.ndarray, theta: float,
                 fusion: str = "mean", priority: Optional[np.ndarray] = None,
                 id_rank: Optional[np.ndarray] = None, D: Optional[np.ndarray] = None) -> BatchResult:
    """Vectorized ``detect`` over R independent runs of n agents.

    ``b`` (R, n, W), ``u`` (R, n), ``a`` (R, n, W) hold discounted opinions in
    report order. ``id_rank`` gives each position's rank in agent-id order.
    """
    R, n, W = b.shape
    if D is None:
        D = pairwise_dc(b, u, a)
    id_rank = np.arange(n) if id_rank is None else np.asarray(id_rank)
    P = k_project(b, u, a)
    mask = ((D <= theta).astype(np.int64) << np.arange(D.shape[1])).sum(1)
    honest = np.zeros((R, n), bool)
    ref_b = np.zeros((R, W))
    ref_u = np.zeros(R)
    ref_a = np.zeros((R, W))
    conf = np.zeros((R, n))
    for m in np.unique(mask):
        sel = np.nonzero(mask == m)[0]
        bs, us, as_, Ps = b[sel], u[sel], a[sel], P[sel]
        struct = graph_structure(n, int(m))
        cands = []
        for comp, hub in struct:
            if hub >= 0:
                rb, ru, ra = bs[:, hub], us[:, hub], as_[:, hub]
            else:
                rb, ru, ra = _fuse_rows(bs, us, as_, comp, fusion)
            Pr = k_project(rb, ru, ra)
            d = 0.5 * np.abs(Ps - Pr[:, None]).sum(-1) * (1 - us) * (1 - ru)[:, None]
            hon = d <= theta
            cnt = hon.sum(1)
            ac = np.where(hon, d, 0.0).sum(1) / np.maximum(cnt, 1)
            cands.append((comp, rb, ru, ra, d, hon, cnt, ac))
        if len(cands) == 1:
            pick = np.zeros(len(sel), int)
        else:
            cnt = np.stack([c[6] for c in cands], 1)
            alive = cnt == cnt.max(1, keepdims=True)
            if priority is not None and len(cands[0][0]) >= 2:
                pr = np.array([sum(priority[v] for v in c[0]) for c in cands])
                score = np.where(alive, pr[None], -np.inf)
                alive &= score == score.max(1, keepdims=True)
            ac = np.where(alive, np.stack([c[7] for c in cands], 1), np.inf)
            alive &= ac == ac.min(1, keepdims=True)
            rank = np.array([min(id_rank[v] for v in c[0]) for c in cands])
            pick = np.argmin(np.where(alive, rank[None], np.iinfo(np.int64).max), 1)
        rows = np.arange(len(sel))
        honest[sel] = np.stack([c[5] for c in cands], 1)[rows, pick]
        conf[sel] = np.stack([c[4] for c in cands], 1)[rows, pick]
        ref_b[sel] = np.stack([c[1] for c in cands], 1)[rows, pick]
        ref_u[sel] = np.stack([c[2] for c in cands], 1)[rows, pick]
        ref_a[sel] = np.stack([c[3] for c in cands], 1)[rows, pick]
    return BatchResult(honest, ref_b, ref_u, ref_a, conf)
