"""Cycle-based simulation of a trusted pub/sub broker.

Each cycle runs: trust aging, registration (with the Sybil check), publishing,
routing, user-side checks, adjudication of incidents, bookkeeping. Every step
emits events ``{cycle, event_type, agent, topic, payload}`` so a run can be
inspected and its verdicts replayed.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, DegenerateConflict, NoMatchingWindow, RevokedAgent, SybilFlag
from .misbehavior import ClassificationResult, DetectParams, ReportedOpinion, detect
from .opinion import BinomialOpinion, Opinion
from .scenarios import HistogramSpec, MeasurementModel, histogram_opinion, z_transform
from .trust import (
    AgingParams,
    TrustRecord,
    TrustStore,
    age_trust,
    atomic_write,
    reward_success,
)

ROLES = ("provider", "user", "hidden_observer")


@dataclass
class Behavior:
    kind: str = "honest"            # honest | faulty | malicious
    mu_est: Optional[float] = None
    sigma_est: Optional[float] = None
    strategy: Optional[str] = None  # offset | sybil
    sybil_cycle: int = 0


@dataclass
class AgentProfile:
    true_id: str
    role: str
    topics: List[str]
    pseudonyms: List[str]
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    behavior: Behavior = field(default_factory=Behavior)
    window: tuple = (0.0, float("inf"))
    initial_trust: tuple = (0.0, 0.0)
    revoked: bool = False

    def estimates(self):
        m, b = self.measurement, self.behavior
        mu = m.mu_est if b.mu_est is None else b.mu_est
        sig = m.sigma_est if b.sigma_est is None else b.sigma_est
        return mu, sig


@dataclass
class Topic:
    topic_id: str
    time_window: tuple = (0.0, float("inf"))
    providers: set = field(default_factory=set)
    subscribers: set = field(default_factory=set)


@dataclass
class Incident:
    reporter: str
    topic: str
    cycle: int
    reports: List[ReportedOpinion]
    accused: List[str] = field(default_factory=list)
    verdict: Optional[ClassificationResult] = None


@dataclass
class SimConfig:
    agents: List[AgentProfile]
    topics: List[Topic]
    theta: float = 0.15
    lam: float = 0.5
    p_sa: float = 0.999
    w_tr: int = 5
    ban_policy: str = "threshold"   # threshold | batch
    ban_threshold: float = 0.2
    batch_size: int = 3
    cycles: int = 10
    seed: int = 0
    spec: HistogramSpec = field(default_factory=HistogramSpec)
    fusion: str = "mean"

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        try:
            topics = [Topic(str(t["id"]), tuple(t.get("window", (0.0, float("inf")))))
                      for t in d["topics"]]
            names = {t.topic_id for t in topics}
            agents = []
            for a in d["agents"]:
                role = a.get("role", "provider")
                if role not in ROLES:
                    raise ConfigError(f"agent {a.get('id')!r}: unknown role {role!r}")
                tops = [str(x) for x in a.get("topics", sorted(names))]
                for t in tops:
                    if t not in names:
                        raise ConfigError(f"agent {a.get('id')!r}: unknown topic {t!r}")
                m = a.get("measurement", {})
                beh = a.get("behavior", {"kind": "honest"})
                if beh.get("kind", "honest") not in ("honest", "faulty", "malicious"):
                    raise ConfigError(f"agent {a.get('id')!r}: unknown behavior {beh.get('kind')!r}")
                it = a.get("initial_trust", d.get("initial_trust", {}))
                agents.append(AgentProfile(
                    str(a["id"]), role, tops,
                    [str(p) for p in a.get("pseudonyms", [f"{a['id']}#0"])],
                    MeasurementModel(**{k: m[k] for k in ("mu", "sigma", "mu_est", "sigma_est", "N") if k in m}),
                    Behavior(beh.get("kind", "honest"), beh.get("mu_est"), beh.get("sigma_est"),
                             beh.get("strategy"), int(beh.get("sybil_cycle", 0))),
                    tuple(a.get("window", (0.0, float("inf")))),
                    (float(it.get("r", 0.0)), float(it.get("s", 0.0))),
                ))
            ids = [a.true_id for a in agents]
            if len(set(ids)) != len(ids):
                raise ConfigError("duplicate agent ids")
            h = d.get("histogram", {})
            return cls(agents, topics, float(d.get("theta", 0.15)), float(d.get("lambda", 0.5)),
                       float(d.get("p_sa", 0.999)), int(d.get("w_tr", 5)), d.get("ban_policy", "threshold"),
                       float(d.get("ban_threshold", 0.2)), int(d.get("batch_size", 3)),
                       int(d.get("cycles", 10)), int(d.get("seed", 0)),
                       HistogramSpec(int(h.get("bins", 3)), float(h.get("lo", -2.0)), float(h.get("hi", 2.0))),
                       d.get("fusion", "mean"))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass
class SimulationTrace:
    events: List[dict] = field(default_factory=list)
    trust: Optional[TrustStore] = None
    revocations: Dict[str, int] = field(default_factory=dict)

    def emit(self, cycle, event_type, agent=None, topic=None, **payload):
        self.events.append({"cycle": cycle, "event_type": event_type, "agent": agent,
                            "topic": topic, "payload": payload})

    def of_type(self, event_type) -> List[dict]:
        return [e for e in self.events if e["event_type"] == event_type]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def save(self, path):
        atomic_write(path, self.to_jsonl())

    @staticmethod
    def load_events(path) -> List[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


def _in(window, t) -> bool:
    return window[0] <= t < window[1]


class Broker:
    """Trusted broker holding the pseudonym map, retained reports and trust."""

    def __init__(self, cfg: SimConfig, trace: Optional[SimulationTrace] = None):
        self.cfg = cfg
        self.trace = trace or SimulationTrace()
        self.agents = {a.true_id: a for a in cfg.agents}
        self.topics = {t.topic_id: t for t in cfg.topics}
        self.pseudonym_owner = {p: a.true_id for a in cfg.agents for p in a.pseudonyms}
        self.trust = TrustStore()
        for a in cfg.agents:
            r, s = a.initial_trust
            W = 2.0
            tot = W + r + s
            self.trust.set(TrustRecord(a.true_id, BinomialOpinion(r / tot, s / tot, W / tot),
                                       cfg.lam, cfg.w_tr))
        self.active: Dict[tuple, Dict[str, set]] = {}
        self.suspended: set = set()
        self.batches: Dict[str, list] = defaultdict(list)
        self.cycle = 0

    # -- step 3
    def register(self, agent_id: str, pseudonym: str, topic: str, window, role: str):
        a = self.agents[agent_id]
        if a.revoked:
            raise RevokedAgent(agent_id)
        if self.pseudonym_owner.get(pseudonym) != agent_id:
            raise ConfigError(f"pseudonym {pseudonym!r} not issued to {agent_id!r}")
        held = self.active.setdefault((topic, role), {}).setdefault(agent_id, set())
        others = set()
        for (t, _), reg in self.active.items():
            if t == topic:
                others |= reg.get(agent_id, set())
        if others - {pseudonym}:
            for (t, _), reg in self.active.items():
                if t == topic:
                    reg.pop(agent_id, None)
            raise SybilFlag(agent_id, topic, others | {pseudonym})
        held.add(pseudonym)
        if role == "provider":
            self.topics[topic].providers.add(agent_id)
        elif role == "user":
            self.topics[topic].subscribers.add(agent_id)
        return "ack"

    def registered(self, topic: str, role: str) -> List[str]:
        return sorted(self.active.get((topic, role), {}))

    # -- step 4
    def route(self, topic: str, published: Dict[str, Opinion]):
        t = self.cycle
        if not _in(self.topics[topic].time_window, t):
            raise NoMatchingWindow(topic)
        users = [u for u in self.registered(topic, "user") if _in(self.agents[u].window, t)]
        provs = [p for p in self.registered(topic, "provider")
                 if p in published and _in(self.agents[p].window, t) and not self.agents[p].revoked]
        if not users or not provs:
            raise NoMatchingWindow(topic)
        return [(p, u) for p in provs for u in users]

    # -- step 6 bookkeeping
    def reward(self, agent_id: str, weight: float, topic, why: str):
        rec = self.trust.get(agent_id)
        if rec.trust.u <= 0.0:
            return
        self.trust.set(reward_success(rec, weight))
        self.trace.emit(self.cycle, "reward", agent_id, topic, weight=weight, reason=why,
                        projected=self.trust.get(agent_id).projected)

    # -- step 5
    def adjudicate(self, incidents: List[Incident], reports: List[ReportedOpinion]) -> Optional[ClassificationResult]:
        cfg, topic = self.cfg, incidents[0].topic
        involved = sorted({r.agent_id for r in reports})
        for a in involved:
            self.suspended.add(a)
            self.trace.emit(self.cycle, "suspend", a, topic)
        before = self.trust.copy()
        params = DetectParams(fusion=cfg.fusion, revise=True)
        try:
            res = detect(reports, before, cfg.theta, params)
        except DegenerateConflict as exc:
            self.trace.emit(self.cycle, "archived", None, topic, reason=str(exc))
            for a in involved:
                self.suspended.discard(a)
                self.trace.emit(self.cycle, "reinstate", a, topic)
            return None
        for inc in incidents:
            inc.verdict = res
        self.trace.emit(self.cycle, "verdict", None, topic, theta=cfg.theta, fusion=cfg.fusion,
                        reporters=sorted({i.reporter for i in incidents}),
                        reports=[r.to_json() for r in reports], trust=before.snapshot(),
                        result=res.to_json())
        for a in sorted(res.misbehaving):
            self.trust.set(res.trust.get(a))
            self.trace.emit(self.cycle, "revise", a, topic, weight=res.revision_weights.get(a, 0.0),
                            projected=self.trust.get(a).projected)
        for a in involved:
            self.suspended.discard(a)
            self.batches[a].append(a in res.misbehaving)
            if self._banned(a):
                self.revoke(a, topic)
            else:
                self.trace.emit(self.cycle, "reinstate", a, topic)
                if a in res.honest:
                    self.reward(a, cfg.w_tr, topic, "vindicated")
        return res

    def _banned(self, a: str) -> bool:
        cfg = self.cfg
        if cfg.ban_policy == "batch":
            hist = self.batches[a]
            k = cfg.batch_size
            return len(hist) % k == 0 and len(hist) > 0 and all(hist[-k:])
        return self.trust.get(a).projected < cfg.ban_threshold

    def revoke(self, a: str, topic, reason: str = "trust"):
        self.agents[a].revoked = True
        self.trace.revocations.setdefault(a, self.cycle)
        self.trace.emit(self.cycle, "revoke", a, topic, reason=reason,
                        projected=self.trust.get(a).projected)


def user_check_and_report(user: str, delivered: List[ReportedOpinion], own: Optional[Opinion],
                          theta: float, fusion: str = "mean", topic=None, cycle: int = 0):
    """User-side check of the delivered opinions plus its own measurement.

    Returns ``("solo", None)`` when fewer than two opinions are available,
    ``("incident", Incident)`` when anything looks wrong, otherwise
    ``("success", participants)``.
    """
    reports = list(delivered)
    if own is not None:
        reports.append(ReportedOpinion(user, own))
    if len(reports) < 2:
        return "solo", None
    res = detect(reports, None, theta, DetectParams(fusion=fusion, discount_by_trust=False))
    if res.misbehaving:
        return "incident", Incident(user, topic, cycle, reports, sorted(res.misbehaving))
    return "success", sorted(r.agent_id for r in reports)


def _measure(a: AgentProfile, rng, spec: HistogramSpec) -> Opinion:
    m = a.measurement
    mu, sig = a.estimates()
    return histogram_opinion(z_transform(m.sample(rng), mu, sig), spec)


def run_cycles(cfg: SimConfig, n_cycles: Optional[int] = None, seed: Optional[int] = None) -> SimulationTrace:
    n_cycles = cfg.cycles if n_cycles is None else n_cycles
    seed = cfg.seed if seed is None else seed
    if n_cycles < 0:
        raise ConfigError("cycle count must be non-negative")
    for a in cfg.agents:
        a.revoked = False
    rng = np.random.default_rng(seed)
    broker = Broker(cfg)
    tr = broker.trace
    aging = AgingParams(cfg.p_sa)
    for c in range(n_cycles):
        broker.cycle = c
        broker.active = {}
        for t in broker.topics.values():
            t.providers.clear()
            t.subscribers.clear()
        for a in broker.agents:
            broker.trust.set(age_trust(broker.trust.get(a), aging))
        # registration
        for a in cfg.agents:
            if a.revoked or not _in(a.window, c):
                continue
            roles = [a.role]
            for topic in a.topics:
                pseud = a.pseudonyms[:1]
                b = a.behavior
                if b.kind == "malicious" and b.strategy == "sybil" and c >= b.sybil_cycle:
                    pseud = a.pseudonyms[:2]
                for p in pseud:
                    try:
                        broker.register(a.true_id, p, topic, a.window, roles[0])
                        tr.emit(c, "register", a.true_id, topic, pseudonym=p, role=roles[0])
                    except SybilFlag as exc:
                        tr.emit(c, "sybil_flag", a.true_id, topic, pseudonyms=sorted(exc.pseudonyms))
                        broker.revoke(a.true_id, topic, reason="sybil")
                        break
                if a.revoked:
                    break
        # publishing and routing
        for topic in sorted(broker.topics):
            provs = [p for p in broker.registered(topic, "provider") if not broker.agents[p].revoked]
            users = [u for u in broker.registered(topic, "user") if not broker.agents[u].revoked]
            observers = [o for o in broker.registered(topic, "hidden_observer") if not broker.agents[o].revoked]
            published = {p: _measure(broker.agents[p], rng, cfg.spec) for p in provs}
            own = {u: _measure(broker.agents[u], rng, cfg.spec) for u in users}
            hidden = {o: _measure(broker.agents[o], rng, cfg.spec) for o in observers}
            for p in provs:
                tr.emit(c, "publish", p, topic, opinion=published[p].to_json())
            try:
                deliveries = broker.route(topic, published)
            except NoMatchingWindow:
                if users:
                    tr.emit(c, "no_delivery", None, topic)
                deliveries = []
            if deliveries:
                tr.emit(c, "route", None, topic, deliveries=[list(d) for d in deliveries])
            inbox = defaultdict(list)
            for p, u in deliveries:
                inbox[u].append(p)
            incidents = []
            for u in users:
                delivered = [ReportedOpinion(p, published[p]) for p in inbox[u] if p != u]
                kind, out = user_check_and_report(u, delivered, own[u], cfg.theta, cfg.fusion, topic, c)
                if kind == "solo":
                    tr.emit(c, "solo", u, topic)
                elif kind == "incident":
                    incidents.append(out)
                    tr.emit(c, "incident", u, topic, accused=out.accused)
                else:
                    tr.emit(c, "success", u, topic, participants=out)
                    for a in out:
                        broker.reward(a, 1.0, topic, "cooperation")
            if incidents:
                pool = {p: published[p] for p in provs}
                pool.update(own)
                pool.update(hidden)
                reports = [ReportedOpinion(k, pool[k]) for k in sorted(pool)]
                if len(reports) >= 2:
                    broker.adjudicate(incidents, reports)
        tr.emit(c, "trust", None, None, records=broker.trust.snapshot())
    tr.trust = broker.trust
    return tr


def replay(events: List[dict]) -> List[dict]:
    """Recompute every recorded verdict; returns the mismatching ones."""
    bad = []
    for e in events:
        if e["event_type"] != "verdict":
            continue
        p = e["payload"]
        reports = [ReportedOpinion.from_json(r) for r in p["reports"]]
        store = TrustStore.from_snapshot(p["trust"])
        res = detect(reports, store, p["theta"], DetectParams(fusion=p.get("fusion", "mean")))
        got = res.to_json()
        want = p["result"]
        same = (got["misbehaving"] == want["misbehaving"] and got["honest"] == want["honest"]
                and all(abs(got["revision_weights"].get(k, -1) - v) <= 1e-12
                        for k, v in want["revision_weights"].items()))
        if not same:
            bad.append({"cycle": e["cycle"], "topic": e["topic"], "recorded": want, "replayed": got})
    return bad
