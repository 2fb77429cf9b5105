import json

import numpy as np
import pytest

from sltrust.broker import (
    Broker,
    SimConfig,
    SimulationTrace,
    replay,
    run_cycles,
    user_check_and_report,
)
from sltrust.errors import ConfigError, NoMatchingWindow, RevokedAgent, SybilFlag
from sltrust.misbehavior import ReportedOpinion
from sltrust.scenarios import HistogramSpec, histogram_opinion


def make_cfg(agents, **kw):
    d = {"topics": [{"id": "t1"}, {"id": "t2"}], "agents": agents, "seed": 0}
    d.update(kw)
    return SimConfig.from_dict(d)


def honest(i, role="provider", **extra):
    a = {"id": i, "role": role, "topics": ["t1"]}
    a.update(extra)
    return a


class TestRegistration:
    def setup_method(self):
        self.cfg = make_cfg([honest("P", pseudonyms=["P-1", "P-2"], topics=["t1", "t2"]), honest("U", "user")])
        self.broker = Broker(self.cfg)

    def test_single_pseudonym(self):
        assert self.broker.register("P", "P-1", "t1", (0, 10), "provider") == "ack"
        assert self.broker.registered("t1", "provider") == ["P"]

    def test_two_pseudonyms_same_topic(self):
        self.broker.register("P", "P-1", "t1", (0, 10), "provider")
        with pytest.raises(SybilFlag) as exc:
            self.broker.register("P", "P-2", "t1", (0, 10), "provider")
        assert exc.value.pseudonyms == {"P-1", "P-2"}
        assert self.broker.registered("t1", "provider") == []

    def test_same_pseudonym_again_is_fine(self):
        self.broker.register("P", "P-1", "t1", (0, 10), "provider")
        self.broker.register("P", "P-1", "t1", (0, 10), "provider")

    def test_distinct_topics_allowed(self):
        self.broker.register("P", "P-1", "t1", (0, 10), "provider")
        self.broker.register("P", "P-2", "t2", (0, 10), "provider")

    def test_cross_role_sybil(self):
        self.broker.register("P", "P-1", "t1", (0, 10), "provider")
        with pytest.raises(SybilFlag):
            self.broker.register("P", "P-2", "t1", (0, 10), "user")

    def test_revoked(self):
        self.broker.revoke("P", "t1")
        with pytest.raises(RevokedAgent):
            self.broker.register("P", "P-1", "t1", (0, 10), "provider")

    def test_foreign_pseudonym(self):
        with pytest.raises(ConfigError):
            self.broker.register("U", "P-1", "t1", (0, 10), "user")


class TestRoute:
    def broker(self, n_prov, n_user, user_window=(0.0, float("inf"))):
        agents = [honest(f"P{i}") for i in range(n_prov)]
        agents += [honest(f"U{i}", "user", window=list(user_window)) for i in range(n_user)]
        b = Broker(make_cfg(agents))
        for a in b.cfg.agents:
            b.register(a.true_id, a.pseudonyms[0], "t1", a.window, a.role)
        pub = {f"P{i}": histogram_opinion([0.0]) for i in range(n_prov)}
        return b, pub

    def test_one_to_one(self):
        b, pub = self.broker(1, 1)
        assert b.route("t1", pub) == [("P0", "U0")]

    def test_cross_product(self):
        b, pub = self.broker(3, 2)
        assert len(b.route("t1", pub)) == 6

    def test_disjoint_windows(self):
        b, pub = self.broker(2, 1, user_window=(5, 9))
        with pytest.raises(NoMatchingWindow):
            b.route("t1", pub)

    def test_revoked_provider_not_delivered(self):
        b, pub = self.broker(3, 1)
        b.revoke("P1", "t1")
        assert all(p != "P1" for p, _ in b.route("t1", pub))


class TestUserCheck:
    def test_agreement_is_success(self):
        z = np.random.default_rng(0).standard_normal(50)
        ops = [ReportedOpinion("P", histogram_opinion(z))]
        kind, out = user_check_and_report("U", ops, histogram_opinion(z), 0.15)
        assert kind == "success" and out == ["P", "U"]

    def test_disagreement_is_incident(self):
        rng = np.random.default_rng(0)
        ops = [ReportedOpinion(p, histogram_opinion(rng.standard_normal(50))) for p in ("P1", "P2")]
        ops.append(ReportedOpinion("X", histogram_opinion(rng.standard_normal(50) + 3)))
        kind, inc = user_check_and_report("U", ops, histogram_opinion(rng.standard_normal(50)), 0.15, topic="t1")
        assert kind == "incident" and inc.accused == ["X"] and inc.topic == "t1"

    def test_solo(self):
        assert user_check_and_report("U", [], histogram_opinion([0.0]), 0.15) == ("solo", None)


def population(n_honest=4, faulty=(), **kw):
    agents = [honest(f"H{i}", topics=["t1"]) for i in range(n_honest)]
    agents += [honest(f"F{i}", behavior={"kind": "faulty", "mu_est": mu}) for i, mu in enumerate(faulty)]
    agents += [honest("U", "user"), honest("O", "hidden_observer")]
    return make_cfg(agents, **kw)


class TestSimulation:
    def test_zero_cycles(self):
        tr = run_cycles(population(), 0)
        assert tr.events == [] and tr.revocations == {}

    def test_negative_cycles(self):
        with pytest.raises(ConfigError):
            run_cycles(population(), -1)

    def test_honest_population_is_stable(self):
        cfg = population(theta=0.3, p_sa=1.0)
        tr = run_cycles(cfg, 100, seed=1)
        assert tr.revocations == {}
        hist = {}
        for e in tr.of_type("trust"):
            for rec in e["payload"]["records"]:
                b, u, a = rec["b"], rec["u"], rec["a"]
                hist.setdefault(rec["agent_id"], []).append(b + a * u)
        for series in hist.values():
            assert np.all(np.diff(series) >= -1e-12)

    def test_faulty_agents_revoked_more(self):
        hon, bad = 0, 0
        for seed in range(5):
            cfg = population(faulty=(1.75, 2.0), theta=0.1, w_tr=1, ban_policy="batch", initial_trust={"r": 4})
            tr = run_cycles(cfg, 30, seed)
            bad += sum(a.startswith("F") for a in tr.revocations)
            hon += sum(a.startswith("H") for a in tr.revocations)
        assert bad > hon

    def test_revoked_never_delivered(self):
        cfg = population(faulty=(1.75, 2.0), theta=0.1, w_tr=1, ban_policy="batch", initial_trust={"r": 4})
        tr = run_cycles(cfg, 30, 2)
        for e in tr.of_type("route"):
            for p, _ in e["payload"]["deliveries"]:
                # routing precedes adjudication within a cycle
                assert p not in tr.revocations or tr.revocations[p] >= e["cycle"]

    def test_hidden_observer_never_routed(self):
        tr = run_cycles(population(faulty=(2.0,)), 20, 0)
        for e in tr.of_type("route"):
            assert all("O" not in d for d in e["payload"]["deliveries"])
        assert not [e for e in tr.of_type("publish") if e["agent"] == "O"]

    def test_reward_once_per_success(self):
        tr = run_cycles(population(theta=0.3), 20, 0)
        coop = [e for e in tr.of_type("reward") if e["payload"]["reason"] == "cooperation"]
        expected = sum(len(e["payload"]["participants"]) for e in tr.of_type("success"))
        assert len(coop) == expected

    def test_replay_matches(self, tmp_path):
        cfg = population(faulty=(1.75,), theta=0.1, w_tr=1, ban_policy="batch", initial_trust={"r": 4})
        tr = run_cycles(cfg, 20, 3)
        assert tr.of_type("verdict")
        path = tmp_path / "trace.jsonl"
        tr.save(path)
        assert replay(SimulationTrace.load_events(path)) == []

    def test_replay_detects_tampering(self):
        cfg = population(faulty=(2.0,), theta=0.1)
        tr = run_cycles(cfg, 10, 3)
        events = json.loads(json.dumps(tr.events))
        v = next(e for e in events if e["event_type"] == "verdict")
        v["payload"]["result"]["misbehaving"] = ["nobody"]
        assert len(replay(events)) == 1

    def test_deterministic(self):
        a = run_cycles(population(faulty=(1.5,)), 15, 4).to_jsonl()
        assert a == run_cycles(population(faulty=(1.5,)), 15, 4).to_jsonl()

    def test_sybil_invariant(self):
        agents = [honest(f"H{i}") for i in range(3)] + [honest("U", "user")]
        agents.append(honest("S", pseudonyms=["S-1", "S-2"],
                             behavior={"kind": "malicious", "strategy": "sybil", "sybil_cycle": 2}))
        tr = run_cycles(make_cfg(agents), 6, 0)
        flags = tr.of_type("sybil_flag")
        assert [(e["cycle"], e["agent"]) for e in flags] == [(2, "S")]
        assert tr.revocations == {"S": 2}
        assert not [e for e in tr.of_type("publish") if e["agent"] == "S" and e["cycle"] >= 2]


class TestConfig:
    def test_unknown_role(self):
        with pytest.raises(ConfigError):
            make_cfg([honest("A", "spy")])

    def test_unknown_topic(self):
        with pytest.raises(ConfigError):
            make_cfg([honest("A", topics=["nope"])])

    def test_missing_key(self):
        with pytest.raises(ConfigError):
            SimConfig.from_dict({"agents": []})

    def test_duplicate_ids(self):
        with pytest.raises(ConfigError):
            make_cfg([honest("A"), honest("A")])

    def test_histogram(self):
        cfg = make_cfg([honest("A")], histogram={"bins": 5, "lo": -3, "hi": 3})
        assert cfg.spec == HistogramSpec(5, -3.0, 3.0)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            SimConfig.load(p)

    def test_demo_config_loads(self):
        import pathlib
        path = pathlib.Path(__file__).parents[1] / "demos" / "configs" / "intersection_broker.json"
        cfg = SimConfig.load(path)
        assert {a.role for a in cfg.agents} == {"provider", "user", "hidden_observer"}
