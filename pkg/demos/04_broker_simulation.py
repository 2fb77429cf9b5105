"""Run the broker on the bundled intersection config and replay its verdicts."""
import collections
import pathlib

from sltrust.broker import SimConfig, replay, run_cycles

cfg = SimConfig.load(pathlib.Path(__file__).parent / "configs" / "intersection_broker.json")
trace = run_cycles(cfg)
counts = collections.Counter(e["event_type"] for e in trace.events)
print("events:", dict(sorted(counts.items())))
print("revocations (agent: cycle):", trace.revocations)
for e in trace.of_type("sybil_flag"):
    print(f"cycle {e['cycle']}: {e['agent']} registered {e['payload']['pseudonyms']} on {e['topic']}")
print("final trust:")
for rec in trace.trust.snapshot():
    print(f"  {rec['agent_id']:>4}  P={rec['b'] + rec['a'] * rec['u']:.3f}")
print("replay mismatches:", len(replay(trace.events)))
