import json
import os
import pathlib

import pytest

from sltrust.cli import EXIT_MISBEHAVIOR, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, main

DEMO_CONFIG = pathlib.Path(__file__).parents[1] / "demos" / "configs" / "intersection_broker.json"


def report(agent, b, d, u):
    return {"agent": agent, "opinion": {"labels": ["x", "not_x"], "belief": [b, d],
                                        "uncertainty": u, "base_rate": [0.5, 0.5]}}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


class TestDetect:
    def test_consistent(self, tmp_path, capsys):
        path = write(tmp_path, "r.json", [report(a, 0.6, 0.3, 0.1) for a in "ABC"])
        assert main(["detect", "--reports", path]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["misbehaving"] == [] and sorted(out["honest"]) == ["A", "B", "C"]

    def test_deviant(self, tmp_path, capsys):
        reps = [report(a, 0.6, 0.3, 0.1) for a in "ABC"] + [report("D", 0.05, 0.9, 0.05)]
        path = write(tmp_path, "r.json", reps)
        assert main(["detect", "--reports", path, "--theta", "0.1"]) == EXIT_MISBEHAVIOR
        assert json.loads(capsys.readouterr().out)["misbehaving"] == ["D"]

    def test_invalid_mass(self, tmp_path, capsys):
        path = write(tmp_path, "r.json", [report("A", 0.6, 0.4, 0.1), report("B", 0.6, 0.3, 0.1)])
        assert main(["detect", "--reports", path]) == EXIT_USAGE
        assert "reports[0]" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["detect", "--reports", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_with_trust_store(self, tmp_path):
        from sltrust.opinion import BinomialOpinion
        from sltrust.trust import TrustRecord, TrustStore
        store = TrustStore()
        for a in "ABC":
            store.set(TrustRecord(a, BinomialOpinion(0.8, 0.0, 0.2)))
        tpath = tmp_path / "trust.jsonl"
        store.save_jsonl(tpath)
        rpath = write(tmp_path, "r.json", {"reports": [report(a, 0.6, 0.3, 0.1) for a in "ABC"]})
        assert main(["detect", "--reports", rpath, "--trust", str(tpath)]) == EXIT_OK


class TestSweep:
    def test_default_grid(self, tmp_path):
        assert main(["sweep", "--runs", "50", "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "theta,p_detected,p_at_least_one,p_wrong_accusation,p_all_honest"
        assert len(lines) == 22
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["command"] == "sweep" and man["artifacts"] == ["sweep.csv"]
        assert {"seed", "config", "tool_version", "wall_clock_seconds", "output_directory"} <= set(man)

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["sweep", "--runs", "40", "--seed", "3", "--out", str(d)]) == EXIT_OK
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_zero_runs(self, tmp_path):
        assert main(["sweep", "--runs", "0", "--out", str(tmp_path)]) == EXIT_USAGE
        assert not os.listdir(tmp_path)

    def test_bad_theta_range(self, tmp_path):
        assert main(["sweep", "--theta-min", "0.5", "--theta-max", "0.1", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_json_format(self, tmp_path):
        assert main(["sweep", "--runs", "20", "--theta", "0.15", "--format", "json", "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "sweep.json").read_text())
        assert data["manifest"] == "manifest.json" and len(data["rows"]) == 1

    def test_no_temp_files_left(self, tmp_path):
        main(["sweep", "--runs", "20", "--out", str(tmp_path)])
        assert sorted(os.listdir(tmp_path)) == ["manifest.json", "sweep.csv"]


class TestOtherCommands:
    def test_roc(self, tmp_path):
        cfg = write(tmp_path, "faults.json", {"faults": [[1.0, 0.75]]})
        assert main(["roc", "--runs", "30", "--config", cfg, "--theta-step", "0.1", "--out", str(tmp_path)]) == 0
        assert len((tmp_path / "roc.csv").read_text().splitlines()) == 1 + 7

    def test_scale(self, tmp_path):
        assert main(["scale", "--runs", "100", "--out", str(tmp_path)]) == EXIT_OK
        assert len((tmp_path / "scale.csv").read_text().splitlines()) == 1 + 6 * 4

    def test_scenario(self, tmp_path):
        assert main(["simulate", "--scenario", "2", "--runs", "50", "--trace-run", "0", "--out", str(tmp_path)]) == 0
        assert {"intersection_s2.csv", "recalibration.json", "run_trace.json"} <= set(os.listdir(tmp_path))

    def test_simulate_without_target(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_simulate_and_replay(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(DEMO_CONFIG), "--cycles", "10", "--out", str(tmp_path)])
        assert code in (EXIT_OK, EXIT_MISBEHAVIOR)
        trace = tmp_path / "trace.jsonl"
        assert main(["replay", "--trace", str(trace)]) == EXIT_OK
        capsys.readouterr()
        lines = trace.read_text().splitlines()
        events = [json.loads(x) for x in lines]
        for e in events:
            if e["event_type"] == "verdict":
                e["payload"]["result"]["honest"] = ["tampered"]
                break
        else:
            pytest.skip("no verdicts in this trace")
        trace.write_text("".join(json.dumps(e) + "\n" for e in events))
        assert main(["replay", "--trace", str(trace)]) == EXIT_MISMATCH

    def test_bad_config(self, tmp_path):
        cfg = write(tmp_path, "c.json", {"agents": [{"id": "A", "role": "spy"}], "topics": [{"id": "t"}]})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE

    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
