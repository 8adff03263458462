"""Command-line surface, exercised in-process through click's runner."""

import json

import pytest
from click.testing import CliRunner

from lightops.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args, expect_exit: int = 0, input=None):
    result = runner.invoke(main, list(args), input=input, catch_exceptions=False)
    assert result.exit_code == expect_exit, result.output + result.stderr
    return result


def emitted(result) -> dict:
    return json.loads(result.stdout)


def write_demands(path, bundled_topology, n: int = 2):
    nodes = sorted(bundled_topology.node_ids())
    demands = [
        {
            "id": f"d{i}",
            "src": nodes[i],
            "dst": nodes[-(i + 1)],
            "launch_power_dbm": -2.0,
            "modulation": "QPSK",
        }
        for i in range(n)
    ]
    path.write_text(json.dumps(demands), encoding="utf-8")
    return path


def write_alarms(path, n: int = 12):
    lines = [
        json.dumps(
            {
                "id": f"g{i:03d}",
                "ts": 1000 + i * 100,
                "severity": "CRITICAL",
                "alarm_type": "LOS",
                "source_ne": "NE-1",
                "description": "Loss of signal detected on line port",
            }
        )
        for i in range(n)
    ]
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# topo


def test_topo_gen_and_validate_round_trip(runner, tmp_path):
    out = tmp_path / "net.topo"
    generated = emitted(
        invoke(
            runner,
            "topo", "gen", "--nodes", "6", "--links", "8",
            "--seed", "3", "--out", str(out),
        )
    )
    assert generated["nodes"] == 6
    assert generated["links"] == 8
    assert out.is_file()

    validated = emitted(invoke(runner, "topo", "validate", str(out)))
    assert validated["valid"] is True
    assert validated["nodes"] == 6
    assert validated["links"] == 8
    assert validated["channels_per_link"] > 0


def test_topo_validate_flags_broken_files(runner, tmp_path):
    bad = tmp_path / "broken.topo"
    bad.write_text("{not json", encoding="utf-8")
    result = runner.invoke(main, ["topo", "validate", str(bad)])
    assert result.exit_code == 1
    assert json.loads(result.stdout)["valid"] is False


def test_topo_gen_rejects_infeasible_link_counts(runner, tmp_path):
    result = runner.invoke(
        main,
        ["topo", "gen", "--nodes", "5", "--links", "3",
         "--out", str(tmp_path / "x.topo")],
    )
    assert result.exit_code != 0


# ---------------------------------------------------------------------------
# qot


def test_qot_estimate_over_one_bundled_link(runner, bundled_topology):
    a, b = bundled_topology.links[0].endpoints
    report = emitted(
        invoke(
            runner,
            "qot", "estimate", "--route", f"{a},{b}",
            "--power-dbm", "0", "--modulation", "QPSK",
        )
    )
    assert report["route"] == [a, b]
    channel = report["channels"][0]
    assert channel["gsnr_db"] > 0
    assert "links" not in report

    detailed = emitted(
        invoke(
            runner,
            "qot", "estimate", "--route", f"{a},{b}", "--per-link",
        )
    )
    assert len(detailed["links"]) == 1
    assert detailed["links"][0]["channels"][0]["gsnr_db"] == channel["gsnr_db"]


def test_qot_estimate_rejects_a_missing_link(runner, bundled_topology):
    nodes = sorted(bundled_topology.node_ids())
    linked = {frozenset(l.endpoints) for l in bundled_topology.links}
    pair = next(
        (x, y)
        for i, x in enumerate(nodes)
        for y in nodes[i + 1:]
        if frozenset((x, y)) not in linked
    )
    result = runner.invoke(
        main, ["qot", "estimate", "--route", f"{pair[0]},{pair[1]}"]
    )
    assert result.exit_code != 0
    assert "no link between" in result.output + result.stderr


# ---------------------------------------------------------------------------
# netops


def test_netops_provision_reports_the_allocation(runner, tmp_path, bundled_topology):
    demands = write_demands(tmp_path / "demands.json", bundled_topology)
    report = emitted(
        invoke(runner, "netops", "provision", "--demands", str(demands))
    )
    assert len(report["allocations"]) == 2
    assert report["blocking_probability"] == 0.0
    for allocation in report["allocations"]:
        assert allocation["blocked"] is False
        assert allocation["channel"] >= 0


def test_netops_optimize_prints_the_trace(runner, tmp_path, bundled_topology):
    demands = write_demands(tmp_path / "demands.json", bundled_topology)
    trace = emitted(
        invoke(
            runner,
            "netops", "optimize", "--demands", str(demands),
            "--step", "0.5", "--rounds", "10",
        )
    )
    assert trace["final_objective_db"] >= trace["initial_objective_db"]
    assert set(trace["final_launch_dbm"]) == {"d0", "d1"}

    result = runner.invoke(
        main,
        ["netops", "optimize", "--demands", str(demands), "--bounds", "wide"],
    )
    assert result.exit_code != 0


# ---------------------------------------------------------------------------
# alarms


def test_alarms_analyze_ranks_and_suggests(runner, tmp_path):
    alarms = write_alarms(tmp_path / "alarms.jsonl")
    out = emitted(invoke(runner, "alarms", "analyze", "--in", str(alarms)))
    assert out["parse_errors"] == []
    assert out["window"]["size"] == 12
    assert out["events"][0]["key"] == "LOS@NE-1"
    assert out["ranking"][0]["event"]["key"] == "LOS@NE-1"
    assert out["suggestion"]["event_key"] == "LOS@NE-1"
    assert out["suggestion"]["source_refs"]


def test_alarms_analyze_validates_weights(runner, tmp_path):
    alarms = write_alarms(tmp_path / "alarms.jsonl")
    result = runner.invoke(
        main, ["alarms", "analyze", "--in", str(alarms), "--weights", "1,2"]
    )
    assert result.exit_code != 0
    assert "three comma-separated numbers" in result.output + result.stderr


# ---------------------------------------------------------------------------
# rag


def test_rag_index_then_query(runner, tmp_path):
    docs = tmp_path / "docs"
    docs.mkdir()
    (docs / "edfa.txt").write_text(
        "EDFA amplifiers add gain and ASE noise to every span.", encoding="utf-8"
    )
    (docs / "raman.txt").write_text(
        "Raman pumping distributes gain along the fiber itself.", encoding="utf-8"
    )
    store = tmp_path / "store.bin"

    indexed = emitted(
        invoke(runner, "rag", "index", "--dir", str(docs), "--out", str(store))
    )
    assert indexed["documents"] == 2
    assert store.is_file()

    queried = emitted(
        invoke(
            runner,
            "rag", "query", "--store", str(store),
            "--text", "EDFA gain and ASE noise", "--k", "2",
        )
    )
    assert queried[0]["ref"].startswith("edfa#")
    assert queried[0]["score"] > queried[1]["score"]


# ---------------------------------------------------------------------------
# agent chat


def test_agent_chat_runs_the_alarm_pipeline(runner, tmp_path):
    alarms = write_alarms(tmp_path / "alarms.jsonl")
    result = invoke(
        runner,
        "agent", "chat",
        "--query", "analyze these alarms and tell me what to fix first",
        "--alarms", str(alarms),
    )
    assert "[000] INTENT_ANALYSIS" in result.stdout
    assert "FINAL_ANSWER" in result.stdout
    assert "Handle LOS@NE-1 first." in result.stdout


def test_agent_chat_without_a_tty_rejects_mutations(runner, tmp_path, bundled_topology):
    demands = write_demands(tmp_path / "demands.json", bundled_topology)
    result = invoke(
        runner,
        "agent", "chat",
        "--query", "optimize launch power for the provisioned services",
        "--demands", str(demands),
    )
    assert "run ended REJECTED" in result.stdout
    assert "no interactive approval channel" in result.stdout


def test_agent_chat_approve_mutations_completes_the_optimization(
    runner, tmp_path, bundled_topology
):
    demands = write_demands(tmp_path / "demands.json", bundled_topology)
    result = invoke(
        runner,
        "agent", "chat",
        "--query", "optimize launch power for the provisioned services",
        "--demands", str(demands),
        "--approve-mutations",
        "--show-transcript",
    )
    assert "Optimized launch powers" in result.stdout
    transcript_json = result.stdout[result.stdout.index("[\n"):]
    records = json.loads(transcript_json)
    steps = [r["step"] for r in records]
    assert "PENDING_APPROVAL" in steps
    assert steps[-1] == "FINAL_ANSWER"


# ---------------------------------------------------------------------------
# eval


def test_eval_run_writes_reports(runner, tmp_path):
    out_dir = tmp_path / "report"
    summary = emitted(
        invoke(
            runner,
            "eval", "run",
            "--tasks", "alarm_compression",
            "--conditions", "RAW,ADVANCED_PLUS_RAG",
            "--n", "1", "--seed", "11",
            "--out", str(out_dir),
        )
    )
    assert summary["cells"] == 2
    assert summary["rows"] == 2
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert len(report["cells"]) == 2
    header = (out_dir / "report.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "task,condition,n,mean_accuracy,mean_similarity"


def test_eval_run_rejects_unknown_tasks(runner, tmp_path):
    result = runner.invoke(
        main,
        ["eval", "run", "--tasks", "nope", "--out", str(tmp_path / "r")],
    )
    assert result.exit_code != 0
