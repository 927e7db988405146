import json

from orchsim import cli
from orchsim.errors import ScenarioError
from orchsim.scenario import (
    level_to_value,
    load_scenario,
    parse_scenario,
    scenario_to_dict,
    serialize_scenario,
    validate_file,
)

from conftest import golden_path

GOLDENS = ("preemption", "rebalance", "gc")


def diag_codes(doc):
    try:
        parse_scenario(doc)
    except ScenarioError as exc:
        return exc.diagnostics
    return []


class TestParsing:
    def test_shipped_scenarios_are_valid(self):
        for name in GOLDENS:
            assert validate_file(golden_path(name)) == []

    def test_level_mapping_matches_published_values(self):
        assert [level_to_value(level) for level in (1, 1, 3, 2)] == [
            10000,
            10000,
            8000,
            9000,
        ]
        scenario = load_scenario(golden_path("preemption"))
        state = scenario.build_initial_state()
        assert state.priority_classes["level-1"].value == 10000
        assert state.priority_classes["level-2"].value == 9000
        assert state.priority_classes["level-3"].value == 8000

    def test_unknown_priority_class_diagnostic(self):
        diags = diag_codes(
            {
                "services": [
                    {
                        "id": "s",
                        "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1},
                        "priorityClassName": "missing",
                    }
                ]
            }
        )
        assert any("unknown priority class" in d.message for d in diags)
        assert any(d.code == "reference" for d in diags)

    def test_level_and_class_mutually_exclusive(self):
        diags = diag_codes(
            {
                "priorityClasses": [
                    {"name": "x", "value": 5, "globalDefault": False, "description": ""}
                ],
                "services": [
                    {
                        "id": "s",
                        "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1},
                        "priorityClassName": "x",
                        "level": 2,
                    }
                ],
            }
        )
        assert any("mutually exclusive" in d.message for d in diags)

    def test_unsorted_events_rejected(self):
        diags = diag_codes(
            {
                "nodes": [{"id": "n", "capacity": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1}}],
                "events": [
                    {"time": 10, "kind": "NodeDown", "node": "n"},
                    {"time": 5, "kind": "NodeUp", "node": "n"},
                ],
            }
        )
        assert any("sorted" in d.message for d in diags)

    def test_dangling_references_reported(self):
        diags = diag_codes(
            {
                "services": [
                    {
                        "id": "s",
                        "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1},
                        "ownerRefs": ["ghost"],
                        "image": "no-img",
                    }
                ],
                "events": [{"time": 0, "kind": "SubmitService", "service": "other"}],
            }
        )
        messages = " | ".join(d.message for d in diags)
        assert "ghost" in messages and "no-img" in messages and "other" in messages

    def test_duplicate_ids_rejected(self):
        diags = diag_codes(
            {
                "nodes": [
                    {"id": "x", "capacity": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1}}
                ],
                "services": [
                    {"id": "x", "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1}}
                ],
            }
        )
        assert any("duplicate id" in d.message for d in diags)

    def test_two_global_defaults_rejected(self):
        diags = diag_codes(
            {
                "priorityClasses": [
                    {"name": "a", "value": 1, "globalDefault": True, "description": ""},
                    {"name": "b", "value": 2, "globalDefault": True, "description": ""},
                ]
            }
        )
        assert any("global default" in d.message for d in diags)

    def test_ownership_cycle_rejected(self):
        diags = diag_codes(
            {
                "services": [
                    {"id": "a", "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1}, "ownerRefs": ["b"]},
                    {"id": "b", "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1}, "ownerRefs": ["a"]},
                ]
            }
        )
        assert any("cycle" in d.message for d in diags)

    def test_gc_rule_must_constrain_something(self):
        diags = diag_codes({"gcPolicy": [{"all": False}]})
        assert any("constrains nothing" in d.message for d in diags)

    def test_round_trip_parse_serialize_parse(self):
        for name in GOLDENS:
            first = load_scenario(golden_path(name))
            text = serialize_scenario(first)
            second = parse_scenario(json.loads(text))
            assert first == second
            # Canonical form is a fixpoint.
            assert serialize_scenario(second) == text

    def test_docker_chain_parses_to_published_values(self):
        scenario = load_scenario(golden_path("gc"))
        rules = scenario.gc_policy
        assert len(rules) == 4
        assert rules[0].match_all is False
        assert rules[0].filters == [
            {"type": "source.local"},
            {"type": "exec.cachemount"},
            {"type": "source.git.checkout"},
        ]
        assert rules[0].keep_duration_secs == 48 * 3600
        assert rules[0].keep_bytes == 512_000_000
        assert (rules[1].keep_duration_secs, rules[1].keep_bytes) == (1440 * 3600, 26_000_000_000)
        assert (rules[2].match_all, rules[2].keep_duration_secs, rules[2].keep_bytes) == (
            False,
            None,
            26_000_000_000,
        )
        assert (rules[3].match_all, rules[3].keep_bytes) == (True, 26_000_000_000)


class TestCli:
    def test_validate_ok_exit_zero(self, preemption_scenario_path):
        assert cli.main(["validate", preemption_scenario_path]) == 0

    def test_validate_bad_file_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.scenario"
        bad.write_text("{not json")
        assert cli.main(["validate", str(bad)]) == 1
        assert "syntax" in capsys.readouterr().err

    def test_validate_empty_file_is_syntax_error(self, tmp_path):
        empty = tmp_path / "empty.scenario"
        empty.write_text("")
        assert cli.main(["validate", str(empty)]) == 1

    def test_validate_unreadable_exit_one(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "missing.scenario")]) == 1

    def test_run_writes_log_report_csv_figures(self, tmp_path, rebalance_scenario_path):
        out = tmp_path / "out"
        assert cli.main(["run", rebalance_scenario_path, "--out", str(out)]) == 0
        for filename in (
            "events.log",
            "report.json",
            "utilization.csv",
            "utilization.png",
            "activity.png",
        ):
            path = out / filename
            assert path.exists() and path.stat().st_size > 0
        report = json.loads((out / "report.json").read_text())
        assert report["migrations"] == 2
        assert report["finalImbalance"] < 0.25

    def test_run_text_format_writes_table(self, tmp_path, preemption_scenario_path):
        out = tmp_path / "out"
        assert (
            cli.main(
                ["run", preemption_scenario_path, "--out", str(out), "--format", "text", "--no-figures"]
            )
            == 0
        )
        text = (out / "report.txt").read_text()
        assert "evictions" in text and "preempted" in text

    def test_run_until_zero_empty_log(self, tmp_path, preemption_scenario_path):
        out = tmp_path / "out"
        assert (
            cli.main(
                ["run", preemption_scenario_path, "--out", str(out), "--until", "0", "--no-figures"]
            )
            == 0
        )
        assert (out / "events.log").read_text() == ""

    def test_run_twice_identical_log_bytes(self, tmp_path, gc_scenario_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", gc_scenario_path, "--out", str(out1), "--no-figures"]) == 0
        assert cli.main(["run", gc_scenario_path, "--out", str(out2), "--no-figures"]) == 0
        assert (out1 / "events.log").read_bytes() == (out2 / "events.log").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_seed_does_not_affect_the_run(self, tmp_path, preemption_scenario_path):
        # The engine itself uses no randomness; the seed only feeds
        # generator-side tooling.
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(
            ["run", preemption_scenario_path, "--out", str(out1), "--seed", "1", "--no-figures"]
        ) == 0
        assert cli.main(
            ["run", preemption_scenario_path, "--out", str(out2), "--seed", "99", "--no-figures"]
        ) == 0
        assert (out1 / "events.log").read_bytes() == (out2 / "events.log").read_bytes()

    def test_out_falls_back_to_env(self, tmp_path, monkeypatch, preemption_scenario_path):
        monkeypatch.setenv("ORCHSIM_OUT", str(tmp_path / "envout"))
        assert cli.main(["run", preemption_scenario_path, "--no-figures"]) == 0
        assert (tmp_path / "envout" / "events.log").exists()

    def test_run_missing_out_is_runtime_error(self, monkeypatch, preemption_scenario_path):
        monkeypatch.delenv("ORCHSIM_OUT", raising=False)
        assert cli.main(["run", preemption_scenario_path]) == 2

    def test_run_invalid_scenario_exit_one(self, tmp_path):
        bad = tmp_path / "bad.scenario"
        bad.write_text(
            json.dumps(
                {
                    "services": [
                        {
                            "id": "s",
                            "request": {"cpuMillis": 1, "memoryBytes": 1, "diskBytes": 1},
                            "priorityClassName": "ghost",
                        }
                    ]
                }
            )
        )
        out = tmp_path / "out"
        assert cli.main(["run", str(bad), "--out", str(out)]) == 1

    def test_report_recomputation_matches_run_report(self, tmp_path, gc_scenario_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", gc_scenario_path, "--out", str(out), "--no-figures"]) == 0
        run_report = json.loads((out / "report.json").read_text())
        capsys.readouterr()  # drain the run summary
        assert cli.main(["report", str(out / "events.log"), "--json"]) == 0
        recomputed = json.loads(capsys.readouterr().out)
        assert recomputed == run_report

    def test_report_counts_deletions_by_category(self, tmp_path, gc_scenario_path, capsys):
        out = tmp_path / "out"
        cli.main(["run", gc_scenario_path, "--out", str(out), "--no-figures"])
        capsys.readouterr()
        cli.main(["report", str(out / "events.log"), "--json"])
        report = json.loads(capsys.readouterr().out)
        deletions = report["gcDeletions"]
        assert deletions["ttl-service"] == 1
        assert deletions["ttl-job"] == 1
        assert deletions["image-ttl"] == 1

    def test_report_preemption_log_shows_one_eviction(self, tmp_path, preemption_scenario_path, capsys):
        out = tmp_path / "out"
        cli.main(["run", preemption_scenario_path, "--out", str(out), "--no-figures"])
        capsys.readouterr()
        cli.main(["report", str(out / "events.log"), "--json"])
        report = json.loads(capsys.readouterr().out)
        assert report["evictions"] == {"preempted": 1}

    def test_report_empty_log_all_zero(self, tmp_path, capsys):
        empty = tmp_path / "empty.log"
        empty.write_text("")
        assert cli.main(["report", str(empty), "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["evictions"] == {} and report["migrations"] == 0
        assert report["gcDeletions"] == {} and report["progressLost"] == 0

    def test_report_malformed_line_errors_with_line_number(self, tmp_path, capsys):
        log = tmp_path / "events.log"
        log.write_text('{"time":0,"kind":"node-up","node":"n"}\nnot json\n')
        assert cli.main(["report", str(log)]) == 1
        assert "line 2" in capsys.readouterr().err


def test_scenario_to_dict_keeps_levels():
    scenario = load_scenario(golden_path("preemption"))
    doc = scenario_to_dict(scenario)
    by_id = {entry["id"]: entry for entry in doc["services"]}
    assert by_id["svc-frontend"]["level"] == 1
    assert "priorityClassName" not in by_id["svc-frontend"]
