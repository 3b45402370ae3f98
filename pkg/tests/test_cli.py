import json

import pytest

from clinfed.cli import main

from helpers import base_registry

ONTOLOGY_TEXT = """\
concept hec:Jaw Anatomical "Jaw"
concept hec:Tooth Anatomical "Tooth"
rel hec:Tooth part_of hec:Jaw
"""

CSV_TEXT = (
    "patient,date,bp,severity\n"
    "P1,2008-03-01,120,Severe\n"
    "P2,2009-01-01,110,No\n"
)


@pytest.fixture
def env(tmp_path):
    (tmp_path / "registry.json").write_text(
        json.dumps(base_registry().to_dict()), encoding="utf-8"
    )
    (tmp_path / "ontology.txt").write_text(ONTOLOGY_TEXT, encoding="utf-8")
    (tmp_path / "data.csv").write_text(CSV_TEXT, encoding="utf-8")
    (tmp_path / "mapping.json").write_text(
        json.dumps(
            {
                "patient_column": "patient",
                "visit_date_column": "date",
                "event_type": "Exam",
                "columns": {
                    "bp": {"cvt_id": "BP", "category": "Measurement"},
                    "severity": {
                        "cvt_id": "Sev",
                        "category": "ObservationByClassification",
                    },
                },
            }
        ),
        encoding="utf-8",
    )
    return tmp_path


def run(env, *argv):
    return main(["--data-dir", str(env / "store"), *argv])


def seed(env):
    assert run(env, "metadata", "define", str(env / "registry.json")) == 0
    assert run(env, "ontology", "load", str(env / "ontology.txt")) == 0
    assert run(
        env, "data", "ingest-csv", str(env / "data.csv"),
        "--mapping", str(env / "mapping.json"),
    ) == 0


class TestExitCodes:
    def test_success_is_zero(self, env, capsys):
        assert run(env, "metadata", "define", str(env / "registry.json")) == 0
        out = capsys.readouterr().out
        assert '"cvts": 3' in out

    def test_domain_error_is_one(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "data", "view", "nobody") == 1
        assert "UnknownPatient" in capsys.readouterr().err

    def test_query_syntax_error_is_two(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "query", "run", "FIND events WHERE AND") == 2
        assert "SyntaxError" in capsys.readouterr().err

    def test_missing_file_is_two(self, env):
        assert run(env, "metadata", "define", str(env / "nope.json")) == 2

    def test_usage_error_is_two(self, env, capsys):
        with pytest.raises(SystemExit) as exc:
            run(env, "metadata")  # missing action
        assert exc.value.code == 2
        capsys.readouterr()
        assert run(env, "fed", "demo", "--slow", "B") == 2  # NODE:MS expected


class TestQueryCommand:
    def test_jsonl_rows_parse_and_match_table(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "--format", "jsonl", "query", "run",
                   "FIND events WHERE BP >= 110") == 0
        jsonl = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert {r["patient"] for r in jsonl} == {"P1", "P2"}
        assert run(env, "query", "run", "FIND events WHERE BP >= 110") == 0
        table = capsys.readouterr().out
        for row in jsonl:
            assert row["event_id"] in table

    def test_explain_shows_enhanced_concepts(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "query", "run", "--explain",
                   'FIND events WHERE concept = "hec:Jaw"') == 0
        out = capsys.readouterr().out
        assert "hec:Tooth" in out and "selectivity" in out

    def test_no_enhance_skips_expansion(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "query", "run", "--no-enhance", "--explain",
                   'FIND events WHERE concept = "hec:Jaw"') == 0
        assert "hec:Tooth" not in capsys.readouterr().out

    def test_state_survives_between_invocations(self, env, capsys):
        seed(env)
        capsys.readouterr()
        # a brand-new CLI invocation (fresh in-process app) sees the data
        assert run(env, "--format", "jsonl", "query", "run",
                   "FIND patients WHERE BP > 0") == 0
        rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert [r["patient"] for r in rows] == ["P1", "P2"]


class TestFedCommand:
    def test_demo_returns_three_rows(self, env, capsys):
        assert run(env, "--format", "jsonl", "fed", "demo") == 0
        captured = capsys.readouterr()
        rows = [json.loads(l) for l in captured.out.splitlines()]
        assert [r["event_id"] for r in rows] == [
            "A-xray-1", "B-xray-1", "C-xray-1"
        ]
        status = json.loads(captured.err.strip().splitlines()[-1])
        assert status["partial"] is False

    def test_demo_with_failed_node_is_partial(self, env, capsys):
        assert run(env, "--format", "jsonl", "fed", "demo", "--fail", "B") == 0
        captured = capsys.readouterr()
        rows = [json.loads(l) for l in captured.out.splitlines()]
        assert "B-xray-1" not in {r["event_id"] for r in rows}
        status = json.loads(captured.err.strip().splitlines()[-1])
        assert status["partial"] is True and status["unreachable"] == ["B"]

    def test_demo_without_enhancement(self, env, capsys):
        assert run(env, "--format", "jsonl", "fed", "demo", "--no-enhance") == 0
        rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert [r["event_id"] for r in rows] == ["A-xray-1", "C-xray-1"]


class TestMetadataAndOntologyCommands:
    def test_metadata_list(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "metadata", "list") == 0
        listed = json.loads(capsys.readouterr().out)
        assert {c["id"] for c in listed["cvts"]} == {"BP", "Sev", "Tag"}

    def test_fragment_prints_reloadable_text(self, env, capsys):
        seed(env)
        capsys.readouterr()
        assert run(env, "ontology", "fragment", "--roots", "hec:Jaw",
                   "--depth", "1") == 0
        text = capsys.readouterr().out
        assert "concept hec:Tooth" in text and "rel hec:Tooth part_of hec:Jaw" in text

    def test_sim_with_counts_file(self, env, capsys):
        seed(env)
        (env / "counts.json").write_text(
            json.dumps({"hec:Jaw": 1, "hec:Tooth": 1}), encoding="utf-8"
        )
        capsys.readouterr()
        assert run(env, "ontology", "sim", "hec:Tooth", "hec:Tooth",
                   "--counts", str(env / "counts.json")) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["similarity"] == pytest.approx(0.6931, abs=1e-4)

    def test_map_discover(self, env, capsys):
        (env / "local.txt").write_text(
            'concept l:jaw Anatomical "Jaw"\n', encoding="utf-8"
        )
        (env / "global.txt").write_text(
            'concept hec:Jaw Anatomical "jaw"\n', encoding="utf-8"
        )
        assert run(env, "--format", "jsonl", "ontology", "map-discover",
                   "--local", str(env / "local.txt"),
                   "--global", str(env / "global.txt")) == 0
        rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert rows[0]["method"] == "ExactLabel"
