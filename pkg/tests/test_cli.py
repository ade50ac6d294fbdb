"""CLI behavior: schema, determinism, exit codes, library equivalence."""

import json
import subprocess
import sys

import pytest

from boxprobe import load_csv, load_model, pd_curve, pfi_permutation, squared_loss
from boxprobe.cli import RunConfig, main
from boxprobe.dataio import emit_json
from boxprobe.errors import InvalidArgumentError

CSV_TEXT = "x1,x2,y\n0,1,1\n1,2,4\n2,0,2\n3,5,13\n4,3,11\n"


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "data.csv"
    data.write_text(CSV_TEXT, encoding="utf-8")
    model = tmp_path / "model.json"
    code = main(
        ["fit", "--data", str(data), "--target", "y", "--kind", "linear", "--out", str(model)]
    )
    assert code == 0
    return {"data": str(data), "model": str(model), "dir": tmp_path}


def run_to_file(workspace, name, *args):
    out = workspace["dir"] / name
    code = main(
        [
            *args,
            "--data",
            workspace["data"],
            "--model",
            workspace["model"],
            "--target",
            "y",
            "--out",
            str(out),
        ]
    )
    return code, out


def load_doc(path):
    return json.loads(path.read_text(encoding="utf-8"))


SCHEMA_KEYS = {"schema_version", "method", "feature", "params", "seed", "stage_trace"}


def assert_schema(doc, method):
    extra = set(doc) - SCHEMA_KEYS
    assert extra in ({"points"}, {"score"})
    assert doc["schema_version"] == 1
    assert doc["method"] == method
    order = {"sampling": 0, "intervention": 1, "prediction": 2, "aggregation": 3}
    ranks = [order[r["stage"]] for r in doc["stage_trace"]]
    assert ranks == sorted(ranks)
    for record in doc["stage_trace"]:
        assert set(record) == {"stage", "description", "parameters"}


CURVE_COMMANDS = [
    (["ice", "--feature", "x1", "--row", "0"], "ice"),
    (["pd", "--feature", "x1"], "pd"),
    (["ale", "--feature", "x1", "--intervals", "3"], "ale"),
    (["ici", "--feature", "x1", "--row", "1"], "ici"),
    (["pi", "--feature", "x1"], "pi"),
]

SCORE_COMMANDS = [
    (["me", "--feature", "x1", "--row", "0"], "me"),
    (["ame", "--feature", "x1"], "ame"),
    (["shapley", "--feature", "x1", "--row", "1"], "shapley"),
    (["shapley", "--feature", "x1", "--row", "1", "--samples", "100"], "shapley"),
    (["lime", "--feature", "x1", "--row", "0", "--samples", "30"], "lime"),
    (["pd-importance", "--feature", "x1"], "pd-importance"),
    (["firm", "--feature", "x2"], "firm"),
    (["pfi", "--feature", "x1", "--repeats", "3"], "pfi"),
    (["pfi", "--feature", "x1", "--mode", "exhaustive"], "pfi"),
    (["sfimp", "--feature", "x1"], "sfimp"),
]


@pytest.mark.parametrize("args,method", CURVE_COMMANDS + SCORE_COMMANDS)
def test_subcommands_emit_valid_documents(workspace, args, method):
    code, out = run_to_file(workspace, "out.json", *args)
    assert code == 0
    doc = load_doc(out)
    assert_schema(doc, method)
    if "points" in doc:
        assert all(set(p) == {"x", "y"} for p in doc["points"])


def test_document_round_trips_byte_identical(workspace):
    code, out = run_to_file(workspace, "pd.json", "pd", "--feature", "x1")
    assert code == 0
    text = out.read_text(encoding="utf-8")
    assert emit_json(json.loads(text)) == text


def test_cli_pd_matches_library_bit_exact(workspace):
    code, out = run_to_file(workspace, "pd.json", "pd", "--feature", "x1")
    assert code == 0
    doc = load_doc(out)
    data = load_csv(workspace["data"], target="y")
    model = load_model(workspace["model"])
    curve = pd_curve(model, data, 0)
    assert [p["x"] for p in doc["points"]] == list(curve.xs)
    assert [p["y"] for p in doc["points"]] == list(curve.ys)


def test_cli_pfi_matches_library_bit_exact(workspace):
    code, out = run_to_file(
        workspace, "pfi.json", "pfi", "--feature", "x2", "--seed", "5", "--repeats", "4"
    )
    assert code == 0
    doc = load_doc(out)
    data = load_csv(workspace["data"], target="y")
    model = load_model(workspace["model"])
    expected = pfi_permutation(model, data, 1, squared_loss(), repeats=4, seed=5)
    assert doc["score"] == expected.value
    assert doc["seed"] == 5


def test_repeat_runs_are_byte_identical(workspace):
    args = ["shapley", "--feature", "x1", "--row", "1", "--samples", "200", "--seed", "9"]
    _, first = run_to_file(workspace, "a.json", *args)
    _, second = run_to_file(workspace, "b.json", *args)
    assert first.read_bytes() == second.read_bytes()


def test_thread_count_does_not_change_bytes(workspace):
    base = ["pd", "--feature", "x1"]
    _, one = run_to_file(workspace, "t1.json", *base, "--threads", "1")
    _, eight = run_to_file(workspace, "t8.json", *base, "--threads", "8")
    assert one.read_bytes() == eight.read_bytes()
    base = ["shapley", "--feature", "x2", "--row", "0", "--samples", "64", "--seed", "3"]
    _, one = run_to_file(workspace, "s1.json", *base, "--threads", "1")
    _, eight = run_to_file(workspace, "s8.json", *base, "--threads", "8")
    assert one.read_bytes() == eight.read_bytes()


def test_csv_output_format(workspace):
    code, out = run_to_file(workspace, "pd.csv", "pd", "--feature", "x1", "--format", "csv")
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x1,y"
    assert len(lines) == 6  # five observed values
    code, out = run_to_file(workspace, "s.csv", "sfimp", "--feature", "x1", "--format", "csv")
    assert code == 0
    assert out.read_text(encoding="utf-8").startswith("method,feature,score\nsfimp,x1,")


def test_multi_feature_pd(workspace):
    code, out = run_to_file(workspace, "pd2.json", "pd", "--feature", "x1,x2")
    assert code == 0
    doc = load_doc(out)
    assert doc["feature"] == ["x1", "x2"]
    assert all(isinstance(p["x"], list) and len(p["x"]) == 2 for p in doc["points"])


def test_stdout_output(workspace, capsys):
    code = main(
        [
            "pd",
            "--feature",
            "x1",
            "--data",
            workspace["data"],
            "--model",
            workspace["model"],
            "--target",
            "y",
        ]
    )
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "pd"


def test_usage_errors_exit_1(workspace):
    assert main(["pd"]) == 1  # missing required options
    assert main(["not-a-method"]) == 1
    assert (
        main(
            [
                "pd",
                "--feature",
                "x1",
                "--data",
                workspace["data"],
                "--model",
                workspace["model"],
                "--bogus-flag",
            ]
        )
        == 1
    )
    code, _ = run_to_file(workspace, "x.json", "shapley", "--feature", "x1", "--row", "0", "--samples", "0")
    assert code == 1
    code, _ = run_to_file(workspace, "x.json", "ale", "--feature", "x1", "--intervals", "0")
    assert code == 1
    code, _ = run_to_file(workspace, "x.json", "pd", "--feature", "zz")
    assert code == 1


def test_data_errors_exit_2(workspace, tmp_path):
    missing = str(tmp_path / "missing.csv")
    assert (
        main(["pd", "--feature", "x1", "--data", missing, "--model", workspace["model"]]) == 2
    )
    # loss-based method without a target column
    assert (
        main(
            [
                "pfi",
                "--feature",
                "x1",
                "--data",
                workspace["data"],
                "--model",
                workspace["model"],
            ]
        )
        == 2
    )
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\n1\n", encoding="utf-8")
    assert (
        main(["pd", "--feature", "a", "--data", str(ragged), "--model", workspace["model"]]) == 2
    )


def test_capacity_error_exits_3(tmp_path):
    p = 13
    header = ",".join([f"x{j}" for j in range(p)] + ["y"])
    rows = ["," .join(str(float(i + j)) for j in range(p + 1)) for i in range(3)]
    data = tmp_path / "wide.csv"
    data.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    model = tmp_path / "m.json"
    # knn fit works at any width
    assert main(["fit", "--data", str(data), "--target", "y", "--kind", "knn", "--out", str(model)]) == 0
    code = main(
        [
            "shapley",
            "--feature",
            "x0",
            "--row",
            "0",
            "--data",
            str(data),
            "--model",
            model.as_posix(),
        ]
    )
    assert code == 3


def test_numeric_error_exits_3(workspace, tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("x1,x2,y\n1,0,0\n1,1,1\n", encoding="utf-8")
    model = tmp_path / "m.json"
    assert main(
        ["fit", "--data", str(flat), "--target", "y", "--kind", "knn", "--k", "2", "--out", str(model)]
    ) == 0
    code = main(
        ["ale", "--feature", "x1", "--data", str(flat), "--model", str(model)]
    )
    assert code == 3


def test_help_exits_0():
    assert main(["--help"]) == 0
    assert main(["pd", "--help"]) == 0


def test_runconfig_rejects_unknown_method_and_params():
    with pytest.raises(InvalidArgumentError):
        RunConfig(method="mystery", data_path="x.csv")
    with pytest.raises(InvalidArgumentError):
        RunConfig(method="pd", data_path="x.csv", params={"wat": 1})
    with pytest.raises(InvalidArgumentError):
        RunConfig(method="pd", data_path="x.csv", threads=0)
    with pytest.raises(InvalidArgumentError):
        RunConfig(method="pd", data_path="x.csv", fmt="yaml")


def test_module_entry_point(workspace):
    result = subprocess.run(
        [
            sys.executable,
            "-m",
            "boxprobe",
            "pd",
            "--feature",
            "x1",
            "--data",
            workspace["data"],
            "--model",
            workspace["model"],
            "--target",
            "y",
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert json.loads(result.stdout)["method"] == "pd"
