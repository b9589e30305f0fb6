import hashlib
import json
import shlex
import sys
import time

import numpy as np
import pytest

from survlime.cli import main

SET1 = ["--center", "0,0,0,0,0", "--radius", "8",
        "--coefficients", "1e-6,0.1,-0.15,1e-6,1e-6", "--lambda", "1e-5", "--v", "2",
        "--time-cap", "2000", "--prob-event", "0.9", "--n", "1000"]


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", *SET1, "--seed", "7", "--out", str(d / "set1.csv")]) == 0
    assert main(["fit-cox", "--data", str(d / "set1.csv"), "--split", "0.9", "--seed", "3",
                 "--out", str(d / "cox.json")]) == 0
    return d


def run(args, capsys=None):
    code = main([str(a) for a in args])
    err = capsys.readouterr().err if capsys is not None else ""
    return code, err


# --- simulate ---------------------------------------------------------------------------

def test_simulate_shape_and_sidecars(pipeline):
    lines = (pipeline / "set1.csv").read_text().splitlines()
    assert lines[0].split(",") == ["x1", "x2", "x3", "x4", "x5", "time", "event"]
    assert len(lines) == 1001
    manifest = load(str(pipeline / "set1.csv") + ".manifest.json")
    assert manifest["command"] == "simulate"
    assert set(manifest) >= {"config_snapshot", "input_hashes", "tool_version",
                             "schema_version"}
    assert manifest["config_snapshot"]["seed"] == 7
    sidecar = load(pipeline / "set1.config.json")
    assert sidecar["manifest_sha256"] == sha(str(pipeline / "set1.csv") + ".manifest.json")


def test_simulate_deterministic(tmp_path, pipeline):
    out = tmp_path / "again.csv"
    assert main(["simulate", *SET1, "--seed", "7", "--out", str(out)]) == 0
    assert sha(out) == sha(pipeline / "set1.csv")


@pytest.mark.parametrize("bad", [
    ["--n", "0"],
    ["--center", "0,0", "--coefficients", "1,2,3"],
    ["--center", "0,abc,0,0,0"],
    ["--radius", "-1"],
])
def test_simulate_rejects(tmp_path, capsys, bad):
    args = list(SET1)
    for flag, value in zip(bad[::2], bad[1::2]):
        args[args.index(flag) + 1] = value
    code, err = run(["simulate", *args, "--out", tmp_path / "x.csv"], capsys)
    assert code == 2
    assert "error" in err
    assert not (tmp_path / "x.csv").exists()


def test_missing_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--n", "10", "--out", str(tmp_path / "x.csv")])
    assert info.value.code == 2


# --- fit-cox ----------------------------------------------------------------------------

def test_fit_cox_metrics(pipeline):
    metrics = load(pipeline / "cox.metrics.json")
    assert metrics["n_train"] == 900 and metrics["n_test"] == 100
    assert metrics["c_index_test"] >= 0.6
    model = load(pipeline / "cox.json")
    assert model["kind"] == "cox-model"
    assert model["data_sha256"] == sha(pipeline / "set1.csv")
    assert len(model["split"]["test_rows"]) == 100


def test_fit_cox_empty_test_split(pipeline, tmp_path, capsys):
    code, err = run(["fit-cox", "--data", pipeline / "set1.csv", "--split", "1.0",
                     "--seed", "1", "--out", tmp_path / "m.json"], capsys)
    assert code == 2 and "empty test split" in err


def test_fit_cox_permutation_invariant(pipeline, tmp_path, rng):
    lines = (pipeline / "set1.csv").read_text().splitlines()
    body = lines[1:]
    order = rng.permutation(len(body))
    (tmp_path / "perm.csv").write_text("\n".join([lines[0]] + [body[i] for i in order]) + "\n")
    assert main(["fit-cox", "--data", str(tmp_path / "perm.csv"), "--split", "0.9",
                 "--seed", "3", "--out", str(tmp_path / "m.json")]) == 0
    a = load(pipeline / "cox.metrics.json")["coefficients"]
    b = load(tmp_path / "m.metrics.json")["coefficients"]
    np.testing.assert_allclose(b, a, rtol=0, atol=1e-10)


def test_inputs_untouched(pipeline, tmp_path):
    before = sha(pipeline / "set1.csv")
    main(["fit-cox", "--data", str(pipeline / "set1.csv"), "--seed", "9",
          "--out", str(tmp_path / "m.json")])
    assert sha(pipeline / "set1.csv") == before


# --- explain ----------------------------------------------------------------------------

def explain_args(pipeline, out, *extra):
    return ["explain", "--data", pipeline / "set1.csv", "--model", pipeline / "cox.json",
            "--row-index", "0", "--seed", "11", "--out", out, *extra]


def test_explain_recovers_model(pipeline, tmp_path):
    out = tmp_path / "e.json"
    assert run(explain_args(pipeline, out, "--plot"))[0] == 0
    doc = load(out)
    assert doc["kind"] == "explanation" and doc["space"] == "model"
    coefs = load(pipeline / "cox.json")["model"]["coefficients"]
    np.testing.assert_allclose(doc["coefficients"], coefs, rtol=0, atol=1e-6)
    assert doc["manifest_sha256"] == sha(str(out) + ".manifest.json")
    manifest = load(str(out) + ".manifest.json")
    assert manifest["input_hashes"]["model"] == sha(pipeline / "cox.json")
    assert manifest["config_snapshot"]["explainer"]["seed"] == 11
    assert "<svg" in (tmp_path / "e.svg").read_text()


def test_explain_degenerate_neighbourhood(pipeline, tmp_path, capsys):
    code, err = run(explain_args(pipeline, tmp_path / "e.json", "--num-samples", "3"), capsys)
    assert code == 2 and "degenerate neighborhood" in err


def test_explain_row_dimension_mismatch(pipeline, tmp_path, capsys):
    args = explain_args(pipeline, tmp_path / "e.json")
    args[args.index("--row-index"):args.index("--row-index") + 2] = ["--row-values", "1,2,3"]
    code, err = run(args, capsys)
    assert code == 3 and "row dimension mismatch" in err


def test_explain_needs_one_row_selector(pipeline, tmp_path, capsys):
    code, _ = run(explain_args(pipeline, tmp_path / "e.json", "--row-values", "0,0,0,0,0"),
                  capsys)
    assert code == 2


def adapter_cmd(pipeline):
    return shlex.join([sys.executable, "-m", "survlime.adapter", "--model",
                       str(pipeline / "cox.json")])


def test_adapter_survival_and_cumulative_agree(pipeline, tmp_path):
    out = {}
    for kind in ("cumulative", "survival"):
        path = tmp_path / f"{kind}.json"
        code, _ = run(["explain", "--data", pipeline / "set1.csv", "--model-cmd",
                       adapter_cmd(pipeline), "--type-fn", kind, "--row-index", "5",
                       "--num-samples", "300", "--seed", "2", "--out", path])
        assert code == 0
        out[kind] = load(path)
    assert out["cumulative"]["space"] == "raw"
    np.testing.assert_allclose(out["survival"]["coefficients"],
                               out["cumulative"]["coefficients"], rtol=0, atol=1e-8)


def test_adapter_failure_exit_code(pipeline, tmp_path, capsys):
    code, err = run(["explain", "--data", pipeline / "set1.csv", "--model-cmd",
                     shlex.join([sys.executable, "-c", "import sys; sys.exit(4)"]),
                     "--row-index", "0", "--num-samples", "50", "--out",
                     tmp_path / "e.json"], capsys)
    assert code == 5 and "status 4" in err
    assert not (tmp_path / "e.json").exists()


# --- montecarlo and plot ----------------------------------------------------------------

def mc_args(pipeline, out, rows, reps, *extra):
    return ["montecarlo", "--data", pipeline / "set1.csv", "--model", pipeline / "cox.json",
            "--rows", rows, "--num-repetitions", reps, "--num-samples", "200",
            "--seed", "5", "--out", out, *extra]


def test_montecarlo_single_repetition_is_explain(pipeline, tmp_path):
    assert run(mc_args(pipeline, tmp_path / "mc.json", "4", 1))[0] == 0
    mc = load(tmp_path / "mc.json")
    np.testing.assert_array_equal(mc["mean"][0], mc["per_repetition"][0][0])


def test_montecarlo_byte_reproducible(pipeline, tmp_path):
    for name in ("a.json", "b.json"):
        assert run(mc_args(pipeline, tmp_path / name, "1,2", 3))[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_montecarlo_all_test_and_plot(pipeline, tmp_path):
    out = tmp_path / "mc.json"
    assert run(mc_args(pipeline, out, "all-test", 2, "--plot"))[0] == 0
    doc = load(out)
    assert doc["rows"] == load(pipeline / "cox.json")["split"]["test_rows"]
    assert np.asarray(doc["per_repetition"]).shape == (100, 2, 5)
    svg = (tmp_path / "mc.svg").read_text()
    assert run(["plot", "--input", out, "--figure-path", tmp_path / "re.svg"])[0] == 0
    assert (tmp_path / "re.svg").read_text() == svg


def test_montecarlo_all_test_needs_bundle(pipeline, tmp_path, capsys):
    code, err = run(["montecarlo", "--data", pipeline / "set1.csv", "--model-cmd",
                     adapter_cmd(pipeline), "--rows", "all-test", "--out",
                     tmp_path / "mc.json"], capsys)
    assert code == 2 and "all-test" in err


def test_plot_rejects_other_documents(pipeline, tmp_path, capsys):
    code, err = run(["plot", "--input", pipeline / "cox.metrics.json"], capsys)
    assert code == 3 and "not an explanation" in err


def test_study_scale_runtime(pipeline, tmp_path):
    """100 test rows x 100 repetitions x 1000 neighbours within ten minutes."""
    start = time.perf_counter()
    out = tmp_path / "study.json"
    assert main(["montecarlo", "--data", str(pipeline / "set1.csv"), "--model",
                 str(pipeline / "cox.json"), "--rows", "all-test", "--num-repetitions", "100",
                 "--num-samples", "1000", "--seed", "1", "--out", str(out)]) == 0
    assert time.perf_counter() - start < 600.0
    assert np.asarray(load(out)["per_repetition"]).shape == (100, 100, 5)
