import json
import os

import numpy as np
import pytest

from mvbandit.cli import main


def run(argv):
    return main(argv)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


FAST_NET = [
    "--embed", "4", "--agg", "6", "--latent", "3", "--f-hidden", "8",
    "--dec-hidden", "8", "--epochs", "2", "--batch", "64",
]


def test_limits_example1_values(capsys):
    assert run(["limits", "--example1"]) == 0
    out = capsys.readouterr().out
    assert "H_a=0.896" in out
    assert "I=2.000" in out
    assert "H_cond=0.571" in out or "H_cond=0.570" in out
    assert "heuristic=0.673" in out


def test_limits_requires_input():
    assert run(["limits"]) == 1


def test_gen_data_deterministic(tmp_path):
    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    for out in (a, b):
        assert run([
            "gen-data", "--family", "ihdp-b", "--missing", "0.3", "--seed", "7",
            "--out", out,
        ]) == 0
    assert read(a) == read(b)
    assert os.path.exists(str(tmp_path / "a_truth.csv"))
    assert os.path.exists(str(tmp_path / "a.schema.json"))
    assert os.path.exists(a + ".manifest.json")


def test_unknown_family_exits_with_usage_error(tmp_path):
    assert run([
        "gen-data", "--family", "nope", "--out", str(tmp_path / "x.csv"),
    ]) == 1


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A small end-to-end digit pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "digit.csv")
    pvae = str(root / "pvae.json")
    prop = str(root / "prop.json")
    cpvae = str(root / "cpvae.json")
    assert run([
        "gen-data", "--family", "digit", "--n", "400", "--missing", "0.3",
        "--seed", "3", "--out", data,
    ]) == 0
    assert run(["train-pvae", "--data", data, "--out", pvae, *FAST_NET]) == 0
    assert run([
        "fit-propensity", "--data", data, "--pvae", pvae, "--m", "2",
        "--fit-epochs", "50", "--out", prop,
    ]) == 0
    assert run([
        "train-cpvae", "--data", data, "--pvae", pvae, "--propensity", prop,
        "--out", cpvae, *FAST_NET,
    ]) == 0
    return {"root": root, "data": data, "pvae": pvae, "prop": prop, "cpvae": cpvae}


def test_model_files_tagged(pipeline):
    assert json.load(open(pipeline["pvae"]))["kind"] == "pvae"
    assert json.load(open(pipeline["prop"]))["kind"] == "propensity"
    assert json.load(open(pipeline["cpvae"]))["kind"] == "cpvae"


def test_recommend_writes_expected_columns(pipeline):
    out = str(pipeline["root"] / "recs.csv")
    assert run([
        "recommend", "--data", pipeline["data"], "--pvae", pipeline["pvae"],
        "--cpvae", pipeline["cpvae"], "--estimator", "cpvae",
        "--strategy", "cons:0.1", "--u", "20", "--seed", "5", "--out", out,
    ]) == 0
    lines = open(out).read().strip().splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["instance", "action"]
    assert "survivors" in header and "risk" in header
    assert len(lines) == 401


def test_conservative_near_one_matches_imputation_actions(pipeline):
    out_c = str(pipeline["root"] / "rec_cons.csv")
    out_i = str(pipeline["root"] / "rec_imp.csv")
    # rows with no missing attributes must agree between cons c~1 and imputation
    assert run([
        "recommend", "--data", pipeline["data"], "--pvae", pipeline["pvae"],
        "--cpvae", pipeline["cpvae"], "--estimator", "cpvae",
        "--strategy", "cons:0.999", "--u", "10", "--seed", "5", "--out", out_c,
    ]) == 0
    assert run([
        "recommend", "--data", pipeline["data"], "--pvae", pipeline["pvae"],
        "--cpvae", pipeline["cpvae"], "--estimator", "cpvae",
        "--strategy", "imputation", "--seed", "5", "--out", out_i,
    ]) == 0
    import csv as _csv

    rows_c = list(_csv.DictReader(open(out_c)))
    rows_i = list(_csv.DictReader(open(out_i)))
    from mvbandit.cli import _load_dataset

    data = _load_dataset(pipeline["data"])
    checked = 0
    for i in range(len(data)):
        if not data.mask[i].any():
            assert rows_c[i]["action"] == rows_i[i]["action"]
            checked += 1
    assert checked > 0


def test_rerun_reproduces_outputs_byte_identically(pipeline):
    out = str(pipeline["root"] / "recs2.csv")
    argv = [
        "recommend", "--data", pipeline["data"], "--pvae", pipeline["pvae"],
        "--cpvae", pipeline["cpvae"], "--estimator", "cpvae",
        "--strategy", "mer", "--t", "3", "--seed", "9", "--out", out,
    ]
    assert run(argv) == 0
    first = read(out)
    assert run(["rerun", out + ".manifest.json"]) == 0
    assert read(out) == first


def test_rerun_gen_data_byte_identical(tmp_path):
    out = str(tmp_path / "g.csv")
    assert run([
        "gen-data", "--family", "glucose", "--n", "300", "--missing", "0.3",
        "--seed", "11", "--out", out,
    ]) == 0
    first = read(out)
    truth_first = read(str(tmp_path / "g_truth.csv"))
    assert run(["rerun", out + ".manifest.json"]) == 0
    assert read(out) == first
    assert read(str(tmp_path / "g_truth.csv")) == truth_first


def test_risk_subcommand(pipeline, capsys):
    assert run([
        "risk", "--model", pipeline["pvae"], "--data", pipeline["data"],
        "--row", "0", "--c", "0.5",
    ]) == 0
    out = capsys.readouterr().out
    assert "risk=" in out


def test_evaluate_writes_metrics_and_details(tmp_path):
    out_dir = str(tmp_path / "run")
    assert run([
        "evaluate", "--family", "digit", "--n", "300", "--missing", "0.3",
        "--estimator", "cpvae", "--strategies", "imputation,mer",
        "--seeds", "1", "--n-test", "20", "--out-dir", out_dir,
        *FAST_NET, "--m", "2", "--t", "2", "--seed", "2",
    ]) == 0
    metrics = open(os.path.join(out_dir, "metrics.csv")).read().splitlines()
    assert metrics[0] == (
        "run_id,family,strategy,c,avg_reward,se,tail_fraction,tail_count,"
        "n_test,delta_ate"
    )
    assert len(metrics) == 3  # two strategies x one seed
    details = open(os.path.join(out_dir, "details.csv")).read().splitlines()
    assert len(details) == 1 + 2 * 20


def test_config_file_provides_defaults(tmp_path):
    cfg = str(tmp_path / "cfg.json")
    json.dump({"family": "ihdp-b", "missing": 0.1, "n": 50}, open(cfg, "w"))
    out = str(tmp_path / "cfgd.csv")
    assert run(["gen-data", "--config", cfg, "--seed", "1", "--out", out]) == 0
    lines = open(out).read().strip().splitlines()
    assert len(lines) == 51


def test_missing_schema_is_data_error(tmp_path):
    orphan = str(tmp_path / "orphan.csv")
    open(orphan, "w").write("x0,action,reward\n1.0,0,0.5\n")
    assert run(["train-pvae", "--data", orphan, "--out", str(tmp_path / "m.json")]) == 2
