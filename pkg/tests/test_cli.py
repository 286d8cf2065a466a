import json

import numpy as np
import pytest

from visdebias.cli import load_config, main
from visdebias.core import TrainConfig, init_params
from visdebias.data import (kcore_filter, load_ground_truth, load_interactions,
                            load_visual_features, split_by_ground_truth)
from visdebias.exceptions import ConfigError
from visdebias.training import load_checkpoint

SYNTH = ["--set", "n_users=60", "--set", "n_items=80", "--set", "clicks_per_user=12"]


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--out", str(out), "--seed", "2", *SYNTH]) == 0
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "# test experiment\n"
        f"interactions = {out / 'interactions.tsv'}\n"
        f"features = {out / 'features.vft'}\n"
        f"ground_truth = {out / 'ground_truth.tsv'}\n"
        "epochs = 3\nembedding_dim = 8\nlearning_rate = 0.01\n",
        encoding="utf-8")
    return tmp_path, out, str(cfg)


def _json_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.startswith("{")]


def _train(tmp_path, cfg, model, capsys, *extra):
    assert main(["train", "--config", cfg, "--model", model, "--out", str(tmp_path / "run"),
                 *extra]) == 0
    return _json_lines(capsys.readouterr().out)[-1]["checkpoint"]


def _evaluate(cfg, ckpt, capsys, *extra):
    assert main(["evaluate", ckpt, "--config", cfg, *extra]) == 0
    return _json_lines(capsys.readouterr().out)[-1]


# ---------------------------------------------------------------- config

def test_config_defaults_and_unknown_key(tmp_path):
    cfg = load_config(None)
    assert cfg.k == 50 and cfg.train.embedding_dim == 32 and cfg.train.batch_size == 100
    assert cfg.lambda2_grid == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2]
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs = 3\nwarp_speed = 9\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="bad.cfg:2"):
        load_config(str(bad))


def test_unknown_key_exit_code(corpus, capsys):
    _, _, cfg = corpus
    assert main(["stats", "--config", cfg, "--set", "colour=red"]) == 2
    assert "unknown configuration key" in capsys.readouterr().err


# ---------------------------------------------------------------- synth / stats

def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--seed", "4", *SYNTH]) == 0
    for f in ("interactions.tsv", "features.vft", "ground_truth.tsv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["spec"]["visual_share"] == 0.5


def test_synth_invalid_spec(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "x"), "--set", "n_items=0"]) == 2


def test_stats_table(corpus, capsys):
    _, out, cfg = corpus
    assert main(["stats", "--config", cfg]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header.split() == ["#Users", "#Items", "#Interactions", "Sparsity"]
    filtered = json.loads((out / "manifest.json").read_text())["filtered"]
    cols = row.split()
    assert int(cols[1].replace(",", "")) == filtered["n_users"]
    assert int(cols[2].replace(",", "")) == filtered["n_items"]
    assert int(cols[3].replace(",", "")) == filtered["n_interactions"]


def test_stats_empty_file(tmp_path, corpus, capsys):
    _, out, _ = corpus
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    code = main(["stats", "--interactions", str(empty), "--features", str(out / "features.vft")])
    assert code == 4
    assert "error" in capsys.readouterr().err


def test_stats_parse_error_has_line(tmp_path, corpus, capsys):
    _, out, _ = corpus
    bad = tmp_path / "bad.tsv"
    bad.write_text("u1\ti1\t5\nu2\n", encoding="utf-8")
    assert main(["stats", "--interactions", str(bad), "--features",
                 str(out / "features.vft")]) == 3
    assert "bad.tsv:2" in capsys.readouterr().err


# ---------------------------------------------------------------- train / evaluate

def test_train_epochs_zero_is_init(corpus, capsys):
    tmp_path, out, cfg = corpus
    ckpt = _train(tmp_path, cfg, "VBPR", capsys, "--set", "epochs=0", "--seed", "6")
    params, tcfg = load_checkpoint(ckpt)
    assert tcfg.embedding_dim == 8 and tcfg.batch_size == 100
    ds = kcore_filter(load_interactions(out / "interactions.tsv"),
                      load_visual_features(out / "features.vft"))
    expected = init_params("VBPR", TrainConfig(embedding_dim=8, visual_dim=ds.features.shape[1],
                                               seed=6), ds.n_users, ds.n_items)
    assert params.equals(expected)
    assert (tmp_path / "run" / "VBPR_history.csv").exists()


def test_evaluate_ci_lambda_zero_matches_biased(corpus, capsys):
    tmp_path, _, cfg = corpus
    ckpt = _train(tmp_path, cfg, "CausalRec", capsys)
    plain = _evaluate(cfg, ckpt, capsys, "--lambda2", "0")
    ci = _evaluate(cfg, ckpt, capsys, "--ci", "--lambda2", "0")
    for key in ("mrr", "ndcg_at_k", "hr_at_k"):
        assert plain[key] == ci[key]
    assert plain["k"] == 50
    assert ci["config"]["train"]["lambda2"] == 0.0


def test_evaluate_vbpr_ci_matches_direct_rescoring(corpus, capsys):
    tmp_path, out, cfg = corpus
    ckpt = _train(tmp_path, cfg, "VBPR", capsys)
    report = _evaluate(cfg, ckpt, capsys, "--ci")
    # independent re-scoring with beta_i - mean(beta) + gamma_u . (gamma_i - mean(gamma))
    params, _ = load_checkpoint(ckpt)
    ds = kcore_filter(load_interactions(out / "interactions.tsv"),
                      load_visual_features(out / "features.vft"))
    split = split_by_ground_truth(ds, load_ground_truth(out / "ground_truth.tsv"))
    scores = (params.beta_i - params.beta_i.mean())[None, :] + \
        params.gamma_u @ (params.gamma_i - params.gamma_i.mean(axis=0)).T
    rr = []
    for u in range(ds.n_users):
        t = split.test[u]
        s = scores[u].copy()
        s[ds.positives[u]] = -np.inf
        rr.append(1.0 / (1 + np.sum(s > s[t]) + np.sum(s[:t] == s[t])))
    assert report["mrr"] == pytest.approx(np.mean(rr), abs=1e-12)


def test_evaluate_mf_ci_rejected(corpus, capsys):
    tmp_path, _, cfg = corpus
    ckpt = _train(tmp_path, cfg, "MF", capsys)
    assert main(["evaluate", ckpt, "--config", cfg, "--ci"]) == 5
    assert "no debiased" in capsys.readouterr().err


def test_repeated_runs_bitwise_identical(corpus, capsys):
    tmp_path, _, cfg = corpus
    blobs, reports = [], []
    for name in ("r1", "r2"):
        assert main(["train", "--config", cfg, "--model", "AMR", "--out",
                     str(tmp_path / name)]) == 0
        capsys.readouterr()
        ckpt = str(tmp_path / name / "AMR.ckpt")
        blobs.append(open(ckpt, "rb").read())
        assert main(["evaluate", ckpt, "--config", cfg, "--ci"]) == 0
        line = capsys.readouterr().out.strip()
        reports.append(line.replace(name, "RUN"))
    assert blobs[0] == blobs[1]
    assert reports[0] == reports[1]


# ---------------------------------------------------------------- sweep / compare

def test_sweep_lambda2(corpus, capsys):
    tmp_path, _, cfg = corpus
    out_csv = tmp_path / "sweep.csv"
    assert main(["sweep-lambda2", "--config", cfg, "--out", str(out_csv)]) == 0
    lines = out_csv.read_text().strip().splitlines()
    assert lines[0] == "seed,lambda2,mrr,ndcg_at_k,hr_at_k"
    rows = [line.split(",") for line in lines[1:]]
    assert [float(r[1]) for r in rows] == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2]
    capsys.readouterr()
    ckpt = _train(tmp_path, cfg, "CausalRec", capsys)
    plain = _evaluate(cfg, ckpt, capsys)
    assert float(rows[0][2]) == plain["mrr"]


def test_compare_ci(corpus, capsys):
    tmp_path, _, cfg = corpus
    outputs = []
    for name in ("c1.jsonl", "c2.jsonl"):
        assert main(["compare-ci", "--config", cfg, "--set", "epochs=1",
                     "--out", str(tmp_path / name)]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    header = outputs[0].splitlines()[0]
    assert "MRR" in header and "MRR w/ CI" in header
    rows = [json.loads(x) for x in (tmp_path / "c1.jsonl").read_text().splitlines()]
    assert [r["model"] for r in rows] == ["VBPR", "AMR", "CausalRec-A", "CausalRec-M",
                                          "CausalRec-AML", "CausalRec-MML"]
    assert all("mrr" in r and "mrr_ci" in r for r in rows)
