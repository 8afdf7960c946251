"""End-to-end command-line pipeline: every subcommand in-process, exit codes,
artifact determinism, and the layered configuration rules."""
from __future__ import annotations

import json
import os

import numpy as np
import pytest

from lactr.cli import main
from lactr.store import load_model, load_topics, save_topics
from lactr.topics import TopicModel

SIM_ARGS = ["--users", "12", "--items", "25", "--k", "3",
            "--vocab-size", "40", "--doc-length", "25",
            "--graph", "erdos_renyi:0.3", "--target-rate", "0.15",
            "--neg-samples", "2", "--seed", "7"]
TRAIN_ARGS = ["--k", "3", "--max-sweeps", "6", "--tol", "0",
              "--lda-iters", "40", "--seed", "7"]


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), *SIM_ARGS]) == 0
    return out


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, sim_dir):
    out = tmp_path_factory.mktemp("model")
    assert main(["train", "--data", str(sim_dir), "--out", str(out),
                 *TRAIN_ARGS]) == 0
    return out


class TestSimulate:
    def test_writes_complete_dataset(self, sim_dir):
        for name in ("vocabulary.txt", "bow.tsv", "users.txt", "votes.tsv",
                     "edges.tsv", "attention_edges.tsv", "attribution.tsv",
                     "stats.json", "items.tsv", "ground_truth.npz",
                     "sources.tsv", "manifest.json"):
            assert (sim_dir / name).exists(), name

    def test_reports_positive_rate(self, sim_dir, capsys, tmp_path):
        assert main(["simulate", "--out", str(tmp_path), *SIM_ARGS]) == 0
        out = capsys.readouterr().out
        assert "positive pair rate" in out

    def test_repeat_runs_are_byte_identical(self, sim_dir, tmp_path):
        assert main(["simulate", "--out", str(tmp_path), *SIM_ARGS]) == 0
        for name in ("votes.tsv", "bow.tsv", "attention_edges.tsv",
                     "attribution.tsv", "ground_truth.npz", "sources.tsv"):
            assert _read(tmp_path / name) == _read(sim_dir / name), name

    def test_ground_truth_bundle_loads(self, sim_dir):
        state, meta = load_model(str(sim_dir / "ground_truth.npz"))
        assert meta["role"] == "ground_truth"
        assert state.k == 3


class TestPrep:
    def test_prep_from_raw_files(self, sim_dir, tmp_path, capsys):
        code = main(["prep",
                     "--items", str(sim_dir / "items.tsv"),
                     "--votes", str(sim_dir / "votes.tsv"),
                     "--edges", str(sim_dir / "edges.tsv"),
                     "--out", str(tmp_path),
                     "--min-votes", "1", "--min-words", "1",
                     "--neg-samples", "2", "--seed", "7"])
        assert code == 0
        assert "positive rate" in capsys.readouterr().out
        stats = json.loads(_read(tmp_path / "stats.json"))
        assert stats["n_users"] >= 1
        assert 0.0 < stats["positive_rate"] < 1.0
        manifest = json.loads(_read(tmp_path / "manifest.json"))
        assert manifest["command"] == "prep"
        assert len(manifest["config_hash"]) == 64

    def test_missing_input_file_is_a_data_error(self, tmp_path):
        code = main(["prep", "--items", str(tmp_path / "absent.tsv"),
                     "--votes", str(tmp_path / "absent.tsv"),
                     "--edges", str(tmp_path / "absent.tsv"),
                     "--out", str(tmp_path)])
        assert code == 2

    def test_empty_vote_log_is_a_data_error(self, sim_dir, tmp_path):
        empty = tmp_path / "votes.tsv"
        empty.write_text("")
        code = main(["prep", "--items", str(sim_dir / "items.tsv"),
                     "--votes", str(empty),
                     "--edges", str(sim_dir / "edges.tsv"),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_overfiltering_everything_is_a_data_error(self, sim_dir,
                                                      tmp_path):
        code = main(["prep", "--items", str(sim_dir / "items.tsv"),
                     "--votes", str(sim_dir / "votes.tsv"),
                     "--edges", str(sim_dir / "edges.tsv"),
                     "--out", str(tmp_path), "--min-votes", "10000"])
        assert code == 2


class TestLdaInit:
    def test_writes_topic_bundle_and_dump(self, sim_dir, tmp_path):
        code = main(["lda-init", "--data", str(sim_dir),
                     "--out", str(tmp_path), "--k", "3",
                     "--lda-iters", "40", "--seed", "7"])
        assert code == 0
        tm, meta = load_topics(str(tmp_path / "topics.npz"))
        assert tm.k == 3 and tm.n_items == 25 and tm.vocab_size == 40
        text = (tmp_path / "topics.txt").read_text()
        assert text.startswith("topic 0:")


class TestTrain:
    def test_writes_model_trace_figure_manifest(self, model_dir):
        for name in ("model.npz", "trace.csv", "trace.png", "manifest.json"):
            assert (model_dir / name).exists(), name
        manifest = json.loads(_read(model_dir / "manifest.json"))
        assert manifest["outputs"]["sweeps"] == 6
        assert np.isfinite(manifest["outputs"]["final_objective"])

    def test_trace_objective_never_decreases(self, model_dir):
        rows = (model_dir / "trace.csv").read_text().strip().splitlines()
        assert rows[0] == "sweep,log_likelihood,delta"
        values = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(values) == 7  # initial state plus six sweeps
        for a, b in zip(values, values[1:]):
            assert b >= a - 1e-10 * abs(a)

    def test_training_is_deterministic(self, sim_dir, model_dir, tmp_path):
        assert main(["train", "--data", str(sim_dir), "--out", str(tmp_path),
                     *TRAIN_ARGS]) == 0
        assert _read(tmp_path / "model.npz") == _read(model_dir / "model.npz")
        assert _read(tmp_path / "trace.csv") == _read(model_dir / "trace.csv")

    def test_explicit_warm_start_bundle(self, sim_dir, tmp_path):
        init_dir = tmp_path / "init"
        assert main(["lda-init", "--data", str(sim_dir),
                     "--out", str(init_dir), "--k", "3",
                     "--lda-iters", "40", "--seed", "7"]) == 0
        out = tmp_path / "warm"
        assert main(["train", "--data", str(sim_dir), "--out", str(out),
                     "--init", str(init_dir / "topics.npz"),
                     *TRAIN_ARGS]) == 0
        assert (out / "model.npz").exists()

    def test_mismatched_warm_start_is_a_data_error(self, sim_dir, tmp_path):
        init_dir = tmp_path / "init5"
        assert main(["lda-init", "--data", str(sim_dir),
                     "--out", str(init_dir), "--k", "5",
                     "--lda-iters", "20"]) == 0
        code = main(["train", "--data", str(sim_dir),
                     "--out", str(tmp_path / "out"),
                     "--init", str(init_dir / "topics.npz"), *TRAIN_ARGS])
        assert code == 2

    def test_invalid_hyperparameter_is_a_data_error(self, sim_dir, tmp_path):
        code = main(["train", "--data", str(sim_dir),
                     "--out", str(tmp_path), "--k", "3", "--lambda-u", "-1"])
        assert code == 2

    def test_degenerate_warm_start_is_a_numeric_error(self, sim_dir,
                                                      tmp_path):
        # topic 0 owns every document yet places zero mass on a word the
        # first document uses, so the word term hits log(0) immediately
        from lactr import dataset
        corpus = dataset.load_corpus(str(sim_dir))
        w0 = int(corpus.documents[0].word_ids[0])
        beta = np.full((2, 40), 1.0 / 39)
        beta[:, w0] = 0.0
        beta[1] = 1.0 / 40
        theta = np.zeros((25, 2))
        theta[:, 0] = 1.0
        bad = tmp_path / "bad.npz"
        save_topics(str(bad), TopicModel(theta, beta, 2))
        code = main(["train", "--data", str(sim_dir),
                     "--out", str(tmp_path / "out"), "--k", "2",
                     "--init", str(bad), "--max-sweeps", "2"])
        assert code == 3


class TestEval:
    EVAL_ARGS = ["--k", "3", "--max-sweeps", "3", "--tol", "0",
                 "--lda-iters", "30", "--folds", "2", "--x-grid", "2,5",
                 "--neg-samples", "2", "--seed", "7"]

    def test_compares_models_and_writes_artifacts(self, sim_dir, tmp_path,
                                                  capsys):
        code = main(["eval", "--data", str(sim_dir), "--out", str(tmp_path),
                     "--models", "lactr,ctr,popularity,random",
                     *self.EVAL_ARGS])
        assert code == 0
        out = capsys.readouterr().out
        for label in ("lactr/attention", "lactr/interest", "ctr/interest",
                      "popularity/none", "random/none"):
            assert label in out
        rows = (tmp_path / "results.csv").read_text().strip().splitlines()
        assert rows[0] == "model,latent,mode,fold,x,mean_recall,n_users"
        # 5 model/latent series x 2 folds x 2 cutoffs
        assert len(rows) - 1 == (2 + 1 + 1 + 1) * 2 * 2
        assert (tmp_path / "recall_curves.png").exists()
        assert json.loads(_read(tmp_path / "manifest.json"))["command"] == \
            "eval"

    def test_eval_is_deterministic(self, sim_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["eval", "--data", str(sim_dir), "--out", str(out),
                         "--models", "lactr,popularity",
                         *self.EVAL_ARGS]) == 0
        assert _read(a / "results.csv") == _read(b / "results.csv")

    def test_sweep_over_attention_weight(self, sim_dir, tmp_path):
        code = main(["eval", "--data", str(sim_dir), "--out", str(tmp_path),
                     "--sweep", "lambda_phi=0.01,1.0",
                     "--latents", "attention", *self.EVAL_ARGS])
        assert code == 0
        rows = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert rows[0] == "lambda_phi,latent,x,mean_recall"
        assert len(rows) - 1 == 2
        assert (tmp_path / "sweep.png").exists()

    def test_malformed_sweep_is_a_data_error(self, sim_dir, tmp_path):
        code = main(["eval", "--data", str(sim_dir), "--out", str(tmp_path),
                     "--sweep", "lambda_u=1,2", *self.EVAL_ARGS])
        assert code == 2

    def test_unknown_model_is_a_data_error(self, sim_dir, tmp_path):
        code = main(["eval", "--data", str(sim_dir), "--out", str(tmp_path),
                     "--models", "svd", *self.EVAL_ARGS])
        assert code == 2


class TestPredict:
    def test_ranked_output(self, model_dir, tmp_path, capsys):
        out_file = tmp_path / "top.tsv"
        code = main(["predict", "--model", str(model_dir / "model.npz"),
                     "--user", "u0000", "--top", "5",
                     "--out", str(out_file)])
        assert code == 0
        body = capsys.readouterr().out
        assert body == out_file.read_text()
        lines = body.strip().splitlines()
        assert len(lines) == 5
        scores = [float(line.split("\t")[1]) for line in lines]
        assert scores == sorted(scores, reverse=True)
        assert all(len(line.split("\t")) == 3 for line in lines)

    def test_interest_ranking_has_no_sources(self, model_dir, capsys):
        assert main(["predict", "--model", str(model_dir / "model.npz"),
                     "--user", "u0000", "--latent", "interest"]) == 0
        for line in capsys.readouterr().out.strip().splitlines():
            assert line.split("\t")[2] == "-"

    def test_repeat_predictions_identical(self, model_dir, capsys):
        args = ["predict", "--model", str(model_dir / "model.npz"),
                "--user", "u0003", "--top", "8"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first

    def test_unknown_user_is_a_data_error(self, model_dir, capsys):
        assert main(["predict", "--model", str(model_dir / "model.npz"),
                     "--user", "nobody"]) == 2
        assert "error" in capsys.readouterr().err


class TestInspect:
    def test_dumps_interest_and_influence_summary(self, sim_dir, model_dir,
                                                  capsys):
        code = main(["inspect", "--model", str(model_dir / "model.npz"),
                     "--data", str(sim_dir), "--user", "u0000"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("user u000")
        assert "interests:" in out
        assert "topics:" in out

    def test_vocabulary_mismatch_is_a_data_error(self, model_dir, sim_dir,
                                                 tmp_path):
        other = tmp_path / "other"
        assert main(["simulate", "--out", str(other), "--users", "6",
                     "--items", "8", "--k", "2", "--vocab-size", "11",
                     "--doc-length", "12", "--target-rate", "0.3",
                     "--seed", "1"]) == 0
        code = main(["inspect", "--model", str(model_dir / "model.npz"),
                     "--data", str(other), "--user", "u0000"])
        assert code == 2


class TestUsageErrors:
    @pytest.mark.parametrize("argv", [
        [],
        ["frobnicate"],
        ["predict"],                      # --user is required
        ["train", "--max-sweeps", "zz"],  # type failure
    ])
    def test_usage_problems_exit_one(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


class TestConfigLayering:
    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_users=5\nn_items=8\nk=2\nvocab_size=12\n"
                       "doc_length=10\ntarget_rate=0.3\n")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out),
                     "--users", "6"]) == 0
        manifest = json.loads(_read(out / "manifest.json"))
        assert manifest["config"]["n_users"] == 6   # flag wins
        assert manifest["config"]["n_items"] == 8   # file beats default
        assert manifest["config"]["k"] == 2

    def test_bad_config_file_is_a_data_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("frobnicate=1\n")
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == 2

    def test_missing_required_output_flag(self):
        assert main(["simulate"]) == 2


def test_installed_entry_point_runs():
    import subprocess
    proc = subprocess.run(["lactr", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
