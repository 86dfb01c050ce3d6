import json

import pytest

from hitkit.cli import main
from hitkit.train import TrainConfig

from hitkit import synth as toydata


def write_cfg(tmp_path, **kw):
    base = dict(d_model=8, n_heads=2, l_c=1, l_w=1, l_dec=1, dropout=0.0, epochs=3,
                batch_size=8, max_len=12, max_word_len=8, plateau_patience=3,
                early_stop_patience=3, seed=0)
    base.update(kw)
    path = tmp_path / "run.cfg"
    TrainConfig(**base).save(path)
    return str(path)


def write_classification(tmp_path, name="train.jsonl", n=14):
    rows = [{"text": " ".join(w), "label": str(l)}
            for w, l in toydata.classification_records(n, seed=3)]
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(r) for r in rows))
    return str(path)


def write_generation(tmp_path, name="pairs.jsonl", n=10):
    rows = [{"source": " ".join(seq), "target": " ".join(seq)}
            for seq in toydata.copy_sequences(n, vocab_size=8, max_len=4, seed=5)]
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(r) for r in rows))
    return str(path)


@pytest.fixture
def trained_dir(tmp_path):
    cfg = write_cfg(tmp_path)
    data = write_classification(tmp_path)
    out = tmp_path / "run"
    code = main(["train", "--task", "classification", "--train-file", data,
                 "--config", cfg, "--out-dir", str(out)])
    assert code == 0
    return out


class TestTrain:
    def test_outputs_exist(self, trained_dir):
        for name in ("checkpoint", "history.json", "metrics.json", "predictions.jsonl"):
            assert (trained_dir / name).exists()

    def test_history_is_valid_json(self, trained_dir):
        payload = json.loads((trained_dir / "history.json").read_text())
        assert payload["epochs"]
        assert payload["best_epoch"] >= 1

    def test_metrics_carry_fingerprint_and_timestamp(self, trained_dir):
        payload = json.loads((trained_dir / "metrics.json").read_text())
        assert "config_fingerprint" in payload
        assert "timestamp" in payload
        assert payload["task"] == "classification"

    def test_missing_config_names_path(self, tmp_path, capsys):
        data = write_classification(tmp_path)
        code = main(["train", "--task", "classification", "--train-file", data,
                     "--config", "/nope/missing.cfg", "--out-dir", str(tmp_path / "o")])
        assert code != 0
        assert "/nope/missing.cfg" in capsys.readouterr().err

    def test_tfidf_fusion_roundtrip(self, tmp_path):
        cfg = write_cfg(tmp_path, use_tfidf=True)
        data = write_classification(tmp_path, n=12)
        out = tmp_path / "tfidf_run"
        assert main(["train", "--task", "classification", "--train-file", data,
                     "--config", cfg, "--out-dir", str(out)]) == 0
        from hitkit.checkpoint import load_checkpoint
        ckpt = load_checkpoint(out / "checkpoint")
        assert "tfidf_vocab.txt" in ckpt.extras
        # the head width must include the fitted feature block
        head_shape = ckpt.params["head.w"].shape
        assert head_shape[0] > 8
        eval_out = tmp_path / "tfidf_eval"
        assert main(["evaluate", "--checkpoint", str(out / "checkpoint"),
                     "--test-file", data, "--out-dir", str(eval_out)]) == 0

    def test_tfidf_empty_vocabulary_fails_loudly(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, use_tfidf=True)
        rows = [{"text": f"unique{i} only{i}", "label": str(i % 2)} for i in range(10)]
        data = tmp_path / "sparse.jsonl"
        data.write_text("\n".join(json.dumps(r) for r in rows))
        code = main(["train", "--task", "classification", "--train-file", str(data),
                     "--config", cfg, "--out-dir", str(tmp_path / "o")])
        assert code != 0
        assert "document-frequency" in capsys.readouterr().err

    def test_env_seed_override(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path, seed=0)
        data = write_classification(tmp_path)
        out = tmp_path / "env_run"
        monkeypatch.setenv("HITKIT_SEED", "123")
        assert main(["train", "--task", "classification", "--train-file", data,
                     "--config", cfg, "--out-dir", str(out)]) == 0
        from hitkit.checkpoint import load_checkpoint
        ckpt = load_checkpoint(out / "checkpoint")
        assert ckpt.config["train_config"]["seed"] == 123

    def test_labeling_task_train_and_evaluate(self, tmp_path):
        rows = [{"tokens": t, "tags": [toydata.TAG_NAMES[i] for i in g]}
                for t, g in toydata.labeling_records(12, seed=4)]
        data = tmp_path / "tags.jsonl"
        data.write_text("\n".join(json.dumps(r) for r in rows))
        out = tmp_path / "tag_run"
        code = main(["train", "--task", "labeling", "--train-file", str(data),
                     "--config", write_cfg(tmp_path), "--out-dir", str(out)])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["task"] == "labeling"
        assert "confusion" in metrics
        eval_out = tmp_path / "tag_eval"
        assert main(["evaluate", "--checkpoint", str(out / "checkpoint"),
                     "--test-file", str(data), "--out-dir", str(eval_out)]) == 0
        preds = [json.loads(l) for l in
                 (eval_out / "predictions.jsonl").read_text().splitlines()]
        assert len(preds) == len(rows)
        assert all(len(p["tags"]) == len(p["probs"]) for p in preds)


class TestBadInvocations:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) != 0

    def test_unknown_flag(self, capsys):
        assert main(["train", "--task", "classification", "--train-file", "x",
                     "--frob"]) != 0
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_arguments(self):
        assert main([]) != 0

    def test_missing_checkpoint(self, tmp_path, capsys):
        code = main(["embed", "--checkpoint", str(tmp_path / "nope"), "--input",
                     str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path)])
        assert code != 0
        assert "checkpoint" in capsys.readouterr().err


class TestEvaluate:
    def test_metrics_deterministic_modulo_timestamp(self, tmp_path, trained_dir):
        data = write_classification(tmp_path, "test.jsonl", n=10)

        def run(tag):
            out = tmp_path / tag
            assert main(["evaluate", "--checkpoint", str(trained_dir / "checkpoint"),
                         "--test-file", data, "--out-dir", str(out)]) == 0
            payload = json.loads((out / "metrics.json").read_text())
            payload.pop("timestamp")
            return payload

        assert run("e1") == run("e2")


class TestEmbed:
    def test_line_counts_and_empty_flag(self, tmp_path, trained_dir):
        src = tmp_path / "texts.txt"
        src.write_text("hello good day\n\nthanks time\n")
        out = tmp_path / "emb"
        assert main(["embed", "--checkpoint", str(trained_dir / "checkpoint"),
                     "--input", str(src), "--out-dir", str(out)]) == 0
        lines = (out / "embeddings.jsonl").read_text().splitlines()
        assert len(lines) == 3
        rows = [json.loads(l) for l in lines]
        assert [r["empty"] for r in rows] == [False, True, False]
        assert all(len(r["embedding"]) == 8 for r in rows)
        assert all(v == 0.0 for v in rows[1]["embedding"])


class TestGenerationPipeline:
    def test_train_generate_evaluate(self, tmp_path):
        cfg = write_cfg(tmp_path, epochs=2)
        data = write_generation(tmp_path)
        out = tmp_path / "gen_run"
        assert main(["train", "--task", "generation", "--train-file", data,
                     "--config", cfg, "--out-dir", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert {"bleu", "rouge_l", "meteor_lite"} <= set(metrics)
        src = tmp_path / "sources.txt"
        src.write_text("t0 t1\nt2\n")
        gen_out = tmp_path / "gen_out"
        assert main(["generate", "--checkpoint", str(out / "checkpoint"),
                     "--input", str(src), "--out-dir", str(gen_out)]) == 0
        assert len((gen_out / "generated.txt").read_text().splitlines()) == 2

    def test_generate_rejects_wrong_task(self, tmp_path, trained_dir, capsys):
        src = tmp_path / "s.txt"
        src.write_text("hello\n")
        code = main(["generate", "--checkpoint", str(trained_dir / "checkpoint"),
                     "--input", str(src), "--out-dir", str(tmp_path / "g")])
        assert code != 0
        assert "generation" in capsys.readouterr().err


class TestPretrainCommands:
    def test_pretrain_mlm(self, tmp_path):
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("\n".join(" ".join(t) for t in toydata.mlm_corpus(30, seed=2)))
        out = tmp_path / "mlm_run"
        assert main(["pretrain-mlm", "--corpus", str(corpus),
                     "--config", write_cfg(tmp_path, epochs=2), "--out-dir", str(out)]) == 0
        assert (out / "checkpoint").exists()
        from hitkit.checkpoint import load_checkpoint
        assert load_checkpoint(out / "checkpoint").config["task"] == "mlm"

    def test_pretrain_zsl(self, tmp_path):
        rows = [{"text": " ".join(w), "label": toydata.ZSL_LABELS[l]}
                for w, l in toydata.zsl_texts(4, seed=6)]
        data = tmp_path / "zsl.jsonl"
        data.write_text("\n".join(json.dumps(r) for r in rows))
        out = tmp_path / "zsl_run"
        assert main(["pretrain-zsl", "--train-file", str(data),
                     "--config", write_cfg(tmp_path, epochs=2), "--out-dir", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert "zero_shot_train_accuracy" in metrics

    def test_transfer_init_from_mlm(self, tmp_path):
        # pretraining corpus covers the same text, so the vocabularies align
        data = write_classification(tmp_path, n=10)
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("\n".join(json.loads(l)["text"]
                                    for l in open(data, encoding="utf-8")))
        mlm_out = tmp_path / "mlm_run"
        cfg = write_cfg(tmp_path, epochs=2)
        assert main(["pretrain-mlm", "--corpus", str(corpus), "--config", cfg,
                     "--out-dir", str(mlm_out)]) == 0
        out = tmp_path / "ft_run"
        assert main(["train", "--task", "classification", "--train-file", data,
                     "--config", cfg, "--out-dir", str(out),
                     "--init-from", str(mlm_out / "checkpoint")]) == 0

    def test_transfer_rejects_mismatched_vocab(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("\n".join(["aa bb cc aa bb cc aa bb"] * 8))  # 3-word vocabulary
        mlm_out = tmp_path / "mlm_small"
        cfg = write_cfg(tmp_path, epochs=2)
        assert main(["pretrain-mlm", "--corpus", str(corpus), "--config", cfg,
                     "--out-dir", str(mlm_out)]) == 0
        data = write_classification(tmp_path, n=14)
        code = main(["train", "--task", "classification", "--train-file", data,
                     "--config", cfg, "--out-dir", str(tmp_path / "bad"),
                     "--init-from", str(mlm_out / "checkpoint")])
        assert code != 0
        assert "word_hit.word_emb" in capsys.readouterr().err


class TestAnalyze:
    def test_kmeans_report(self, tmp_path, trained_dir):
        src = tmp_path / "texts.txt"
        src.write_text("\n".join([" ".join(w) for w, _ in
                                  toydata.classification_records(8, seed=9)]))
        out = tmp_path / "analysis"
        assert main(["analyze-embeddings", "--checkpoint", str(trained_dir / "checkpoint"),
                     "--input", str(src), "--k", "2", "--out-dir", str(out)]) == 0
        payload = json.loads((out / "analysis.json").read_text())
        assert {"silhouette", "davies_bouldin", "assignments"} <= set(payload)
        assert len(payload["assignments"]) == payload["n_points"]
