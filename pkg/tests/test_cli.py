import json

import pytest

from src.cli import RESOLVED_CONFIG_FILE, main
from src.data import MANIFEST_FILE, save_corpus, make_toy_corpora
from src.features import read_gram, write_gram
from src.trainer import CHECKPOINT_DIR, FINAL_CHECKPOINT, METRICS_FILE

TRAIN_FLAGS = ["--width-mult", "0.015625", "--patch-frames", "16", "--iterations", "2", "--checkpoint-every", "1"]


@pytest.fixture
def toy_dirs(tmp_path):
    corpus_x, corpus_y = make_toy_corpora(0, patches=4, frames=20)
    save_corpus(corpus_x, tmp_path / "toy" / "x")
    save_corpus(corpus_y, tmp_path / "toy" / "y")
    return tmp_path / "toy"


def _train(toy_dirs, out, *extra):
    return main(["train", "--x", str(toy_dirs / "x"), "--y", str(toy_dirs / "y"), "--out", str(out), *TRAIN_FLAGS, *extra])


def test_missing_required_flag_is_usage_error():
    assert main(["extract", "--out", "somewhere"]) == 2
    assert main([]) == 2


def test_extract_partial_failure_exits_one(tmp_path, write_tone, capsys):
    write_tone("wavs/a.wav")
    (tmp_path / "wavs" / "notes.txt").write_text("text")
    assert main(["extract", "--in", str(tmp_path / "wavs"), "--out", str(tmp_path / "corpus")]) == 1
    assert "notes.txt" in capsys.readouterr().err
    assert (tmp_path / "corpus" / MANIFEST_FILE).is_file()


def test_extract_missing_directory_exits_two(tmp_path):
    assert main(["extract", "--in", str(tmp_path / "absent"), "--out", str(tmp_path / "corpus")]) == 2


def test_synthgen_is_reproducible(tmp_path):
    config = tmp_path / "toy.cfg"
    config.write_text("toy_patches=3\n")
    assert main(["synthgen", "--out", str(tmp_path / "a"), "--config", str(config)]) == 0
    assert main(["synthgen", "--out", str(tmp_path / "b"), "--config", str(config)]) == 0
    assert main(["synthgen", "--out", str(tmp_path / "c"), "--config", str(config), "--seed", "8"]) == 0
    for rel in ("x/stats.nsta", "y/stats.nsta", "x/manifest.tsv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert (tmp_path / "a" / "x/stats.nsta").read_bytes() != (tmp_path / "c" / "x/stats.nsta").read_bytes()


def test_train_writes_run_directory(toy_dirs, tmp_path):
    run = tmp_path / "run"
    assert _train(toy_dirs, run) == 0
    resolved = (run / RESOLVED_CONFIG_FILE).read_text(encoding="utf-8").splitlines()
    assert "lambda_c=0.3" in resolved and "lambda_e=1.0" in resolved
    assert (run / METRICS_FILE).is_file()
    assert (run / CHECKPOINT_DIR / FINAL_CHECKPOINT).is_file()


def test_train_gimgan_rho_one_matches_vanilla(toy_dirs, tmp_path):
    assert _train(toy_dirs, tmp_path / "van", "--variant", "vanilla") == 0
    assert _train(toy_dirs, tmp_path / "gim", "--variant", "gimgan", "--rho", "1.0", "--batch-size", "1") == 0
    van = (tmp_path / "van" / METRICS_FILE).read_bytes()
    assert van == (tmp_path / "gim" / METRICS_FILE).read_bytes()


def test_train_resume_continues_the_csv(toy_dirs, tmp_path):
    assert _train(toy_dirs, tmp_path / "full", "--iterations", "3") == 0
    assert _train(toy_dirs, tmp_path / "part", "--iterations", "1") == 0
    ckpt = tmp_path / "part" / CHECKPOINT_DIR / "ckpt_0000001.cgvc"
    assert _train(toy_dirs, tmp_path / "part", "--iterations", "3", "--resume", str(ckpt)) == 0
    assert (tmp_path / "full" / METRICS_FILE).read_bytes() == (tmp_path / "part" / METRICS_FILE).read_bytes()


def test_train_config_errors_exit_two_before_training(toy_dirs, tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text("variant=vanilla\nlearning_rate=0.1\n")
    assert main(["train", "--config", str(config), "--x", str(toy_dirs / "x"), "--y", str(toy_dirs / "y"),
                 "--out", str(tmp_path / "run")]) == 2
    assert not (tmp_path / "run").exists()
    assert main(["train", "--x", str(toy_dirs / "x"), "--out", str(tmp_path / "run")]) == 2


def test_convert_gram_preserves_shape(toy_dirs, tmp_path):
    run = tmp_path / "run"
    assert _train(toy_dirs, run) == 0
    source = toy_dirs / "x" / "grams" / "toy_x_00000.egrm"
    out = tmp_path / "converted.egrm"
    ckpt = run / CHECKPOINT_DIR / FINAL_CHECKPOINT
    assert main(["convert", "--ckpt", str(ckpt), "--in", str(source), "--direction", "xy", "--out", str(out)]) == 0
    assert read_gram(out).values.shape == read_gram(source).values.shape


def test_convert_missing_checkpoint_exits_two(tmp_path, toy_dirs):
    gram = read_gram(toy_dirs / "x" / "grams" / "toy_x_00000.egrm")
    write_gram(tmp_path / "g.egrm", gram)
    args = ["convert", "--ckpt", str(tmp_path / "none.cgvc"), "--in", str(tmp_path / "g.egrm")]
    assert main(args + ["--direction", "xy", "--out", str(tmp_path / "o.egrm")]) == 2


def test_verify_toyeval_needs_checkpoint():
    assert main(["verify", "--suite", "toyeval"]) == 2


def test_verify_toyeval_untrained_fails_with_report(toy_dirs, tmp_path, capsys):
    run = tmp_path / "run"
    assert _train(toy_dirs, run) == 0
    capsys.readouterr()
    code = main(["verify", "--suite", "toyeval", "--ckpt", str(run / CHECKPOINT_DIR / FINAL_CHECKPOINT)])
    summary = json.loads(capsys.readouterr().out)
    assert code == 1
    assert summary["suite"] == "toyeval" and summary["passed"] is False
    assert 0.0 <= summary["report"]["accuracy_xy"] <= 1.0


def test_params_prints_full_scale_counts(capsys):
    assert main(["params"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "generator=5775361" in lines
    assert "discriminator=4886593" in lines
