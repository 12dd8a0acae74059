import json

from click.testing import CliRunner

from stemflow.cli import main
from stemflow.corpus import read_manifest


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_help_on_every_level():
    for args in ([], ["corpus"], ["corpus", "build"], ["train"], ["generate"], ["eval"], ["serve"]):
        result = CliRunner().invoke(main, args + ["--help"])
        assert result.exit_code == 0
        assert "Usage:" in result.output


def test_unknown_flag_fails_with_usage():
    result = CliRunner().invoke(main, ["train", "--bogus"])
    assert result.exit_code != 0
    assert "no such option" in result.output.lower() or "Usage" in result.output


def test_corpus_build(tmp_path):
    result = invoke("corpus", "build", "--out", str(tmp_path), "--num", "4", "--seed", "1")
    assert result.exit_code == 0
    assert len(read_manifest(tmp_path / "manifest.jsonl")) == 4


def test_train_deterministic_checkpoints(tmp_path, corpus_manifest):
    for name in ("run1", "run2"):
        result = invoke(
            "train",
            "--setting", "C",
            "--corpus", str(corpus_manifest),
            "--out", str(tmp_path / name),
            "--steps", "20",
            "--seed", "7",
        )
        assert result.exit_code == 0, result.output
    c1 = (tmp_path / "run1" / "checkpoint_final.sfck").read_bytes()
    c2 = (tmp_path / "run2" / "checkpoint_final.sfck").read_bytes()
    assert c1 == c2


def test_config_file_overridden_by_flags(tmp_path, corpus_manifest):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"steps": 4, "seed": 3, "batch_size": 8}))
    result = invoke(
        "train",
        "--setting", "A",
        "--corpus", str(corpus_manifest),
        "--out", str(tmp_path / "run"),
        "--config", str(cfg),
        "--steps", "6",
    )
    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / "run" / "train_summary.json").read_text())
    assert summary["steps"] == 6
    assert summary["setting"] == "A"


def test_generate_writes_wavs_and_report(tmp_path, untrained_checkpoint):
    out = tmp_path / "gen"
    result = invoke(
        "generate",
        "--checkpoint", str(untrained_checkpoint),
        "--mode", "one_pass",
        "--stems", "drums,bass,keys",
        "--out", str(out),
        "--steps", "2",
        "--seed", "5",
    )
    assert result.exit_code == 0, result.output
    for name in ("drums.wav", "bass.wav", "keys.wav", "mix.wav"):
        assert (out / name).exists()
    report = json.loads((out / "workflow_report.json").read_text())
    assert report["mode"] == "one_pass" and report["num_stems"] == 3


def test_generate_rejects_unknown_stem(tmp_path, untrained_checkpoint):
    result = CliRunner().invoke(
        main,
        ["generate", "--checkpoint", str(untrained_checkpoint), "--stems", "oboe", "--out", str(tmp_path)],
    )
    assert result.exit_code != 0
