import csv

import pytest

from nasaswin.cli import build_parser, main


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--n", "8", "--seed", "1"]) == 0
    return root


def test_synth_writes_manifests(corpus):
    with open(corpus / "data" / "train.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 and {r["source"] for r in rows} == {"nature", "grid"}


def test_train_then_eval(corpus, tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("lr=0.003\nbatch=4\ncms.enabled=true\n")
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--manifest", str(corpus / "data" / "train.csv"), "--out", str(run), "--steps", "3"]) == 0
    assert (run / "final.nsw").exists() and (run / "loss_curve.csv").exists()
    assert "max_steps=3" in (run / "config.txt").read_text()
    capsys.readouterr()
    metrics = tmp_path / "m.csv"
    code = main(["eval", "--ckpt", str(run / "final.nsw"), "--manifest", str(corpus / "data" / "test.csv"),
                 "--csv", str(metrics), "--name", "toy"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["Method", "grid", "nature", "Avg-Acc"]
    assert out.splitlines()[2].startswith("toy")
    assert metrics.read_text().startswith("source,n,tp,tn,fp,fn,accuracy")


def test_eval_several_checkpoints_as_csv_table(corpus, tmp_path, capsys):
    run = tmp_path / "run"
    main(["train", "--manifest", str(corpus / "data" / "train.csv"), "--out", str(run), "--steps", "1"])
    capsys.readouterr()
    ckpt = str(run / "final.nsw")
    code = main(["eval", "--ckpt", ckpt, "--ckpt", ckpt, "--name", "a", "--name", "b", "--no-branch",
                 "--manifest", str(corpus / "data" / "test.csv"), "--table-format", "csv", "--avg-sources", "grid"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "Method,grid,nature,Avg-Acc" and lines[1].split(",")[1:] == lines[2].split(",")[1:]


def test_analyze(corpus, tmp_path, capsys):
    assert main(["analyze", "--manifest", str(corpus / "data" / "test.csv"), "--denoiser", "median:3", "--out", str(tmp_path)]) == 0
    assert "peak contrast" in capsys.readouterr().out
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "grid_spectrum.pgm").exists()


def test_errors_exit_2(tmp_path, capsys):
    assert main(["eval", "--ckpt", str(tmp_path / "no.nsw"), "--manifest", str(tmp_path / "no.csv")]) == 2
    assert "nasaswin: error" in capsys.readouterr().err
    assert main(["analyze", "--manifest", str(tmp_path / "no.csv"), "--denoiser", "median:4", "--out", str(tmp_path)]) == 2


def test_eval_help_documents_tie_rule():
    sub = build_parser()._subparsers._group_actions[0].choices["eval"]
    assert "exactly 0.5 counts as genuine" in sub.format_help()


def test_selftest_command(capsys):
    assert main(["selftest"]) == 0
    assert "6/6 suites passed" in capsys.readouterr().out
