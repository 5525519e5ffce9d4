import csv
import filecmp
import os
import subprocess
import sys

import numpy as np
import pytest

from musepers.cli import main
from musepers.config import OUTPUT_ROOT_ENV
from musepers.nn import Checkpoint


def tree(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TINY = """manifest = {manifest}
combo = audio+video
dimension = both
output_dir = {out}
model_dim = 8
batch_size = 16
max_epochs = 2
patience = 1
stage1.win_steps = 60
stage1.hop_steps = 30
finetune.max_epochs = 2
finetune.patience = 1
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["synth", "--out", str(root), "--subjects", "4", "--seed", "2", "--duration", "150",
                 "--modalities", "audio:4,video:3", "--no-ecg", "-q"]) == 0
    return root


@pytest.fixture(scope="module")
def pipeline(corpus):
    run = corpus.parent / "run"
    cfg = corpus.parent / "tiny.cfg"
    cfg.write_text(TINY.format(manifest=corpus / "manifest.txt", out=run))
    for cmd in (["pretrain"], ["personalise"], ["predict"], ["predict", "--stage", "personalised"]):
        assert main([*cmd, "--config", str(cfg), "-q"]) == 0
    return cfg, run


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--out", str(out), "--subjects", "12", "--seed", "7", "--duration", "20", "-q"]) == 0
    assert tree(a) == tree(b)
    for rel in tree(a):
        if rel.name == "run.lock":
            continue
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("out =")]
    assert strip(a / "run.lock") == strip(b / "run.lock")
    subjects = {ln.split()[0]: ln.split()[1] for ln in (a / "manifest.txt").read_text().splitlines()
                if ln and not ln.startswith("#")}
    roles = list(subjects.values())
    assert (roles.count("train"), roles.count("dev"), roles.count("test")) == (6, 3, 3)


def test_synth_too_few_subjects(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--subjects", "2"]) == 3
    assert "at least 3" in capsys.readouterr().err


def test_pipeline_layout(pipeline):
    cfg, run = pipeline
    assert (run / "run.lock").is_file()
    for dim in ("arousal", "valence"):
        ck = Checkpoint.load(run / dim / "stage1" / "model.ckpt")
        assert ck.config.fused_dim == 8
        report = rows(run / dim / "stage1" / "report.csv")
        assert 1 <= len(report) <= 2
        sel = rows(run / dim / "personalised" / "selection.csv")
        assert [r["subject"] for r in sel] == ["s003"]
        seeds = rows(run / dim / "personalised" / "seeds.csv")
        assert len(seeds) == 10
        best = max(float(r["dev_ccc"]) for r in seeds)
        assert float(sel[0]["dev_ccc"]) == best
        assert (run / dim / "personalised" / "s003" / f"{sel[0]['seed']}.ckpt").is_file()
        full = np.loadtxt(run / "predictions" / "pretrained" / dim / "s003.csv", delimiter=",", skiprows=1)
        tail = np.loadtxt(run / "predictions" / "personalised" / dim / "s003.csv", delimiter=",", skiprows=1)
        assert full.shape == (300, 2) and tail.shape == (60, 2)
        assert tail[0, 0] == 120_000


def test_evaluate_and_report(pipeline, corpus, capsys):
    cfg, run = pipeline
    out = run / "eval_pre"
    assert main(["evaluate", "--manifest", str(corpus / "manifest.txt"),
                 "--predictions", str(run / "predictions" / "pretrained"), "--out", str(out)]) == 0
    lines = (out / "evaluation.csv").read_text().splitlines()
    assert lines[0] == "subject,dimension,ccc" and lines[-1].startswith("combined,all,")
    assert main(["report", "--run", str(run)]) == 0
    text = capsys.readouterr().out
    assert "arousal pretrain" in text and "valence personalised" in text and "evaluation.csv" in text


def test_evaluate_missing_subject(pipeline, corpus, tmp_path, capsys):
    _, run = pipeline
    preds = tmp_path / "preds"
    for dim in ("arousal",):
        (preds / dim).mkdir(parents=True)
    # predictions for a subject that is not s003
    src = run / "predictions" / "pretrained" / "arousal" / "s003.csv"
    (preds / "arousal" / "s999.csv").write_text(src.read_text())
    code = main(["evaluate", "--manifest", str(corpus / "manifest.txt"), "--predictions", str(preds),
                 "--out", str(tmp_path / "ev")])
    assert code == 3
    err = capsys.readouterr().err
    assert "MissingPrediction" in err and "s003" in err


def test_ensemble_command(pipeline, tmp_path):
    _, run = pipeline
    member = run / "predictions" / "pretrained"
    out = tmp_path / "ens"
    assert main(["ensemble", "--members", str(member), str(member), "--out", str(out), "-q"]) == 0
    for dim in ("arousal", "valence"):
        assert (out / dim / "s003.csv").read_text() == (member / dim / "s003.csv").read_text()
    assert (out / "run.lock").is_file()


def test_predict_before_pretrain(corpus, tmp_path, capsys):
    cfg = tmp_path / "fresh.cfg"
    cfg.write_text(TINY.format(manifest=corpus / "manifest.txt", out=tmp_path / "fresh"))
    assert main(["predict", "--config", str(cfg)]) == 2
    assert "pretrain" in capsys.readouterr().err


def test_config_errors_exit_2(corpus, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(TINY.format(manifest=corpus / "manifest.txt", out=tmp_path / "x") + "model_dim = abc\n")
    assert main(["pretrain", "--config", str(cfg)]) == 2
    assert "model_dim" in capsys.readouterr().err
    assert main(["pretrain", "--config", str(tmp_path / "none.cfg")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["pretrain"])
    assert exc.value.code == 2


def test_ablate(corpus, tmp_path):
    cfg = tmp_path / "ablate.cfg"
    body = TINY.format(manifest=corpus / "manifest.txt", out=tmp_path / "abl")
    cfg.write_text(body.replace("dimension = both", "dimension = valence").replace("max_epochs = 2", "max_epochs = 1"))
    assert main(["ablate", "--config", str(cfg), "-q"]) == 0
    table = rows(tmp_path / "abl" / "ablation_valence.csv")
    assert len(table) == 8
    assert list(table[0]) == ["layers", "model_dim", "rnn_bi", "dev_ccc", "test_ccc"]
    grid = {(r["layers"], r["model_dim"], r["rnn_bi"]) for r in table}
    assert grid == {(l, d, b) for l in ("1", "2") for d in ("128", "256") for b in ("Y", "N")}
    assert all(-1 <= float(r["dev_ccc"]) <= 1 for r in table)


def test_extract_hrv(tmp_path):
    corpus = tmp_path / "ecg"
    assert main(["synth", "--out", str(corpus), "--subjects", "3", "--duration", "30",
                 "--modalities", "audio:2", "-q"]) == 0
    out = tmp_path / "hrv"
    assert main(["extract-hrv", "--manifest", str(corpus / "manifest.txt"), "--out", str(out), "-q"]) == 0
    feats = sorted((out / "features" / "phys").glob("*.csv"))
    assert [f.stem for f in feats] == ["s000", "s001", "s002"]
    data = np.loadtxt(feats[0], delimiter=",", skiprows=1)
    assert data.shape == (60, 22)
    text = (out / "manifest.txt").read_text()
    assert "feature:phys" in text and "feature:audio" in text


def test_default_output_root(tmp_path):
    env = dict(os.environ, **{OUTPUT_ROOT_ENV: str(tmp_path / "root")})
    res = subprocess.run([sys.executable, "-m", "musepers.cli", "synth", "--subjects", "3", "--duration", "5",
                          "--no-ecg", "-q"], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "root" / "synth" / "manifest.txt").is_file()


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and "0.1.0" in capsys.readouterr().out
