import logging
from dataclasses import replace

import pytest

from musepers.config import OUTPUT_ROOT_ENV, parse_config, parse_text
from musepers.errors import ConfigTypeError, InvalidConfig, MissingRequiredKey, PathError, UnknownKey
from musepers.seqdata import DIMENSIONS
from musepers.synth import SynthSpec, generate_synthetic_corpus, write_corpus


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("cfgcorpus")
    spec = SynthSpec(n_train=1, n_dev=1, n_test=1, duration_s=10.0,
                     modality_dims=(("audio", 3), ("video", 2)), with_ecg=False)
    write_corpus(generate_synthetic_corpus(spec, seed=0), root)
    return root / "manifest.txt"


def write_cfg(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body)
    return path


def minimal(manifest, extra=""):
    return f"manifest = {manifest}\ncombo = audio+video\ndimension = arousal\n{extra}"


def test_defaults(tmp_path, manifest, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    cfg = parse_config(write_cfg(tmp_path, minimal(manifest)))
    assert cfg.combo == ("audio", "video") and cfg.dimensions == ("arousal",)
    assert (cfg.model_dim, cfg.rnn_layers, cfg.rnn_bi, cfg.head_hidden) == (256, 1, False, None)
    assert (cfg.lr, cfg.batch_size, cfg.max_epochs, cfg.patience) == (1e-3, 128, 100, 15)
    assert (cfg.stage1_win, cfg.stage1_hop, cfg.stage2_win, cfg.stage2_hop) == (200, 100, 10, 5)
    assert (cfg.finetune_lr, cfg.finetune_max_epochs, cfg.finetune_patience) == (1e-4, 50, 10)
    assert cfg.seeds == tuple(range(10)) and cfg.seed == 0 and cfg.jobs == 1
    assert str(cfg.output_dir) == "runs/run"
    mc = cfg.model_config((3, 2), ("audio", "video"))
    assert mc.fused_dim == 256 and mc.input_dims == (3, 2)


def test_output_root_env(tmp_path, manifest, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "elsewhere"))
    cfg = parse_config(write_cfg(tmp_path, minimal(manifest)))
    assert cfg.output_dir == tmp_path / "elsewhere" / "run"


def test_relative_paths_and_comments(tmp_path, manifest):
    (tmp_path / "sub").mkdir()
    rel = manifest.relative_to(manifest.parent.parent)
    link_root = tmp_path / "sub"
    (link_root / rel.parent).symlink_to(manifest.parent)
    body = f"# a comment\nmanifest = {rel}   # trailing\ncombo = audio\ndimension = both\noutput_dir = out\n"
    cfg = parse_config(write_cfg(link_root, body))
    assert cfg.manifest == link_root / rel
    assert cfg.output_dir == link_root / "out"
    assert cfg.dimensions == DIMENSIONS


def test_overrides(tmp_path, manifest):
    cfg = parse_config(write_cfg(tmp_path, minimal(manifest, "jobs = 2\n")), jobs=None, output_dir=tmp_path / "o")
    assert cfg.jobs == 2 and cfg.output_dir == tmp_path / "o"
    assert parse_config(write_cfg(tmp_path, minimal(manifest)), jobs=4).jobs == 4


def test_model_dim_outside_usual_warns(tmp_path, manifest, caplog):
    with caplog.at_level(logging.WARNING):
        cfg = parse_config(write_cfg(tmp_path, minimal(manifest, "model_dim = 300\n")))
    assert cfg.model_dim == 300
    assert any("model_dim = 300" in r.getMessage() for r in caplog.records)


def test_type_error_names_key(tmp_path, manifest):
    with pytest.raises(ConfigTypeError, match="model_dim must be integer") as exc:
        parse_config(write_cfg(tmp_path, minimal(manifest, "model_dim = abc\n")))
    assert exc.value.exit_code == 2
    with pytest.raises(ConfigTypeError, match="rnn_bi"):
        parse_text(minimal(manifest, "rnn_bi = maybe\n"))
    with pytest.raises(ConfigTypeError, match="dimension"):
        parse_text(f"manifest = {manifest}\ncombo = audio\ndimension = dominance\n")


def test_unknown_and_missing_keys(manifest):
    with pytest.raises(UnknownKey, match="hidden_size"):
        parse_text(minimal(manifest, "hidden_size = 3\n"))
    with pytest.raises(MissingRequiredKey, match="combo"):
        parse_text(f"manifest = {manifest}\ndimension = arousal\n")
    with pytest.raises(InvalidConfig):
        parse_text(minimal(manifest, "no equals sign\n"))


def test_path_errors(tmp_path, manifest):
    with pytest.raises(PathError):
        parse_config(tmp_path / "absent.cfg")
    with pytest.raises(PathError, match="manifest"):
        parse_config(write_cfg(tmp_path, minimal(tmp_path / "nope.txt")))


def test_invalid_values(tmp_path, manifest):
    with pytest.raises(InvalidConfig, match="phys"):
        parse_config(write_cfg(tmp_path, f"manifest = {manifest}\ncombo = audio+phys\ndimension = arousal\n"))
    with pytest.raises(InvalidConfig):
        parse_config(write_cfg(tmp_path, minimal(manifest, "finetune.seeds = 0,1,2\n")))
    with pytest.raises(InvalidConfig):
        parse_config(write_cfg(tmp_path, minimal(manifest, "stage1.hop_steps = 0\n")))


def test_lock_text_round_trips(tmp_path, manifest):
    cfg = parse_config(write_cfg(tmp_path, minimal(manifest, "rnn_bi = yes\nhead_hidden = 64\n")))
    again = parse_text(cfg.to_text())
    # the lock records absolute paths
    assert again == replace(cfg, output_dir=cfg.output_dir.resolve(), manifest=cfg.manifest.resolve())
