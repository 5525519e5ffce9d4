"""Run configuration: flat ``key = value`` files with dotted section keys.

Example::

    manifest = corpus/manifest.txt
    combo = audio+video
    dimension = arousal
    model_dim = 256
    finetune.lr = 1e-4

Relative paths are resolved against the config file's directory. Blank lines
and ``#`` comments are ignored.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigTypeError, InvalidConfig, MissingRequiredKey, PathError, UnknownKey
from .nn.model import STANDARD_DIMS, ModelConfig
from .seqdata import DIMENSIONS, Manifest
from .training import TrainConfig, WindowingConfig

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MUSEPERS_OUTPUT_ROOT"


def default_output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y", "on"):
        return True
    if t in ("0", "false", "no", "n", "off"):
        return False
    raise ValueError(text)


def _opt_int(text):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _int_list(text):
    return tuple(int(p) for p in text.replace(",", " ").split())


def _names(text):
    out = tuple(p.strip() for p in text.replace(",", "+").split("+") if p.strip())
    if not out:
        raise ValueError(text)
    return out


def _dimensions(text):
    t = text.strip().lower()
    if t in ("both", "all"):
        return DIMENSIONS
    dims = _names(t)
    for d in dims:
        if d not in DIMENSIONS:
            raise ValueError(text)
    return dims


# file key -> (RunConfig field, parser, type description)
KEYS = {
    "manifest": ("manifest", Path, "path"),
    "combo": ("combo", _names, "modality list such as audio+video"),
    "dimension": ("dimensions", _dimensions, "arousal, valence or both"),
    "output_dir": ("output_dir", Path, "path"),
    "seed": ("seed", _int, "integer"),
    "jobs": ("jobs", _int, "integer"),
    "model_dim": ("model_dim", _int, "integer"),
    "rnn_layers": ("rnn_layers", _int, "integer"),
    "rnn_bi": ("rnn_bi", _bool, "boolean"),
    "head_hidden": ("head_hidden", _opt_int, "integer or 'auto'"),
    "lr": ("lr", _float, "number"),
    "batch_size": ("batch_size", _int, "integer"),
    "max_epochs": ("max_epochs", _int, "integer"),
    "patience": ("patience", _int, "integer"),
    "stage1.win_steps": ("stage1_win", _int, "integer"),
    "stage1.hop_steps": ("stage1_hop", _int, "integer"),
    "stage2.win_steps": ("stage2_win", _int, "integer"),
    "stage2.hop_steps": ("stage2_hop", _int, "integer"),
    "finetune.lr": ("finetune_lr", _float, "number"),
    "finetune.max_epochs": ("finetune_max_epochs", _int, "integer"),
    "finetune.patience": ("finetune_patience", _int, "integer"),
    "finetune.seeds": ("seeds", _int_list, "list of integers"),
}
REQUIRED = ("manifest", "combo", "dimension")


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    combo: tuple
    dimensions: tuple
    output_dir: Path | None = None
    seed: int = 0
    jobs: int = 1
    model_dim: int = 256
    rnn_layers: int = 1
    rnn_bi: bool = False
    head_hidden: int | None = None
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 15
    stage1_win: int = 200
    stage1_hop: int = 100
    stage2_win: int = 10
    stage2_hop: int = 5
    finetune_lr: float = 1e-4
    finetune_max_epochs: int = 50
    finetune_patience: int = 10
    seeds: tuple = tuple(range(10))

    @property
    def combo_name(self):
        return "+".join(self.combo)

    def validate(self):
        if not Path(self.manifest).is_file():
            raise PathError(f"manifest: {self.manifest} does not exist")
        available = Manifest.load(self.manifest).modalities()
        missing = [m for m in self.combo if m not in available]
        if missing:
            raise InvalidConfig(f"combo: modalities {missing} are not in the manifest (have {available})")
        for name in ("model_dim", "rnn_layers", "batch_size", "jobs"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be positive")
        if self.head_hidden is not None and self.head_hidden < 1:
            raise InvalidConfig("head_hidden must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")
        if self.model_dim not in STANDARD_DIMS:
            log.warning("model_dim = %d is outside the usual %s; continuing", self.model_dim, STANDARD_DIMS)
        self.train_config()
        return self

    def model_config(self, input_dims, modality_names=()):
        return ModelConfig(
            input_dims=tuple(input_dims),
            fused_dim=self.model_dim,
            rnn_layers=self.rnn_layers,
            rnn_bidirectional=self.rnn_bi,
            head_hidden=self.head_hidden,
            seed=self.seed,
            modality_names=tuple(modality_names),
        )

    def train_config(self):
        return TrainConfig(
            stage1_window=WindowingConfig(self.stage1_win, self.stage1_hop),
            stage2_window=WindowingConfig(self.stage2_win, self.stage2_hop),
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            finetune_lr=self.finetune_lr,
            finetune_max_epochs=self.finetune_max_epochs,
            finetune_patience=self.finetune_patience,
            seeds=self.seeds,
            jobs=self.jobs,
        )

    def to_text(self):
        """Resolved config in the same ``key = value`` syntax (``run.lock``)."""
        lines = []
        for key, (attr, _, _) in KEYS.items():
            v = getattr(self, attr)
            if attr == "combo":
                v = "+".join(v)
            elif attr == "dimensions":
                v = ",".join(v)
            elif attr == "seeds":
                v = ",".join(str(s) for s in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            elif v is None:
                v = "auto"
            elif isinstance(v, Path):
                v = v.resolve().as_posix()
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"


def parse_text(text, base_dir=".", source="<config>"):
    base_dir = Path(base_dir)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise UnknownKey(f"{source}:{lineno}: unknown key {key!r}")
        attr, parse, kind = KEYS[key]
        try:
            parsed = parse(value)
        except ValueError:
            raise ConfigTypeError(f"{source}:{lineno}: {key} must be {kind}, got {value!r}") from None
        if isinstance(parsed, Path) and not parsed.is_absolute():
            parsed = base_dir / parsed
        values[attr] = parsed
    for key in REQUIRED:
        if KEYS[key][0] not in values:
            raise MissingRequiredKey(f"{source}: missing required key {key!r}")
    return RunConfig(**values)


def parse_config(path, **overrides):
    """Read, default and validate a run config. ``overrides`` replace fields."""
    path = Path(path)
    if not path.is_file():
        raise PathError(f"config file {path} does not exist")
    cfg = parse_text(path.read_text(encoding="utf-8"), path.parent, str(path))
    known = {f.name for f in fields(RunConfig)}
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None and k in known})
    if cfg.output_dir is None:
        cfg = replace(cfg, output_dir=default_output_root() / path.stem)
    return cfg.validate()
