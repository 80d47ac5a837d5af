"""Run configuration: every stage's parameters in one JSON document."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .imageproc.augment import AugmentConfig
from .imageproc.transforms import PreprocessConfig
from .model.config import DenseBlockSpec, ModelConfig, TrainConfig


@dataclass
class SplitParams:
    group_by_source: bool = False


@dataclass
class EvalParams:
    bootstrap_resamples: int = 1000
    level: float = 0.95
    folds: int = 5


@dataclass
class SyntheticParams:
    per_class: int = 50
    size: int = 64


@dataclass
class ExplainParams:
    alpha: float = 0.4
    partition: str = "test"
    limit: int = 8


@dataclass
class RunConfig:
    """All parameters of a run.

    ``seed`` is the single source of randomness; the augmentation, model
    and training sections take their seeds from it, so those sections
    reject a ``seed`` key of their own.
    """

    dataset_root: str = "data"
    output_dir: str = "out"
    seed: int = 0
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitParams = field(default_factory=SplitParams)
    eval: EvalParams = field(default_factory=EvalParams)
    synthetic: SyntheticParams = field(default_factory=SyntheticParams)
    explain: ExplainParams = field(default_factory=ExplainParams)

    def __post_init__(self):
        self.apply_seed(self.seed)

    def apply_seed(self, seed: int) -> None:
        self.seed = int(seed)
        self.augment.seed = self.seed
        self.model.seed = self.seed
        self.train.seed = self.seed

    def validate(self) -> None:
        p = self.preprocess
        if p.size <= 0:
            raise ConfigError("preprocess.size must be positive")
        if p.h <= 0:
            raise ConfigError("preprocess.h must be positive")
        if len(p.tiles) != 2 or min(p.tiles) < 1:
            raise ConfigError("preprocess.tiles must be two positive integers")
        if p.template % 2 == 0 or p.search % 2 == 0 or p.template > p.search:
            raise ConfigError("preprocess.template and preprocess.search must be odd with template <= search")
        self.augment.validate()
        self.model.validate()
        self.train.validate()
        if self.model.input_size != p.size:
            raise ConfigError(f"model.input_size {self.model.input_size} differs from preprocess.size {p.size}")
        if self.model.in_channels != 1:
            raise ConfigError("model.in_channels must be 1 (grayscale pipeline)")
        if self.eval.bootstrap_resamples < 100:
            raise ConfigError("eval.bootstrap_resamples must be >= 100")
        if not 0 < self.eval.level < 1:
            raise ConfigError("eval.level must lie in (0, 1)")
        if self.eval.folds < 2:
            raise ConfigError("eval.folds must be >= 2")
        if self.synthetic.per_class < 3 or self.synthetic.size < 8:
            raise ConfigError("synthetic.per_class must be >= 3 and synthetic.size >= 8")
        if not 0 <= self.explain.alpha <= 1:
            raise ConfigError("explain.alpha must lie in [0, 1]")
        if self.explain.partition not in ("train", "validation", "test"):
            raise ConfigError("explain.partition must be train, validation or test")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for section in ("augment", "model", "train"):
            d[section].pop("seed")
        d["preprocess"]["tiles"] = list(self.preprocess.tiles)
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = copy.deepcopy(d)
        _reject_unknown(d, cls, "config")
        kwargs = {k: d[k] for k in ("dataset_root", "output_dir", "seed") if k in d}
        simple = {"preprocess": PreprocessConfig, "augment": AugmentConfig, "train": TrainConfig,
                  "split": SplitParams, "eval": EvalParams, "synthetic": SyntheticParams, "explain": ExplainParams}
        for name, sub in simple.items():
            if name in d:
                section = _section(d[name], name)
                if name in ("augment", "train") and "seed" in section:
                    raise ConfigError(f"{name}.seed: set the top-level seed instead")
                _reject_unknown(section, sub, name)
                if name == "preprocess" and "tiles" in section:
                    section["tiles"] = tuple(section["tiles"])
                kwargs[name] = sub(**section)
        if "model" in d:
            section = _section(d["model"], "model")
            if "seed" in section:
                raise ConfigError("model.seed: set the top-level seed instead")
            for key in ("mobile", "dense"):
                if key in section:
                    _reject_nested(section[key], f"model.{key}")
            _reject_unknown(section, ModelConfig, "model")
            kwargs["model"] = ModelConfig.from_dict(section)
        if "seed" in kwargs and not isinstance(kwargs["seed"], int):
            raise ConfigError("seed must be an integer")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        try:
            return cls.from_dict(doc)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def synthetic_preset() -> RunConfig:
    """Desk-scale settings for the bundled quadrant corpus.

    Flips are off because mirroring moves a lesion to another quadrant,
    which would contradict its label.  Both streams are trimmed so that a
    final-map cell sees about one quadrant of the 64x64 input (receptive
    fields of 23 and 33 pixels) instead of nearly the whole image, which is
    what lets per-stream Grad-CAM localise.
    """
    cfg = RunConfig(dataset_root="data/synthetic", output_dir="out")
    cfg.preprocess.size = 64
    cfg.model.input_size = 64
    cfg.model.mobile.blocks = cfg.model.mobile.blocks[:3]
    cfg.model.dense.stem_channels = 12
    cfg.model.dense.blocks = [DenseBlockSpec(1, 12), DenseBlockSpec(1, 12)]
    cfg.augment.flip_probability = 0.0
    cfg.augment.target_total = 400
    cfg.train.epochs = 30
    cfg.train.learning_rate = 0.05
    cfg.train.stream_loss_weight = 1.0
    cfg.eval.folds = 2
    return cfg


def _section(value, name: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a JSON object")
    return dict(value)


def _reject_unknown(d: dict, cls, where: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _reject_nested(d, where: str) -> None:
    from .model.config import DenseBlockSpec, DenseStreamConfig, InvertedResidualSpec, MobileStreamConfig

    cls, block = (MobileStreamConfig, InvertedResidualSpec) if where.endswith("mobile") else (DenseStreamConfig, DenseBlockSpec)
    _reject_unknown(_section(d, where), cls, where)
    for i, b in enumerate(d.get("blocks", [])):
        _reject_unknown(_section(b, f"{where}.blocks[{i}]"), block, f"{where}.blocks[{i}]")
