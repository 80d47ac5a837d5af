"""Model and training configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from ..errors import ConfigError


@dataclass
class InvertedResidualSpec:
    expansion: int = 4
    out_channels: int = 16
    stride: int = 1


@dataclass
class DenseBlockSpec:
    layers: int = 2
    growth: int = 12


def _default_mobile_blocks() -> list[InvertedResidualSpec]:
    return [
        InvertedResidualSpec(4, 16, 2),
        InvertedResidualSpec(4, 16, 1),
        InvertedResidualSpec(4, 24, 2),
        InvertedResidualSpec(4, 24, 1),
    ]


def _default_dense_blocks() -> list[DenseBlockSpec]:
    return [DenseBlockSpec(2, 12), DenseBlockSpec(2, 12)]


@dataclass
class MobileStreamConfig:
    stem_channels: int = 8
    blocks: list[InvertedResidualSpec] = field(default_factory=_default_mobile_blocks)
    # final 1x1 conv + BN + ReLU6 width; 0 ends the stream at the last block
    head_channels: int = 32


@dataclass
class DenseStreamConfig:
    stem_channels: int = 8
    blocks: list[DenseBlockSpec] = field(default_factory=_default_dense_blocks)
    compression: float = 0.5


@dataclass
class ModelConfig:
    in_channels: int = 1
    input_size: int = 224
    num_classes: int = 4
    mobile: MobileStreamConfig = field(default_factory=MobileStreamConfig)
    dense: DenseStreamConfig = field(default_factory=DenseStreamConfig)
    attention_reduction: int = 4
    seed: int = 0

    def validate(self) -> None:
        positive = {
            "in_channels": self.in_channels,
            "input_size": self.input_size,
            "num_classes": self.num_classes,
            "mobile.stem_channels": self.mobile.stem_channels,
            "dense.stem_channels": self.dense.stem_channels,
            "attention_reduction": self.attention_reduction,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not self.mobile.blocks:
            raise ConfigError("mobile stream needs at least one block")
        for i, b in enumerate(self.mobile.blocks):
            if b.expansion <= 0 or b.out_channels <= 0:
                raise ConfigError(f"mobile.blocks[{i}]: expansion and out_channels must be positive")
            if b.stride not in (1, 2):
                raise ConfigError(f"mobile.blocks[{i}]: stride must be 1 or 2, got {b.stride}")
        if self.mobile.head_channels < 0:
            raise ConfigError("mobile.head_channels must be >= 0")
        if not self.dense.blocks:
            raise ConfigError("dense stream needs at least one block")
        for i, b in enumerate(self.dense.blocks):
            if b.layers <= 0 or b.growth <= 0:
                raise ConfigError(f"dense.blocks[{i}]: layers and growth must be positive")
        if not 0.0 < self.dense.compression <= 1.0:
            raise ConfigError(f"dense.compression must lie in (0, 1], got {self.dense.compression}")
        from .streams import dense_out_channels, mobile_out_channels

        fused = mobile_out_channels(self.mobile) + dense_out_channels(self.dense)
        if fused % self.attention_reduction:
            raise ConfigError(f"attention_reduction {self.attention_reduction} does not divide fused width {fused}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        mobile = dict(d.pop("mobile", {}))
        dense = dict(d.pop("dense", {}))
        if "blocks" in mobile:
            mobile["blocks"] = [InvertedResidualSpec(**b) for b in mobile["blocks"]]
        if "blocks" in dense:
            dense["blocks"] = [DenseBlockSpec(**b) for b in dense["blocks"]]
        try:
            return cls(mobile=MobileStreamConfig(**mobile), dense=DenseStreamConfig(**dense), **d)
        except TypeError as exc:
            raise ConfigError(f"model config: {exc}") from None


@dataclass
class TrainConfig:
    epochs: int = 29
    batch_size: int = 16
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    checkpoint_dir: Optional[str] = None
    # weight of the per-stream auxiliary losses; 0 trains the fused head alone
    stream_loss_weight: float = 0.0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm needs two samples)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.stream_loss_weight < 0:
            raise ConfigError("stream_loss_weight must be >= 0")
