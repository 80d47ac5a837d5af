"""Dual-stream fusion classifier."""
from .config import DenseBlockSpec, DenseStreamConfig, InvertedResidualSpec, MobileStreamConfig, ModelConfig, TrainConfig
from .nn import BatchNorm2d, Conv2d, DepthwiseConv2d, Linear, Module
from .streams import DenseBlock, DenseStream, InvertedResidual, MobileStream, dense_out_channels
from .fusion import STREAMS, ChannelAttention, FusionModel, build_dense_stream, build_mobile_stream, expected_shapes, fuse_and_attend
from .training import EpochRecord, PredictionSet, evaluate_loss, predict, train, write_curve_csv
from .checkpoint import checkpoint_bytes, load_checkpoint, read_header, save_checkpoint

__all__ = [
    "DenseBlockSpec", "DenseStreamConfig", "InvertedResidualSpec", "MobileStreamConfig", "ModelConfig", "TrainConfig",
    "BatchNorm2d", "Conv2d", "DepthwiseConv2d", "Linear", "Module",
    "DenseBlock", "DenseStream", "InvertedResidual", "MobileStream", "dense_out_channels",
    "STREAMS", "ChannelAttention", "FusionModel", "build_dense_stream", "build_mobile_stream", "expected_shapes",
    "fuse_and_attend",
    "EpochRecord", "PredictionSet", "evaluate_loss", "predict", "train", "write_curve_csv",
    "checkpoint_bytes", "load_checkpoint", "read_header", "save_checkpoint",
]
