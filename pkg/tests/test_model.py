import numpy as np
import pytest

from dualstream import autograd as ag
from dualstream.autograd import Tensor
from dualstream.errors import ConfigError, DataError
from dualstream.gradsuite import mini_model_config
from dualstream.model import (
    ChannelAttention,
    DenseBlock,
    DenseBlockSpec,
    DenseStreamConfig,
    FusionModel,
    InvertedResidual,
    InvertedResidualSpec,
    MobileStreamConfig,
    ModelConfig,
    TrainConfig,
    build_dense_stream,
    build_mobile_stream,
    checkpoint_bytes,
    expected_shapes,
    fuse_and_attend,
    load_checkpoint,
    predict,
    read_header,
    save_checkpoint,
    train,
)


def random_config(rng) -> ModelConfig:
    size = int(rng.choice([16, 24, 32, 40]))
    mobile = [InvertedResidualSpec(int(rng.integers(1, 4)), int(rng.integers(2, 9)), int(rng.integers(1, 3)))
              for _ in range(rng.integers(1, 4))]
    dense = [DenseBlockSpec(int(rng.integers(1, 3)), int(rng.integers(2, 7))) for _ in range(rng.integers(1, 3))]
    cfg = ModelConfig(
        input_size=size,
        mobile=MobileStreamConfig(int(rng.integers(2, 7)), mobile, int(rng.choice([0, 8, 12]))),
        dense=DenseStreamConfig(int(rng.integers(2, 7)), dense, float(rng.choice([0.5, 1.0]))),
        attention_reduction=1,
        seed=int(rng.integers(0, 1000)),
    )
    return cfg


# -- blocks -----------------------------------------------------------------------


def test_dense_block_channel_arithmetic():
    rng = np.random.default_rng(0)
    for c0, layers, k in [(8, 2, 12), (3, 4, 5), (16, 1, 1)]:
        block = DenseBlock(rng, c0, DenseBlockSpec(layers, k))
        out = block(Tensor(np.random.default_rng(1).standard_normal((2, c0, 6, 6)).astype(np.float32)))
        assert block.out_channels == c0 + layers * k == out.shape[1]


def test_zeroed_inverted_residual_is_identity():
    block = InvertedResidual(np.random.default_rng(0), 6, InvertedResidualSpec(4, 6, 1))
    assert block.use_residual
    block.project.weight.data[:] = 0
    x = np.random.default_rng(1).standard_normal((3, 6, 5, 5)).astype(np.float32)
    for mode in (True, False):
        block.train(mode)
        np.testing.assert_array_equal(block(Tensor(x)).data, x)


def test_strided_block_has_no_skip():
    assert not InvertedResidual(np.random.default_rng(0), 6, InvertedResidualSpec(4, 6, 2)).use_residual
    assert not InvertedResidual(np.random.default_rng(0), 6, InvertedResidualSpec(4, 8, 1)).use_residual


def test_default_streams_on_64_input():
    cfg = ModelConfig(input_size=64)
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 64, 64)).astype(np.float32))
    m, d = build_mobile_stream(cfg), build_dense_stream(cfg)
    stride2 = 1 + sum(b.stride == 2 for b in cfg.mobile.blocks)
    assert m(x).shape == (2, 32, 64 // 2 ** stride2, 64 // 2 ** stride2)
    assert d(x).shape[2:] == (8, 8)


# -- fusion ------------------------------------------------------------------------


def _pooled_maps(seed=0):
    rng = np.random.default_rng(seed)
    return (Tensor(rng.random((2, 3, 4, 4))), Tensor(rng.random((2, 5, 2, 2))))


def test_fusion_gate_open_limit():
    a, b = _pooled_maps()
    att = ChannelAttention(np.random.default_rng(0), 8, 2).astype(np.float64)
    att.expand.weight.data[:] = 0
    att.expand.bias.data[:] = 50.0
    out = fuse_and_attend(a, b, att).data
    plain = np.concatenate([a.data.mean(axis=(2, 3)), b.data.mean(axis=(2, 3))], axis=1)
    np.testing.assert_allclose(out, plain, atol=1e-3)


def test_fusion_half_gate():
    a, b = _pooled_maps(1)
    att = ChannelAttention(np.random.default_rng(0), 8, 2).astype(np.float64)
    for lin in (att.reduce, att.expand):
        lin.weight.data[:] = 0
        lin.bias.data[:] = 0
    out = fuse_and_attend(a, b, att).data
    plain = np.concatenate([a.data.mean(axis=(2, 3)), b.data.mean(axis=(2, 3))], axis=1)
    np.testing.assert_allclose(out, plain / 2, atol=1e-12)


def test_fusion_rejects_batch_mismatch():
    att = ChannelAttention(np.random.default_rng(0), 8, 2)
    with pytest.raises(ValueError):
        fuse_and_attend(Tensor(np.zeros((2, 3, 2, 2))), Tensor(np.zeros((3, 5, 2, 2))), att)


# -- forward contract ---------------------------------------------------------------


def test_forward_shape_and_finiteness():
    model = FusionModel(ModelConfig(input_size=64))
    out = model(np.random.default_rng(0).standard_normal((2, 1, 64, 64)), return_features=True)
    assert out.logits.shape == (2, 4) and np.isfinite(out.logits.data).all()
    shapes = expected_shapes(model.config)
    assert out.features["mobile"].shape[1:] == shapes["mobile"] == (32, 8, 8)
    assert out.features["dense"].shape[1:] == shapes["dense"] == (40, 8, 8)
    assert model.fused_width == shapes["fused"][0] == 72


@pytest.mark.parametrize("seed", range(10))
def test_forward_shape_contract_random_configs(seed):
    cfg = random_config(np.random.default_rng(seed))
    model = FusionModel(cfg)
    out = model(np.random.default_rng(seed).standard_normal((2, 1, cfg.input_size, cfg.input_size)),
                return_features=True)
    shapes = expected_shapes(cfg)
    assert out.logits.shape == (2,) + shapes["logits"]
    assert out.features["mobile"].shape[1:] == shapes["mobile"]
    assert out.features["dense"].shape[1:] == shapes["dense"]


def test_duplicate_images_give_identical_rows():
    model = FusionModel(mini_model_config(0)).eval()
    img = np.random.default_rng(0).standard_normal((1, 1, 16, 16))
    logits = model(np.concatenate([img, img])).data
    assert logits[0].tobytes() == logits[1].tobytes()


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(attention_reduction=5).validate()
    with pytest.raises(ConfigError):
        ModelConfig(mobile=MobileStreamConfig(blocks=[InvertedResidualSpec(stride=3)])).validate()
    with pytest.raises(ConfigError):
        ModelConfig(dense=DenseStreamConfig(compression=0.0)).validate()
    with pytest.raises(ConfigError):
        FusionModel(ModelConfig(num_classes=0))


# -- training ------------------------------------------------------------------------


def _toy_data(n=24, size=16, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 4
    x = rng.standard_normal((n, 1, size, size)).astype(np.float32) * 0.3
    h = size // 2
    for i, label in enumerate(y):
        r, c = divmod(int(label), 2)
        x[i, 0, r * h:(r + 1) * h, c * h:(c + 1) * h] += 2.0
    return x, y


def _params(model):
    return [p.data.copy() for p in model.parameters()]


def test_zero_epochs_leaves_model_unchanged():
    x, y = _toy_data()
    model = FusionModel(mini_model_config(3))
    before = checkpoint_bytes(model)
    assert train(model, (x, y), (x, y), TrainConfig(epochs=0, batch_size=8)) == []
    assert checkpoint_bytes(model) == before


def test_training_is_deterministic_and_learns():
    x, y = _toy_data()
    runs = []
    for _ in range(2):
        model = FusionModel(mini_model_config(1))
        curve = train(model, (x, y), (x, y), TrainConfig(epochs=6, batch_size=8, learning_rate=0.05, seed=2))
        runs.append((checkpoint_bytes(model), curve))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]
    assert runs[0][1][-1].train_loss < runs[0][1][0].train_loss


def test_stream_loss_leaves_model_structure_alone():
    x, y = _toy_data()
    plain, aux = FusionModel(mini_model_config(1)), FusionModel(mini_model_config(1))
    train(plain, (x, y), (x, y), TrainConfig(epochs=1, batch_size=8))
    train(aux, (x, y), (x, y), TrainConfig(epochs=1, batch_size=8, stream_loss_weight=1.0))
    assert [n for n, _ in plain.named_parameters()] == [n for n, _ in aux.named_parameters()]
    assert any(not np.array_equal(a, b) for a, b in zip(_params(plain), _params(aux)))


def test_training_config_errors():
    x, y = _toy_data(8)
    model = FusionModel(mini_model_config(0))
    with pytest.raises(ConfigError):
        train(model, (x, y), (x, y), TrainConfig(batch_size=1))
    with pytest.raises(ConfigError):
        train(model, (x, y), (x, y), TrainConfig(batch_size=16))
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0).validate()


def test_checkpoints_written_per_epoch(tmp_path):
    x, y = _toy_data()
    model = FusionModel(mini_model_config(0))
    train(model, (x, y), (x, y), TrainConfig(epochs=2, batch_size=8, checkpoint_dir=str(tmp_path)), {"tag": 1})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["epoch_001.ckpt", "epoch_002.ckpt"]
    header, _ = read_header(tmp_path / "epoch_002.ckpt")
    assert header["epoch"] == 2 and header["extra"] == {"tag": 1}


def test_predict_scores_are_probabilities():
    x, _ = _toy_data(10)
    pred = predict(FusionModel(mini_model_config(0)), x)
    np.testing.assert_allclose(pred.scores.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_array_equal(pred.labels, pred.scores.argmax(axis=1))


# -- checkpoints --------------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    x, y = _toy_data()
    model = FusionModel(mini_model_config(4))
    train(model, (x, y), (x, y), TrainConfig(epochs=1, batch_size=8))
    save_checkpoint(model, tmp_path / "m.ckpt", {"config_hash": "h"})
    back, header = load_checkpoint(tmp_path / "m.ckpt")
    assert header["extra"] == {"config_hash": "h"} and back.epochs_completed == 1
    np.testing.assert_array_equal(predict(back, x).scores, predict(model, x).scores)
    assert checkpoint_bytes(back, {"config_hash": "h"}) == (tmp_path / "m.ckpt").read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"garbage-bytes-here")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "x.ckpt")
