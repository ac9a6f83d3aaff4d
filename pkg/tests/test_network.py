import numpy as np
import pytest

from candlecast.errors import CheckpointError, ContractError, TrainingDiverged
from candlecast.nn import Network, TrainConfig, build_table2_network, load_weights, predict, save_weights, train
from candlecast.nn import checkpoint as ck
from candlecast.nn.layers import softmax_cross_entropy
from candlecast.nn.network import (
    ConvSpec,
    DenseSpec,
    DropoutSpec,
    FlattenSpec,
    NetworkSpec,
    PoolSpec,
    ResidualSpec,
    SoftmaxOutput,
)
from candlecast.windows import DatasetSpec
from gradcheck import numeric_grad, rel_error


def pooled(d, times=4):
    for _ in range(times):
        d //= 2
    return d


def test_table2_layer_order():
    net = build_table2_network(DatasetSpec(20, 50))
    kinds = [type(l).__name__ for l in net.layers]
    assert kinds == [
        "ConvSpec", "PoolSpec", "ConvSpec", "PoolSpec", "DropoutSpec", "ConvSpec", "PoolSpec",
        "ConvSpec", "PoolSpec", "DropoutSpec", "FlattenSpec", "DenseSpec", "DropoutSpec", "SoftmaxOutput",
    ]  # fmt: skip
    assert [l.filters for l in net.layers if isinstance(l, ConvSpec)] == [32, 48, 64, 96]


@pytest.mark.parametrize("dim, flat", [(50, 864), (20, 96)])
def test_flatten_size(dim, flat):
    # hand trace: 50 -> 25 -> 12 -> 6 -> 3 and 20 -> 10 -> 5 -> 2 -> 1
    assert pooled(dim) ** 2 * 96 == flat
    assert build_table2_network(DatasetSpec(5, dim)).flatten_size == flat


def test_spatial_trace_dim50():
    spec = build_table2_network(DatasetSpec(5, 50))
    trace = spec.shape_trace()
    assert trace == [
        (50, 50, 32), (25, 25, 32), (25, 25, 48), (12, 12, 48), (12, 12, 48), (12, 12, 64), (6, 6, 64),
        (6, 6, 96), (3, 3, 96), (3, 3, 96), (864,), (256,), (256,), (2,),
    ]  # fmt: skip


def test_dimension_too_small():
    with pytest.raises(ContractError):
        build_table2_network(DatasetSpec(5, 10))


def test_network_forward_shape():
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    assert net.forward(np.zeros((3, 20, 20, 3), np.float32)).shape == (3, 2)
    with pytest.raises(ContractError):
        net.forward(np.zeros((3, 50, 50, 3), np.float32))


def test_predict_zero_final_dense():
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    net.layers[-1].params["weight"][:] = 0
    label, (p0, p1) = predict(net, np.random.default_rng(0).random((20, 20, 3), dtype=np.float32))
    assert (p0, p1) == (0.5, 0.5) and label == 0


def test_predict_is_pure():
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=3)
    x = np.random.default_rng(1).random((20, 20, 3), dtype=np.float32)
    a, b = predict(net, x), predict(net, x)
    assert a == b
    assert abs(sum(a[1]) - 1) < 1e-6
    with pytest.raises(ContractError):
        predict(net, x[None])


def toy_data(n=16, dim=20, seed=0):
    r = np.random.default_rng(seed)
    return r.random((n, dim, dim, 3), dtype=np.float32), r.integers(0, 2, n)


def test_lr_zero_leaves_params():
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    before = net.checksum()
    x, y = toy_data()
    for opt in ("adam", "sgd"):
        train(net, x, y, TrainConfig(learning_rate=0.0, epochs=3, batch_size=4, optimizer=opt))
        assert net.checksum() == before


def test_training_deterministic():
    x, y = toy_data()
    sums = []
    for _ in range(2):
        net = Network(build_table2_network(DatasetSpec(5, 20)), seed=7)
        trace = train(net, x, y, TrainConfig(epochs=1, batch_size=4, shuffle_seed=3, dropout_seed=4))
        sums.append((net.checksum(), trace.loss))
    assert sums[0] == sums[1]
    assert len(trace.loss) == len(trace.accuracy) == 1


def test_trace_length_equals_epochs():
    x, y = toy_data(4)
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    assert len(train(net, x, y, TrainConfig(epochs=3, batch_size=3)).loss) == 3


def test_sgd_reduces_loss():
    x, y = toy_data(8)
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    trace = train(net, x, y, TrainConfig(epochs=30, batch_size=8, optimizer="sgd", learning_rate=0.05))
    assert trace.loss[-1] < trace.loss[0]


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(batch_size=0)
    with pytest.raises(ContractError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ContractError):
        TrainConfig(learning_rate=-1)


def test_nan_input_names_first_layer():
    x, y = toy_data(4)
    x[0, 0, 0, 0] = np.nan
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    with pytest.raises(TrainingDiverged) as e:
        train(net, x, y, TrainConfig(epochs=1))
    assert e.value.layer == "conv1"


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_divergence_names_offending_layer():
    x, y = toy_data(4)
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    net.layers[0].params["kernel"][:] = np.float32(3e38)  # overflows inside conv1
    with pytest.raises(TrainingDiverged, match="conv1"):
        train(net, x, y, TrainConfig(epochs=1))


# --- checkpoints -------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    a = Network(build_table2_network(DatasetSpec(5, 20)), seed=1)
    b = Network(build_table2_network(DatasetSpec(5, 20)), seed=2)
    save_weights(a, tmp_path / "w.cfw")
    load_weights(b, tmp_path / "w.cfw")
    assert a.checksum() == b.checksum()
    for k, v in a.named_params().items():
        assert v.tobytes() == b.named_params()[k].tobytes()


def test_checkpoint_layout(tmp_path):
    net = Network(NetworkSpec((2, 2, 1), (FlattenSpec(), SoftmaxOutput(2))), seed=0)
    data = ck.encode_weights(net.named_params())
    assert data[:4] == b"CFW1"
    assert int.from_bytes(data[4:12], "little") == 2
    name_len = int.from_bytes(data[12:20], "little")
    assert data[20 : 20 + name_len] == b"dense1.weight"
    rank = int.from_bytes(data[20 + name_len : 28 + name_len], "little")
    assert rank == 2


def test_truncated_checkpoint_no_partial_state(tmp_path):
    a = Network(build_table2_network(DatasetSpec(5, 20)), seed=1)
    b = Network(build_table2_network(DatasetSpec(5, 20)), seed=2)
    save_weights(a, tmp_path / "w.cfw")
    data = (tmp_path / "w.cfw").read_bytes()
    (tmp_path / "t.cfw").write_bytes(data[: len(data) - 100])
    before = b.checksum()
    with pytest.raises(CheckpointError):
        load_weights(b, tmp_path / "t.cfw")
    assert b.checksum() == before


def test_bad_magic(tmp_path):
    (tmp_path / "x.cfw").write_bytes(b"NOPE" + bytes(20))
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    with pytest.raises(CheckpointError):
        load_weights(net, tmp_path / "x.cfw")


def test_dim50_checkpoint_into_dim20(tmp_path):
    big = Network(build_table2_network(DatasetSpec(5, 50)), seed=0)
    small = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    save_weights(big, tmp_path / "w.cfw")
    with pytest.raises(CheckpointError, match="shape"):
        load_weights(small, tmp_path / "w.cfw")


def test_tensor_dump_round_trip(tmp_path):
    a = np.random.default_rng(0).random((20, 20, 3), dtype=np.float32)
    ck.save_tensor(a, tmp_path / "t.cft")
    data = (tmp_path / "t.cft").read_bytes()
    assert data[:4] == b"CFT1" and int.from_bytes(data[4:12], "little") == 3
    assert np.array_equal(ck.load_tensor(tmp_path / "t.cft"), a)
    with pytest.raises(CheckpointError):
        ck.decode_tensor(data[:-1])


# --- whole-network gradient ----------------------------------------------------


def test_network_gradient_float64():
    """Conv, pool, residual, dropout (fixed mask), dense and loss composed."""
    spec = NetworkSpec(
        (6, 6, 2),
        (ConvSpec(3), PoolSpec(), ResidualSpec(), DropoutSpec(0.3), FlattenSpec(), DenseSpec(5), SoftmaxOutput(2)),
    )
    net = Network(spec, seed=11, dtype=np.float64)
    r = np.random.default_rng(5)
    for l in net.layers:
        for k in l.params:
            l.params[k] = r.normal(size=l.params[k].shape) * 0.5
    x = r.normal(size=(3, 6, 6, 2))
    y = np.array([0, 1, 1])

    def loss():
        net.seed_dropout(9)
        return float(softmax_cross_entropy(net.forward(x, training=True), y)[0])

    net.seed_dropout(9)
    _, g = softmax_cross_entropy(net.forward(x, training=True), y)
    gx = net.backward(g)
    grads = {k: v.copy() for k, v in net.named_grads().items()}
    params = net.named_params()
    for name in params:
        num = numeric_grad(lambda _p: loss(), [params[name]], 0)
        assert rel_error(grads[name], num) < 1e-6, name
    num_x = numeric_grad(lambda _x: loss(), [x], 0)
    assert rel_error(gx, num_x) < 1e-6


def test_on_epoch_stops_early():
    x, y = toy_data(4)
    net = Network(build_table2_network(DatasetSpec(5, 20)), seed=0)
    seen = []
    trace = train(net, x, y, TrainConfig(epochs=10, batch_size=4), on_epoch=lambda e, t: seen.append(e) or e == 3)
    assert seen == [1, 2, 3] and len(trace.loss) == 3
