from .checkpoint import load_tensor, load_weights, save_tensor, save_weights
from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    flatten,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    residual_backward,
    residual_forward,
    softmax,
    softmax_cross_entropy,
)
from .network import Network, NetworkSpec, build_table2_network, predict
from .train import TrainConfig, TrainTrace, train
