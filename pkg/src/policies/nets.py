"""
Actor-critic networks of the meta, interaction, reachability and base policies
"""

import logging
from typing import Dict, List, Tuple, Type, Union

import numpy as np

from ..errors import ShapeError
from ..knowledge.graphs import EDGE_FEATURES, NODE_FEATURES
from ..numeric.distributions import categorical_entropy
from ..numeric.graph import GraphBatch, gatv2_forward, global_add_pool
from ..numeric.layers import conv2d_forward, linear_forward, maxpool2d_forward
from ..numeric.optim import ParamSet
from ..numeric.tensor import Tensor, elu, log_softmax, no_grad, pick, reshape, softmax

logger = logging.getLogger(__name__)

META_ACTIONS: List[str] = ["pickup", "drop", "reveal", "open", "open_with_key"]
NUM_LOW_LEVEL_ACTIONS = 6
HIDDEN = 64

GAT_WIDTH = 16
GAT_HEADS = 4
META_NODE_FEATURES = NODE_FEATURES
META_EDGE_FEATURES = EDGE_FEATURES

CONV_CHANNELS = (16, 32, 64)
KERNEL = 2
VIEW = 7


def _head_shapes(prefix: str, in_features: int, out_features: int) -> Dict[str, Tuple[int, ...]]:
    return {
        f"{prefix}/w1": (in_features, HIDDEN),
        f"{prefix}/b1": (HIDDEN,),
        f"{prefix}/w2": (HIDDEN, out_features),
        f"{prefix}/b2": (out_features,),
    }


def _meta_shapes() -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    in_features = META_NODE_FEATURES
    for layer in ("gat1", "gat2"):
        shapes[f"{layer}/theta"] = (in_features, GAT_WIDTH)
        shapes[f"{layer}/edge"] = (META_EDGE_FEATURES, GAT_WIDTH)
        shapes[f"{layer}/att"] = (GAT_HEADS, GAT_WIDTH // GAT_HEADS)
        shapes[f"{layer}/bias"] = (GAT_WIDTH,)
        in_features = GAT_WIDTH
    shapes.update(_head_shapes("actor", GAT_WIDTH, len(META_ACTIONS)))
    shapes.update(_head_shapes("critic", GAT_WIDTH, 1))
    return shapes


def _conv_shapes(in_channels: int) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    previous = in_channels
    for i, channels in enumerate(CONV_CHANNELS, start=1):
        shapes[f"conv{i}/kernel"] = (channels, previous, KERNEL, KERNEL)
        shapes[f"conv{i}/bias"] = (channels,)
        previous = channels
    shapes.update(_head_shapes("actor", CONV_CHANNELS[-1], NUM_LOW_LEVEL_ACTIONS))
    shapes.update(_head_shapes("critic", CONV_CHANNELS[-1], 1))
    return shapes


def _fan_in(name: str, shape: Tuple[int, ...]) -> int:
    if name.endswith("/kernel"):
        return int(np.prod(shape[1:]))
    if name.endswith("/att"):
        return shape[1]
    return shape[0]


def param_shapes(kind: str) -> Dict[str, Tuple[int, ...]]:
    if kind == "meta":
        return _meta_shapes()
    if kind in ("interaction", "reach"):
        return _conv_shapes(4)
    if kind == "base":
        return _conv_shapes(3)
    raise ValueError(f"unknown net kind {kind}")


def init_params(kind: str, rng: np.random.Generator, dtype=np.float32) -> ParamSet:
    """
    Uniform fan-in initialization: weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
    biases zero
    """
    params = ParamSet(dtype=dtype)
    for name, shape in param_shapes(kind).items():
        if name.endswith("/bias") or name.endswith("/b1") or name.endswith("/b2"):
            params.add(name, np.zeros(shape))
        else:
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
            params.add(name, rng.uniform(-bound, bound, size=shape))
    return params


def _head(x: Tensor, p: Dict[str, Tensor]) -> Tensor:
    return linear_forward(elu(linear_forward(x, p["w1"], p["b1"])), p["w2"], p["b2"])


class ActorCritic:
    """
    Shared forward protocol: ``forward(inputs) -> (logits (B, A), values (B,))``
    over the parameters in ``self.params``
    """

    kind = ""

    def __init__(self, params: ParamSet):
        expected = param_shapes(self.kind)
        if params.names() != list(expected):
            raise ShapeError(f"{self.kind} net parameters {params.names()} do not match {list(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"{self.kind} parameter {name} has shape {params[name].shape}, expected {shape}")
        self.params = params

    @classmethod
    def create(cls, rng: np.random.Generator, dtype=np.float32) -> "ActorCritic":
        return cls(init_params(cls.kind, rng, dtype))

    def snapshot(self) -> "ActorCritic":
        return type(self)(self.params.snapshot())

    def forward(self, inputs) -> Tuple[Tensor, Tensor]:
        raise NotImplementedError

    def predict(self, inputs) -> Tuple[np.ndarray, np.ndarray]:
        """Inference without a tape: (probabilities (B, A), values (B,))"""
        with no_grad():
            logits, values = self.forward(inputs)
            probs = softmax(logits, axis=-1).data
        return probs, values.data

    def evaluate_actions(self, inputs, actions: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
        """Differentiable (log-prob of ``actions``, values, per-row entropy)"""
        logits, values = self.forward(inputs)
        log_probs = pick(log_softmax(logits, axis=-1), np.asarray(actions, dtype=np.int64))
        return log_probs, values, categorical_entropy(logits)


class MetaPolicyNet(ActorCritic):
    """Two attention layers, sum pooling, then actor and critic heads"""

    kind = "meta"

    def forward(self, batch: GraphBatch) -> Tuple[Tensor, Tensor]:
        if batch.x.shape[1] != META_NODE_FEATURES:
            raise ShapeError(f"meta net expects {META_NODE_FEATURES} node features, got {batch.x.shape[1]}")
        h = Tensor(batch.x)
        for layer in ("gat1", "gat2"):
            h = elu(gatv2_forward(batch, h, self.params.group(layer), heads=GAT_HEADS))
        pooled = global_add_pool(h, batch.batch, batch.num_graphs)
        logits = _head(pooled, self.params.group("actor"))
        values = reshape(_head(pooled, self.params.group("critic")), (batch.num_graphs,))
        return logits, values


class InteractionPolicyNet(ActorCritic):
    """Convolutional trunk over a (C, 7, 7) egocentric view"""

    kind = "interaction"
    in_channels = 4

    def trunk(self, obs: Union[np.ndarray, Tensor]) -> Tensor:
        x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=np.float64))
        if x.ndim == 3:
            x = reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, VIEW, VIEW):
            raise ShapeError(f"{self.kind} net expects (N, {self.in_channels}, {VIEW}, {VIEW}), got {x.shape}")
        p = self.params
        h = elu(conv2d_forward(x, p["conv1/kernel"], p["conv1/bias"]))
        h = maxpool2d_forward(h, 2)
        h = elu(conv2d_forward(h, p["conv2/kernel"], p["conv2/bias"]))
        h = elu(conv2d_forward(h, p["conv3/kernel"], p["conv3/bias"]))
        return reshape(h, (h.shape[0], CONV_CHANNELS[-1]))

    def forward(self, obs) -> Tuple[Tensor, Tensor]:
        features = self.trunk(obs)
        logits = _head(features, self.params.group("actor"))
        values = reshape(_head(features, self.params.group("critic")), (features.shape[0],))
        return logits, values


class ReachPolicyNet(InteractionPolicyNet):
    kind = "reach"


class BasePolicyNet(InteractionPolicyNet):
    """Flat agent: same trunk without the activation channel"""

    kind = "base"
    in_channels = 3


NET_CLASSES: Dict[str, Type[ActorCritic]] = {
    cls.kind: cls for cls in (MetaPolicyNet, InteractionPolicyNet, ReachPolicyNet, BasePolicyNet)
}


def meta_forward(net: MetaPolicyNet, encoded: GraphBatch) -> Tuple[float, np.ndarray]:
    """State value and meta-action distribution of a single encoded type graph"""
    if encoded.num_graphs != 1:
        raise ShapeError(f"meta_forward takes one graph, got {encoded.num_graphs}")
    probs, values = net.predict(encoded)
    return float(values[0]), probs[0]


def interaction_forward(net: InteractionPolicyNet, obs: np.ndarray) -> Tuple[float, np.ndarray]:
    """State value and low-level action distribution of a single view"""
    probs, values = net.predict(obs)
    return float(values[0]), probs[0]
