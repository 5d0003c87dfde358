"""
Graph batches and the attention message-passing layer of the meta-policy
"""

import logging
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, index_select, leaky_relu, matmul, reshape, scatter_add, segment_softmax

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2


@dataclass
class GraphBatch:
    """
    One or more graphs stacked into a single node set

    ``edge_index`` is a (2, E) array of (source, target) rows, ``batch`` maps
    every node to the graph it belongs to.
    """

    x: np.ndarray
    edge_index: np.ndarray
    edge_attr: np.ndarray
    batch: np.ndarray = None
    num_graphs: int = 1

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.edge_index = np.asarray(self.edge_index, dtype=np.int64).reshape(2, -1)
        self.edge_attr = np.asarray(self.edge_attr, dtype=np.float64)
        if self.edge_attr.ndim == 1:
            self.edge_attr = self.edge_attr.reshape(self.edge_index.shape[1], -1)
        if self.batch is None:
            self.batch = np.zeros(self.num_nodes, dtype=np.int64)
        self.batch = np.asarray(self.batch, dtype=np.int64)
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]

    def validate(self):
        if self.num_nodes == 0:
            raise ShapeError("graph batch has no nodes")
        if self.num_edges and (self.edge_index.min() < 0 or self.edge_index.max() >= self.num_nodes):
            raise ShapeError(f"edge index out of range for {self.num_nodes} nodes")
        if self.edge_attr.shape[0] != self.num_edges:
            raise ShapeError(f"edge attributes {self.edge_attr.shape} do not align with {self.num_edges} edges")
        if self.batch.shape != (self.num_nodes,):
            raise ShapeError(f"membership vector {self.batch.shape} does not match {self.num_nodes} nodes")
        if self.batch.size and (self.batch.min() < 0 or self.batch.max() >= self.num_graphs):
            raise ShapeError(f"membership vector refers to graphs outside 0..{self.num_graphs - 1}")

    def permuted(self, order: Sequence[int]) -> "GraphBatch":
        """Reorder nodes so that new node ``i`` is old node ``order[i]``"""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        return GraphBatch(self.x[order], inverse[self.edge_index], self.edge_attr.copy(),
                          self.batch[order], self.num_graphs)


def collate(graphs: Sequence[GraphBatch]) -> GraphBatch:
    """Stack single graphs into one batch with a membership vector"""
    if not graphs:
        raise ShapeError("cannot collate an empty graph list")
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs[:-1]])
    x = np.concatenate([g.x for g in graphs], axis=0)
    edge_index = np.concatenate([g.edge_index + off for g, off in zip(graphs, offsets)], axis=1)
    edge_attr = np.concatenate([g.edge_attr for g in graphs], axis=0)
    batch = np.concatenate([np.full(g.num_nodes, i, dtype=np.int64) for i, g in enumerate(graphs)])
    return GraphBatch(x, edge_index, edge_attr, batch, len(graphs))


def with_self_loops(g: GraphBatch):
    """Append one self edge per node carrying an all-zero attribute vector"""
    nodes = np.arange(g.num_nodes, dtype=np.int64)
    edge_index = np.concatenate([g.edge_index, np.stack([nodes, nodes])], axis=1)
    edge_attr = np.concatenate([g.edge_attr, np.zeros((g.num_nodes, g.edge_attr.shape[1]))], axis=0)
    return edge_index, edge_attr


def gatv2_forward(g: GraphBatch, h: Tensor, params: Dict[str, Tensor], heads: int = 4) -> Tensor:
    """
    Attention message passing with a transform shared by source and target

    score(u, v) = a . LeakyReLU(theta h_v + theta h_u + W_e e_uv), normalised by
    softmax over the in-neighbours of v plus v itself; the output of each head
    is sum_u alpha(u, v) theta h_u and the heads are concatenated.

    Args:
        g: graph structure and edge attributes
        h: node features (N, F)
        params: ``theta`` (F, H*D), ``edge`` (F_edge, H*D), ``att`` (H, D), ``bias`` (H*D,)
        heads: number of attention heads H

    Returns:
        Node features of shape (N, H*D)
    """
    h = as_tensor(h)
    theta, w_edge, att = params["theta"], params["edge"], params["att"]
    width = theta.shape[1]
    if width % heads:
        raise ShapeError(f"output width {width} is not divisible by {heads} heads")
    dim = width // heads
    if g.edge_attr.shape[1] != w_edge.shape[0]:
        raise ShapeError(f"edge attributes {g.edge_attr.shape} do not match edge transform {w_edge.shape}")

    edge_index, edge_attr = with_self_loops(g)
    src, dst = edge_index
    n_edges = src.size

    xt = matmul(h, theta)
    x_src = index_select(xt, src)
    x_dst = index_select(xt, dst)
    e = matmul(Tensor(edge_attr), w_edge)
    mixed = reshape(leaky_relu(x_src + x_dst + e, LEAKY_SLOPE), (n_edges, heads, dim))
    scores = (mixed * reshape(att, (1, heads, dim))).sum(axis=2)
    alpha = segment_softmax(scores, dst, g.num_nodes)

    messages = reshape(x_src, (n_edges, heads, dim)) * reshape(alpha, (n_edges, heads, 1))
    out = scatter_add(reshape(messages, (n_edges, width)), dst, g.num_nodes)
    if "bias" in params:
        out = out + params["bias"]
    return out


def global_add_pool(h: Tensor, batch: np.ndarray, num_graphs: int) -> Tensor:
    """Per-graph sum of member node features"""
    return scatter_add(as_tensor(h), batch, num_graphs)
