"""
Instance graphs built from observations and their type-space collapse

Instance graphs hold one node per observed or carried object; type graphs
hold one node per entity type. Both share the relation vocabulary below.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from ..env.objects import COLORS, COLOR_TO_IDX, GOAL_COLOR, OBJECT_TO_IDX, STATE_TO_IDX, WorldObject
from ..env.observation import Observation
from ..errors import GraphError
from ..numeric.graph import GraphBatch

logger = logging.getLogger(__name__)

AGENT_NODE = -1

ENTITY_TYPES: List[str] = ["agent", "door", "key", "ball", "goal_ball", "box"]
TYPE_TO_IDX: Dict[str, int] = {t: i for i, t in enumerate(ENTITY_TYPES)}
IDX_TO_OBJECT: Dict[int, str] = {i: k for k, i in OBJECT_TO_IDX.items()}
IDX_TO_STATE: Dict[int, str] = {i: s for s, i in STATE_TO_IDX.items()}


class Relation(Enum):
    """Edge relation types, in one-hot slot order"""

    VISIBLE = "visible"
    ADJACENT = "adjacent"
    CARRYING = "carrying"
    ACTIVATED = "activated"

    @property
    def index(self) -> int:
        return RELATIONS.index(self)


RELATIONS: List[Relation] = list(Relation)

NODE_FEATURES = len(ENTITY_TYPES) + len(COLORS) + len(STATE_TO_IDX)
EDGE_FEATURES = len(RELATIONS)

# view offsets (row, col) of the four neighbouring cells
_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def entity_type_of(kind: str, color: str) -> str:
    """Type-space entity of an object; the blue ball is the task goal"""
    if kind == "ball" and color == GOAL_COLOR:
        return "goal_ball"
    if kind not in TYPE_TO_IDX or kind == "agent":
        raise GraphError(f"object kind '{kind}' has no entity type in the vocabulary")
    return kind


@dataclass(frozen=True)
class InstanceNode:
    node_id: int
    kind: str
    color: Optional[str] = None
    state: Optional[str] = None
    rel_pos: Optional[Tuple[int, int]] = None


@dataclass
class InstanceGraph:
    nodes: Dict[int, InstanceNode]
    edges: Set[Tuple[int, int, Relation]] = field(default_factory=set)

    def candidates(self) -> List[int]:
        """Non-agent node ids in ascending order"""
        return sorted(n for n in self.nodes if n != AGENT_NODE)

    def activated_target(self) -> Optional[int]:
        targets = [dst for _, dst, rel in self.edges if rel is Relation.ACTIVATED]
        return targets[0] if targets else None

    def copy(self) -> "InstanceGraph":
        return InstanceGraph(dict(self.nodes), set(self.edges))

    def to_text(self) -> str:
        lines = []
        for node_id in sorted(self.nodes):
            n = self.nodes[node_id]
            if node_id == AGENT_NODE:
                lines.append("node agent")
                continue
            where = "carried" if n.rel_pos is None else f"view {n.rel_pos[0]},{n.rel_pos[1]}"
            state = f":{n.state}" if n.state else ""
            lines.append(f"node {node_id} {n.kind}:{n.color}{state} {where}")
        for src, dst, rel in sorted(self.edges, key=lambda e: (e[0], e[1], e[2].index)):
            lines.append(f"edge {_instance_name(src)} -{rel.value}-> {_instance_name(dst)}")
        return "\n".join(lines)


def _instance_name(node_id: int) -> str:
    return "agent" if node_id == AGENT_NODE else str(node_id)


@dataclass(frozen=True)
class Binding:
    """Links the activated type node back to the concrete instance node"""

    entity_type: str
    instance_id: int
    color: Optional[str]
    state: Optional[str]


@dataclass
class TypeGraph:
    edges: Set[Tuple[str, str, Relation]] = field(default_factory=set)
    binding: Optional[Binding] = None

    @property
    def nodes(self) -> List[str]:
        return list(ENTITY_TYPES)

    def copy(self) -> "TypeGraph":
        return TypeGraph(set(self.edges), self.binding)

    def sorted_edges(self) -> List[Tuple[str, str, Relation]]:
        return sorted(self.edges, key=lambda e: (TYPE_TO_IDX[e[0]], TYPE_TO_IDX[e[1]], e[2].index))

    def to_text(self) -> str:
        lines = [f"node {t}" for t in ENTITY_TYPES]
        lines += [f"edge {s} -{rel.value}-> {d}" for s, d, rel in self.sorted_edges()]
        if self.binding is not None:
            b = self.binding
            lines.append(f"binding {b.entity_type} -> {b.instance_id} {b.color}:{b.state or '-'}")
        return "\n".join(lines)


def build_instance_graph(obs: Observation, inventory: Optional[WorldObject] = None) -> InstanceGraph:
    """
    Observation (plus carried object) to instance graph

    visible(agent -> o) for every visible object, adjacent between objects in
    4-neighbouring cells (both directions) and agent -> o for the faced cell,
    carrying(agent -> o) for the carried object. An open door under the agent
    is not part of its view.
    """
    nodes: Dict[int, InstanceNode] = {AGENT_NODE: InstanceNode(AGENT_NODE, "agent")}
    edges: Set[Tuple[int, int, Relation]] = set()
    positions: Dict[Tuple[int, int], int] = {}

    own_cell = obs.agent_cell()
    for row, col, oid in obs.visible_objects():
        if (row, col) == own_cell:
            continue
        type_code, color_code, state_code = (int(v) for v in obs.cells[row, col])
        kind = IDX_TO_OBJECT[type_code]
        state = IDX_TO_STATE[state_code] if kind == "door" else None
        nodes[oid] = InstanceNode(oid, kind, COLORS[color_code], state, (row, col))
        positions[(row, col)] = oid
        edges.add((AGENT_NODE, oid, Relation.VISIBLE))

    for (row, col), oid in positions.items():
        for dr, dc in _NEIGHBOURS:
            other = positions.get((row + dr, col + dc))
            if other is not None:
                edges.add((oid, other, Relation.ADJACENT))

    faced = positions.get(obs.faced_cell())
    if faced is not None:
        edges.add((AGENT_NODE, faced, Relation.ADJACENT))

    if inventory is not None:
        nodes[inventory.oid] = InstanceNode(inventory.oid, inventory.kind, inventory.color, inventory.state, None)
        edges.add((AGENT_NODE, inventory.oid, Relation.CARRYING))

    return InstanceGraph(nodes, edges)


def _type_of_node(node: InstanceNode) -> str:
    if node.node_id == AGENT_NODE:
        return "agent"
    return entity_type_of(node.kind, node.color)


def map_to_type_graph(gi: InstanceGraph) -> TypeGraph:
    """Fixed instance-to-type mapping with per-relation edge deduplication"""
    types = {node_id: _type_of_node(node) for node_id, node in gi.nodes.items()}
    edges = {(types[src], types[dst], rel) for src, dst, rel in gi.edges}
    binding = None
    target = gi.activated_target()
    if target is not None:
        node = gi.nodes[target]
        binding = Binding(types[target], target, node.color, node.state)
    return TypeGraph(edges, binding)


def activate(gi: InstanceGraph, gk: TypeGraph, target: int) -> Tuple[InstanceGraph, TypeGraph]:
    """Add the single activation edge agent -> target in both graphs"""
    if target == AGENT_NODE or target not in gi.nodes:
        raise GraphError(f"cannot activate node {target}: not an object of the instance graph")
    if gi.activated_target() is not None or any(rel is Relation.ACTIVATED for _, _, rel in gk.edges):
        raise GraphError("graph already holds an activation edge")
    node = gi.nodes[target]
    entity = _type_of_node(node)
    gi2, gk2 = gi.copy(), gk.copy()
    gi2.edges.add((AGENT_NODE, target, Relation.ACTIVATED))
    gk2.edges.add(("agent", entity, Relation.ACTIVATED))
    gk2.binding = Binding(entity, target, node.color, node.state)
    return gi2, gk2


def clear_activation(gi: InstanceGraph, gk: TypeGraph) -> Tuple[InstanceGraph, TypeGraph]:
    gi2 = InstanceGraph(dict(gi.nodes), {e for e in gi.edges if e[2] is not Relation.ACTIVATED})
    gk2 = TypeGraph({e for e in gk.edges if e[2] is not Relation.ACTIVATED}, None)
    return gi2, gk2


def encode_type_graph(gk: TypeGraph) -> GraphBatch:
    """
    Node features: type one-hot, then color and door-state one-hots filled
    only on the activated node from its binding. Edge attributes: relation
    one-hot. Nodes are ordered by type index, edges by (source, target, relation).
    """
    n_types = len(ENTITY_TYPES)
    x = np.zeros((n_types, NODE_FEATURES))
    x[np.arange(n_types), np.arange(n_types)] = 1.0
    if gk.binding is not None:
        row = TYPE_TO_IDX[gk.binding.entity_type]
        if gk.binding.color is not None:
            x[row, n_types + COLOR_TO_IDX[gk.binding.color]] = 1.0
        if gk.binding.state is not None:
            x[row, n_types + len(COLORS) + STATE_TO_IDX[gk.binding.state]] = 1.0

    edges = gk.sorted_edges()
    edge_index = np.array([[TYPE_TO_IDX[s] for s, _, _ in edges],
                           [TYPE_TO_IDX[d] for _, d, _ in edges]], dtype=np.int64).reshape(2, -1)
    edge_attr = np.zeros((len(edges), EDGE_FEATURES))
    for i, (_, _, rel) in enumerate(edges):
        edge_attr[i, rel.index] = 1.0
    return GraphBatch(x, edge_index, edge_attr)


def decode_graph_batch(batch: GraphBatch) -> List[Tuple[str, str, Relation]]:
    """Edge multiset of an encoded single type graph, sorted"""
    out = []
    for (src, dst), attr in zip(batch.edge_index.T, batch.edge_attr):
        out.append((ENTITY_TYPES[int(src)], ENTITY_TYPES[int(dst)], RELATIONS[int(np.argmax(attr))]))
    return sorted(out, key=lambda e: (TYPE_TO_IDX[e[0]], TYPE_TO_IDX[e[1]], e[2].index))
