import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from src.env.gridworld import generate_world
from src.env.objects import COLORS, OBJECT_TO_IDX, STATE_TO_IDX, WorldObject
from src.env.observation import Observation, render_observation
from src.errors import GraphError, NoCandidatesError
from src.knowledge.graphs import (
    AGENT_NODE, EDGE_FEATURES, ENTITY_TYPES, NODE_FEATURES, TYPE_TO_IDX, Relation, activate, build_instance_graph,
    clear_activation, decode_graph_batch, encode_type_graph, entity_type_of, map_to_type_graph,
)
from src.knowledge.recommender import InteractionGoal, candidate_distribution, recommend
from src.policies.nets import META_ACTIONS

V, ADJ, CARRY, ACT = Relation.VISIBLE, Relation.ADJACENT, Relation.CARRYING, Relation.ACTIVATED
A = AGENT_NODE
FACED = (5, 3)


def make_obs(objects, hidden=()):
    """``objects`` maps (row, col) to (kind, color, state, oid); cells in ``hidden`` are not visible"""
    cells = np.zeros((7, 7, 3), dtype=np.int64)
    cells[..., 0] = OBJECT_TO_IDX["empty"]
    visible = np.ones((7, 7), dtype=bool)
    object_ids = np.full((7, 7), -1, dtype=np.int64)
    for (row, col), (kind, color, state, oid) in objects.items():
        cells[row, col] = (OBJECT_TO_IDX[kind], COLORS.index(color), STATE_TO_IDX[state] if state else 0)
        object_ids[row, col] = oid
    for row, col in hidden:
        visible[row, col] = False
        cells[row, col] = 0
    return Observation(cells=cells, visible=visible, object_ids=object_ids)


# (objects, hidden, carried, expected instance edges, expected type edges)
SCENES = {
    "empty view": ({}, (), None, set(), set()),
    "faced door": (
        {FACED: ("door", "red", "locked", 7)}, (), None,
        {(A, 7, V), (A, 7, ADJ)},
        {("agent", "door", V), ("agent", "door", ADJ)},
    ),
    "standing in an open doorway": (
        {(6, 3): ("door", "green", "open", 40), FACED: ("key", "red", None, 41)}, (), None,
        {(A, 41, V), (A, 41, ADJ)},
        {("agent", "key", V), ("agent", "key", ADJ)},
    ),
    "key next to box": (
        {(2, 2): ("key", "green", None, 1), (2, 3): ("box", "red", None, 2)}, (), None,
        {(A, 1, V), (A, 2, V), (1, 2, ADJ), (2, 1, ADJ)},
        {("agent", "key", V), ("agent", "box", V), ("key", "box", ADJ), ("box", "key", ADJ)},
    ),
    "goal and plain ball": (
        {(1, 1): ("ball", "blue", None, 3), (1, 5): ("ball", "red", None, 4)}, (), None,
        {(A, 3, V), (A, 4, V)},
        {("agent", "goal_ball", V), ("agent", "ball", V)},
    ),
    "carried key only": (
        {}, (), ("key", "yellow", 9),
        {(A, 9, CARRY)},
        {("agent", "key", CARRY)},
    ),
    "hidden object ignored": (
        {(0, 0): ("box", "grey", None, 5)}, ((0, 0),), None, set(), set(),
    ),
    "two keys collapse": (
        {(3, 1): ("key", "red", None, 11), (3, 5): ("key", "blue", None, 12)}, (), None,
        {(A, 11, V), (A, 12, V)},
        {("agent", "key", V)},
    ),
    "adjacent doors": (
        {(0, 2): ("door", "red", "closed", 20), (0, 3): ("door", "green", "open", 21)}, (), None,
        {(A, 20, V), (A, 21, V), (20, 21, ADJ), (21, 20, ADJ)},
        {("agent", "door", V), ("door", "door", ADJ)},
    ),
    "carried key facing door": (
        {FACED: ("door", "purple", "locked", 30)}, (), ("key", "purple", 31),
        {(A, 30, V), (A, 30, ADJ), (A, 31, CARRY)},
        {("agent", "door", V), ("agent", "door", ADJ), ("agent", "key", CARRY)},
    ),
    "ball on faced cell next to box": (
        {FACED: ("ball", "green", None, 40), (4, 3): ("box", "yellow", None, 41)}, (), None,
        {(A, 40, V), (A, 40, ADJ), (A, 41, V), (40, 41, ADJ), (41, 40, ADJ)},
        {("agent", "ball", V), ("agent", "ball", ADJ), ("agent", "box", V), ("ball", "box", ADJ),
         ("box", "ball", ADJ)},
    ),
}


def scene_graphs(name):
    objects, hidden, carried, _, _ = SCENES[name]
    inventory = WorldObject(carried[0], carried[1], oid=carried[2]) if carried else None
    gi = build_instance_graph(make_obs(objects, hidden), inventory)
    return gi, map_to_type_graph(gi)


class StubMeta:
    """Returns fixed values and one fixed meta-action distribution per candidate"""

    def __init__(self, values, probs=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.probs = probs

    def predict(self, batch):
        assert batch.num_graphs == self.values.size
        probs = self.probs if self.probs is not None else np.full((self.values.size, len(META_ACTIONS)), 0.2)
        return probs, self.values


class TestInstanceAndTypeGraphs:
    @pytest.mark.parametrize("name", sorted(SCENES))
    def test_scene_oracles(self, name):
        gi, gk = scene_graphs(name)
        assert gi.edges == SCENES[name][3]
        assert gk.edges == SCENES[name][4]
        assert gk.binding is None

    def test_door_state_recorded(self):
        gi, _ = scene_graphs("adjacent doors")
        assert gi.nodes[20].state == "closed"
        assert gi.nodes[21].state == "open"
        assert gi.nodes[20].rel_pos == (0, 2)

    def test_candidates_exclude_agent(self):
        gi, _ = scene_graphs("carried key facing door")
        assert gi.candidates() == [30, 31]

    def test_entity_type_vocabulary(self):
        assert entity_type_of("ball", "blue") == "goal_ball"
        assert entity_type_of("ball", "red") == "ball"
        with pytest.raises(GraphError):
            entity_type_of("wall", "grey")

    @pytest.mark.parametrize("seed", range(20))
    def test_fresh_task0_world_sees_only_doors(self, seed, full_layout):
        world = generate_world(seed, 0, full_layout)
        gk = map_to_type_graph(build_instance_graph(render_observation(world), world.carrying))
        assert gk.edges <= {("agent", "door", V)}

    def test_text_is_canonical(self):
        gi, gk = scene_graphs("key next to box")
        assert gk.to_text().splitlines()[:len(ENTITY_TYPES)] == [f"node {t}" for t in ENTITY_TYPES]
        assert "edge agent -visible-> key" in gk.to_text()
        assert gi.to_text() == scene_graphs("key next to box")[0].to_text()


class TestActivation:
    def test_single_activation_edge_and_binding(self):
        gi, gk = scene_graphs("faced door")
        gi2, gk2 = activate(gi, gk, 7)
        assert gi2.activated_target() == 7
        assert ("agent", "door", ACT) in gk2.edges
        assert gk2.binding.instance_id == 7
        assert (gk2.binding.color, gk2.binding.state) == ("red", "locked")
        assert ACT not in {rel for _, _, rel in gk.edges}

    def test_double_activation_rejected(self):
        gi, gk = scene_graphs("key next to box")
        gi2, gk2 = activate(gi, gk, 1)
        with pytest.raises(GraphError):
            activate(gi2, gk2, 2)

    def test_activating_agent_or_unknown_rejected(self):
        gi, gk = scene_graphs("key next to box")
        with pytest.raises(GraphError):
            activate(gi, gk, AGENT_NODE)
        with pytest.raises(GraphError):
            activate(gi, gk, 99)

    def test_clear_activation(self):
        gi, gk = scene_graphs("key next to box")
        gi2, gk2 = clear_activation(*activate(gi, gk, 2))
        assert gi2.edges == gi.edges and gk2.edges == gk.edges and gk2.binding is None


class TestEncoding:
    def test_shapes_and_binding_features(self):
        gi, gk = scene_graphs("faced door")
        _, gk2 = activate(gi, gk, 7)
        batch = encode_type_graph(gk2)
        assert batch.x.shape == (len(ENTITY_TYPES), NODE_FEATURES)
        assert batch.edge_attr.shape == (3, EDGE_FEATURES)
        row = batch.x[TYPE_TO_IDX["door"]]
        assert row[len(ENTITY_TYPES) + COLORS.index("red")] == 1.0
        assert row[len(ENTITY_TYPES) + len(COLORS) + STATE_TO_IDX["locked"]] == 1.0
        assert batch.x[TYPE_TO_IDX["key"], len(ENTITY_TYPES):].sum() == 0.0

    @pytest.mark.parametrize("name", sorted(SCENES))
    def test_decode_returns_sorted_edges(self, name):
        _, gk = scene_graphs(name)
        assert decode_graph_batch(encode_type_graph(gk)) == gk.sorted_edges()


class TestRecommender:
    def test_no_candidates(self, rng):
        gi, gk = scene_graphs("empty view")
        with pytest.raises(NoCandidatesError):
            recommend(gi, gk, StubMeta([]), "greedy", rng)

    def test_greedy_picks_highest_value(self, rng):
        gi, gk = scene_graphs("key next to box")
        probs = np.array([[0.1, 0.1, 0.6, 0.1, 0.1], [0.7, 0.1, 0.1, 0.05, 0.05]])
        rec = recommend(gi, gk, StubMeta([0.3, 0.9], probs), "greedy", rng)
        assert rec.goal == InteractionGoal(2, "pickup")
        assert rec.value == 0.9
        assert rec.log_prob == pytest.approx(np.log(0.7))
        assert rec.meta_state.binding.instance_id == 2

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=2, max_size=2, unique=True),
           st.floats(0.1, 10.0), st.floats(-10.0, 10.0))
    def test_greedy_is_affine_invariant(self, values, scale, shift):
        gi, gk = scene_graphs("key next to box")
        gen = np.random.default_rng(0)
        base = recommend(gi, gk, StubMeta(values), "greedy", gen)
        moved = recommend(gi, gk, StubMeta(np.asarray(values) * scale + shift), "greedy", gen)
        assert base.target == moved.target

    def test_sampling_follows_value_softmax(self):
        gi, gk = scene_graphs("key next to box")
        values = np.array([0.0, np.log(3.0)])
        gen = np.random.default_rng(5)
        picks = [recommend(gi, gk, StubMeta(values), "sample", gen).target for _ in range(4000)]
        assert np.mean(np.array(picks) == 2) == pytest.approx(0.75, abs=0.03)

    def test_candidate_distribution_temperature(self):
        assert_allclose(candidate_distribution([1.0, 1.0]), [0.5, 0.5])
        sharp = candidate_distribution([0.0, 1.0], temperature=0.01)
        assert sharp[1] > 0.999

    def test_unknown_mode(self, rng):
        gi, gk = scene_graphs("faced door")
        with pytest.raises(ValueError):
            recommend(gi, gk, StubMeta([1.0]), "best", rng)

    def test_existing_activation_is_replaced(self, rng):
        gi, gk = scene_graphs("key next to box")
        gi, gk = activate(gi, gk, 1)
        rec = recommend(gi, gk, StubMeta([0.0, 1.0]), "greedy", rng)
        assert rec.target == 2
        assert sum(rel is ACT for _, _, rel in rec.meta_state.edges) == 1
