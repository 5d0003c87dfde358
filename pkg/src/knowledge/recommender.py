"""
Meta-level recommender: values every candidate object under activation and
proposes an (object, interaction) goal
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from ..errors import NoCandidatesError
from ..numeric.distributions import categorical_greedy, categorical_sample
from ..numeric.graph import GraphBatch, collate
from ..policies.nets import META_ACTIONS, MetaPolicyNet
from .graphs import InstanceGraph, TypeGraph, activate, clear_activation, encode_type_graph

logger = logging.getLogger(__name__)

MODES = ("sample", "greedy")


@dataclass(frozen=True)
class InteractionGoal:
    target: int
    interaction: str


@dataclass
class Recommendation:
    """
    A proposed goal plus the data the meta-level PPO update needs

    ``values`` and ``candidates`` are aligned; ``log_prob`` is the
    log-probability of ``interaction`` under the chosen object's distribution.
    """

    target: int
    interaction: str
    candidates: List[int]
    values: np.ndarray
    action_probs: np.ndarray
    action: int
    log_prob: float
    value: float
    meta_state: TypeGraph
    encoding: GraphBatch

    @property
    def goal(self) -> InteractionGoal:
        return InteractionGoal(self.target, self.interaction)


def candidate_distribution(values: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """softmax(values / temperature), max-shifted"""
    z = np.asarray(values, dtype=np.float64) / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def recommend(gi: InstanceGraph, gk: TypeGraph, meta_policy: MetaPolicyNet, mode: str,
              rng: np.random.Generator, temperature: float = 1.0) -> Recommendation:
    """
    Activate each candidate in turn, evaluate all activated type graphs in one
    batched forward pass, then choose the object and its interaction

    Raises:
        NoCandidatesError: the instance graph has no object node
    """
    if mode not in MODES:
        raise ValueError(f"unknown recommendation mode {mode}")
    candidates = gi.candidates()
    if not candidates:
        raise NoCandidatesError("no object in view or inventory to recommend")

    gi, gk = clear_activation(gi, gk)
    states = [activate(gi, gk, target)[1] for target in candidates]
    encodings = [encode_type_graph(state) for state in states]
    probs, values = meta_policy.predict(collate(encodings))

    if mode == "greedy":
        chosen = int(np.argmax(values))
        action, log_prob = categorical_greedy(probs[chosen])
    else:
        chosen, _ = categorical_sample(candidate_distribution(values, temperature), rng)
        action, log_prob = categorical_sample(probs[chosen], rng)

    rec = Recommendation(
        target=candidates[chosen],
        interaction=META_ACTIONS[action],
        candidates=candidates,
        values=values,
        action_probs=probs[chosen],
        action=action,
        log_prob=log_prob,
        value=float(values[chosen]),
        meta_state=states[chosen],
        encoding=encodings[chosen],
    )
    logger.debug(f"Recommended {rec.interaction} on {rec.target} among {len(candidates)} candidates")
    return rec
