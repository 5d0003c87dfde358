"""
Policy repository: every network a variant trains, saved as one checkpoint
"""

import logging
from collections import OrderedDict
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import CheckpointError
from ..numeric.checkpoint import read_arrays, write_arrays
from ..numeric.optim import ParamSet
from .nets import (
    META_ACTIONS,
    NET_CLASSES,
    ActorCritic,
    BasePolicyNet,
    InteractionPolicyNet,
    MetaPolicyNet,
    ReachPolicyNet,
)

logger = logging.getLogger(__name__)

VARIANTS = ("KIX1", "KIX2", "BASE")
KEY_SEPARATOR = "::"


def interaction_key(interaction: str) -> str:
    return f"interaction.{interaction}"


def expected_manifest(variant: str) -> "OrderedDict[str, str]":
    """Net kind per repository key for a variant"""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant}")
    manifest: "OrderedDict[str, str]" = OrderedDict()
    if variant == "BASE":
        manifest["base"] = "base"
        return manifest
    manifest["meta"] = "meta"
    for interaction in META_ACTIONS:
        manifest[interaction_key(interaction)] = "interaction"
    if variant == "KIX2":
        manifest["reach"] = "reach"
    return manifest


class PolicyRepository:
    """
    Nets of one variant keyed by role

    KIX variants hold the meta net and one interaction net per meta-action,
    KIX2 adds the reachability net; BASE holds the flat agent only.
    """

    def __init__(self, variant: str, nets: "OrderedDict[str, ActorCritic]"):
        manifest = expected_manifest(variant)
        actual = OrderedDict((key, net.kind) for key, net in nets.items())
        if actual != manifest:
            raise CheckpointError(f"manifest mismatch for {variant}: got {dict(actual)}, expected {dict(manifest)}")
        self.variant = variant
        self.nets = nets

    @classmethod
    def create(cls, variant: str, rng: np.random.Generator) -> "PolicyRepository":
        nets: "OrderedDict[str, ActorCritic]" = OrderedDict()
        for key, kind in expected_manifest(variant).items():
            nets[key] = NET_CLASSES[kind].create(rng)
        logger.info(f"Initialized {variant} repository with {len(nets)} nets "
                    f"({sum(n.params.num_values() for n in nets.values())} parameters)")
        return cls(variant, nets)

    @property
    def meta(self) -> Optional[MetaPolicyNet]:
        return self.nets.get("meta")

    @property
    def reach(self) -> Optional[ReachPolicyNet]:
        return self.nets.get("reach")

    @property
    def base(self) -> Optional[BasePolicyNet]:
        return self.nets.get("base")

    def interaction(self, name: str) -> InteractionPolicyNet:
        return self.nets[interaction_key(name)]

    def manifest(self) -> Dict[str, str]:
        return {key: net.kind for key, net in self.nets.items()}

    def snapshot(self) -> "PolicyRepository":
        return PolicyRepository(self.variant, OrderedDict((k, n.snapshot()) for k, n in self.nets.items()))

    def restore(self, other: "PolicyRepository"):
        for key, net in self.nets.items():
            net.params.restore(other.nets[key].params)

    def to_arrays(self) -> "OrderedDict[str, np.ndarray]":
        out: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for key, net in self.nets.items():
            for name, array in net.params.arrays().items():
                out[f"{key}{KEY_SEPARATOR}{name}"] = array
        return out

    def save(self, path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
        meta = dict(metadata or {})
        meta["variant"] = self.variant
        meta["manifest"] = self.manifest()
        write_arrays(path, self.to_arrays(), meta)
        logger.info(f"Saved {self.variant} repository to {path}")
        return path

    @classmethod
    def load(cls, path: str, variant: Optional[str] = None) -> Tuple["PolicyRepository", Dict[str, Any]]:
        """Load a repository; ``variant`` rejects checkpoints of any other variant"""
        arrays, metadata = read_arrays(path)
        stored = metadata.get("variant")
        if variant is not None and stored != variant:
            raise CheckpointError(f"manifest mismatch: {path} holds variant {stored}, requested {variant}")
        if stored not in VARIANTS or metadata.get("manifest") != dict(expected_manifest(stored)):
            raise CheckpointError(f"manifest mismatch: {path} manifest does not describe a {stored} repository")

        grouped: Dict[str, "OrderedDict[str, np.ndarray]"] = {}
        for full_name, array in arrays.items():
            key, _, name = full_name.partition(KEY_SEPARATOR)
            grouped.setdefault(key, OrderedDict())[name] = array

        nets: "OrderedDict[str, ActorCritic]" = OrderedDict()
        for key, kind in expected_manifest(stored).items():
            if key not in grouped:
                raise CheckpointError(f"manifest mismatch: {path} has no parameters for {key}")
            try:
                nets[key] = NET_CLASSES[kind](ParamSet(grouped[key]))
            except ValueError as e:
                raise CheckpointError(f"manifest mismatch: {key} in {path}: {e}") from e
        return cls(stored, nets), metadata
