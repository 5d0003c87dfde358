"""
Egocentric partial views of the world
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .objects import COLORS, DIR_TO_VEC, OBJECT_TO_IDX, STATE_TO_IDX, WALL

logger = logging.getLogger(__name__)

VIEW_SIZE = 7
AGENT_VIEW_POS = (VIEW_SIZE // 2, VIEW_SIZE - 1)  # (column, row)

# per-channel scale so encoded codes fall in [0, 1]
_CHANNEL_SCALE = np.array([max(OBJECT_TO_IDX.values()), len(COLORS) - 1, max(STATE_TO_IDX.values())],
                          dtype=np.float64)


@dataclass
class Observation:
    """
    7x7 view with the agent at the bottom-centre facing up

    ``cells[row, col]`` holds (type, color, state) codes; ``object_ids`` the
    world object id seen in a cell (-1 if none); ``visible`` the visibility
    mask. Rows count away from the agent upwards: row 6 is the agent's row.
    """

    cells: np.ndarray
    visible: np.ndarray
    object_ids: np.ndarray

    def to_tensor(self, activation_oid: Optional[int] = None, with_activation: bool = True) -> np.ndarray:
        """
        Encode as (C, 7, 7): scaled type/color/state channels, plus an activation
        indicator (1 at the visible cell holding ``activation_oid``) when
        ``with_activation`` is set
        """
        planes = self.cells.transpose(2, 0, 1).astype(np.float64) / _CHANNEL_SCALE[:, None, None]
        if not with_activation:
            return planes
        indicator = np.zeros((1, VIEW_SIZE, VIEW_SIZE))
        if activation_oid is not None:
            indicator[0] = ((self.object_ids == activation_oid) & self.visible).astype(np.float64)
        return np.concatenate([planes, indicator], axis=0)

    def visible_objects(self):
        """Yield (row, col, oid) for every visible cell that holds an object"""
        rows, cols = np.nonzero((self.object_ids >= 0) & self.visible)
        for r, c in zip(rows, cols):
            yield int(r), int(c), int(self.object_ids[r, c])

    def agent_cell(self) -> Tuple[int, int]:
        col, row = AGENT_VIEW_POS
        return row, col

    def faced_cell(self) -> Tuple[int, int]:
        row, col = self.agent_cell()
        return row - 1, col


def view_to_world(world, col: int, row: int) -> Tuple[int, int]:
    """World coordinates of view cell (col, row)"""
    fx, fy = DIR_TO_VEC[world.agent_dir]
    rx, ry = DIR_TO_VEC[(world.agent_dir + 1) % 4]
    ax, ay = world.agent_pos
    forward = AGENT_VIEW_POS[1] - row
    lateral = col - AGENT_VIEW_POS[0]
    return ax + fx * forward + rx * lateral, ay + fy * forward + ry * lateral


def _propagate_visibility(opaque: np.ndarray) -> np.ndarray:
    """
    Light propagation from the agent cell, row by row away from the agent;
    an opaque cell is visible itself but passes no light on
    """
    size = opaque.shape[0]
    mask = np.zeros((size, size), dtype=bool)
    col0, row0 = AGENT_VIEW_POS
    mask[row0, col0] = True
    for row in range(size - 1, -1, -1):
        for col in range(0, size - 1):
            if not mask[row, col] or opaque[row, col]:
                continue
            mask[row, col + 1] = True
            if row > 0:
                mask[row - 1, col + 1] = True
                mask[row - 1, col] = True
        for col in range(size - 1, 0, -1):
            if not mask[row, col] or opaque[row, col]:
                continue
            mask[row, col - 1] = True
            if row > 0:
                mask[row - 1, col - 1] = True
                mask[row - 1, col] = True
    return mask


def render_observation(world) -> Observation:
    """Partial egocentric view of ``world`` with occlusion by walls and shut doors"""
    size = VIEW_SIZE
    contents = np.empty((size, size), dtype=object)
    inside = np.zeros((size, size), dtype=bool)
    for row in range(size):
        for col in range(size):
            x, y = view_to_world(world, col, row)
            if 0 <= x < world.layout.width and 0 <= y < world.layout.height:
                inside[row, col] = True
                contents[row, col] = world.grid[y, x]
            else:
                contents[row, col] = WALL

    opaque = np.array([[obj is not None and not obj.see_behind() for obj in r] for r in contents])
    col0, row0 = AGENT_VIEW_POS
    opaque[row0, col0] = False
    visible = _propagate_visibility(opaque) & inside

    cells = np.zeros((size, size, 3), dtype=np.int64)
    object_ids = np.full((size, size), -1, dtype=np.int64)
    for row in range(size):
        for col in range(size):
            if not visible[row, col]:
                continue
            obj = contents[row, col]
            if obj is None:
                cells[row, col] = (OBJECT_TO_IDX["empty"], 0, 0)
            else:
                cells[row, col] = obj.encode()
                object_ids[row, col] = obj.oid
    return Observation(cells=cells, visible=visible, object_ids=object_ids)
