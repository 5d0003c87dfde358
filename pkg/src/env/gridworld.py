"""
Seedable multi-room gridworld with locked doors, keys hidden in boxes and
three held-out task variants
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..errors import EnvironmentStepError, GenerationError, RoomIndexError
from .objects import (COLORS, DIR_NAMES, DIR_TO_VEC, GOAL_COLOR, WALL, Action, Layout,
                      WorldObject)
from .observation import Observation, render_observation

logger = logging.getLogger(__name__)

TASK_IDS = (0, 1, 2, 3)
SNAPSHOT_VERSION = 1

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass
class WorldState:
    """Full simulator state; ``grid[y, x]`` holds a WorldObject or None"""

    layout: Layout
    grid: np.ndarray
    agent_pos: Tuple[int, int]
    agent_dir: int
    task_id: int
    rng: np.random.Generator
    max_steps: int
    carrying: Optional[WorldObject] = None
    step_count: int = 0
    relocation_fired: bool = False
    done: bool = False
    success: bool = False
    last_room: int = 0

    @property
    def front_pos(self) -> Tuple[int, int]:
        dx, dy = DIR_TO_VEC[self.agent_dir]
        return self.agent_pos[0] + dx, self.agent_pos[1] + dy

    def get(self, pos: Tuple[int, int]) -> Optional[WorldObject]:
        x, y = pos
        if not (0 <= x < self.layout.width and 0 <= y < self.layout.height):
            return WALL
        return self.grid[y, x]

    def put(self, pos: Tuple[int, int], obj: Optional[WorldObject]):
        self.grid[pos[1], pos[0]] = obj

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def all_objects(self) -> List[WorldObject]:
        """Every non-wall object on the grid, inside boxes and in the inventory"""
        found = []
        for obj in self.grid.flat:
            if obj is None or obj.kind == "wall":
                continue
            found.append(obj)
            if obj.kind == "box" and obj.contains is not None:
                found.append(obj.contains)
        if self.carrying is not None:
            found.append(self.carrying)
        return found


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ObjectLocation:
    """Where an object currently is: on the grid, carried, or inside a box"""

    obj: WorldObject
    where: str
    pos: Optional[Tuple[int, int]] = None


def locate_object(world: WorldState, oid: int) -> Optional[ObjectLocation]:
    if world.carrying is not None and world.carrying.oid == oid:
        return ObjectLocation(world.carrying, "inventory")
    for y in range(world.layout.height):
        for x in range(world.layout.width):
            obj = world.grid[y, x]
            if obj is None or obj.kind == "wall":
                continue
            if obj.oid == oid:
                return ObjectLocation(obj, "grid", (x, y))
            if obj.kind == "box" and obj.contains is not None and obj.contains.oid == oid:
                return ObjectLocation(obj.contains, "box", (x, y))
    return None


def locate_goal(world: WorldState) -> Optional[ObjectLocation]:
    for obj in world.all_objects():
        if obj.is_goal:
            return locate_object(world, obj.oid)
    return None


def room_index(world: WorldState, position: Tuple[int, int]) -> int:
    """
    Row-major room index of an interior or door cell; door cells belong to the
    room the agent occupied most recently
    """
    room = world.layout.room_of(position)
    if room is not None:
        return room
    obj = world.get(position)
    if obj is not None and obj.kind == "door":
        return world.last_room
    raise RoomIndexError(f"cell {position} is a wall, not part of any room")


class _Builder:
    """Mutable helper that places objects while generating a world"""

    def __init__(self, layout: Layout, rng: np.random.Generator):
        self.layout = layout
        self.rng = rng
        self.grid = np.empty((layout.height, layout.width), dtype=object)
        self.next_oid = 0
        self.reserved = set()

    def new(self, kind: str, color: str, state: Optional[str] = None,
            contains: Optional[WorldObject] = None) -> WorldObject:
        obj = WorldObject(kind, color, state, contains, self.next_oid)
        self.next_oid += 1
        return obj

    def free_cells(self, room: Tuple[int, int]) -> List[Tuple[int, int]]:
        return [c for c in self.layout.interior_cells(room)
                if self.grid[c[1], c[0]] is None and c not in self.reserved]

    def place(self, obj: WorldObject, room: Tuple[int, int]) -> Tuple[int, int]:
        cells = self.free_cells(room)
        if not cells:
            raise GenerationError(f"no free cell left in room {room} for {obj.kind}:{obj.color}")
        cell = cells[int(self.rng.integers(len(cells)))]
        self.grid[cell[1], cell[0]] = obj
        return cell


def generate_world(seed: SeedLike, task_id: int, layout: Layout = Layout()) -> WorldState:
    """
    Build a world for ``task_id``

    Task 0: goal ball in a random corner room whose doors are locked; matching
    keys hidden in boxes in the adjacent room closest to the middle; blocking
    balls in front of locked doors when the layout is obstructed.
    Task 1: the goal ball is the content of a box.
    Task 2: doors of the middle room locked too, with their keys on its floor.
    Task 3: task 0 with one-shot goal relocation armed.
    """
    if task_id not in TASK_IDS:
        raise GenerationError(f"unknown task id {task_id}")
    layout.validate()
    rng = np.random.default_rng(seed)
    b = _Builder(layout, rng)

    for y in range(layout.height):
        for x in range(layout.width):
            if layout.room_of((x, y)) is None:
                b.grid[y, x] = WALL

    doors: Dict[frozenset, Tuple[int, int]] = {}
    for room in layout.rooms():
        for other in layout.neighbors(room):
            pair = frozenset((room, other))
            if pair in doors:
                continue
            pos = layout.door_position(room, other)
            doors[pair] = pos
            b.grid[pos[1], pos[0]] = b.new("door", COLORS[int(rng.integers(len(COLORS)))], "closed")
    # cells in front of doors stay clear of randomly placed objects
    for room in layout.rooms():
        b.reserved.update(layout.door_fronts(room))

    middle = layout.middle_room
    corners = layout.corner_rooms()
    goal_room = corners[int(rng.integers(len(corners)))]
    corner_colors = [COLORS[i] for i in rng.permutation(len(COLORS))]
    blocker_colors = [c for c in COLORS if c != GOAL_COLOR]

    for corner, color in zip(corners, corner_colors):
        for other in layout.neighbors(corner):
            pos = doors[frozenset((corner, other))]
            door = b.grid[pos[1], pos[0]]
            door.color, door.state = color, "locked"
            if layout.obstructed:
                front = layout.door_front(pos, other)
                if b.grid[front[1], front[0]] is None:
                    blocker = b.new("ball", blocker_colors[int(rng.integers(len(blocker_colors)))])
                    b.grid[front[1], front[0]] = blocker
        key_room = min(layout.neighbors(corner),
                       key=lambda r: (abs(r[0] - middle[0]) + abs(r[1] - middle[1]), r[1], r[0]))
        key = b.new("key", color)
        b.place(b.new("box", COLORS[int(rng.integers(len(COLORS)))], contains=key), key_room)

    goal = b.new("ball", GOAL_COLOR)
    if task_id == 1:
        b.place(b.new("box", COLORS[int(rng.integers(len(COLORS)))], contains=goal), goal_room)
    else:
        b.place(goal, goal_room)

    if task_id == 2:
        palette = [COLORS[i] for i in rng.permutation(len(COLORS))]
        for other in layout.neighbors(middle):
            pos = doors[frozenset((middle, other))]
            door = b.grid[pos[1], pos[0]]
            if door.state != "locked":
                door.color, door.state = palette.pop(0), "locked"
            b.place(b.new("key", door.color), middle)

    free = b.free_cells(middle)
    if not free:
        raise GenerationError("no free cell for the agent in the middle room")
    agent_pos = free[int(rng.integers(len(free)))]
    agent_dir = int(rng.integers(4))

    world = WorldState(layout=layout, grid=b.grid, agent_pos=agent_pos, agent_dir=agent_dir,
                       task_id=task_id, rng=rng, max_steps=layout.step_limit,
                       last_room=layout.room_id(middle))
    logger.debug(f"Generated task {task_id} world: goal room {goal_room}, agent at {agent_pos}")
    return world


def apply_task3_dynamics(world: WorldState) -> bool:
    """
    Move the goal ball to a random neighbouring room the first time the agent
    stands in the goal's room; returns True when the relocation fired
    """
    if world.task_id != 3 or world.relocation_fired:
        return False
    located = locate_goal(world)
    if located is None or located.where != "grid":
        return False
    goal_room = world.layout.room_of(located.pos)
    if goal_room is None or room_index(world, world.agent_pos) != goal_room:
        return False

    layout = world.layout
    neighbors = layout.neighbors(layout.room_coords(goal_room))
    order = world.rng.permutation(len(neighbors))
    for i in order:
        blocked = set(layout.door_fronts(neighbors[i]))
        cells = [c for c in layout.interior_cells(neighbors[i])
                 if world.get(c) is None and c != world.agent_pos and c not in blocked]
        if cells:
            target = cells[int(world.rng.integers(len(cells)))]
            world.put(located.pos, None)
            world.put(target, located.obj)
            world.relocation_fired = True
            logger.debug(f"Goal relocated from room {goal_room} to {target}")
            return True
    return False


def step(world: WorldState, action: Union[int, Action]) -> StepResult:
    """Advance the world by one low-level action"""
    if world.done:
        raise EnvironmentStepError("step called after the episode ended")
    try:
        action = Action(int(action))
    except (ValueError, TypeError):
        raise EnvironmentStepError(f"invalid action code {action!r}")

    world.step_count += 1
    delta: Dict[str, List[int]] = {"removed": [], "added": []}
    front = world.front_pos
    target = world.get(front)

    if action == Action.left:
        world.agent_dir = (world.agent_dir - 1) % 4
    elif action == Action.right:
        world.agent_dir = (world.agent_dir + 1) % 4
    elif action == Action.forward:
        if target is None or target.can_overlap():
            world.agent_pos = front
    elif action == Action.pickup:
        if world.carrying is None and target is not None and target.can_pickup():
            world.carrying = target
            world.put(front, None)
    elif action == Action.drop:
        if world.carrying is not None and target is None:
            world.put(front, world.carrying)
            world.carrying = None
    elif action == Action.toggle and target is not None:
        if target.kind == "door":
            if target.state == "locked":
                carried = world.carrying
                if carried is not None and carried.kind == "key" and carried.color == target.color:
                    target.state = "open"
            elif target.state == "closed":
                target.state = "open"
            else:
                target.state = "closed"
        elif target.kind == "box":
            world.put(front, target.contains)
            delta["removed"].append(target.oid)
            if target.contains is not None:
                delta["added"].append(target.contains.oid)

    apply_task3_dynamics(world)
    room = world.layout.room_of(world.agent_pos)
    if room is not None:
        world.last_room = room

    reward = 0.0
    if world.carrying is not None and world.carrying.is_goal:
        world.success = True
        reward = 1.0 - world.step_count / world.max_steps
    world.done = world.success or world.step_count >= world.max_steps

    info = {"success": world.success, "room": room_index(world, world.agent_pos), "objects_delta": delta}
    return StepResult(render_observation(world), reward, world.done, info)


def world_to_text(world: WorldState) -> str:
    """
    Versioned text snapshot: a header line, one line of two-character glyphs
    per grid row, then the contents of every box
    """
    glyph_kind = {"wall": "#", "door": "D", "key": "K", "ball": "O", "box": "X"}
    door_state = {"open": "_", "closed": "D", "locked": "L"}
    carrying = world.carrying.label() if world.carrying is not None else "-"
    lines = [
        f"KIXWORLD v{SNAPSHOT_VERSION} task={world.task_id} step={world.step_count}/{world.max_steps} "
        f"agent={world.agent_pos[0]},{world.agent_pos[1]} dir={DIR_NAMES[world.agent_dir]} "
        f"carrying={carrying} relocation_fired={int(world.relocation_fired)}"
    ]
    boxes = []
    for y in range(world.layout.height):
        row = []
        for x in range(world.layout.width):
            obj = world.grid[y, x]
            if (x, y) == world.agent_pos:
                row.append(">v<^"[world.agent_dir] + " ")
            elif obj is None:
                row.append(". ")
            elif obj.kind == "wall":
                row.append("##")
            else:
                first = door_state[obj.state] if obj.kind == "door" else glyph_kind[obj.kind]
                row.append(first + obj.color[0].upper())
                if obj.kind == "box":
                    content = obj.contains.label() if obj.contains is not None else "-"
                    boxes.append(f"box {x},{y} {obj.label()} contains {content}")
        lines.append("".join(row))
    lines.extend(boxes)
    return "\n".join(lines)


class KixEnv:
    """
    Episode wrapper around WorldState that also tracks per-room occupancy

    Occupancy counts one visit per step spent on a room interior cell.
    """

    def __init__(self, layout: Layout, task_id: int = 0):
        self.layout = layout
        self.task_id = task_id
        self.world: Optional[WorldState] = None
        self.observation: Optional[Observation] = None
        self.visits = np.zeros(layout.num_rooms, dtype=np.int64)
        self.episode_return = 0.0

    def reset(self, seed: SeedLike) -> Observation:
        self.world = generate_world(seed, self.task_id, self.layout)
        self.observation = render_observation(self.world)
        self.visits = np.zeros(self.layout.num_rooms, dtype=np.int64)
        self.episode_return = 0.0
        return self.observation

    @property
    def done(self) -> bool:
        return self.world is None or self.world.done

    def step(self, action: Union[int, Action]) -> StepResult:
        result = step(self.world, action)
        room = self.layout.room_of(self.world.agent_pos)
        if room is not None:
            self.visits[room] += 1
        self.observation = result.observation
        self.episode_return += result.reward
        return result
