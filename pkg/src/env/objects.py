"""
Object vocabulary, encodings and room layout geometry
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple

from ..errors import GenerationError

OBJECT_TO_IDX: Dict[str, int] = {
    "unseen": 0,
    "empty": 1,
    "wall": 2,
    "door": 3,
    "key": 4,
    "ball": 5,
    "box": 6,
}

COLORS: List[str] = ["red", "green", "blue", "purple", "yellow", "grey"]
COLOR_TO_IDX: Dict[str, int] = {c: i for i, c in enumerate(COLORS)}

STATE_TO_IDX: Dict[str, int] = {"open": 0, "closed": 1, "locked": 2}

GOAL_COLOR = "blue"
CARRYABLE = ("key", "ball")

# east, south, west, north with y growing downwards
DIR_TO_VEC: List[Tuple[int, int]] = [(1, 0), (0, 1), (-1, 0), (0, -1)]
DIR_NAMES = ["E", "S", "W", "N"]


class Action(IntEnum):
    left = 0
    right = 1
    forward = 2
    pickup = 3
    drop = 4
    toggle = 5


@dataclass
class WorldObject:
    """Anything that occupies a cell: wall, door, key, ball or box"""

    kind: str
    color: str = "grey"
    state: Optional[str] = None
    contains: Optional["WorldObject"] = None
    oid: int = -1

    def __post_init__(self):
        if self.kind not in OBJECT_TO_IDX or self.kind in ("unseen", "empty"):
            raise ValueError(f"unknown object kind {self.kind}")
        if self.color not in COLOR_TO_IDX:
            raise ValueError(f"unknown color {self.color}")
        if self.kind == "door" and self.state is None:
            self.state = "closed"

    @property
    def is_goal(self) -> bool:
        return self.kind == "ball" and self.color == GOAL_COLOR

    def can_pickup(self) -> bool:
        return self.kind in CARRYABLE

    def can_overlap(self) -> bool:
        return self.kind == "door" and self.state == "open"

    def see_behind(self) -> bool:
        if self.kind == "wall":
            return False
        if self.kind == "door":
            return self.state == "open"
        return True

    def encode(self) -> Tuple[int, int, int]:
        state = STATE_TO_IDX[self.state] if self.kind == "door" else 0
        return OBJECT_TO_IDX[self.kind], COLOR_TO_IDX[self.color], state

    def label(self) -> str:
        text = f"{self.kind}:{self.color}"
        if self.kind == "door":
            text += f":{self.state}"
        return f"{text}#{self.oid}"


WALL = WorldObject("wall", "grey")


@dataclass(frozen=True)
class Layout:
    """
    Grid of rooms with shared walls and one door per adjacent room pair

    Attributes:
        rooms_x, rooms_y: rooms per side
        room_size: interior extent of every (square) room
        obstructed: place blocking balls in front of locked doors
        max_steps: episode step limit; 0 selects 40 x rooms x interior area
    """

    rooms_x: int = 3
    rooms_y: int = 3
    room_size: int = 5
    obstructed: bool = True
    max_steps: int = 0

    @property
    def width(self) -> int:
        return self.rooms_x * (self.room_size + 1) + 1

    @property
    def height(self) -> int:
        return self.rooms_y * (self.room_size + 1) + 1

    @property
    def num_rooms(self) -> int:
        return self.rooms_x * self.rooms_y

    @property
    def step_limit(self) -> int:
        return self.max_steps or 40 * self.num_rooms * self.room_size ** 2

    @property
    def middle_room(self) -> Tuple[int, int]:
        return self.rooms_x // 2, self.rooms_y // 2

    def room_id(self, room: Tuple[int, int]) -> int:
        return room[1] * self.rooms_x + room[0]

    def room_coords(self, index: int) -> Tuple[int, int]:
        return index % self.rooms_x, index // self.rooms_x

    def rooms(self) -> Iterator[Tuple[int, int]]:
        for ry in range(self.rooms_y):
            for rx in range(self.rooms_x):
                yield rx, ry

    def corner_rooms(self) -> List[Tuple[int, int]]:
        corners = {(0, 0), (self.rooms_x - 1, 0), (0, self.rooms_y - 1), (self.rooms_x - 1, self.rooms_y - 1)}
        return sorted(corners - {self.middle_room}, key=lambda r: (r[1], r[0]))

    def neighbors(self, room: Tuple[int, int]) -> List[Tuple[int, int]]:
        rx, ry = room
        out = []
        for dx, dy in ((0, -1), (-1, 0), (1, 0), (0, 1)):
            nx, ny = rx + dx, ry + dy
            if 0 <= nx < self.rooms_x and 0 <= ny < self.rooms_y:
                out.append((nx, ny))
        return out

    def interior_cells(self, room: Tuple[int, int]) -> List[Tuple[int, int]]:
        step = self.room_size + 1
        x0, y0 = room[0] * step + 1, room[1] * step + 1
        return [(x, y) for y in range(y0, y0 + self.room_size) for x in range(x0, x0 + self.room_size)]

    def door_position(self, a: Tuple[int, int], b: Tuple[int, int]) -> Tuple[int, int]:
        """Cell of the door on the wall shared by two adjacent rooms"""
        (ax, ay), (bx, by) = sorted([a, b], key=lambda r: (r[1], r[0]))
        step = self.room_size + 1
        if ay == by and bx == ax + 1:
            return bx * step, ay * step + 1 + self.room_size // 2
        if ax == bx and by == ay + 1:
            return ax * step + 1 + self.room_size // 2, by * step
        raise ValueError(f"rooms {a} and {b} are not adjacent")

    def door_front(self, door: Tuple[int, int], room: Tuple[int, int]) -> Tuple[int, int]:
        """Interior cell of ``room`` directly in front of ``door``"""
        for dx, dy in DIR_TO_VEC:
            cell = (door[0] + dx, door[1] + dy)
            if self.room_of(cell) == self.room_id(room):
                return cell
        raise ValueError(f"door {door} does not open into room {room}")

    def door_fronts(self, room: Tuple[int, int]) -> List[Tuple[int, int]]:
        return [self.door_front(self.door_position(room, other), room) for other in self.neighbors(room)]

    def room_of(self, pos: Tuple[int, int]) -> Optional[int]:
        """Room index of an interior cell; None on walls and doors"""
        x, y = pos
        step = self.room_size + 1
        if not (0 < x < self.width - 1 and 0 < y < self.height - 1):
            return None
        if x % step == 0 or y % step == 0:
            return None
        return self.room_id((x // step, y // step))

    def validate(self):
        if self.num_rooms < 2:
            raise GenerationError(f"layout {self.rooms_x}x{self.rooms_y} has fewer than 2 rooms")
        if self.room_size < 3:
            raise GenerationError(f"room interior {self.room_size} is too small to host task objects")


LAYOUT_PRESETS: Dict[str, Layout] = {
    "full": Layout(rooms_x=3, rooms_y=3, room_size=5, obstructed=True),
    "mini": Layout(rooms_x=2, rooms_y=1, room_size=4, obstructed=False),
}
