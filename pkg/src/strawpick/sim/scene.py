"""Tabletop strawberry scene: berries on flexible stems, pushable leaves.

Six cluster states (0-5) cover the occlusion scenarios used for training and
evaluation: state 0 is a single unobstructed ripe berry; states 1-4 are
three-berry clusters with increasing occlusion; state 5 is a two-berry
cluster.  The layout table is an interpretation of cluster photographs and is
overridable via a config file (see :func:`load_state_table`).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

import numpy as np

# Cultivation pipe height and stem drop; berries hang below their anchors.
PIPE_Z = 0.30
STEM_DROP = 0.08
BERRY_RADIUS = 0.012

# Rest positions are jittered per scene seed, capped well below the stem
# slack so nominal clearances survive the noise.
JITTER_XY = 0.008
JITTER_Z = 0.005


class InvalidState(ValueError):
    """Raised for a cluster state id outside 0..5."""


@dataclass
class Berry:
    id: int
    ripe: bool
    anchor: np.ndarray        # (3,) stem attachment on the pipe
    rest_pos: np.ndarray      # (3,) unloaded hang position
    cur_pos: np.ndarray       # (3,) current center
    attached: bool = True
    radius: float = BERRY_RADIUS

    def picking_point(self, at_rest: bool = False) -> np.ndarray:
        """Stem point 1 cm above the berry top, where grasp/detach happens."""
        base = self.rest_pos if at_rest else self.cur_pos
        return base + np.array([0.0, 0.0, self.radius + 0.01])


@dataclass
class Leaf:
    anchor: np.ndarray        # (3,)
    rest_center: np.ndarray   # (3,) ellipse center at rest
    cur_center: np.ndarray    # (3,)
    axes: tuple[float, float] = (0.03, 0.018)
    orientation: float = 0.0  # in-plane rotation, rad
    pushable: bool = True


@dataclass
class Scene:
    berries: list[Berry]
    leaves: list[Leaf]
    target_id: int
    state_id: int
    seed: int

    @property
    def target(self) -> Berry:
        return next(b for b in self.berries if b.id == self.target_id)

    def occluders(self) -> list[Berry]:
        return [b for b in self.berries if b.id != self.target_id]


# Nominal layout per state: berry entries are (ripe, x, y), leaf entries
# (x, y, z).  The arm base sits at the origin; larger x is farther from it,
# so an occluder "in front of" the target has smaller x.
DEFAULT_STATE_TABLE: dict[int, dict[str, list]] = {
    0: {"berries": [(True, 0.38, 0.00)], "leaves": []},
    1: {"berries": [(True, 0.40, 0.00), (False, 0.37, 0.02), (False, 0.40, 0.07)],
        "leaves": []},
    2: {"berries": [(True, 0.40, 0.00), (False, 0.37, 0.00), (False, 0.40, -0.07)],
        "leaves": []},
    3: {"berries": [(True, 0.38, 0.00), (False, 0.38, 0.03), (False, 0.38, -0.03)],
        "leaves": []},
    4: {"berries": [(True, 0.40, 0.00), (False, 0.37, 0.02), (False, 0.37, -0.02)],
        "leaves": [(0.36, 0.0, PIPE_Z - STEM_DROP + 0.01)]},
    5: {"berries": [(True, 0.40, 0.00), (False, 0.375, 0.015)], "leaves": []},
}


def load_state_table(path: str) -> dict[int, dict[str, list]]:
    """Load a state layout table from a sectioned key-value file.

    Format::

        [state2]
        berry1 = ripe, 0.40, 0.0
        berry2 = unripe, 0.37, 0.0
        leaf1 = 0.36, 0.0, 0.23

    Berry keys start with "berry", leaf keys with "leaf"; the first berry
    field is "ripe" or "unripe", remaining fields are meters.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    table: dict[int, dict[str, list]] = {}
    for section in parser.sections():
        if not section.startswith("state"):
            continue
        sid = int(section[len("state"):])
        berries, leaves = [], []
        for key, raw in parser[section].items():
            parts = [p.strip() for p in raw.split(",")]
            if key.startswith("berry"):
                berries.append((parts[0] == "ripe",
                                float(parts[1]), float(parts[2])))
            elif key.startswith("leaf"):
                leaves.append(tuple(float(p) for p in parts[:3]))
        table[sid] = {"berries": berries, "leaves": leaves}
    return table


def make_scene(state_id: int, seed: int,
               table: dict[int, dict[str, list]] | None = None) -> Scene:
    """Build a deterministic scene for (state_id, seed).

    Rest positions get seeded jitter to model stem-deformation variability;
    exactly one berry is ripe and designated as the target.
    """
    table = DEFAULT_STATE_TABLE if table is None else table
    if state_id not in table or not 0 <= state_id <= 5:
        raise InvalidState(f"state_id must be in 0..5, got {state_id}")
    rng = np.random.default_rng([state_id, seed])
    layout = table[state_id]

    berries: list[Berry] = []
    target_id = -1
    for i, (ripe, x, y) in enumerate(layout["berries"]):
        jit = np.array([rng.uniform(-JITTER_XY, JITTER_XY),
                        rng.uniform(-JITTER_XY, JITTER_XY),
                        rng.uniform(-JITTER_Z, JITTER_Z)])
        anchor = np.array([x, y, PIPE_Z])
        rest = np.array([x, y, PIPE_Z - STEM_DROP]) + jit
        berries.append(Berry(id=i, ripe=ripe, anchor=anchor,
                             rest_pos=rest, cur_pos=rest.copy()))
        if ripe:
            target_id = i
    if target_id < 0:
        raise InvalidState(f"state {state_id} layout has no ripe berry")

    leaves: list[Leaf] = []
    for (x, y, z) in layout["leaves"]:
        jit = np.array([rng.uniform(-JITTER_XY, JITTER_XY),
                        rng.uniform(-JITTER_XY, JITTER_XY), 0.0])
        center = np.array([x, y, z]) + jit
        leaves.append(Leaf(anchor=np.array([x, y, PIPE_Z]),
                           rest_center=center, cur_center=center.copy(),
                           orientation=float(rng.uniform(-0.5, 0.5))))
    return Scene(berries=berries, leaves=leaves, target_id=target_id,
                 state_id=state_id, seed=seed)


def copy_scene(scene: Scene) -> Scene:
    """Deep copy (arrays included) so envs never share mutable state."""
    return Scene(
        berries=[replace(b, anchor=b.anchor.copy(), rest_pos=b.rest_pos.copy(),
                         cur_pos=b.cur_pos.copy()) for b in scene.berries],
        leaves=[replace(l, anchor=l.anchor.copy(),
                        rest_center=l.rest_center.copy(),
                        cur_center=l.cur_center.copy()) for l in scene.leaves],
        target_id=scene.target_id, state_id=scene.state_id, seed=scene.seed)
