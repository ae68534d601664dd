"""Desk-scale 2D pick-and-place simulators with labelling functions.

A kinematic gripper moves in the unit arena; the grip channel grasps the
nearest block, releases a held one, or actuates fixtures (the gacha lid and
lever).  Object feature vectors carry absolute position, position relative to
the gripper, a held flag and type one-hots, so the labelling functions work
identically on live states and on recorded demo steps.

Environment kinds: blocks, blocks-noisy, factory, gacha, pickplace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .core import BisonError, Domain, Fact, GroundAction, ObjectTable
from .formats import Demo, DemoStep, parse_domain, parse_policy
from .rules import HLPolicy

ARENA_LO, ARENA_HI = 0.0, 1.0
DELTA = 0.02           # max gripper motion per step
EPS = 0.05             # ∞-norm radius for at/grasp/zone tests
MIN_SEP = 0.125        # minimum separation when sampling layouts
GRIP_ON = 0.25         # actuation deadband: |grip| <= GRIP_ON holds state
GRIP_DWELL = 6         # frames a grasp/release command must persist to act
EGO_DIM = 3
ACTION_DIM = 3

ENV_KINDS = ("blocks", "blocks-noisy", "factory", "gacha", "pickplace")


@dataclass
class EnvConfig:
    kind: str
    n_objects: int = 3
    seed: int = 0
    teleport_prob: Optional[float] = None  # per goal-satisfying block per step
    jam_prob: float = 0.1                  # gacha roll failure probability
    start_at_block: Optional[bool] = None  # pickplace: force robot start pad

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise BisonError("unknown env kind %r" % self.kind)
        if self.n_objects < 1:
            raise BisonError("n_objects must be >= 1")
        if self.teleport_prob is None:
            self.teleport_prob = 0.001 if self.kind == "blocks-noisy" else 0.0
        if not (0.0 <= self.teleport_prob <= 1.0):
            raise BisonError("teleport_prob must be in [0, 1]")

    @property
    def max_steps(self) -> int:
        return 2048 * self.n_objects


@dataclass
class LLState:
    ego: np.ndarray                 # [x, y, grip-openness]
    objects: dict                   # name -> feature vector, table order


# ---------------------------------------------------------------------------
# Domains and built-in policies
# ---------------------------------------------------------------------------

BLOCKS_DOMAIN_TEXT = """
(define (domain blocks)
  (:predicates (clear ?x) (gripperFree) (holding ?x) (at ?x ?y))
  (:action pick
    :parameters (?x)
    :precondition (and (clear ?x) (gripperFree))
    :effect (and (holding ?x) (not (gripperFree))))
  (:action place
    :parameters (?x ?l)
    :precondition (and (holding ?x) (clear ?l))
    :effect (and (at ?x ?l) (gripperFree) (not (holding ?x)) (not (clear ?l)))))
"""

PICKPLACE_DOMAIN_TEXT = """
(define (domain pickplace)
  (:predicates (rAt ?x) (at ?x ?y) (free) (hold ?x))
  (:action pick
    :parameters (?o ?l)
    :precondition (and (rAt ?l) (at ?o ?l) (free))
    :effect (and (hold ?o) (not (at ?o ?l)) (not (free))))
  (:action move
    :parameters (?l1 ?l2)
    :precondition (and (rAt ?l1))
    :effect (and (rAt ?l2) (not (rAt ?l1))))
  (:action place
    :parameters (?o ?l)
    :precondition (and (rAt ?l) (hold ?o))
    :effect (and (at ?o ?l) (free) (not (hold ?o)))))
"""

GACHA_DOMAIN_TEXT = """
(define (domain gacha)
  (:predicates (clear ?x) (gripperFree) (holding ?x) (at ?x ?y)
               (colourOf ?x ?c) (trayColour ?t ?c) (in ?x ?d)
               (opened ?d) (closed ?d) (achievedGoal ?c))
  (:action placeGoal
    :parameters (?x ?t ?c)
    :precondition (and (holding ?x) (colourOf ?x ?c) (trayColour ?t ?c))
    :effect (and (achievedGoal ?c) (at ?x ?t) (gripperFree) (not (holding ?x))))
  (:action pick
    :parameters (?x)
    :precondition (and (gripperFree))
    :effect (and (holding ?x) (not (gripperFree))))
  (:action discard
    :parameters (?x)
    :precondition (and (holding ?x))
    :effect (and (gripperFree) (not (holding ?x))))
  (:action open
    :parameters (?d)
    :precondition (and (closed ?d))
    :effect (and (opened ?d) (not (closed ?d))))
  (:action close
    :parameters (?d)
    :precondition (and (opened ?d))
    :effect (and (closed ?d) (not (opened ?d))))
  (:action roll
    :parameters (?d ?b)
    :precondition (and (closed ?d) (clear ?d) (gripperFree))
    :effect (oneof (and (not (clear ?d))) (and))))
"""

BLOCKS_POLICY_TEXT = """
1: (:vars ?x ?l) (:state (holding ?x) (clear ?l)) (:goal (at ?x ?l)) => (place ?x ?l)
2: (:vars ?x ?l) (:state (clear ?x) (gripperFree)) (:goal (at ?x ?l)) => (pick ?x)
"""

PICKPLACE_POLICY_TEXT = """
1: (:vars ?x ?l) (:state (hold ?x) (rAt ?l)) (:goal (at ?x ?l)) => (place ?x ?l)
2: (:vars ?x ?l ?l1) (:state (hold ?x) (rAt ?l1)) (:goal (at ?x ?l)) => (move ?l1 ?l)
3: (:vars ?x ?l ?l1) (:state (at ?x ?l1) (free) (rAt ?l1)) (:goal (at ?x ?l)) => (pick ?x ?l1)
4: (:vars ?x ?l ?l1 ?l2) (:state (at ?x ?l1) (free) (rAt ?l2)) (:goal (at ?x ?l)) => (move ?l2 ?l1)
"""

GACHA_POLICY_TEXT = """
1: (:vars ?x ?c ?t) (:state (holding ?x) (colourOf ?x ?c) (trayColour ?t ?c)) (:goal (achievedGoal ?c)) => (placeGoal ?x ?t ?c)
2: (:vars ?x ?c ?d ?t) (:state (gripperFree) (opened ?d) (in ?x ?d) (colourOf ?x ?c) (trayColour ?t ?c)) (:goal (achievedGoal ?c)) => (pick ?x)
3: (:vars ?d ?b ?c) (:state (closed ?d) (clear ?d) (gripperFree)) (:goal (achievedGoal ?c)) => (roll ?d ?b)
4: (:vars ?d ?c) (:state (closed ?d) (gripperFree)) (:goal (achievedGoal ?c)) => (open ?d)
5: (:vars ?x ?d ?c) (:state (gripperFree) (opened ?d) (in ?x ?d)) (:goal (achievedGoal ?c)) => (pick ?x)
6: (:vars ?x ?c) (:state (holding ?x)) (:goal (achievedGoal ?c)) => (discard ?x)
7: (:vars ?d ?c) (:state (opened ?d) (clear ?d) (gripperFree)) (:goal (achievedGoal ?c)) => (close ?d)
"""

_domain_cache = {}


def env_domain(kind: str) -> Domain:
    key = "blocks" if kind in ("blocks", "blocks-noisy", "factory") else kind
    if key not in _domain_cache:
        text = {"blocks": BLOCKS_DOMAIN_TEXT, "pickplace": PICKPLACE_DOMAIN_TEXT,
                "gacha": GACHA_DOMAIN_TEXT}[key]
        _domain_cache[key] = parse_domain(text)
    return _domain_cache[key]


def builtin_policy(kind: str) -> HLPolicy:
    text = {"blocks": BLOCKS_POLICY_TEXT, "blocks-noisy": BLOCKS_POLICY_TEXT,
            "factory": BLOCKS_POLICY_TEXT, "pickplace": PICKPLACE_POLICY_TEXT,
            "gacha": GACHA_POLICY_TEXT}[kind]
    return parse_policy(text, env_domain(kind))


# ---------------------------------------------------------------------------
# Labelling functions (operate on feature vectors; shared by envs and demos)
# ---------------------------------------------------------------------------

# blocks-family feature layout:
#   [x, y, relx, rely, gripdist, held, is_block, is_pad]
# gripdist is the ∞-norm distance to the gripper; the skills' grip ramps are
# linear in it, which keeps them cloneable within the fixed training budget
B_X, B_DIST, B_HELD, B_BLOCK, B_PAD = 0, 4, 5, 6, 7
BLOCKS_OBJ_DIM = 8

# gacha layout: [x, y, relx, rely, gripdist, held, is_block, is_tray, is_box,
#                colour_idx+1, box_state]
# colour_idx is 1-based so abstract colour objects (no type flag, no geometry)
# are distinguishable from hidden blocks (all-zero vectors); box_state packs
# lid-open (bit 0) and occupied (bit 1).  Kept compact: the parameter budget
# is tight at these dims.
G_BLOCK, G_TRAY, G_BOX, G_CIDX, G_BSTATE = 6, 7, 8, 9, 10
GACHA_OBJ_DIM = 11


def _near(p, q, radius=EPS):
    return max(abs(p[0] - q[0]), abs(p[1] - q[1])) < radius


def label_blocks(step, table: ObjectTable) -> frozenset:
    dom = env_domain("blocks")
    p_clear, p_free, p_hold, p_at = (dom.pred_ids[n] for n in
                                     ("clear", "gripperFree", "holding", "at"))
    blocks, pads = [], []
    held_name = None
    for name, vec in step.objects.items():
        if vec[B_BLOCK] > 0.5:
            if vec[B_HELD] > 0.5:
                held_name = name
            else:
                blocks.append((name, (vec[0], vec[1])))
        elif vec[B_PAD] > 0.5:
            pads.append((name, (vec[0], vec[1])))
    facts = set()
    if held_name is None:
        facts.add((p_free,))
    else:
        facts.add((p_hold, table.intern(held_name)))
        facts.add((p_clear, table.intern(held_name)))  # lifted above the plane
    for name, pos in blocks:
        oid = table.intern(name)
        if not any(o != name and _near(pos, q) for o, q in blocks):
            facts.add((p_clear, oid))
        for pname, ppos in pads:
            if _near(pos, ppos):
                facts.add((p_at, oid, table.intern(pname)))
    for pname, ppos in pads:
        if not any(_near(q, ppos) for _, q in blocks):
            facts.add((p_clear, table.intern(pname)))
    return frozenset(facts)


def label_pickplace(step, table: ObjectTable) -> frozenset:
    dom = env_domain("pickplace")
    p_rat, p_at, p_free, p_hold = (dom.pred_ids[n] for n in
                                   ("rAt", "at", "free", "hold"))
    blocks, pads = [], []
    held_name = None
    for name, vec in step.objects.items():
        if vec[B_BLOCK] > 0.5:
            if vec[B_HELD] > 0.5:
                held_name = name
            else:
                blocks.append((name, (vec[0], vec[1])))
        elif vec[B_PAD] > 0.5:
            pads.append((name, (vec[0], vec[1])))
    facts = set()
    if held_name is None:
        facts.add((p_free,))
    else:
        facts.add((p_hold, table.intern(held_name)))
    ego = step.ego
    nearest = min(pads, key=lambda it: (max(abs(it[1][0] - ego[0]),
                                            abs(it[1][1] - ego[1])), it[0]))
    facts.add((p_rat, table.intern(nearest[0])))
    for name, pos in blocks:
        for pname, ppos in pads:
            if _near(pos, ppos):
                facts.add((p_at, table.intern(name), table.intern(pname)))
    return frozenset(facts)


def label_gacha(step, table: ObjectTable) -> frozenset:
    dom = env_domain("gacha")
    pid = dom.pred_ids
    blocks, trays, colours = [], [], []
    box = None
    held = None
    for name, vec in step.objects.items():
        if vec[G_BLOCK] > 0.5:
            if vec[B_HELD] > 0.5:
                held = (name, vec)
            else:
                blocks.append((name, vec))
        elif vec[G_TRAY] > 0.5:
            trays.append((name, vec))
        elif vec[G_BOX] > 0.5:
            box = (name, vec)
        elif vec[G_CIDX] > 0.5:
            colours.append((name, vec))
        # all-zero vectors are hidden objects: no facts
    colour_name = {int(round(v[G_CIDX])): n for n, v in colours}
    lid_open = box is not None and int(round(box[1][G_BSTATE])) & 1
    occupied = box is not None and int(round(box[1][G_BSTATE])) & 2
    facts = set()
    if held is None:
        facts.add((pid["gripperFree"],))
    else:
        hid = table.intern(held[0])
        facts.add((pid["holding"], hid))
        facts.add((pid["clear"], hid))
        ci = int(round(held[1][G_CIDX]))
        if ci in colour_name:
            facts.add((pid["colourOf"], hid, table.intern(colour_name[ci])))
    if box is not None:
        bid = table.intern(box[0])
        facts.add((pid["opened" if lid_open else "closed"], bid))
        if not occupied:
            facts.add((pid["clear"], bid))
    for tname, tvec in trays:
        ci = int(round(tvec[G_CIDX]))
        if ci in colour_name:
            facts.add((pid["trayColour"], table.intern(tname),
                       table.intern(colour_name[ci])))
    achieved = set()
    for name, vec in blocks:
        oid = table.intern(name)
        pos = (vec[0], vec[1])
        ci = int(round(vec[G_CIDX]))
        cname = colour_name.get(ci)
        if cname is not None:
            facts.add((pid["colourOf"], oid, table.intern(cname)))
        if not any(o != name and _near(pos, (v[0], v[1])) for o, v in blocks):
            facts.add((pid["clear"], oid))
        if box is not None and _near(pos, (box[1][0], box[1][1])) and lid_open:
            facts.add((pid["in"], oid, table.intern(box[0])))
        for tname, tvec in trays:
            if _near(pos, (tvec[0], tvec[1])):
                facts.add((pid["at"], oid, table.intern(tname)))
                if cname is not None and int(round(tvec[G_CIDX])) == ci:
                    achieved.add(cname)
    for cname in achieved:
        facts.add((pid["achievedGoal"], table.intern(cname)))
    return frozenset(facts)


def make_labeller(kind: str) -> Callable:
    if kind in ("blocks", "blocks-noisy", "factory"):
        return label_blocks
    if kind == "pickplace":
        return label_pickplace
    if kind == "gacha":
        return label_gacha
    raise BisonError("unknown env kind %r" % kind)


def obj_dim(kind: str) -> int:
    return GACHA_OBJ_DIM if kind == "gacha" else BLOCKS_OBJ_DIM


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

class SimEnv:
    """Shared gripper kinematics; subclasses add layout, dynamics and skills."""

    kind = "base"

    def __init__(self, config: EnvConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.domain = env_domain(config.kind)
        self.table = ObjectTable()
        self.grip = np.array([0.5, 0.5])
        self.held: Optional[str] = None
        self.block_pos: dict = {}
        self.fixture_pos: dict = {}
        self.goal: frozenset = frozenset()
        self.grasp_count = 0
        self.release_count = 0
        self.prev_grip_cmd = 0.0

    # -- helpers ----------------------------------------------------------
    def _sample_free(self, min_sep: float = MIN_SEP, lo: float = 0.1, hi: float = 0.9,
                     avoid: Iterable = ()):
        points = list(self.block_pos.values()) + list(self.fixture_pos.values()) \
            + list(avoid)
        sep = min_sep
        for attempt in range(1200):
            p = self.rng.uniform(lo, hi, 2)
            if all(np.max(np.abs(p - np.asarray(q))) >= sep for q in points):
                return p
            if attempt % 400 == 399:  # dense layouts: relax rather than fail
                sep *= 0.8
        raise BisonError("layout sampling failed; too many objects")

    def fact(self, pred: str, *names: str) -> Fact:
        return self.domain.ground_fact(pred, names, self.table)

    def _goto(self, target, gain: float = 6.0) -> np.ndarray:
        # proportional control decelerating within gain·DELTA of the target;
        # the smooth profile is what makes the skill cloneable by MSE
        d = np.asarray(target) - self.grip
        a = np.clip(d / (gain * DELTA), -1.0, 1.0)
        return np.array([a[0], a[1], 0.0])

    def _dist(self, target) -> float:
        return float(np.max(np.abs(np.asarray(target) - self.grip)))

    def _arrived(self, target, tol: float = EPS * 0.5) -> bool:
        return self._dist(target) <= tol

    def _approach_grasp(self, target) -> np.ndarray:
        """Approach with the grip command ramping up over the grasp shell.

        Two-piece ramp: a shallow sub-threshold rise spreads supervised signal
        over the approach, and the steep piece crosses the actuation threshold
        only within ~0.072 of the target.  With layout separation MIN_SEP the
        nearest in-range block at that point is necessarily the target, so
        passing over other blocks never grasps them.
        """
        a = self._goto(target)
        d = self._dist(target)
        shallow = np.clip((2.6 * EPS - d) / (1.2 * EPS), 0.0, 1.0)
        steep = np.clip((1.5 * EPS - d) / (0.8 * EPS), 0.0, 1.0)
        a[2] = float(0.22 * shallow + 0.78 * steep)
        return a

    def _carry_release(self, target) -> np.ndarray:
        """Carry toward the target; release fires only inside the drop shell.

        Two-piece ramp: a shallow sub-threshold plateau spreads the negative
        signal over many frames (so one training epoch can fit it), and a
        steep final drop crosses the actuation threshold only once the held
        block is well inside the at() radius of its destination.
        """
        a = self._goto(target)
        d = self._dist(target)
        shallow = np.clip((2.5 * EPS - d) / (1.5 * EPS), 0.0, 1.0)
        steep = np.clip((0.9 * EPS - d) / (0.3 * EPS), 0.0, 1.0)
        a[2] = -float(0.22 * shallow + 0.78 * steep)
        return a

    def _approach_actuate(self, target) -> np.ndarray:
        """Tight actuation ramp for fixture zones (lids, levers).

        Actuation is edge-triggered, so the command withdraws after a high
        frame; repeated attempts (e.g. re-pulling a jammed lever) re-arm.
        """
        a = self._goto(target)
        if self.prev_grip_cmd > GRIP_ON:
            return a
        a[2] = float(np.clip((1.2 * EPS - self._dist(target)) / (0.6 * EPS), 0.0, 1.0))
        return a

    # -- interface ----------------------------------------------------------
    def reset(self):
        raise NotImplementedError

    def step(self, action) -> LLState:
        raise NotImplementedError

    def label(self, lls: LLState) -> frozenset:
        return make_labeller(self.config.kind)(lls, self.table)

    def render(self) -> LLState:
        raise NotImplementedError

    def oracle_skill(self, lls: LLState, hla: GroundAction) -> np.ndarray:
        raise NotImplementedError

    def _move_gripper(self, action):
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if not np.all(np.isfinite(a)):
            raise BisonError("non-finite LL action")
        self.grip = np.clip(self.grip + a[:2] * DELTA, ARENA_LO, ARENA_HI)
        if self.held is not None:
            self.block_pos[self.held] = self.grip.copy()
        return a

    def _grasp_nearest(self, a, graspable=None):
        """Close on the nearest in-range block once the command has dwelled.

        The dwell makes grasping (like releasing) an intentful act: demos keep
        approaching while the command persists, so the deep approach shell is
        supervised, and command-sign noise from a cloned controller is inert.
        """
        if self.held is not None:
            return
        if a[2] <= GRIP_ON:
            self.grasp_count = 0
            return
        self.grasp_count += 1
        if self.grasp_count < GRIP_DWELL:
            return
        best, best_d = None, EPS
        for name, pos in self.block_pos.items():
            if graspable is not None and not graspable(name):
                continue
            d = float(np.max(np.abs(pos - self.grip)))
            if d < best_d:
                best, best_d = name, d
        if best is not None:
            self.held = best
            self.block_pos[best] = self.grip.copy()
            self.grasp_count = 0
            self.release_count = 0

    def _maybe_release(self, a):
        if self.held is None or a[2] >= -GRIP_ON:
            self.release_count = 0
            return
        self.release_count += 1
        if self.release_count >= GRIP_DWELL:
            self.held = None
            self.release_count = 0


class BlocksEnv(SimEnv):
    """Blocks / BlocksNoisy / Factory: place every block on its goal pad.

    Noisy: each block resting on its goal pad teleports away with per-step
    probability.  Factory: placing an original block spawns a new block with a
    new goal pad (once per original).
    """

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.goal_pad: dict = {}
        self.spawn_pending: list = []
        self.spawn_count = 0

    def reset(self):
        n = self.config.n_objects
        names_b = ["b%d" % i for i in range(n)]
        names_p = ["p%d" % i for i in range(n)]
        for name in names_b + names_p:
            self.table.intern(name)
        for name in names_b:
            self.block_pos[name] = self._sample_free()
        for name in names_p:
            self.fixture_pos[name] = self._sample_free()
        perm = self.rng.permutation(n)
        self.goal_pad = {names_b[i]: names_p[perm[i]] for i in range(n)}
        self.goal = frozenset(self.fact("at", b, p) for b, p in self.goal_pad.items())
        self.spawn_pending = list(names_b) if self.config.kind == "factory" else []
        self.grip = self.rng.uniform(0.2, 0.8, 2)
        return self.render(), self.goal

    def render(self) -> LLState:
        ego = np.array([self.grip[0], self.grip[1],
                        0.0 if self.held is not None else 1.0])
        objs = {}
        for name in self.table.names:
            vec = np.zeros(BLOCKS_OBJ_DIM)
            if name in self.block_pos:
                pos = self.block_pos[name]
                vec[B_HELD] = 1.0 if self.held == name else 0.0
                vec[B_BLOCK] = 1.0
            else:
                pos = self.fixture_pos[name]
                vec[B_PAD] = 1.0
            vec[:2] = pos
            vec[2:4] = pos - self.grip
            vec[B_DIST] = np.max(np.abs(pos - self.grip))
            objs[name] = vec
        return LLState(ego, objs)

    def _resting_at_goal(self, name) -> bool:
        pad = self.goal_pad.get(name)
        return (pad is not None and self.held != name
                and _near(self.block_pos[name], self.fixture_pos[pad]))

    def step(self, action) -> LLState:
        a = self._move_gripper(action)
        self._grasp_nearest(a)
        self._maybe_release(a)
        # factory spawning: once per original block, at first placement
        for name in list(self.spawn_pending):
            if self._resting_at_goal(name):
                self.spawn_pending.remove(name)
                k = self.config.n_objects + self.spawn_count
                self.spawn_count += 1
                nb, np_ = "b%d" % k, "p%d" % k
                self.table.intern(nb)
                self.table.intern(np_)
                self.block_pos[nb] = self._sample_free()
                self.fixture_pos[np_] = self._sample_free()
                self.goal_pad[nb] = np_
                self.goal = self.goal | {self.fact("at", nb, np_)}
        # exogenous teleports of goal-satisfying blocks
        p = self.config.teleport_prob
        if p > 0.0:
            for name in list(self.block_pos):
                if self._resting_at_goal(name) and self.rng.random() < p:
                    self.block_pos[name] = self._sample_free()
        return self.render()

    def oracle_skill(self, lls: LLState, hla: GroundAction) -> np.ndarray:
        sch = self.domain.schemata[hla.schema_id].name
        names = [self.table.names[o] for o in hla.args]
        if sch == "pick":
            target = self.block_pos.get(names[0])
            if target is None or self.held == names[0]:
                return np.zeros(ACTION_DIM)
            return self._approach_grasp(target)
        if sch == "place":
            if self.held != names[0]:
                return np.zeros(ACTION_DIM)
            return self._carry_release(self.fixture_pos[names[1]])
        return np.zeros(ACTION_DIM)


class PickPlaceEnv(SimEnv):
    """Example-style transport world: discrete locations, a mobile gripper.

    The robot's location abstraction (rAt) is its nearest pad, so transits
    flip the abstraction exactly once between two separated pads.
    """

    # pads on a triangle/fan so straight transit paths stay out of third-pad
    # Voronoi cells (keeps HL traces minimal)
    PAD_SPOTS = [(0.2, 0.2), (0.5, 0.8), (0.8, 0.2), (0.15, 0.55), (0.85, 0.55),
                 (0.5, 0.33), (0.2, 0.85), (0.8, 0.85)]

    def reset(self):
        n = self.config.n_objects
        k = min(n + 2, len(self.PAD_SPOTS))
        names_o = ["obj%d" % i for i in range(n)]
        names_l = ["loc%d" % i for i in range(k)]
        for name in names_o + names_l:
            self.table.intern(name)
        for i, name in enumerate(names_l):
            self.fixture_pos[name] = np.asarray(self.PAD_SPOTS[i], dtype=float)
        if self.config.start_at_block is True:
            start_pad = names_l[1]
        elif self.config.start_at_block is False:
            start_pad = names_l[0]
        else:
            start_pad = names_l[int(self.rng.integers(k))]
        # object i rests on pad i+1; goals on distinct pads, avoiding the
        # robot's start pad when possible (keeps transport demos 3-location)
        goals = {}
        for i, name in enumerate(names_o):
            home = names_l[(i + 1) % k]
            jitter = self.rng.uniform(-EPS / 4, EPS / 4, 2)
            self.block_pos[name] = self.fixture_pos[home] + jitter
            choices = [l for l in names_l if l != home and l not in goals.values()]
            if len(choices) > 1 and start_pad in choices:
                choices.remove(start_pad)
            goals[name] = choices[int(self.rng.integers(len(choices)))]
        self.goal = frozenset(self.fact("at", o, l) for o, l in goals.items())
        self.grip = self.fixture_pos[start_pad].copy()
        return self.render(), self.goal

    render = BlocksEnv.render  # same feature layout

    def step(self, action) -> LLState:
        a = self._move_gripper(action)
        self._grasp_nearest(a)
        self._maybe_release(a)
        return self.render()

    def oracle_skill(self, lls: LLState, hla: GroundAction) -> np.ndarray:
        sch = self.domain.schemata[hla.schema_id].name
        names = [self.table.names[o] for o in hla.args]
        if sch == "pick":
            target = self.block_pos.get(names[0])
            if target is None or self.held == names[0]:
                return np.zeros(ACTION_DIM)
            return self._approach_grasp(target)
        if sch == "move":
            return self._goto(self.fixture_pos[names[1]])
        if sch == "place":
            if self.held != names[0]:
                return np.zeros(ACTION_DIM)
            return self._carry_release(self.fixture_pos[names[1]])
        return np.zeros(ACTION_DIM)


class GachaEnv(SimEnv):
    """Gacha-lite: produce blocks of goal colours from a box and tray them.

    The box dispenses a random-colour capsule when its lever is actuated while
    the lid is closed and the box is empty (rolls can jam).  A capsule inside
    the closed box is hidden: its feature vector is zeroed and it contributes
    no facts.  Opening the lid reveals it.
    """

    BOX = np.array([0.15, 0.5])
    LID = np.array([0.15, 0.62])
    LEVER = np.array([0.15, 0.38])
    DISCARD = [(0.30, 0.08), (0.42, 0.08), (0.54, 0.08), (0.66, 0.08),
               (0.45, 0.92), (0.60, 0.92)]

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.n_colours = config.n_objects + 1
        self.lid_open = False
        self.capsule: Optional[str] = None   # block currently inside the box
        self.block_colour: dict = {}
        self.roll_count = 0

    def reset(self):
        n = self.config.n_objects
        k = self.n_colours
        self.table.intern("box0")
        self.fixture_pos["box0"] = self.BOX.copy()
        for i in range(k):
            self.table.intern("c%d" % i)
        for i in range(k):
            name = "t%d" % i
            self.table.intern(name)
            self.fixture_pos[name] = np.array([0.85, 0.2 + 0.15 * i])
        self.goal = frozenset(self.fact("achievedGoal", "c%d" % i) for i in range(n))
        self.grip = np.array([0.5, 0.5])
        return self.render(), self.goal

    def render(self) -> LLState:
        ego = np.array([self.grip[0], self.grip[1],
                        0.0 if self.held is not None else 1.0])
        objs = {}
        for name in self.table.names:
            vec = np.zeros(GACHA_OBJ_DIM)
            if name in self.block_pos:
                hidden = (name == self.capsule and not self.lid_open)
                if not hidden:
                    pos = self.block_pos[name]
                    vec[:2] = pos
                    vec[2:4] = pos - self.grip
                    vec[B_DIST] = np.max(np.abs(pos - self.grip))
                    vec[B_HELD] = 1.0 if self.held == name else 0.0
                    vec[G_BLOCK] = 1.0
                    vec[G_CIDX] = self.block_colour[name] + 1.0
            elif name == "box0":
                vec[:2] = self.BOX
                vec[2:4] = self.BOX - self.grip
                vec[B_DIST] = np.max(np.abs(self.BOX - self.grip))
                vec[G_BOX] = 1.0
                vec[G_BSTATE] = (1.0 if self.lid_open else 0.0) \
                    + (2.0 if self.capsule is not None else 0.0)
            elif name.startswith("t"):
                pos = self.fixture_pos[name]
                vec[:2] = pos
                vec[2:4] = pos - self.grip
                vec[B_DIST] = np.max(np.abs(pos - self.grip))
                vec[G_TRAY] = 1.0
                vec[G_CIDX] = float(int(name[1:])) + 1.0
            else:  # colour objects are abstract: colour index only
                vec[G_CIDX] = float(int(name[1:])) + 1.0
            objs[name] = vec
        return LLState(ego, objs)

    def step(self, action) -> LLState:
        a = self._move_gripper(action)
        rising = a[2] > GRIP_ON >= self.prev_grip_cmd
        if rising and self.held is None and _near(self.grip, self.LID):
            self.lid_open = not self.lid_open
        elif rising and self.held is None and _near(self.grip, self.LEVER):
            if not self.lid_open and self.capsule is None:
                if self.rng.random() >= self.config.jam_prob:
                    name = "g%d" % self.roll_count
                    self.roll_count += 1
                    self.table.intern(name)
                    self.block_pos[name] = self.BOX.copy()
                    self.block_colour[name] = int(self.rng.integers(self.n_colours))
                    self.capsule = name
        elif not (_near(self.grip, self.LID) or _near(self.grip, self.LEVER)):
            self._grasp_nearest(a, graspable=lambda n: n != self.capsule or self.lid_open)
            if self.held == self.capsule:
                self.capsule = None
        self._maybe_release(a)
        self.prev_grip_cmd = float(a[2])
        return self.render()

    def oracle_skill(self, lls: LLState, hla: GroundAction) -> np.ndarray:
        sch = self.domain.schemata[hla.schema_id].name
        names = [self.table.names[o] for o in hla.args]
        if sch in ("open", "close"):
            return self._approach_actuate(self.LID)
        if sch == "roll":
            return self._approach_actuate(self.LEVER)
        if sch == "pick":
            target = self.block_pos.get(names[0])
            if target is None or self.held == names[0]:
                return np.zeros(ACTION_DIM)
            return self._approach_grasp(target)
        if sch == "placeGoal":
            if self.held != names[0]:
                return np.zeros(ACTION_DIM)
            return self._carry_release(self.fixture_pos[names[1]])
        if sch == "discard":
            if self.held != names[0]:
                return np.zeros(ACTION_DIM)
            slot = int(names[0][1:]) if names[0][1:].isdigit() else 0
            target = np.asarray(self.DISCARD[slot % len(self.DISCARD)])
            return self._carry_release(target)
        return np.zeros(ACTION_DIM)


def make_env(config: EnvConfig) -> SimEnv:
    if config.kind in ("blocks", "blocks-noisy", "factory"):
        return BlocksEnv(config)
    if config.kind == "pickplace":
        return PickPlaceEnv(config)
    if config.kind == "gacha":
        return GachaEnv(config)
    raise BisonError("unknown env kind %r" % config.kind)


def episode_seed(base_seed: int, episode: int) -> int:
    return base_seed * 10007 + episode


def generate_demos(config: EnvConfig, count: int, max_attempts: int = None):
    """Oracle episodes as Demo records; only goal-achieving episodes are kept.

    Episode e runs with seed base·10007+e.  For pickplace, episode parity
    alternates the robot's start (at the block's pad / away from it) so both
    demo shapes appear.
    """
    from dataclasses import replace
    from .runner import Executor, run_episode

    demos = []
    attempts = 0
    cap = max_attempts if max_attempts is not None else max(count * 5, count + 20)
    ep = 0
    while len(demos) < count and attempts < cap:
        cfg = replace(config, seed=episode_seed(config.seed, ep))
        if config.kind == "pickplace" and config.start_at_block is None:
            cfg = replace(cfg, start_at_block=(ep % 2 == 0))
        env = make_env(cfg)
        record = []
        result = run_episode(env, Executor(strategy="oracle"), record=record)
        attempts += 1
        ep += 1
        if result.success:
            goal_names = tuple(
                tuple([env.domain.predicates[f[0]].name]
                      + [env.table.names[o] for o in f[1:]])
                for f in sorted(env.goal))
            steps = [DemoStep(list(map(float, lls.ego)),
                              {k: list(map(float, v)) for k, v in lls.objects.items()},
                              list(map(float, act)))
                     for lls, act in record]
            demos.append(Demo(goal_names, steps))
    return demos
