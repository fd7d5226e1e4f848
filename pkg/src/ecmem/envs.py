"""
Small deterministic environments and the drifting 2D stream.

Cartpole and Acrobot follow the classic-control benchmark dynamics. The room
domains are 4-connected grids with a single rewarding goal cell. All physics
runs on plain floats; these step functions sit on the hot path of every
training run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

import numpy as np


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    truncated: bool = False


# --------------------------------------------------------------------------
# Cartpole
# --------------------------------------------------------------------------

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
FORCE_MAG = 10.0
TAU = 0.02
X_THRESHOLD = 2.4
THETA_THRESHOLD = 12 * 2 * math.pi / 360
CARTPOLE_MAX_STEPS = 500


def cartpole_reset(rng: np.random.Generator) -> Tuple[float, float, float, float]:
    return tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))


def cartpole_step(state, action: int) -> StepResult:
    """One Euler step. Action 0 pushes left, 1 pushes right."""
    if action not in (0, 1):
        raise ValueError(f"cartpole action must be 0 or 1, got {action!r}")
    x, x_dot, theta, theta_dot = state
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    cos, sin = math.cos(theta), math.sin(theta)
    total_mass = CART_MASS + POLE_MASS
    pml = POLE_MASS * POLE_HALF_LENGTH
    temp = (force + pml * theta_dot**2 * sin) / total_mass
    theta_acc = (GRAVITY * sin - cos * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos**2 / total_mass)
    )
    x_acc = temp - pml * theta_acc * cos / total_mass

    x = x + TAU * x_dot
    x_dot = x_dot + TAU * x_acc
    theta = theta + TAU * theta_dot
    theta_dot = theta_dot + TAU * theta_acc

    done = x < -X_THRESHOLD or x > X_THRESHOLD or theta < -THETA_THRESHOLD or theta > THETA_THRESHOLD
    return StepResult(np.array([x, x_dot, theta, theta_dot]), 1.0, bool(done))


# --------------------------------------------------------------------------
# Acrobot
# --------------------------------------------------------------------------

ACROBOT_DT = 0.2
LINK_LENGTH_1 = 1.0
LINK_MASS_1 = 1.0
LINK_MASS_2 = 1.0
LINK_COM_1 = 0.5
LINK_COM_2 = 0.5
LINK_MOI = 1.0
MAX_VEL_1 = 4 * math.pi
MAX_VEL_2 = 9 * math.pi
ACROBOT_TORQUES = (-1.0, 0.0, 1.0)
ACROBOT_MAX_STEPS = 500


def acrobot_reset(rng: np.random.Generator) -> Tuple[float, float, float, float]:
    """Internal state (theta1, theta2, dtheta1, dtheta2), near hanging rest."""
    return tuple(float(v) for v in rng.uniform(-0.1, 0.1, size=4))


def _acrobot_derivs(s, torque):
    m1, m2 = LINK_MASS_1, LINK_MASS_2
    l1, lc1, lc2 = LINK_LENGTH_1, LINK_COM_1, LINK_COM_2
    i1 = i2 = LINK_MOI
    g = 9.8
    theta1, theta2, dtheta1, dtheta2 = s
    cos2, sin2 = math.cos(theta2), math.sin(theta2)
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * cos2) + i2
    # sin(x) == cos(x - pi/2) but keeps hanging rest an exact fixed point
    phi2 = m2 * lc2 * g * math.sin(theta1 + theta2)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * sin2
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
        + (m1 * lc1 + m2 * l1) * g * math.sin(theta1)
        + phi2
    )
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * sin2 - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return (dtheta1, dtheta2, ddtheta1, ddtheta2)


def _wrap(x, lo=-math.pi, hi=math.pi):
    span = hi - lo
    while x > hi:
        x -= span
    while x < lo:
        x += span
    return x


def acrobot_observation(s) -> np.ndarray:
    t1, t2, d1, d2 = s
    return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2])


def acrobot_next_state(s, action: int):
    if action not in (0, 1, 2):
        raise ValueError(f"acrobot action must be 0, 1 or 2, got {action!r}")
    torque = ACROBOT_TORQUES[action]
    h = ACROBOT_DT
    k1 = _acrobot_derivs(s, torque)
    k2 = _acrobot_derivs([a + h / 2 * b for a, b in zip(s, k1)], torque)
    k3 = _acrobot_derivs([a + h / 2 * b for a, b in zip(s, k2)], torque)
    k4 = _acrobot_derivs([a + h * b for a, b in zip(s, k3)], torque)
    ns = [a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)]
    return (
        _wrap(ns[0]),
        _wrap(ns[1]),
        min(max(ns[2], -MAX_VEL_1), MAX_VEL_1),
        min(max(ns[3], -MAX_VEL_2), MAX_VEL_2),
    )


def acrobot_step(state, action: int):
    """RK4 step of length 0.2 s. Returns (next_state, StepResult)."""
    ns = acrobot_next_state(state, action)
    done = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0
    return ns, StepResult(acrobot_observation(ns), -1.0, bool(done))


# --------------------------------------------------------------------------
# Rooms
# --------------------------------------------------------------------------

GRID_MAX_STEPS = 200
# up, down, left, right
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    walls: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)
    start: Tuple[int, int] = (0, 0)
    goal: Tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.start == self.goal:
            raise ValueError("start and goal must differ")
        for cell in (self.start, self.goal):
            if cell in self.walls or not self.inside(cell):
                raise ValueError(f"cell {cell} is a wall or out of bounds")

    def inside(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def free(self, cell) -> bool:
        return self.inside(cell) and cell not in self.walls

    def observe(self, cell) -> np.ndarray:
        r, c = cell
        return np.array([r / (self.height - 1), c / (self.width - 1)])


def make_openroom() -> GridLayout:
    return GridLayout(10, 10, frozenset(), start=(0, 0), goal=(9, 9))


def make_fourroom() -> GridLayout:
    """11x11 grid split by a wall cross at row 5 / column 5.

    Doorways: (2, 5) and (8, 5) through the vertical wall, (5, 2) and
    (5, 8) through the horizontal wall. Start top-left, goal bottom-right.
    """
    walls = {(5, c) for c in range(11)} | {(r, 5) for r in range(11)}
    walls -= {(2, 5), (8, 5), (5, 2), (5, 8)}
    return GridLayout(11, 11, frozenset(walls), start=(0, 0), goal=(10, 10))


def grid_reset(layout: GridLayout) -> Tuple[int, int]:
    return layout.start


def grid_step(layout: GridLayout, cell, action: int):
    """Deterministic move. Returns (next_cell, StepResult)."""
    if action not in (0, 1, 2, 3):
        raise ValueError(f"grid action must be in 0..3, got {action!r}")
    dr, dc = MOVES[action]
    nxt = (cell[0] + dr, cell[1] + dc)
    if not layout.free(nxt):
        nxt = cell
    at_goal = nxt == layout.goal
    return nxt, StepResult(layout.observe(nxt), 1.0 if at_goal else 0.0, at_goal)


# --------------------------------------------------------------------------
# Stateful wrappers used by the agent
# --------------------------------------------------------------------------


class Env:
    """Stateful episode wrapper: ``reset(rng) -> obs``, ``step(a) -> StepResult``."""

    name = "env"
    n_actions = 0
    obs_dim = 0
    max_steps = 0

    def __init__(self):
        self.t = 0
        self.state = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.t = 0
        self.state = self._reset(rng)
        return self._observe(self.state)

    def step(self, action: int) -> StepResult:
        self.state, res = self._step(self.state, action)
        self.t += 1
        if not res.done and self.t >= self.max_steps:
            res.truncated = True
        return res


class CartPole(Env):
    name = "cartpole"
    n_actions = 2
    obs_dim = 4
    max_steps = CARTPOLE_MAX_STEPS

    def _reset(self, rng):
        return cartpole_reset(rng)

    def _observe(self, state):
        return np.array(state, dtype=float)

    def _step(self, state, action):
        res = cartpole_step(state, action)
        return tuple(res.observation.tolist()), res


class Acrobot(Env):
    name = "acrobot"
    n_actions = 3
    obs_dim = 6
    max_steps = ACROBOT_MAX_STEPS

    def _reset(self, rng):
        return acrobot_reset(rng)

    def _observe(self, state):
        return acrobot_observation(state)

    def _step(self, state, action):
        return acrobot_step(state, action)


class GridWorld(Env):
    n_actions = 4
    obs_dim = 2
    max_steps = GRID_MAX_STEPS

    def __init__(self, layout: GridLayout, name: str = "grid"):
        super().__init__()
        self.layout = layout
        self.name = name

    def _reset(self, rng):
        return grid_reset(self.layout)

    def _observe(self, state):
        return self.layout.observe(state)

    def _step(self, state, action):
        return grid_step(self.layout, state, action)


ENVIRONMENTS = {
    "cartpole": CartPole,
    "acrobot": Acrobot,
    "openroom": lambda: GridWorld(make_openroom(), "openroom"),
    "fourroom": lambda: GridWorld(make_fourroom(), "fourroom"),
}


def make_env(name: str) -> Env:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown env {name!r}; expected one of {sorted(ENVIRONMENTS)}") from None


# --------------------------------------------------------------------------
# Drifting 2D stream
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamSpec:
    """Uniform lattice points followed by axis-aligned skew-normal samples."""

    grid_lo: Tuple[float, float] = (0.0, 0.0)
    grid_hi: Tuple[float, float] = (1.0, 1.0)
    grid_points: int = 20
    loc: Tuple[float, float] = (0.75, 0.75)
    scale: Tuple[float, float] = (0.12, 0.12)
    shape: Tuple[float, float] = (4.0, 4.0)
    n_skew: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.grid_points < 1 or self.n_skew < 1:
            raise ValueError("stream counts must be >= 1")
        if min(self.scale) <= 0:
            raise ValueError("skew-normal scale must be > 0")


def lattice(spec: StreamSpec) -> np.ndarray:
    xs = np.linspace(spec.grid_lo[0], spec.grid_hi[0], spec.grid_points)
    ys = np.linspace(spec.grid_lo[1], spec.grid_hi[1], spec.grid_points)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def skew_normal(rng: np.random.Generator, loc, scale, shape, size: int) -> np.ndarray:
    """Samples of loc + scale * Z with Z ~ SN(shape), one column per axis.

    Uses Z = delta |U0| + sqrt(1 - delta^2) U1 with delta = a / sqrt(1 + a^2).
    """
    loc, scale, shape = (np.asarray(v, dtype=float) for v in (loc, scale, shape))
    delta = shape / np.sqrt(1 + shape**2)
    u0 = rng.standard_normal((size, len(loc)))
    u1 = rng.standard_normal((size, len(loc)))
    z = delta * np.abs(u0) + np.sqrt(1 - delta**2) * u1
    return loc + scale * z


def synthetic_stream(spec: Optional[StreamSpec] = None) -> np.ndarray:
    """Lattice points in a seeded random order, then skew-normal samples."""
    spec = spec or StreamSpec()
    rng = np.random.default_rng(spec.seed)
    grid = lattice(spec)
    grid = grid[rng.permutation(len(grid))]
    tail = skew_normal(rng, spec.loc, spec.scale, spec.shape, spec.n_skew)
    return np.vstack([grid, tail])
