"""Built-in desk-scale environments and the observation pipeline.

Environments emit raw 8-bit frames; :class:`Preprocessor` converts them to
grayscale, resizes with bilinear interpolation, scales to [0, 1], and stacks
the most recent frames along the channel axis so motion is observable.

All environments are deterministic given their RNG stream and expose
``get_state``/``set_state`` so a training run can be checkpointed mid-episode
and resumed exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    n_actions: int
    frame_shape: tuple[int, ...]
    optimal_return: float | None = None


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float
    terminal: bool


class Environment:
    """Minimal episodic environment contract."""

    spec: EnvSpec

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng()

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        return self._reset()

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: int) -> EnvStep:
        raise NotImplementedError

    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError


class Catch(Environment):
    """A ball falls one row per step from a random column; the paddle on the
    bottom row moves left/stays/right and must be under the ball when it
    lands. Reward is +1 for a catch, -1 for a miss, 0 otherwise, so episodes
    last exactly ``height - 1`` steps and return either +1 or -1.

    The paddle is ``width // 3`` cells wide by default, which pins the
    random-policy catch rate at exactly ``paddle_width / width`` (the ball
    column is uniform and independent of the paddle's walk): 1/3 by default.
    """

    BALL, PADDLE = 255, 128

    def __init__(self, height: int = 24, width: int = 24,
                 paddle_width: int | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__(rng)
        if height < 2 or width < 2:
            raise ValueError("catch board must be at least 2x2")
        self.height, self.width = int(height), int(width)
        self.paddle_width = int(paddle_width) if paddle_width else max(1, width // 3)
        if self.paddle_width > width:
            raise ValueError("paddle cannot be wider than the board")
        self.spec = EnvSpec("catch", 3, (self.height, self.width), optimal_return=1.0)
        self.ball_row = 0
        self.ball_col = 0
        self.paddle_left = 0
        self.done = True

    def _frame(self) -> np.ndarray:
        f = np.zeros((self.height, self.width), dtype=np.uint8)
        f[self.height - 1, self.paddle_left:self.paddle_left + self.paddle_width] = self.PADDLE
        f[self.ball_row, self.ball_col] = self.BALL
        return f

    def _reset(self) -> np.ndarray:
        self.ball_row = 0
        self.ball_col = int(self.rng.integers(0, self.width))
        self.paddle_left = (self.width - self.paddle_width) // 2
        self.done = False
        return self._frame()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise RuntimeError("episode is over; call reset() first")
        if action not in (0, 1, 2):
            raise ValueError(f"catch action must be 0/1/2, got {action}")
        self.paddle_left = int(np.clip(self.paddle_left + (action - 1),
                                       0, self.width - self.paddle_width))
        self.ball_row += 1
        reward = 0.0
        if self.ball_row == self.height - 1:
            self.done = True
            caught = self.paddle_left <= self.ball_col < self.paddle_left + self.paddle_width
            reward = 1.0 if caught else -1.0
        return EnvStep(self._frame(), reward, self.done)

    def get_state(self) -> dict:
        return {"ball_row": self.ball_row, "ball_col": self.ball_col,
                "paddle_left": self.paddle_left, "done": self.done}

    def set_state(self, state: dict) -> None:
        self.ball_row = int(state["ball_row"])
        self.ball_col = int(state["ball_col"])
        self.paddle_left = int(state["paddle_left"])
        self.done = bool(state["done"])


class GridWorld(Environment):
    """Deterministic grid: the agent starts in the top-left corner and earns
    +1 for reaching the goal in the bottom-right. Moves into the border do
    nothing (reward 0); episodes terminate at the goal or after ``max_steps``.
    """

    AGENT, GOAL = 255, 128
    DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right

    def __init__(self, size: int = 8, max_steps: int = 256,
                 rng: np.random.Generator | None = None):
        super().__init__(rng)
        if size < 2:
            raise ValueError("grid must be at least 2x2")
        self.size = int(size)
        self.max_steps = int(max_steps)
        self.goal = (self.size - 1, self.size - 1)
        self.spec = EnvSpec("gridworld", 4, (self.size, self.size), optimal_return=1.0)
        self.pos = (0, 0)
        self.steps = 0
        self.done = True

    def _frame(self) -> np.ndarray:
        f = np.zeros((self.size, self.size), dtype=np.uint8)
        f[self.goal] = self.GOAL
        f[self.pos] = self.AGENT
        return f

    def _reset(self) -> np.ndarray:
        self.pos = (0, 0)
        self.steps = 0
        self.done = False
        return self._frame()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise RuntimeError("episode is over; call reset() first")
        if not 0 <= action < 4:
            raise ValueError(f"gridworld action must be in [0, 4), got {action}")
        dr, dc = self.DELTAS[action]
        r, c = self.pos[0] + dr, self.pos[1] + dc
        if 0 <= r < self.size and 0 <= c < self.size:
            self.pos = (r, c)
        self.steps += 1
        reward = 0.0
        if self.pos == self.goal:
            self.done = True
            reward = 1.0
        elif self.steps >= self.max_steps:
            self.done = True
        return EnvStep(self._frame(), reward, self.done)

    def get_state(self) -> dict:
        return {"row": self.pos[0], "col": self.pos[1],
                "steps": self.steps, "done": self.done}

    def set_state(self, state: dict) -> None:
        self.pos = (int(state["row"]), int(state["col"]))
        self.steps = int(state["steps"])
        self.done = bool(state["done"])


class TabularChain(Environment):
    """Five-state deterministic chain used as a ground-truth fixture.

    States sit in a row; action 0 moves left, action 1 moves right, starting
    from the middle. Entering the left end pays -1, the right end +1 (both
    terminal); every other move costs 0.01. The dynamics tables are exposed
    as class attributes so exact Q-values can be computed independently.
    """

    N_STATES = 5
    N_ACTIONS = 2
    START = 2
    STEP_COST = -0.01

    # TRANSITIONS[s][a] -> next state; REWARDS[s][a]; TERMINAL[s][a].
    # Rows for the end states 0 and 4 are never queried (episodes end there).
    TRANSITIONS = ((0, 1), (0, 2), (1, 3), (2, 4), (3, 4))
    REWARDS = ((-0.01, -0.01), (-1.0, -0.01), (-0.01, -0.01),
               (-0.01, 1.0), (-0.01, -0.01))
    TERMINAL = ((False, False), (True, False), (False, False),
                (False, True), (False, False))

    def __init__(self, rng: np.random.Generator | None = None):
        super().__init__(rng)
        self.spec = EnvSpec("tabular", self.N_ACTIONS, (1, self.N_STATES),
                            optimal_return=1.0 + self.STEP_COST)
        self.state = self.START
        self.done = True

    def _frame(self) -> np.ndarray:
        f = np.zeros((1, self.N_STATES), dtype=np.uint8)
        f[0, self.state] = 255
        return f

    def _reset(self) -> np.ndarray:
        self.state = self.START
        self.done = False
        return self._frame()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise RuntimeError("episode is over; call reset() first")
        if not 0 <= action < self.N_ACTIONS:
            raise ValueError(f"tabular action must be 0 or 1, got {action}")
        reward = self.REWARDS[self.state][action]
        self.done = self.TERMINAL[self.state][action]
        self.state = self.TRANSITIONS[self.state][action]
        return EnvStep(self._frame(), reward, self.done)

    def get_state(self) -> dict:
        return {"state": self.state, "done": self.done}

    def set_state(self, state: dict) -> None:
        self.state = int(state["state"])
        self.done = bool(state["done"])


ENV_REGISTRY = {"catch": Catch, "gridworld": GridWorld, "tabular": TabularChain}


def make_env(name: str, rng: np.random.Generator | None = None,
             **params) -> Environment:
    try:
        cls = ENV_REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; choose from {sorted(ENV_REGISTRY)}"
        ) from None
    return cls(rng=rng, **params)


# --- observation pipeline ---------------------------------------------------

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601 luminance


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resampling with half-pixel-center alignment.

    Output pixel (i, j) samples source coordinates
    ``((i + 0.5) * H / out_h - 0.5, (j + 0.5) * W / out_w - 0.5)``, clamped to
    the image; matching sizes reproduce the input exactly.
    """
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    rows = img[y0, :] * (1.0 - fy) + img[y1, :] * fy
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


def preprocess_frame(frame: np.ndarray, size: tuple[int, int] = (84, 84),
                     dtype=np.float32) -> np.ndarray:
    """Grayscale + bilinear resize + scale to [0, 1].

    8-bit input is divided by 255; float input is assumed to already lie in
    [0, 1] and passes through unscaled, which makes the whole pipeline
    idempotent on target-size grayscale frames.
    """
    arr = np.asarray(frame)
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2-d or 3-d frame, got shape {arr.shape}")
    work = arr.astype(np.float64)
    if arr.dtype == np.uint8:
        work /= 255.0
    if work.ndim == 3:
        if work.shape[2] == 1:
            work = work[:, :, 0]
        elif work.shape[2] == 3:
            r, g, b = GRAY_WEIGHTS
            work = r * work[:, :, 0] + g * work[:, :, 1] + b * work[:, :, 2]
        else:
            raise ValueError(f"expected 1 or 3 channels, got {work.shape[2]}")
    return bilinear_resize(work, size[0], size[1]).astype(dtype)


class Preprocessor:
    """Rolling frame queue producing (h, w, stack) network inputs.

    The first frame after reset is repeated to fill the stack; afterwards
    frames shift FIFO with the newest at the last channel slot.
    """

    def __init__(self, size: tuple[int, int] = (84, 84), stack: int = 4,
                 dtype=np.float32):
        if stack < 1:
            raise ValueError(f"stack depth must be >= 1, got {stack}")
        self.size = (int(size[0]), int(size[1]))
        self.stack = int(stack)
        self.dtype = np.dtype(dtype)
        self.frames: deque[np.ndarray] = deque(maxlen=self.stack)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.size + (self.stack,)

    def _stacked(self) -> np.ndarray:
        return np.stack(self.frames, axis=-1)

    def reset(self, frame: np.ndarray) -> np.ndarray:
        processed = preprocess_frame(frame, self.size, self.dtype)
        self.frames.clear()
        for _ in range(self.stack):
            self.frames.append(processed)
        return self._stacked()

    def push(self, frame: np.ndarray) -> np.ndarray:
        if not self.frames:
            return self.reset(frame)
        self.frames.append(preprocess_frame(frame, self.size, self.dtype))
        return self._stacked()

    def get_state(self) -> np.ndarray:
        return np.stack(self.frames, axis=0) if self.frames else np.zeros(
            (0,) + self.size, dtype=self.dtype)

    def set_state(self, frames: np.ndarray) -> None:
        self.frames.clear()
        for f in frames:
            self.frames.append(np.asarray(f, dtype=self.dtype))
