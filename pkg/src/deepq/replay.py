"""Experience storage and sampling: uniform ring buffer and proportional
prioritized replay backed by a sum tree.

Priorities live in the tree as ``p_i^alpha`` with ``p_i = |td_error| + eps``,
so transitions whose error hits zero stay reachable. Sampling probability is
``P(i) = p_i^alpha / sum_k p_k^alpha``; stratified draws split the total mass
into equal segments, one draw per segment. Importance-sampling weights
``(size * P(i))^-beta`` are normalized by the batch maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedules import LinearSchedule


@dataclass
class Transition:
    """One step of experience. ``next_state`` is present even when terminal,
    but terminal transitions never bootstrap from it."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class SampleBatch:
    """A minibatch of transitions plus the sampling metadata needed for
    priority updates and bias correction."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray
    probabilities: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class PriorityConfig:
    """Knobs of proportional prioritization: exponent alpha, the small
    priority floor epsilon, and the beta annealing schedule."""

    alpha: float = 0.6
    epsilon: float = 0.01
    beta: LinearSchedule = field(
        default_factory=lambda: LinearSchedule(0.4, 1.0, 100_000_000))

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.epsilon <= 0:
            raise ValueError(f"priority epsilon must be > 0, got {self.epsilon}")
        for b in (self.beta.start, self.beta.end):
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"beta must stay within [0, 1], got {b}")


def anneal_beta(step: int, schedule: LinearSchedule) -> float:
    return schedule.value(step)


class ReplayMemory:
    """FIFO ring buffer of transitions with uniform with-replacement sampling."""

    def __init__(self, capacity: int, state_shape: tuple[int, ...],
                 dtype=np.float32):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.state_shape = tuple(state_shape)
        self.states = np.zeros((capacity,) + self.state_shape, dtype=dtype)
        self.next_states = np.zeros_like(self.states)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def store(self, transition: Transition) -> int:
        """Insert at the write cursor, evicting the oldest entry when full.
        Returns the slot index."""
        i = self.cursor
        self.states[i] = transition.state
        self.next_states[i] = transition.next_state
        self.actions[i] = transition.action
        self.rewards[i] = transition.reward
        self.terminals[i] = transition.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def _gather(self, indices: np.ndarray, probabilities: np.ndarray,
                weights: np.ndarray) -> SampleBatch:
        return SampleBatch(
            states=self.states[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            next_states=self.next_states[indices],
            terminals=self.terminals[indices],
            indices=indices,
            probabilities=probabilities,
            weights=weights,
        )

    def sample_uniform(self, k: int, rng: np.random.Generator) -> SampleBatch:
        """``k`` independent uniform draws with replacement; all weights 1."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        indices = rng.integers(0, self.size, size=k)
        probabilities = np.full(k, 1.0 / self.size)
        weights = np.ones(k)
        return self._gather(indices, probabilities, weights)


class SumTree:
    """Complete binary tree whose leaves hold priorities and whose internal
    nodes hold subtree sums.

    Nodes are recomputed from their children on every update (no incremental
    drift), and prefix-sum descent is vectorized so large query batches run
    at numpy speed. Query value v lands on the leaf i with
    ``cumsum(p)[i-1] < v <= cumsum(p)[i]``.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.depth = max(1, int(np.ceil(np.log2(capacity))))
        self._leaf_base = 1 << self.depth  # heap is 1-indexed
        self.nodes = np.zeros(2 * self._leaf_base, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def leaf(self, i: int) -> float:
        return float(self.nodes[self._leaf_base + i])

    def leaves(self) -> np.ndarray:
        return self.nodes[self._leaf_base:self._leaf_base + self.capacity]

    def set(self, i: int, value: float) -> None:
        if not 0 <= i < self.capacity:
            raise IndexError(f"leaf index {i} out of range [0, {self.capacity})")
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"priority must be finite and >= 0, got {value}")
        node = self._leaf_base + i
        self.nodes[node] = value
        node >>= 1
        while node >= 1:
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1]
            node >>= 1

    def find(self, values) -> np.ndarray:
        """Vectorized prefix-sum descent: map query masses to leaf indices."""
        total = self.nodes[1]
        if total <= 0:
            raise ValueError("cannot query a sum tree with zero total priority")
        q = np.clip(np.asarray(values, dtype=np.float64),
                    1e-300, np.nextafter(total, 0))
        node = np.ones(q.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = node << 1
            left_sum = self.nodes[left]
            go_right = q > left_sum
            q -= left_sum * go_right
            node = left + go_right
        return node - self._leaf_base


class PrioritizedReplay:
    """Ring buffer plus sum tree over ``p_i^alpha`` priorities.

    New transitions enter at the running maximum raw priority (1.0 while the
    memory has seen nothing larger), so fresh experience is sampled at least
    once before its TD error is known.
    """

    def __init__(self, capacity: int, state_shape: tuple[int, ...],
                 config: PriorityConfig | None = None, dtype=np.float32):
        self.memory = ReplayMemory(capacity, state_shape, dtype=dtype)
        self.config = config or PriorityConfig()
        self.tree = SumTree(capacity)
        self.max_priority = 1.0  # raw p-space, before the alpha exponent

    @property
    def size(self) -> int:
        return self.memory.size

    @property
    def capacity(self) -> int:
        return self.memory.capacity

    def store(self, transition: Transition) -> int:
        index = self.memory.store(transition)
        self.tree.set(index, self.max_priority ** self.config.alpha)
        return index

    def beta(self, step: int) -> float:
        return anneal_beta(step, self.config.beta)

    def sample(self, k: int, beta: float, rng: np.random.Generator) -> SampleBatch:
        """Stratified proportional sampling: the total mass is split into ``k``
        equal segments with one uniform draw in each."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        total = self.tree.total
        if total <= 0:
            raise ValueError("zero total priority; nothing can be sampled")
        segment = total / k
        offsets = rng.random(k)
        queries = (np.arange(k) + offsets) * segment
        indices = self.tree.find(queries)
        probabilities = self.tree.leaves()[indices] / total
        weights = np.power(self.size * probabilities, -beta)
        weights /= weights.max()
        return self.memory._gather(indices, probabilities, weights)

    def update_priorities(self, indices, td_errors) -> None:
        """Set leaf ``i`` to ``(|td_error_i| + eps)^alpha`` and refresh the
        running maximum raw priority."""
        indices = np.asarray(indices)
        p = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.config.epsilon
        for i, raw in zip(indices, p):
            if not 0 <= i < self.size:
                raise IndexError(f"transition index {i} out of range [0, {self.size})")
            self.tree.set(int(i), raw ** self.config.alpha)
        self.max_priority = max(self.max_priority, float(p.max()))
