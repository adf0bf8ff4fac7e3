"""Q-learning agent: action selection, bootstrap targets, and the training loop.

Targets come in two flavours: the classic max-over-target-network bootstrap,
and the double variant that picks the bootstrap action with the online
network but evaluates it with the target network. Per-sample loss is
``0.5 * w * delta^2`` (importance weight ``w``), so the gradient reaching the
output layer is ``-w * delta`` on the sampled action and zero elsewhere; the
target is treated as a constant.

Randomness is split into named substreams derived from the master seed (env,
action selection, replay sampling, init, and per-evaluation streams), so
toggling one component never perturbs another's draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_params_into, save_checkpoint
from .config import RunConfig
from .envs import Environment, Preprocessor, make_env
from .metrics import MetricRecord
from .network import Network, build_network, init_params
from .optim import RmsProp, clip_gradients, sync_target
from .replay import (PrioritizedReplay, PriorityConfig, ReplayMemory,
                     SampleBatch, Transition)
from .schedules import LinearSchedule

# Substream indices under the master seed.
STREAM_ENV, STREAM_AGENT, STREAM_REPLAY, STREAM_INIT = 0, 1, 2, 3
STREAM_EVAL_ENV, STREAM_EVAL_AGENT = 4, 5


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def anneal_epsilon(step: int, schedule: LinearSchedule) -> float:
    return schedule.value(step)


def select_action(net: Network, state: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy: random action with probability ``eps``, otherwise the
    greedy argmax with ties broken by lowest action index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {eps}")
    n_actions = net.output_shape[-1]
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(0, n_actions))
    q = net.forward(state[None])
    return int(np.argmax(q[0]))


def compute_target_dqn(batch: SampleBatch, target_net, gamma: float) -> np.ndarray:
    """``y = r + gamma * max_a Q_target(s', a)``; terminal transitions use
    ``y = r`` alone."""
    q_next = np.asarray(target_net.forward(batch.next_states), dtype=np.float64)
    boot = gamma * q_next.max(axis=1)
    return batch.rewards + np.where(batch.terminals, 0.0, boot)


def compute_target_double(batch: SampleBatch, online_net, target_net,
                          gamma: float) -> np.ndarray:
    """Double bootstrap: the online network selects the action, the target
    network evaluates it."""
    a_star = np.argmax(online_net.forward(batch.next_states), axis=1)
    q_next = np.asarray(target_net.forward(batch.next_states), dtype=np.float64)
    boot = gamma * q_next[np.arange(len(batch)), a_star]
    return batch.rewards + np.where(batch.terminals, 0.0, boot)


@dataclass
class TdResult:
    targets: np.ndarray
    td_errors: np.ndarray
    losses: np.ndarray

    @property
    def mean_abs_td(self) -> float:
        return float(np.mean(np.abs(self.td_errors)))

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses))


def learn_step(online: Network, target: Network,
               memory: ReplayMemory | PrioritizedReplay,
               optimizer: RmsProp, config: RunConfig, step: int,
               rng: np.random.Generator) -> TdResult:
    """One optimization step: sample, compute targets, backpropagate through
    the sampled-action Q-values only, update priorities, apply the optimizer."""
    prioritized = isinstance(memory, PrioritizedReplay)
    if prioritized:
        batch = memory.sample(config.batch_size, memory.beta(step), rng)
    else:
        batch = memory.sample_uniform(config.batch_size, rng)
    if config.reward_clip:
        batch.rewards = np.clip(batch.rewards, -1.0, 1.0)

    if config.double:
        targets = compute_target_double(batch, online, target, config.gamma)
    else:
        targets = compute_target_dqn(batch, target, config.gamma)

    k = len(batch)
    q = online.forward(batch.states)
    q_sa = q[np.arange(k), batch.actions].astype(np.float64)
    delta = targets - q_sa
    w = batch.weights
    if config.huber:
        abs_d = np.abs(delta)
        losses = w * np.where(abs_d <= 1.0, 0.5 * delta * delta, abs_d - 0.5)
        dq = -w * np.clip(delta, -1.0, 1.0)
    else:
        losses = 0.5 * w * delta * delta
        dq = -w * delta

    out_grad = np.zeros((k, online.output_shape[-1]), dtype=online.dtype)
    out_grad[np.arange(k), batch.actions] = dq.astype(online.dtype)
    online.backward(out_grad)
    online.calculate_gradient()
    if config.grad_clip > 0.0:
        clip_gradients(online, config.grad_clip)
    if prioritized:
        memory.update_priorities(batch.indices, np.abs(delta))
    optimizer.step()
    return TdResult(targets=targets, td_errors=delta, losses=losses)


def evaluate(net: Network, env: Environment, episodes: int, test_eps: float,
             rng: np.random.Generator,
             max_episode_steps: int = 18_000) -> tuple[float, list[float]]:
    """Play ``episodes`` greedy(ish) episodes with no learning or storing.
    Returns the mean and the per-episode undiscounted return sums."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    h, w, stack = net.input_shape
    pre = Preprocessor((h, w), stack, dtype=net.dtype)
    returns: list[float] = []
    for _ in range(episodes):
        phi = pre.reset(env.reset())
        total = 0.0
        for _ in range(max_episode_steps):
            action = select_action(net, phi, test_eps, rng)
            result = env.step(action)
            total += result.reward
            phi = pre.push(result.observation)
            if result.terminal:
                break
        returns.append(total)
    return float(np.mean(returns)), returns


class Trainer:
    """Owns the full training loop state and can serialize all of it.

    Interleaves acting, storing, learning (every ``update_period`` env steps
    once ``learning_start`` steps are stored), target sync (every
    ``target_sync`` env steps), periodic evaluation, and checkpoints. Given
    (seed, env, config) the run is fully deterministic.
    """

    FINAL_NAME = "checkpoint_final.ckpt"

    def __init__(self, config: RunConfig, env: Environment | None = None,
                 sink=None, out_dir: str | Path | None = None):
        config = config.resolved()
        config.validate()
        self.config = config
        self.sink = sink
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.dtype = np.dtype(config.dtype)

        seed = config.seed
        self.rng_env = substream(seed, STREAM_ENV)
        self.rng_agent = substream(seed, STREAM_AGENT)
        self.rng_replay = substream(seed, STREAM_REPLAY)

        self.env = env if env is not None else make_env(config.env)
        self.env.rng = self.rng_env  # trainer owns the env's stream
        size = (config.frame_size, config.frame_size)
        self.pre = Preprocessor(size, config.input_frames, dtype=self.dtype)
        input_shape = size + (config.input_frames,)

        n_actions = self.env.spec.n_actions
        self.online = build_network(config.preset, input_shape, n_actions,
                                    config.dueling, dtype=self.dtype)
        self.target = build_network(config.preset, input_shape, n_actions,
                                    config.dueling, dtype=self.dtype)
        init_params(self.online, np.random.SeedSequence([seed, STREAM_INIT]))
        sync_target(self.online, self.target)
        self.optimizer = RmsProp(self.online, config.learning_rate,
                                 config.rms_decay, config.rms_epsilon)

        state_shape = input_shape
        if config.priority_alpha > 0.0:
            pc = PriorityConfig(config.priority_alpha, config.priority_eps,
                                config.beta_schedule())
            self.memory: ReplayMemory | PrioritizedReplay = PrioritizedReplay(
                config.replay_capacity, state_shape, pc, dtype=self.dtype)
        else:
            self.memory = ReplayMemory(config.replay_capacity, state_shape,
                                       dtype=self.dtype)

        self.step = 0
        self.episode = 0
        self.learn_steps = 0
        self.episode_return = 0.0
        self.episode_steps = 0
        self._ep_td_sum = 0.0
        self._ep_loss_sum = 0.0
        self._ep_learn_count = 0
        self._needs_reset = True
        self._phi: np.ndarray | None = None

    # --- checkpointing -------------------------------------------------

    def make_checkpoint(self) -> Checkpoint:
        prioritized = isinstance(self.memory, PrioritizedReplay)
        mem = self.memory.memory if prioritized else self.memory
        state = {
            "step": self.step,
            "episode": self.episode,
            "learn_steps": self.learn_steps,
            "episode_return": self.episode_return,
            "episode_steps": self.episode_steps,
            "ep_td_sum": self._ep_td_sum,
            "ep_loss_sum": self._ep_loss_sum,
            "ep_learn_count": self._ep_learn_count,
            "needs_reset": self._needs_reset,
            "rng_env": self.rng_env.bit_generator.state,
            "rng_agent": self.rng_agent.bit_generator.state,
            "rng_replay": self.rng_replay.bit_generator.state,
            "env_state": self.env.get_state(),
            "max_priority": self.memory.max_priority if prioritized else None,
            "mem_cursor": mem.cursor,
            "mem_size": mem.size,
        }
        memory_arrays = None
        if self.config.checkpoint_include_memory:
            n = mem.size
            memory_arrays = {
                "states": mem.states[:n],
                "next_states": mem.next_states[:n],
                "actions": mem.actions[:n],
                "rewards": mem.rewards[:n],
                "terminals": mem.terminals[:n],
            }
            if prioritized:
                memory_arrays["priorities"] = self.memory.tree.leaves()[:n]
        return Checkpoint(
            config=self.config,
            state=state,
            params={n: t.values for n, t in self.online.named_tensors()},
            target={n: t.values for n, t in self.target.named_tensors()},
            optim=dict(self.optimizer.state_arrays()),
            frames=self.pre.get_state(),
            memory=memory_arrays,
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, env: Environment | None = None,
                        sink=None, out_dir: str | Path | None = None) -> "Trainer":
        t = cls(ckpt.config, env=env, sink=sink, out_dir=out_dir)
        load_params_into(t.online, ckpt.params)
        load_params_into(t.target, ckpt.target)
        t.optimizer.load_state(ckpt.optim)
        s = ckpt.state
        t.step = int(s["step"])
        t.episode = int(s["episode"])
        t.learn_steps = int(s["learn_steps"])
        t.episode_return = float(s["episode_return"])
        t.episode_steps = int(s["episode_steps"])
        t._ep_td_sum = float(s["ep_td_sum"])
        t._ep_loss_sum = float(s["ep_loss_sum"])
        t._ep_learn_count = int(s["ep_learn_count"])
        t._needs_reset = bool(s["needs_reset"])
        t.rng_env.bit_generator.state = s["rng_env"]
        t.rng_agent.bit_generator.state = s["rng_agent"]
        t.rng_replay.bit_generator.state = s["rng_replay"]
        t.env.set_state(s["env_state"])
        t.pre.set_state(ckpt.frames)
        if not t._needs_reset and len(ckpt.frames):
            t._phi = t.pre._stacked()
        prioritized = isinstance(t.memory, PrioritizedReplay)
        if ckpt.memory is not None:
            mem = t.memory.memory if prioritized else t.memory
            n = int(s["mem_size"])
            mem.states[:n] = ckpt.memory["states"]
            mem.next_states[:n] = ckpt.memory["next_states"]
            mem.actions[:n] = ckpt.memory["actions"]
            mem.rewards[:n] = ckpt.memory["rewards"]
            mem.terminals[:n] = ckpt.memory["terminals"].astype(bool)
            mem.cursor = int(s["mem_cursor"])
            mem.size = n
            if prioritized:
                for i, p in enumerate(ckpt.memory["priorities"]):
                    t.memory.tree.set(i, float(p))
        if prioritized and s.get("max_priority") is not None:
            t.memory.max_priority = float(s["max_priority"])
        return t

    def _save(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return save_checkpoint(self.out_dir / name, self.make_checkpoint())

    # --- training loop --------------------------------------------------

    def _emit(self, record: MetricRecord) -> None:
        if self.sink is not None:
            self.sink.write(record)

    def _run_eval(self) -> float:
        cfg = self.config
        eval_env = make_env(cfg.env,
                            rng=substream(cfg.seed, STREAM_EVAL_ENV, self.step))
        rng = substream(cfg.seed, STREAM_EVAL_AGENT, self.step)
        mean, _ = evaluate(self.online, eval_env, cfg.test_episodes,
                           cfg.test_eps, rng, cfg.max_episode_steps)
        return mean

    def _one_step(self) -> None:
        cfg = self.config
        if self._needs_reset:
            self._phi = self.pre.reset(self.env.reset())
            self.episode_return = 0.0
            self.episode_steps = 0
            self._ep_td_sum = 0.0
            self._ep_loss_sum = 0.0
            self._ep_learn_count = 0
            self._needs_reset = False

        eps = anneal_epsilon(self.step, cfg.eps_schedule())
        action = select_action(self.online, self._phi, eps, self.rng_agent)
        result = self.env.step(action)
        next_phi = self.pre.push(result.observation)
        self.episode_return += result.reward
        self.episode_steps += 1
        # Budget truncation is not environment death: bootstrap continues.
        truncated = (not result.terminal) and \
            self.episode_steps >= cfg.max_episode_steps
        self.memory.store(Transition(self._phi, action, result.reward,
                                     next_phi, result.terminal))
        self._phi = next_phi
        self.step += 1

        if self.step % cfg.target_sync == 0:
            sync_target(self.online, self.target)
        # The size check only matters after resuming from a checkpoint saved
        # without replay contents: the buffer restarts empty mid-run.
        if self.step >= cfg.learning_start and self.memory.size > 0 \
                and self.step % cfg.update_period == 0:
            res = learn_step(self.online, self.target, self.memory,
                             self.optimizer, cfg, self.step, self.rng_replay)
            self.learn_steps += 1
            self._ep_td_sum += res.mean_abs_td
            self._ep_loss_sum += res.mean_loss
            self._ep_learn_count += 1

        if result.terminal or truncated:
            n = self._ep_learn_count
            self._emit(MetricRecord(
                step=self.step,
                episode=self.episode,
                episode_return=self.episode_return,
                epsilon=anneal_epsilon(self.step, cfg.eps_schedule()),
                beta=cfg.beta_schedule().value(self.step),
                mean_abs_td=self._ep_td_sum / n if n else None,
                loss=self._ep_loss_sum / n if n else None,
            ))
            self.episode += 1
            self._needs_reset = True

        if self.step % cfg.test_period == 0:
            mean = self._run_eval()
            self._emit(MetricRecord(
                step=self.step,
                episode=self.episode,
                epsilon=anneal_epsilon(self.step, cfg.eps_schedule()),
                beta=cfg.beta_schedule().value(self.step),
                eval_mean=mean,
            ))

    def run(self) -> Path | None:
        """Run to the step budget; returns the final checkpoint path (or None
        when no output directory is configured)."""
        cfg = self.config
        try:
            while self.step < cfg.max_steps:
                self._one_step()
                if self.out_dir is not None and cfg.checkpoint_period > 0 \
                        and self.step % cfg.checkpoint_period == 0:
                    self._save(f"checkpoint_{self.step}.ckpt")
        except Exception:
            if self.out_dir is not None:
                self._save("checkpoint_abort.ckpt")
            raise
        if self.out_dir is not None:
            return self._save(self.FINAL_NAME)
        return None


def run_training(env: Environment, config: RunConfig, sink=None,
                 out_dir: str | Path | None = None) -> Path | None:
    """Train on ``env`` under ``config``; convenience wrapper over Trainer."""
    return Trainer(config, env=env, sink=sink, out_dir=out_dir).run()
