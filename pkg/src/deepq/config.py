"""Run configuration: defaults, presets, validation, and key=value round-trip.

The defaults are the benchmark hyperparameter table verbatim (full-scale
pixel training). The ``desk`` preset rescales the schedule-like fields to
something a laptop CPU finishes in minutes while leaving the learning
hyperparameters untouched.

Precedence when resolving a run: CLI flag > config file > preset > default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .network import ARCHITECTURES
from .schedules import LinearSchedule


@dataclass
class RunConfig:
    # run identity
    env: str = "catch"
    preset: str = "atari"  # also selects the network architecture
    seed: int = 1
    out_dir: str = "runs"
    # agent
    gamma: float = 0.99
    learning_rate: float = 0.000625
    batch_size: int = 32
    update_period: int = 4
    target_sync: int = 30_000
    learning_start: int = 50_000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_end_step: int = 5_000_000
    test_eps: float = 0.001
    max_steps: int = 100_000_000
    max_episode_steps: int = 18_000
    double: bool = True
    dueling: bool = True
    huber: bool = False
    reward_clip: bool = False
    grad_clip: float = 0.0  # 0 disables clipping
    # replay
    replay_capacity: int = 1_000_000
    input_frames: int = 4
    priority_alpha: float = 0.6
    priority_eps: float = 0.01
    beta_start: float = 0.4
    beta_end: float = 1.0
    beta_end_step: int | None = None  # None follows max_steps
    # optimizer
    optimizer: str = "rmsprop"
    rms_decay: float = 0.95
    rms_epsilon: float = 1e-6
    # evaluation and IO
    test_period: int = 5_000_000
    test_episodes: int = 100
    checkpoint_period: int = 0  # 0 = final checkpoint only
    checkpoint_include_memory: bool = False
    frame_size: int = 84
    dtype: str = "float32"

    def resolved(self) -> "RunConfig":
        """Fill derived defaults (beta anneal horizon follows max_steps)."""
        cfg = dataclasses.replace(self)
        if cfg.beta_end_step is None:
            cfg.beta_end_step = cfg.max_steps
        return cfg

    # schedule accessors
    def eps_schedule(self) -> LinearSchedule:
        return LinearSchedule(self.eps_start, self.eps_end, self.eps_end_step)

    def beta_schedule(self) -> LinearSchedule:
        end = self.max_steps if self.beta_end_step is None else self.beta_end_step
        return LinearSchedule(self.beta_start, self.beta_end, end)

    def validate(self) -> None:
        def need(cond: bool, message: str) -> None:
            if not cond:
                raise ConfigError(message)

        need(self.env in ("catch", "gridworld", "tabular"),
             f"env must be catch, gridworld, or tabular, got {self.env!r}")
        need(self.preset in ARCHITECTURES,
             f"preset must be one of {sorted(ARCHITECTURES)}, got {self.preset!r}")
        need(0.0 <= self.gamma < 1.0,
             f"gamma must be in [0, 1), got {self.gamma}")
        need(self.learning_rate >= 0.0,
             f"learning-rate must be >= 0, got {self.learning_rate}")
        need(self.batch_size >= 1, f"batch-size must be >= 1, got {self.batch_size}")
        need(self.update_period >= 1,
             f"update-period must be >= 1, got {self.update_period}")
        need(self.target_sync >= 1,
             f"target-sync must be >= 1, got {self.target_sync}")
        need(self.learning_start >= self.batch_size,
             f"learning-start must be >= batch-size, got {self.learning_start}")
        for name, v in (("eps-start", self.eps_start), ("eps-end", self.eps_end),
                        ("test-eps", self.test_eps)):
            need(0.0 <= v <= 1.0, f"{name} must be in [0, 1], got {v}")
        need(self.eps_end_step >= 1,
             f"eps-end-step must be >= 1, got {self.eps_end_step}")
        need(self.max_steps >= 0, f"max-steps must be >= 0, got {self.max_steps}")
        need(self.max_episode_steps >= 1,
             f"max-episode-steps must be >= 1, got {self.max_episode_steps}")
        need(self.grad_clip >= 0.0, f"grad-clip must be >= 0, got {self.grad_clip}")
        need(self.replay_capacity >= 1,
             f"replay-capacity must be >= 1, got {self.replay_capacity}")
        need(self.input_frames >= 1,
             f"input-frames must be >= 1, got {self.input_frames}")
        need(self.priority_alpha >= 0.0,
             f"priority-alpha must be >= 0, got {self.priority_alpha}")
        need(self.priority_eps > 0.0,
             f"priority-eps must be > 0, got {self.priority_eps}")
        for name, v in (("beta-start", self.beta_start), ("beta-end", self.beta_end)):
            need(0.0 <= v <= 1.0, f"{name} must be in [0, 1], got {v}")
        if self.beta_end_step is not None:
            need(self.beta_end_step >= 0,
                 f"beta-end-step must be >= 0, got {self.beta_end_step}")
        need(self.optimizer == "rmsprop",
             f"optimizer must be rmsprop, got {self.optimizer!r}")
        need(0.0 < self.rms_decay < 1.0,
             f"rms-decay must be in (0, 1), got {self.rms_decay}")
        need(self.rms_epsilon > 0.0,
             f"rms-epsilon must be > 0, got {self.rms_epsilon}")
        need(self.test_period >= 1, f"test-period must be >= 1, got {self.test_period}")
        need(self.test_episodes >= 1,
             f"test-episodes must be >= 1, got {self.test_episodes}")
        need(self.checkpoint_period >= 0,
             f"checkpoint-period must be >= 0, got {self.checkpoint_period}")
        need(self.frame_size >= 1, f"frame-size must be >= 1, got {self.frame_size}")
        need(self.dtype in ("float32", "float64"),
             f"dtype must be float32 or float64, got {self.dtype!r}")


# Preset bundles applied on top of the defaults (before file/CLI overrides).
PRESETS: dict[str, dict] = {
    "atari": {},
    "desk": {
        "frame_size": 24,
        "replay_capacity": 10_000,
        "learning_start": 5_000,
        "eps_end_step": 50_000,
        "target_sync": 1_000,
        "max_steps": 200_000,
        "test_period": 25_000,
    },
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

_BOOL_FIELDS = {f.name for f in dataclasses.fields(RunConfig) if f.type == "bool"}


def coerce_value(name: str, raw: str):
    """Parse one string value according to its config field's type."""
    field = _FIELDS.get(name)
    if field is None:
        raise ConfigError(f"unknown config key {name!r}")
    text = raw.strip()
    try:
        if field.type == "bool":
            low = text.lower()
            if low in ("0", "false", "no"):
                return False
            if low in ("1", "true", "yes"):
                return True
            raise ValueError(text)
        if field.type == "int":
            return int(text)
        if field.type == "int | None":
            return None if text.lower() == "none" else int(text)
        if field.type == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None


def format_value(name: str, value) -> str:
    if name in _BOOL_FIELDS:
        return "1" if value else "0"
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(cfg: RunConfig) -> str:
    """Render as key=value lines; parsing the dump reproduces the config."""
    cfg = cfg.resolved()
    lines = [f"{name}={format_value(name, getattr(cfg, name))}"
             for name in _FIELDS]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    """Parse key=value lines (blank lines and # comments are skipped)."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        out[key] = coerce_value(key, raw)
    return out


def resolve_config(cli_overrides: dict | None = None,
                   file_overrides: dict | None = None) -> RunConfig:
    """Merge defaults, preset bundle, config file, and CLI flags (in that
    order of increasing precedence), then validate."""
    cli_overrides = cli_overrides or {}
    file_overrides = file_overrides or {}
    for key in (*cli_overrides, *file_overrides):
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    defaults = dataclasses.asdict(RunConfig())
    preset = cli_overrides.get("preset", file_overrides.get("preset",
                                                            defaults["preset"]))
    if preset not in PRESETS:
        raise ConfigError(
            f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
    merged = {**defaults, **PRESETS[preset], "preset": preset,
              **file_overrides, **cli_overrides}
    cfg = RunConfig(**merged).resolved()
    cfg.validate()
    return cfg
