"""deepq: a from-scratch deep Q-learning toolkit.

Hand-rolled layer engine (explicit forward / backward / calculate_gradient
phases), RMSprop, uniform and proportional prioritized experience replay,
double and dueling Q-learning variants, built-in desk-scale environments,
and a batch CLI.
"""

from .agent import (Trainer, anneal_epsilon, compute_target_dqn,
                    compute_target_double, evaluate, learn_step, run_training,
                    select_action)
from .config import RunConfig, resolve_config
from .envs import Catch, GridWorld, Preprocessor, TabularChain, make_env
from .network import Network, build_network, init_params
from .optim import RmsProp, clip_gradients, sync_target
from .replay import (PrioritizedReplay, PriorityConfig, ReplayMemory,
                     SampleBatch, SumTree, Transition, anneal_beta)
from .schedules import LinearSchedule
from .tensor import Params, Tensor

__version__ = "0.1.0"

__all__ = [
    "Catch", "GridWorld", "LinearSchedule", "Network", "Params",
    "PrioritizedReplay", "PriorityConfig", "ReplayMemory", "RmsProp",
    "RunConfig", "SampleBatch", "SumTree", "TabularChain", "Tensor",
    "Trainer", "Transition", "anneal_beta", "anneal_epsilon",
    "build_network", "clip_gradients", "compute_target_dqn",
    "compute_target_double", "evaluate", "init_params", "learn_step",
    "make_env", "resolve_config", "run_training", "select_action",
    "sync_target",
]
