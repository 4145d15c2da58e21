"""REIN-2: a meta-RL factory that learns to emit frozen agent weights.

An outer PPO/A2C learner treats inner-network weight vectors as actions;
each emitted agent is scored by multi-episode evaluation on a classic-
control task and the mean return feeds back as the outer reward.  The
package also ships the direct PPO/A2C baselines and the experiment
harness used to compare them.
"""

from .config import ConfigError, ExperimentConfig, Mode, config_from_dict, load_config
from .envs import ENV_SPECS, EnvInstance, EnvName, EnvSpec, StepOutcome, make_env
from .harness import (
    AggregateCurve,
    RunLog,
    SnapshotTable,
    SweepReport,
    aggregate_seeds,
    run_baseline,
    run_rbv_sweep,
    run_rein2,
    run_seeds,
    snapshot_table,
)
from .inner import EvalReport, InnerPolicy, act_greedy, evaluate
from .meta import (
    CategoricalPolicy,
    GaussianPolicy,
    MetaHyperparams,
    NumericalAbortError,
    RolloutBuffer,
    UpdateStats,
    a2c_update,
    categorical_act,
    compute_gae,
    gaussian_act,
    ppo_update,
)
from .nn import MlpSpec, backward, forward, init_params, param_count
from .outer_env import OuterEnv, OuterTransition, RbvMask, compose_params, make_mask

__version__ = "0.1.0"
