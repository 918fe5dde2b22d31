"""Desk-scale continual federated learning simulator.

Federated averaging with a buffer-gradient projection hook, its local
baselines (A-GEM, DER, FedProx), non-IID task streams, retention metrics,
and a deterministic experiment runner.
"""

from .buffer import BufferEmptyError, BufferItem, MalformedBufferError, ReplayBuffer, insert_batch, sample
from .config import ConfigError, ExperimentConfig, parse_config, parse_config_dict
from .data import (
    ClientShard,
    Dataset,
    IdxFormatError,
    Task,
    TaskStream,
    assign_digit_pairs,
    dirichlet_partition,
    load_idx,
    make_domain_tasks,
    make_split_tasks,
    rotate_image,
    synth_dataset,
)
from .federation import (
    ClientState,
    CommLedger,
    Schedule,
    ServerState,
    advance_schedule,
    comm_cost,
    compute_buffer_grad,
    run_round,
    secure_aggregate,
)
from .metrics import AccuracyMatrix, avg_accuracy, avg_forgetting, bwt, evaluate_row, fwt
from .model import (
    Batch,
    LayoutError,
    ModelSpec,
    finite_diff_grad,
    forward,
    init_params,
    loss_and_grad,
    predict,
    sgd_step,
)
from .projection import (
    DegenerateReferenceError,
    DegenerateRotationError,
    RefineConfig,
    project_conflict,
    refine,
)
from .runner import run_seeds, run_single_seed
from .strategies import (
    StrategyConfig,
    base_gradient_agem,
    base_gradient_der,
    base_gradient_plain,
    client_update,
)

__version__ = "0.1.0"
