"""Membership-inference-aware weight pruning with ADMM, a min-max privacy
regularizer, and an empirical lab for pruned-subnetwork approximation."""
from .admm import PruneSpec, hard_prune, project_cardinality, sparsity_report
from .attack import AttackModel, MembershipSplit, build_attack_model
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import Dataset, load_mnist_idx, membership_split, synth_overfit_toy
from .errors import MiapError
from .metrics import GainReport, empirical_gain, js_divergence
from .nn import Network, mlp
from .trainer import TrainConfig, grid_search, run_single

__version__ = "0.1.0"

__all__ = [
    "PruneSpec",
    "hard_prune",
    "project_cardinality",
    "sparsity_report",
    "AttackModel",
    "MembershipSplit",
    "build_attack_model",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "Dataset",
    "load_mnist_idx",
    "membership_split",
    "synth_overfit_toy",
    "MiapError",
    "GainReport",
    "empirical_gain",
    "js_divergence",
    "Network",
    "mlp",
    "TrainConfig",
    "grid_search",
    "run_single",
]
