"""Black-box shape search over the latent space and its baselines."""
from .evaluate import AssetObjective, EpisodeObjective, LatentObjective, trace_digest
from .gp import GpError, GpModel, matern32, propose_next
from .search import (ALGORITHMS, AttackConfig, AttackResult, EvalFailure, EvalOutcome, QueryRecord, attack,
                     config_hash, grid_points, history_csv, read_history, vertex_deform_attack, write_history)
from .targets import select_target_actors
