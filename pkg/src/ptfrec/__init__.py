"""Federated recommendation that exchanges prediction scores, never parameters.

Clients train small local recommenders on their own interactions and upload
soft prediction scores for a privacy-sampled slice of their trained items; a
hidden server model trains on the pooled uploads and answers with per-client
hint datasets. Includes the parameter-averaging baseline, a curious-server
inference attack, byte-exact communication accounting, and desk-scale
experiment presets.
"""

from .client import Client, UploadPayload, UploadPolicy, ldp_perturb
from .config import ConfigError, ExperimentConfig, parse_config
from .data import (DatasetError, InteractionStore, SplitConfig,
                   load_interactions, split_train_test)
from .evaluation import (AttackReport, RandomScorer, RankingMetrics,
                         attack_eval, make_planted_instance, rank_eval,
                         top_guess_attack, tradeoff)
from .models import NGCF, Adam, LightGCN, NeuMF, bce_loss, create_model
from .protocol import (ExperimentReport, RoundReport, World, build_world,
                       run_experiment, run_round)
from .server import HintDataset, HintPolicy, Server
from .wire import CommLedger, WireError, decode_payload, encode_payload

__version__ = "0.1.0"
