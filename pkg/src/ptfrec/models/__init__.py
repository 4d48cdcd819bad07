from .adam import Adam
from .base import EPS_CLIP, TrainingDiverged, bce_loss, clip_scores, sigmoid
from .checkpoint import CheckpointError, load_model, save_model
from .graph import NGCF, LightGCN, build_adjacency
from .neumf import NeuMF

ARCHITECTURES = ("neumf", "ngcf", "lightgcn")


def create_model(arch: str, n_users: int, n_items: int, dim: int = 32,
                 n_layers: int = 3, rng=None, lr: float = 0.001,
                 adjacency=None, track_item_updates: bool = False):
    if arch == "neumf":
        return NeuMF(n_users, n_items, dim, rng=rng, lr=lr,
                     track_item_updates=track_item_updates)
    if arch == "ngcf":
        return NGCF(n_users, n_items, dim, n_layers=n_layers, rng=rng, lr=lr,
                    adjacency=adjacency, track_item_updates=track_item_updates)
    if arch == "lightgcn":
        return LightGCN(n_users, n_items, dim, n_layers=n_layers, rng=rng, lr=lr,
                        adjacency=adjacency, track_item_updates=track_item_updates)
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
