"""Neural implicit DMD: code-conditioned mode fields and spectra."""
from .core import (ModePairNets, Normalizer, deflate, eval_basis, eval_spectrum, loss_long,
                   loss_short, mixed_loss, mode_correlation, project, rollout)
from .training import Checkpoint, InrDmdModel, TrainConfig, train_all, train_stage

__all__ = ["ModePairNets", "Normalizer", "deflate", "eval_basis", "eval_spectrum", "loss_long",
           "loss_short", "mixed_loss", "mode_correlation", "project", "rollout", "Checkpoint",
           "InrDmdModel", "TrainConfig", "train_all", "train_stage"]
