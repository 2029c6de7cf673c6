"""Word-level audio GAN with latent-code retrieval and probing tools."""

from .autodiff import Tensor, backward, no_grad
from .models import LatentConfig, LatentVector, encode_class, generate, sample_latent
from .training import TrainConfig, init_state, load_checkpoint, save_checkpoint, train_cycle

__all__ = [
    "Tensor", "backward", "no_grad",
    "LatentConfig", "LatentVector", "encode_class", "generate", "sample_latent",
    "TrainConfig", "init_state", "load_checkpoint", "save_checkpoint", "train_cycle",
]

__version__ = "0.1.0"
