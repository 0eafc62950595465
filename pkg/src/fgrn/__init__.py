"""Flow-guided image rescaling: learned downscaler/upscaler pair plus an
invertible flow that maps the learned representation to a viewable LR image."""

from .flow import CouplingCell, FlowModule
from .tensor import Tensor, backward, no_grad
from .training import RescaleModel, TrainConfig, train

__all__ = ["CouplingCell", "FlowModule", "RescaleModel", "Tensor", "TrainConfig", "backward", "no_grad", "train"]
__version__ = "0.1.0"
