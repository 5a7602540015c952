"""Speech-conditioned 3D facial motion prediction via diffusion policy."""

from .config import RunConfig
from .features import AudioTrack
from .geom import ActionSequence, FaceTemplate, VertexSequence, compute_actions, integrate_actions
from .model import PolicyModel, init_model, load_model, save_model
from .rollout import generate
from .sampler import SamplerConfig

__version__ = "0.1.0"

__all__ = [
    "ActionSequence",
    "AudioTrack",
    "FaceTemplate",
    "PolicyModel",
    "RunConfig",
    "SamplerConfig",
    "VertexSequence",
    "compute_actions",
    "generate",
    "init_model",
    "integrate_actions",
    "load_model",
    "save_model",
    "__version__",
]
