from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .discriminators import DiscriminatorConfig, DiscriminatorEnsemble, build_discriminator
from .generator import AMPBlock, Generator, GeneratorConfig, build_generator

__all__ = [
    "AMPBlock",
    "DiscriminatorConfig",
    "DiscriminatorEnsemble",
    "Generator",
    "GeneratorConfig",
    "build_discriminator",
    "build_generator",
    "load_checkpoint",
    "read_header",
    "save_checkpoint",
]
