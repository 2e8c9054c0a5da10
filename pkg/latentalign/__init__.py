# latentalign: inference-time latent alignment of two toy diffusion samplers
__version__ = "0.1.0"
