"""The encoder / vector-quantizer / decoder network.

Input is a stack of N 128x128 RGB frames (keyframes plus sketches); output
is the N rendered frames. Latents live on an N x 32 x 32 grid of
D-dimensional vectors snapped to a learned codebook.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigurationError, ParameterError


@dataclass
class ModelConfig:
    N: int = 5
    D: int = 8
    C: int = 256
    encoder_filters: list[int] = field(default_factory=lambda: [32, 64, 64, 128, 64, 8])
    decoder_filters: list[int] = field(default_factory=lambda: [128, 64, 64, 64, 32, 16, 3])
    commitment_beta: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.D < 1 or self.C < 2:
            raise ConfigurationError("need D >= 1 and C >= 2")
        if len(self.encoder_filters) < 3 or self.encoder_filters[-1] != self.D:
            raise ConfigurationError("encoder_filters must end at D")
        if len(self.decoder_filters) < 3 or self.decoder_filters[-1] != 3:
            raise ConfigurationError("decoder_filters must end at 3")

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "D": self.D,
            "C": self.C,
            "encoder_filters": list(self.encoder_filters),
            "decoder_filters": list(self.decoder_filters),
            "commitment_beta": self.commitment_beta,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def quantize(latent: torch.Tensor, codebook: torch.Tensor):
    """Snap each D-vector of a (..., D) latent field to its nearest codebook
    row (squared Euclidean, ties to the lowest index).

    Returns (quantized, indices, codebook_loss, commitment_loss). The
    quantized field carries a straight-through gradient: d(quantized)/d(latent)
    acts as the identity.
    """
    if latent.shape[-1] != codebook.shape[1]:
        raise ParameterError(
            f"latent depth {latent.shape[-1]} != codebook depth {codebook.shape[1]}"
        )
    flat = latent.reshape(-1, latent.shape[-1])
    # ||z - e||^2 expanded; argmin picks the first (lowest-index) minimum.
    d = (
        flat.pow(2).sum(1, keepdim=True)
        - 2.0 * flat @ codebook.t()
        + codebook.pow(2).sum(1)[None]
    )
    indices = torch.argmin(d, dim=1)
    chosen = codebook[indices].reshape(latent.shape)
    codebook_loss = (latent.detach() - chosen).pow(2).mean()
    commitment_loss = (latent - chosen.detach()).pow(2).mean()
    # straight-through: value is exactly the chosen row, gradient passes
    # through as the identity (latent - latent.detach() is exactly zero)
    quantized = chosen.detach() + (latent - latent.detach())
    return quantized, indices.reshape(latent.shape[:-1]), codebook_loss, commitment_loss


def _conv_block(channels: list[int], transposed: bool) -> nn.Sequential:
    """Stack of 3D convs: stride 2 in (y, x) for the first two layers,
    1x1x1 kernels near the projection end, ReLU then BatchNorm between
    layers and nothing after the last."""
    layers: list[nn.Module] = []
    n = len(channels) - 1
    for i in range(n):
        cin, cout = channels[i], channels[i + 1]
        strided = i < 2
        if transposed:
            pointwise = i == n - 2  # second-to-last layer
        else:
            pointwise = i >= n - 2  # final two layers
        k = 1 if pointwise else 3
        pad = k // 2
        if transposed and strided:
            # Upsampling layers; stride-1 "transposed" convs below are plain
            # convs (identical function family, much faster on CPU).
            conv = nn.ConvTranspose3d(
                cin, cout, k, stride=(1, 2, 2), padding=pad, output_padding=(0, 1, 1)
            )
        else:
            conv = nn.Conv3d(cin, cout, k, stride=(1, 2, 2) if strided else 1, padding=pad)
        layers.append(conv)
        if i < n - 1:
            layers.append(nn.ReLU())
            layers.append(nn.BatchNorm3d(cout))
    return nn.Sequential(*layers)


class VqVae(nn.Module):
    """Sketch-to-rendered-animation autoencoder with a quantized latent."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = _conv_block([3] + list(config.encoder_filters), transposed=False)
        self.decoder = _conv_block([config.D] + list(config.decoder_filters), transposed=True)
        self.codebook = nn.Parameter(torch.zeros(config.C, config.D))
        self.register_buffer("step", torch.zeros((), dtype=torch.int64))

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """(B, N, H, W, 3) frames -> (B, N, H/4, W/4, D) pre-quantization latents."""
        if x.ndim != 5 or x.shape[-1] != 3:
            raise ParameterError(f"expected (B, N, H, W, 3), got {tuple(x.shape)}")
        z = self.encoder(x.permute(0, 4, 1, 2, 3))
        return z.permute(0, 2, 3, 4, 1)

    def decode(self, quantized: torch.Tensor) -> torch.Tensor:
        """(B, N, h, w, D) latents -> (B, N, 4h, 4w, 3) frames in [0,1]."""
        if quantized.ndim != 5 or quantized.shape[-1] != self.config.D:
            raise ParameterError(
                f"expected (B, N, h, w, {self.config.D}), got {tuple(quantized.shape)}"
            )
        y = self.decoder(quantized.permute(0, 4, 1, 2, 3))
        return torch.sigmoid(y).permute(0, 2, 3, 4, 1)

    def forward(self, x: torch.Tensor):
        """Returns (reconstruction, codebook_loss, commitment_loss, indices)."""
        z = self.encode(x)
        quantized, indices, codebook_loss, commitment_loss = quantize(z, self.codebook)
        return self.decode(quantized), codebook_loss, commitment_loss, indices

    def dead_code_count(self, indices: torch.Tensor) -> int:
        used = torch.unique(indices)
        return self.config.C - int(used.numel())


def init_model(config: ModelConfig) -> VqVae:
    """Build the network with fan-in-scaled uniform weights and a codebook
    uniform in [-1/C, 1/C], all drawn from one seeded generator."""
    model = VqVae(config)
    gen = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, (nn.Conv3d, nn.ConvTranspose3d)):
                fan_in = mod.in_channels
                for k in mod.kernel_size:
                    fan_in *= k
                bound = 1.0 / math.sqrt(fan_in)
                mod.weight.uniform_(-bound, bound, generator=gen)
                mod.bias.uniform_(-bound, bound, generator=gen)
        model.codebook.uniform_(-1.0 / config.C, 1.0 / config.C, generator=gen)
        # Distinct rows are required at init; resample collisions.
        while torch.unique(model.codebook, dim=0).shape[0] < config.C:
            model.codebook.uniform_(-1.0 / config.C, 1.0 / config.C, generator=gen)
    return model
