"""The five-network correspondence model container."""
from __future__ import annotations

import dataclasses

import numpy as np

from .dynsys import NormalizationStats
from .nets import Mlp

NET_NAMES = ("enc_a", "dec_a", "enc_b", "dec_b", "dyn")


@dataclasses.dataclass
class CorrespondenceModel:
    """Two encoder/decoder pairs plus the shared latent dynamics network.

    The latent state has dimension 2k: the first k entries are the latent
    pose, the last k the latent velocity. Encoders and decoders end in tanh
    (latent states and normalized reconstructions live in (-1, 1)); the
    dynamics network `dyn` outputs an unbounded latent displacement.
    """

    enc_a: Mlp
    dec_a: Mlp
    enc_b: Mlp
    dec_b: Mlp
    dyn: Mlp
    latent_dim: int
    norm_a: NormalizationStats
    norm_b: NormalizationStats

    def __post_init__(self):
        if self.latent_dim % 2 != 0 or self.latent_dim < 2:
            raise ValueError("latent dimension must be even and >= 2")
        if self.enc_a.out_dim != self.latent_dim or self.enc_b.out_dim != self.latent_dim:
            raise ValueError("encoder output width must equal latent dimension")
        if self.dec_a.in_dim != self.latent_dim or self.dec_b.in_dim != self.latent_dim:
            raise ValueError("decoder input width must equal latent dimension")
        if self.dyn.in_dim != self.latent_dim or self.dyn.out_dim != self.latent_dim:
            raise ValueError("dynamics net must map latent to latent")

    def nets(self) -> dict:
        return {
            "enc_a": self.enc_a,
            "dec_a": self.dec_a,
            "enc_b": self.enc_b,
            "dec_b": self.dec_b,
            "dyn": self.dyn,
        }

    def params(self) -> list:
        out = []
        for name in NET_NAMES:
            out.extend(self.nets()[name].params())
        return out


def zero_grads(net: Mlp) -> list:
    return [np.zeros_like(p) for p in net.params()]


def add_scaled(dst: list, src: list, scale: float) -> None:
    """dst += scale * src, elementwise over matching parameter lists."""
    for d, s in zip(dst, src):
        d += scale * s
