"""Generator / discriminator architectures and the four-network bundle.

Generators are residual-block encoder-decoders with a tanh head so output
stays in the model range; discriminators are patch-level conv stacks whose
raw output map reads as realness logits (probabilities after sigmoid).
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

from ..errors import ParameterError, ShapeMismatchError


@dataclass(frozen=True)
class ArchSpec:
    """Architecture descriptor stored alongside checkpoints."""

    name: str
    net_input: int
    base_features: int
    res_blocks: int
    downsamples: int = 2
    channels: int = 3
    use_norm: bool = True
    disc_layers: int = 3
    zero_init_final: bool = False

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(**d)


PRESETS = {
    # reference-recipe geometry: 256x256 network input, 9 residual blocks
    "paper": ArchSpec("paper", net_input=256, base_features=64, res_blocks=9, disc_layers=3),
    # small CPU-friendly variant for end-to-end runs on synthetic data
    "desk": ArchSpec("desk", net_input=64, base_features=8, res_blocks=3, disc_layers=2),
    # 2-conv nets (< 2k parameters total) for finite-difference checks
    "tiny": ArchSpec(
        "tiny",
        net_input=8,
        base_features=4,
        res_blocks=0,
        downsamples=0,
        use_norm=False,
        disc_layers=1,
    ),
}


def preset(name: str) -> ArchSpec:
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]


def _norm(channels: int, use_norm: bool) -> nn.Module:
    return nn.InstanceNorm2d(channels) if use_norm else nn.Identity()


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, use_norm: bool = True):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            _norm(channels, use_norm),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            _norm(channels, use_norm),
        )

    def forward(self, x):
        return x + self.block(x)


class Generator(nn.Module):
    """Image-to-image generator; output shape equals input shape."""

    def __init__(self, arch: ArchSpec):
        super().__init__()
        self.arch = arch
        c, f = arch.channels, arch.base_features
        if arch.downsamples == 0 and arch.res_blocks == 0:
            layers = [
                nn.Conv2d(c, f, 3, 1, 1, padding_mode="reflect"),
                nn.ReLU(inplace=True),
                nn.Conv2d(f, c, 3, 1, 1, padding_mode="reflect"),
            ]
        else:
            layers = [
                nn.Conv2d(c, f, 7, 1, 3, padding_mode="reflect"),
                _norm(f, arch.use_norm),
                nn.ReLU(inplace=True),
            ]
            feats = f
            for _ in range(arch.downsamples):
                layers += [
                    nn.Conv2d(feats, feats * 2, 3, 2, 1),
                    _norm(feats * 2, arch.use_norm),
                    nn.ReLU(inplace=True),
                ]
                feats *= 2
            layers += [ResidualBlock(feats, arch.use_norm) for _ in range(arch.res_blocks)]
            for _ in range(arch.downsamples):
                layers += [
                    nn.ConvTranspose2d(feats, feats // 2, 3, 2, 1, output_padding=1),
                    _norm(feats // 2, arch.use_norm),
                    nn.ReLU(inplace=True),
                ]
                feats //= 2
            layers += [nn.Conv2d(feats, c, 7, 1, 3, padding_mode="reflect")]
        layers.append(nn.Tanh())
        self.model = nn.Sequential(*layers)
        if arch.zero_init_final:
            final = [m for m in self.model if isinstance(m, nn.Conv2d)][-1]
            nn.init.zeros_(final.weight)
            nn.init.zeros_(final.bias)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.arch.channels:
            raise ShapeMismatchError(
                f"generator expects (N, {self.arch.channels}, H, W), got {tuple(x.shape)}"
            )
        return self.model(x)


class Discriminator(nn.Module):
    """Patch discriminator returning an (N, 1, h, w) realness logit map."""

    def __init__(self, arch: ArchSpec):
        super().__init__()
        self.arch = arch
        c, f = arch.channels, arch.base_features
        if arch.disc_layers <= 1:
            layers = [
                nn.Conv2d(c, f, 3, 2, 1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(f, 1, 3, 1, 1),
            ]
        else:
            layers = [nn.Conv2d(c, f, 4, 2, 1), nn.LeakyReLU(0.2, inplace=True)]
            feats = f
            for i in range(1, arch.disc_layers):
                stride = 2 if i < arch.disc_layers - 1 else 1
                layers += [
                    nn.Conv2d(feats, feats * 2, 4, stride, 1),
                    _norm(feats * 2, arch.use_norm),
                    nn.LeakyReLU(0.2, inplace=True),
                ]
                feats *= 2
            layers.append(nn.Conv2d(feats, 1, 4, 1, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.arch.channels:
            raise ShapeMismatchError(
                f"discriminator expects (N, {self.arch.channels}, H, W), got {tuple(x.shape)}"
            )
        return self.model(x)


@dataclass
class ModelBundle:
    """The two generators and two discriminators plus their descriptor.

    ``g_pa`` translates US -> pseudo-anatomy, ``g_us`` the reverse;
    ``d_pa`` / ``d_us`` judge realness in their domains. ``steps_trained``
    is bumped by the training loop and gates full-image translation.
    """

    g_pa: Generator
    g_us: Generator
    d_pa: Discriminator
    d_us: Discriminator
    arch: ArchSpec
    steps_trained: int = 0

    @classmethod
    def create(cls, arch: ArchSpec, seed: int = 0) -> "ModelBundle":
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            bundle = cls(
                g_pa=Generator(arch),
                g_us=Generator(arch),
                d_pa=Discriminator(arch),
                d_us=Discriminator(arch),
                arch=arch,
            )
        return bundle

    def networks(self) -> dict[str, nn.Module]:
        return {"g_pa": self.g_pa, "g_us": self.g_us, "d_pa": self.d_pa, "d_us": self.d_us}

    def generator_parameters(self):
        yield from self.g_pa.parameters()
        yield from self.g_us.parameters()

    def num_parameters(self) -> int:
        return sum(p.numel() for net in self.networks().values() for p in net.parameters())

    def train(self):
        for net in self.networks().values():
            net.train()

    def eval(self):
        for net in self.networks().values():
            net.eval()
