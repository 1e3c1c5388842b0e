"""Conditional generator and patch discriminator for the cross-channel tasks.

The generator is a small encoder-decoder with skip connections (3 levels for
64x64 inputs); its stochastic input z is realized as dropout active during
training only. The discriminator is a small fully-convolutional patch
classifier whose sigmoid score grid (receptive field about 16x16) is averaged
to a scalar at evaluation time.
"""

from __future__ import annotations

import torch
from torch import nn


class DownBlock(nn.Module):
    def __init__(self, cin, cout, norm=True):
        super().__init__()
        layers = [nn.Conv2d(cin, cout, 4, stride=2, padding=1, bias=not norm)]
        if norm:
            layers.append(nn.BatchNorm2d(cout))
        layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class UpBlock(nn.Module):
    def __init__(self, cin, cout, dropout=False):
        super().__init__()
        layers = [nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1, bias=False),
                  nn.BatchNorm2d(cout),
                  nn.ReLU(inplace=True)]
        if dropout:
            layers.append(nn.Dropout(0.5))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class UnetGenerator(nn.Module):
    """in_ch -> out_ch image of the same spatial size, 3 down/up levels."""

    def __init__(self, in_ch: int, out_ch: int, base: int = 16):
        super().__init__()
        self.d1 = DownBlock(in_ch, base, norm=False)    # 64 -> 32
        self.d2 = DownBlock(base, base * 2)             # 32 -> 16
        self.d3 = DownBlock(base * 2, base * 4)         # 16 -> 8
        self.u1 = UpBlock(base * 4, base * 2, dropout=True)   # 8 -> 16
        self.u2 = UpBlock(base * 4, base, dropout=True)       # 16 -> 32
        self.up_out = nn.ConvTranspose2d(base * 2, out_ch, 4, stride=2, padding=1)

    def forward(self, x):
        e1 = self.d1(x)
        e2 = self.d2(e1)
        e3 = self.d3(e2)
        y = self.u1(e3)
        y = self.u2(torch.cat([y, e2], dim=1))
        y = self.up_out(torch.cat([y, e1], dim=1))
        return torch.sigmoid(y)


class PatchDiscriminator(nn.Module):
    """Conditional patch classifier over concat(condition, candidate).

    Output is a sigmoid score grid in [0, 1]; receptive field is 16x16
    (two stride-2 4x4 convs followed by a 3x3).
    """

    def __init__(self, in_ch: int, base: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, base * 2, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(base * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 2, 1, 3, stride=1, padding=1),
        )

    def forward(self, condition, candidate):
        return torch.sigmoid(self.net(torch.cat([condition, candidate], dim=1)))

    def score(self, condition, candidate) -> torch.Tensor:
        """Scalar per batch element: the score grid averaged over positions."""
        return self.forward(condition, candidate).mean(dim=(1, 2, 3))


def make_pair(direction: str, base: int = 16,
              gen_base: int | None = None) -> tuple[UnetGenerator, PatchDiscriminator]:
    """direction: 'f2o' (frame -> flow) or 'o2f' (flow -> frame)."""
    gb = base if gen_base is None else gen_base
    if direction == "f2o":
        return UnetGenerator(1, 3, gb), PatchDiscriminator(1 + 3, base)
    if direction == "o2f":
        return UnetGenerator(3, 1, gb), PatchDiscriminator(3 + 1, base)
    raise ValueError(f"unknown direction {direction!r}")
