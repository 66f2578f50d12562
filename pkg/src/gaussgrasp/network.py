"""Generative grasp network: conv/max-pool stem, residual + receptive-field
bottleneck, attention-fusion decoder with pixel-shuffle upsampling and four
per-pixel heads (quality, cos 2theta, sin 2theta, width).

Parameter names follow the ``nn.Module`` attribute path, e.g.
``stem1.0.conv.weight`` or ``bottleneck.3.branch_c.1.bn.running_mean``;
checkpoints store exactly these names.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .grasp_core import GraspMaps


class ConfigError(ValueError):
    pass


@dataclass
class NetworkConfig:
    in_channels: int = 1
    stem_widths: tuple[int, int] = (32, 64)
    bottleneck_width: int = 256
    residual_blocks: int = 3
    rfb_enabled: bool = True
    mdafn_enabled: bool = True
    se_reduction: int = 16
    # channels produced by the last fusion block, before the final x2 shuffle
    decoder_width: int = 128

    def __post_init__(self):
        self.stem_widths = tuple(int(w) for w in self.stem_widths)
        if self.in_channels not in (1, 3, 4):
            raise ConfigError(f"in_channels must be 1, 3 or 4, got {self.in_channels}")
        if len(self.stem_widths) != 2 or min(self.stem_widths) < 1:
            raise ConfigError(f"stem_widths must be two positive counts, got {self.stem_widths}")
        if self.bottleneck_width % 4 or self.bottleneck_width % self.se_reduction:
            raise ConfigError(
                f"bottleneck_width {self.bottleneck_width} must be divisible by 4 and by "
                f"se_reduction {self.se_reduction}")
        if self.decoder_width % 4:
            raise ConfigError(f"decoder_width {self.decoder_width} must be divisible by 4")
        if self.residual_blocks < 0:
            raise ConfigError("residual_blocks must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stem_widths"] = list(self.stem_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def miniature(cls, **kw) -> "NetworkConfig":
        base = dict(stem_widths=(4, 8), bottleneck_width=16, se_reduction=4, decoder_width=16)
        base.update(kw)
        return cls(**base)


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Sub-pixel rearrangement ``(B, C, H, W) -> (B, C/r^2, rH, rW)``.

    ``out[c, h*r + i, w*r + j] = in[c*r*r + i*r + j, h, w]``; also accepts an
    unbatched ``(C, H, W)`` tensor.
    """
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    b, c, h, w = x.shape
    if c % (r * r):
        raise ConfigError(f"channel count {c} not divisible by r^2 = {r * r}")
    out = x.reshape(b, c // (r * r), r, r, h, w).permute(0, 1, 4, 2, 5, 3).reshape(b, c // (r * r), h * r, w * r)
    return out[0] if squeeze else out


class ConvNormAct(nn.Module):
    def __init__(self, cin, cout, kernel=3, dilation=1, act=True):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.conv = nn.Conv2d(cin, cout, (kh, kw), padding=(dilation * (kh // 2), dilation * (kw // 2)),
                              dilation=dilation, bias=False)
        self.bn = nn.BatchNorm2d(cout)
        self.act = act

    def forward(self, x):
        x = self.bn(self.conv(x))
        return F.relu(x) if self.act else x


class ResidualBlock(nn.Module):
    """conv-norm-relu-conv-norm, plus identity, then relu."""

    def __init__(self, width):
        super().__init__()
        self.width = width
        self.body = nn.Sequential(ConvNormAct(width, width), ConvNormAct(width, width, act=False))

    def forward(self, x):
        if x.shape[1] != self.width:
            raise ConfigError(f"residual block expects {self.width} channels, got {x.shape[1]}")
        return F.relu(x + self.body(x))


class RFBBlock(nn.Module):
    """Four-branch receptive-field block with a residual connection.

    Each branch reduces to ``width/4`` with a 1x1 conv, optionally applies a
    shaped conv (3x3, 1x7 or 7x1) and ends in a dilated 3x3 (rates 1, 3, 5, 5).
    The concatenation is projected back by a 1x1 conv and added to the input.
    """

    def __init__(self, width):
        super().__init__()
        if width % 4:
            raise ConfigError(f"RFB width {width} not divisible by 4")
        self.width = width
        q = width // 4
        self.branch_a = nn.Sequential(ConvNormAct(width, q, 1), ConvNormAct(q, q, 3, 1, act=False))
        self.branch_b = nn.Sequential(ConvNormAct(width, q, 1), ConvNormAct(q, q, 3),
                                      ConvNormAct(q, q, 3, 3, act=False))
        self.branch_c = nn.Sequential(ConvNormAct(width, q, 1), ConvNormAct(q, q, (1, 7)),
                                      ConvNormAct(q, q, 3, 5, act=False))
        self.branch_d = nn.Sequential(ConvNormAct(width, q, 1), ConvNormAct(q, q, (7, 1)),
                                      ConvNormAct(q, q, 3, 5, act=False))
        self.project = ConvNormAct(width, width, 1, act=False)

    def forward(self, x):
        if x.shape[1] != self.width:
            raise ConfigError(f"RFB block expects {self.width} channels, got {x.shape[1]}")
        y = torch.cat([self.branch_a(x), self.branch_b(x), self.branch_c(x), self.branch_d(x)], dim=1)
        return F.relu(x + self.project(y))


class ChannelAttention(nn.Module):
    def __init__(self, channels, reduction):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x):
        s = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(s))))[:, :, None, None]


class PixelAttention(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, x):
        return torch.sigmoid(self.conv(x))


class FusionBlock(nn.Module):
    """Concatenate shallow and deep features, gate them by pixel and channel
    attention (jointly multiplied), then project with a 3x3 conv.

    With ``attention=False`` this is plain concat + conv.
    """

    def __init__(self, shallow_ch, deep_ch, out_ch, reduction=16, attention=True):
        super().__init__()
        fused = shallow_ch + deep_ch
        self.attention = attention
        if attention:
            self.pixel = PixelAttention(fused)
            self.channel = ChannelAttention(fused, reduction)
        self.out = ConvNormAct(fused, out_ch)

    def forward(self, shallow, deep, return_attention=False):
        if shallow.shape[-2:] != deep.shape[-2:]:
            raise ConfigError(f"fusion inputs differ spatially: {tuple(shallow.shape[-2:])} "
                              f"vs {tuple(deep.shape[-2:])}")
        f = torch.cat([shallow, deep], dim=1)
        a_p = a_c = None
        if self.attention:
            a_p, a_c = self.pixel(f), self.channel(f)
            f = f * a_p * a_c
        out = self.out(f)
        return (out, a_p, a_c) if return_attention else out


class ForwardTrace(NamedTuple):
    x_d: torch.Tensor
    skips: tuple[torch.Tensor, torch.Tensor]
    x_b: torch.Tensor
    x_u: torch.Tensor
    heads: torch.Tensor
    attention: tuple


class GraspNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        w1, w2 = cfg.stem_widths
        wb = cfg.bottleneck_width
        self.stem1 = nn.Sequential(ConvNormAct(cfg.in_channels, w1), *[ConvNormAct(w1, w1) for _ in range(3)])
        self.stem2 = nn.Sequential(ConvNormAct(w1, w2), ConvNormAct(w2, w2))
        # widen gradually: w2 -> wb/2 -> wb
        self.lift = nn.Sequential(ConvNormAct(w2, wb // 2), ConvNormAct(wb // 2, wb))
        blocks = [ResidualBlock(wb) for _ in range(cfg.residual_blocks)]
        blocks.append(RFBBlock(wb) if cfg.rfb_enabled else ResidualBlock(wb))
        self.bottleneck = nn.Sequential(*blocks)
        self.fuse1 = FusionBlock(w2, wb, wb, cfg.se_reduction, cfg.mdafn_enabled)
        self.fuse2 = FusionBlock(w1, wb // 4, cfg.decoder_width, cfg.se_reduction, cfg.mdafn_enabled)
        head_in = cfg.decoder_width // 4
        self.heads = nn.ModuleList([nn.Conv2d(head_in, 1, 3, padding=1) for _ in range(4)])

    def forward(self, x, return_trace: bool = False):
        if x.dim() != 4 or x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected (B, {self.cfg.in_channels}, S, S) input, got {tuple(x.shape)}")
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"input height and width must be divisible by 4, got {tuple(x.shape[-2:])}")
        skip1 = F.max_pool2d(self.stem1(x), 2)
        skip2 = F.max_pool2d(self.stem2(skip1), 2)
        x_b = self.bottleneck(self.lift(skip2))
        y1, ap1, ac1 = self.fuse1(skip2, x_b, return_attention=True)
        y1 = pixel_shuffle(y1, 2)
        y2, ap2, ac2 = self.fuse2(skip1, y1, return_attention=True)
        x_u = pixel_shuffle(y2, 2)
        out = torch.cat([h(x_u) for h in self.heads], dim=1)
        if return_trace:
            return ForwardTrace(skip2, (skip1, skip2), x_b, x_u, out, (ap1, ac1, ap2, ac2))
        return out


def init_weights(net: nn.Module) -> None:
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_network(cfg: Optional[NetworkConfig] = None, seed: int = 0, dtype=torch.float32) -> GraspNet:
    cfg = cfg or NetworkConfig()
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        net = GraspNet(cfg)
        init_weights(net)
    finally:
        torch.random.set_rng_state(gen_state)
    return net.to(dtype)


def param_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


@torch.no_grad()
def forward(net: GraspNet, images, trace: bool = False):
    """Evaluation-mode inference on ``(C, S, S)`` or ``(B, C, S, S)`` input.

    Returns :class:`GraspMaps` of numpy arrays (batched when the input was),
    plus the :class:`ForwardTrace` if requested.
    """
    x = torch.as_tensor(np.asarray(images), dtype=next(net.parameters()).dtype)
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    was_training = net.training
    net.eval()
    try:
        result = net(x, return_trace=trace)
    finally:
        net.train(was_training)
    out = result.heads if trace else result
    arr = out.numpy()
    maps = GraspMaps.from_stack(arr[0] if single else arr)
    return (maps, result) if trace else maps
