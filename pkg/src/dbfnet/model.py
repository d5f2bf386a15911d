"""DBF-Net: dilated encoder, ASP_OC context block, and FFS decoder.

Topology (full configuration, ``ffs_count=2``):

* five encoder blocks, each two conv3x3+BN+ReLU stages with per-block
  dilation (1, 2, 3, 5, 7) and channels 3-32-64-128-256-256; 2x2
  max-pooling between blocks, so block i runs at stride ``2**(i-1)``
* ASP_OC on the stride-16 features: an object-context-pooling branch
  (spatial self-attention) plus four ASPP-style dilated conv branches,
  concatenated and projected back to the encoder width
* FFS-2 fuses the 8x-upsampled context with the stride-2 skip (E2);
  FFS-1 fuses the 2x-upsampled result with the stride-1 skip (E1)
* each FFS runs two parallel two-conv branches (body / boundary), an
  optional bidirectional residual cross-conv exchange (FFM), and
  recombines as ``lam * body + bound`` with one trainable ``lam`` per
  block (init 1.0); 1x1 heads emit per-branch supervision logits
* a 1x1 head on the last fused map emits the final logits at input
  resolution (for ``ffs_count < 2`` the head output is upsampled)

Branch widths below are not forced by the reference design; they were
chosen so the default configuration lands near 3.2M trainable
parameters (see ``count_parameters``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ShapeError

__all__ = ["ModelConfig", "ForwardOutputs", "DBFNet", "count_parameters"]


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    encoder_channels: tuple[int, ...] = (32, 64, 128, 256, 256)
    encoder_dilations: tuple[int, ...] = (1, 2, 3, 5, 7)
    aspoc_width: int = 20
    aspoc_dilations: tuple[int, ...] = (1, 12, 24, 36)
    ffs_count: int = 2
    use_ffm: bool = True
    lambda_init: float = 1.0
    ffs_widths: tuple[int, int] = (64, 32)  # (FFS-2, FFS-1)
    supervise_body: bool = True
    supervise_bound: bool = True

    def __post_init__(self):
        if self.ffs_count not in (0, 1, 2):
            raise ConfigurationError(f"ffs_count must be 0, 1 or 2, got {self.ffs_count}")
        if len(self.encoder_channels) != 5 or len(self.encoder_dilations) != 5:
            raise ConfigurationError("encoder spec needs exactly five blocks")
        if not math.isfinite(self.lambda_init):
            raise ConfigurationError("lambda_init must be finite")


@dataclass
class ForwardOutputs:
    """Final logits plus per-FFS deep-supervision logits."""

    final_logits: torch.Tensor
    body_logits: tuple[torch.Tensor, ...]
    bound_logits: tuple[torch.Tensor, ...]
    ffs_names: tuple[str, ...]
    lambda_values: tuple[float, ...]


def conv_bn_relu(
    in_ch: int, out_ch: int, kernel_size: int = 3, dilation: int = 1
) -> nn.Sequential:
    padding = dilation * (kernel_size - 1) // 2
    return nn.Sequential(
        nn.Conv2d(
            in_ch,
            out_ch,
            kernel_size,
            padding=padding,
            dilation=dilation,
            bias=False,
        ),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    """Five two-conv blocks with 2x2 max-pooling between them."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.in_channels = config.in_channels
        blocks = []
        in_ch = config.in_channels
        for out_ch, dilation in zip(config.encoder_channels, config.encoder_dilations):
            blocks.append(
                nn.Sequential(
                    conv_bn_relu(in_ch, out_ch, dilation=dilation),
                    conv_bn_relu(out_ch, out_ch, dilation=dilation),
                )
            )
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected (N, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        h, w = x.shape[-2:]
        if h % 16 != 0 or w % 16 != 0:
            raise ShapeError(
                f"input spatial dims must be divisible by 16, got {h}x{w}"
            )
        feats = []
        for i, block in enumerate(self.blocks):
            if i > 0:
                x = self.pool(x)
            x = block(x)
            feats.append(x)
        return feats


class ObjectContextPooling(nn.Module):
    """Dot-product spatial self-attention with channel-reduced key/query."""

    def __init__(self, width: int, reduction: int = 2):
        super().__init__()
        inner = max(1, width // reduction)
        self.query = nn.Conv2d(width, inner, 1, bias=False)
        self.key = nn.Conv2d(width, inner, 1, bias=False)
        self.value = nn.Conv2d(width, width, 1, bias=False)
        self.out = nn.Conv2d(width, width, 1, bias=False)
        self.scale = inner**-0.5

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)  # (n, hw, inner)
        k = self.key(x).flatten(2)  # (n, inner, hw)
        v = self.value(x).flatten(2).transpose(1, 2)  # (n, hw, c)
        attn = torch.softmax(torch.bmm(q, k) * self.scale, dim=-1)
        ctx = torch.bmm(attn, v).transpose(1, 2).reshape(n, c, h, w)
        return self.out(ctx)


class AspOc(nn.Module):
    """Object-context pooling plus four dilated convs, concat + project."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        in_ch = config.encoder_channels[-1]
        width = config.aspoc_width
        self.context_conv = conv_bn_relu(in_ch, width)
        self.context_pool = ObjectContextPooling(width)
        self.dilated = nn.ModuleList(
            conv_bn_relu(in_ch, width, dilation=d) for d in config.aspoc_dilations
        )
        n_branches = len(config.aspoc_dilations) + 1
        self.project = conv_bn_relu(n_branches * width, in_ch, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        ctx = self.context_pool(self.context_conv(x))
        branches = [ctx] + [conv(x) for conv in self.dilated]
        return self.project(torch.cat(branches, dim=1))


class FeatureFusionModule(nn.Module):
    """Bidirectional residual cross-convolution between the two streams."""

    def __init__(self, width: int):
        super().__init__()
        self.body_from_bound = nn.Conv2d(width, width, 3, padding=1)
        self.bound_from_body = nn.Conv2d(width, width, 3, padding=1)

    def forward(
        self, body: torch.Tensor, bound: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if body.shape != bound.shape:
            raise ShapeError(
                f"body/bound shapes differ: {tuple(body.shape)} vs {tuple(bound.shape)}"
            )
        return body + self.body_from_bound(bound), bound + self.bound_from_body(body)


class FFS(nn.Module):
    """Feature fusion and supervision block.

    Concatenates the encoder skip with the (already upsampled) deeper
    features, runs parallel body/boundary branches, optionally exchanges
    information through the FFM, and fuses as ``lam * body + bound``.
    """

    def __init__(
        self,
        skip_ch: int,
        deep_ch: int,
        width: int,
        use_ffm: bool = True,
        lambda_init: float = 1.0,
    ):
        super().__init__()
        in_ch = skip_ch + deep_ch
        self.body_branch = nn.Sequential(
            conv_bn_relu(in_ch, width), conv_bn_relu(width, width)
        )
        self.bound_branch = nn.Sequential(
            conv_bn_relu(in_ch, width), conv_bn_relu(width, width)
        )
        self.ffm = FeatureFusionModule(width) if use_ffm else None
        self.lam = nn.Parameter(torch.tensor(float(lambda_init)))
        self.width = width

    def forward(
        self, skip: torch.Tensor, deep: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if skip.shape[-2:] != deep.shape[-2:]:
            raise ShapeError(
                f"skip {tuple(skip.shape[-2:])} and deep {tuple(deep.shape[-2:])} "
                "spatial sizes differ; upsample deep features first"
            )
        fused_in = torch.cat([skip, deep], dim=1)
        body = self.body_branch(fused_in)
        bound = self.bound_branch(fused_in)
        if self.ffm is not None:
            body, bound = self.ffm(body, bound)
        fused = self.lam * body + bound
        return fused, body, bound


def _upsample(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class DBFNet(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        self.encoder = Encoder(cfg)
        self.aspoc = AspOc(cfg)

        enc_ch = cfg.encoder_channels
        ffs_blocks, body_heads, bound_heads, names = [], [], [], []
        deep_ch = enc_ch[-1]
        # blocks accrue from the deep end: one block pairs with E2,
        # the second with E1
        for i in range(cfg.ffs_count):
            skip_ch = enc_ch[1] if i == 0 else enc_ch[0]
            width = cfg.ffs_widths[i]
            ffs_blocks.append(
                FFS(skip_ch, deep_ch, width, cfg.use_ffm, cfg.lambda_init)
            )
            names.append("ffs2" if i == 0 else "ffs1")
            if cfg.supervise_body:
                body_heads.append(nn.Conv2d(width, 1, 1))
            if cfg.supervise_bound:
                bound_heads.append(nn.Conv2d(width, 1, 1))
            deep_ch = width
        self.ffs_blocks = nn.ModuleList(ffs_blocks)
        self.body_heads = nn.ModuleList(body_heads)
        self.bound_heads = nn.ModuleList(bound_heads)
        self.ffs_names = tuple(names)
        self.final_head = nn.Conv2d(deep_ch, 1, 1)
        self.apply(_init_weights)

    def lambda_values(self) -> dict[str, float]:
        return {
            name: float(block.lam.detach())
            for name, block in zip(self.ffs_names, self.ffs_blocks)
        }

    def forward(self, x: torch.Tensor) -> ForwardOutputs:
        cfg = self.config
        feats = self.encoder(x)
        ctx = self.aspoc(feats[-1])

        body_logits, bound_logits = [], []
        if cfg.ffs_count == 0:
            final = _upsample(self.final_head(ctx), x.shape[-2:])
        else:
            deep = ctx
            fused = None
            for i, block in enumerate(self.ffs_blocks):
                skip = feats[1] if i == 0 else feats[0]
                deep = _upsample(deep, skip.shape[-2:])
                fused, body, bound = block(skip, deep)
                if cfg.supervise_body:
                    body_logits.append(self.body_heads[i](body))
                if cfg.supervise_bound:
                    bound_logits.append(self.bound_heads[i](bound))
                deep = fused
            final = self.final_head(fused)
            if final.shape[-2:] != x.shape[-2:]:
                final = _upsample(final, x.shape[-2:])

        return ForwardOutputs(
            final_logits=final,
            body_logits=tuple(body_logits),
            bound_logits=tuple(bound_logits),
            ffs_names=self.ffs_names,
            lambda_values=tuple(
                float(b.lam.detach()) for b in self.ffs_blocks
            ),
        )


def _init_weights(m: nn.Module) -> None:
    if isinstance(m, nn.Conv2d):
        nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.BatchNorm2d):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


def count_parameters(config: ModelConfig | None = None) -> int:
    """Number of trainable scalars in a model built from ``config``."""
    model = DBFNet(config or ModelConfig())
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
