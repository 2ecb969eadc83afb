"""Branch encoder/decoder and classifier head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config_schema import LATENT_WIDTH, BranchParams, HeadParams
from ..errors import InvalidArgumentError
from .layers import Frame, SetAbstraction, denormalize_points, normalize_points


def check_points(points: torch.Tensor, expected: int, what: str = "input") -> None:
    if points.dim() != 3 or points.shape[-1] != 3:
        raise InvalidArgumentError(f"{what} must be [B, N, 3], got {tuple(points.shape)}")
    if points.shape[1] != expected:
        raise InvalidArgumentError(
            f"{what} has {points.shape[1]} points, network expects {expected}"
        )


def check_feature(feature: torch.Tensor, width: int = LATENT_WIDTH) -> None:
    if feature.shape[-1] != width:
        raise InvalidArgumentError(f"Feature width {feature.shape[-1]} != {width}")


@dataclass
class Encoding:
    """Encoder output for a batch.

    Attributes:
        feature: Global latent ``[B, 1024]``
        pooled: Per-level features max-pooled over centroids, ``[B, C_l]`` each
        frame: Normalisation frame of the input
    """
    feature: torch.Tensor
    pooled: list[torch.Tensor]
    frame: Frame


class BranchEncoder(nn.Module):
    """Three set-abstraction levels; the last one pools to the global feature."""

    def __init__(self, params: BranchParams):
        super().__init__()
        self.input_points = params.input_points
        levels = []
        in_channel = 0
        for lv in params.levels:
            sa = SetAbstraction(lv.centroids, lv.radius, lv.cap, in_channel, list(lv.mlp))
            levels.append(sa)
            in_channel = sa.out_channel
        self.levels = nn.ModuleList(levels)

    def forward(self, points: torch.Tensor) -> Encoding:
        check_points(points, self.input_points)
        xyz, frame = normalize_points(points)
        features = None
        pooled = []
        for sa in self.levels:
            xyz, features = sa(xyz, features)
            pooled.append(features.max(dim=1)[0])
        return Encoding(feature=pooled[-1], pooled=pooled, frame=frame)


class BranchDecoder(nn.Module):
    """Fully-connected decoder from the latent to ``N_out`` normalized points."""

    def __init__(self, params: BranchParams):
        super().__init__()
        self.output_points = params.output_points
        widths = [LATENT_WIDTH, *params.decoder_widths]
        self.hidden = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths, widths[1:]))
        self.out = nn.Linear(widths[-1], params.output_points * 3)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        check_feature(feature)
        x = feature
        for layer in self.hidden:
            x = F.relu(layer(x))
        return self.out(x).view(-1, self.output_points, 3)


class Branch(nn.Module):
    """Encoder-decoder; reconstructions are returned in the input's frame (mm)."""

    def __init__(self, params: BranchParams):
        super().__init__()
        self.encoder = BranchEncoder(params)
        self.decoder = BranchDecoder(params)

    def encode(self, points: torch.Tensor) -> Encoding:
        return self.encoder(points)

    def decode(self, feature: torch.Tensor, frame: Frame | None = None) -> torch.Tensor:
        out = self.decoder(feature)
        return out if frame is None else denormalize_points(out, frame)

    def forward(self, points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        enc = self.encode(points)
        return enc.feature, self.decode(enc.feature, enc.frame)


class ClassifierHead(nn.Module):
    """1024 -> hidden... -> classes, with dropout between layers.

    LayerNorm rather than BatchNorm keeps logits a per-sample function, so
    identical features give identical logits regardless of the batch.
    """

    def __init__(self, num_classes: int, params: HeadParams | None = None):
        super().__init__()
        params = params or HeadParams()
        if num_classes < 1:
            raise InvalidArgumentError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        layers: list[nn.Module] = []
        last = LATENT_WIDTH
        for width in params.hidden:
            layers += [nn.Linear(last, width), nn.LayerNorm(width), nn.ReLU()]
            if params.dropout > 0:
                layers.append(nn.Dropout(params.dropout))
            last = width
        layers.append(nn.Linear(last, num_classes))
        self.net = nn.Sequential(*layers)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        check_feature(feature)
        return self.net(feature)
