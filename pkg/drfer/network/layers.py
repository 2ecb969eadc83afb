"""Batched sampling, grouping and set-abstraction layers.

Tensors are ``[B, N, 3]`` coordinates and ``[B, N, C]`` features. Index
computations (FPS, ball query) run without autograd; gradients flow through
the gathered coordinates and features.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

SCALE_FLOOR = 1e-6


class Frame(NamedTuple):
    """Normalisation frame: ``x = x_normalized * scale + centroid``."""
    centroid: torch.Tensor  # [B, 1, 3]
    scale: torch.Tensor  # [B, 1, 1]


def normalize_points(xyz: torch.Tensor) -> tuple[torch.Tensor, Frame]:
    """Move to zero centroid and unit bounding radius."""
    centroid = xyz.mean(dim=1, keepdim=True)
    centered = xyz - centroid
    scale = centered.norm(dim=-1).amax(dim=1).clamp_min(SCALE_FLOOR).view(-1, 1, 1)
    return centered / scale, Frame(centroid, scale)


def denormalize_points(xyz: torch.Tensor, frame: Frame) -> torch.Tensor:
    return xyz * frame.scale + frame.centroid


def square_distance(src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
    """Pairwise squared distances ``[B, N, M]`` via the dot-product expansion."""
    dist = -2 * torch.matmul(src, dst.transpose(1, 2))
    dist = dist + torch.sum(src**2, -1).unsqueeze(-1)
    dist = dist + torch.sum(dst**2, -1).unsqueeze(1)
    return dist


def index_points(points: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """Gather ``points[b, idx[b, ...], :]`` for any trailing index shape."""
    batch = points.shape[0]
    view_shape = [batch] + [1] * (idx.dim() - 1)
    batch_indices = torch.arange(batch, device=points.device).view(view_shape).expand_as(idx)
    return points[batch_indices, idx, :]


@torch.no_grad()
def farthest_point_sample(xyz: torch.Tensor, npoint: int) -> torch.Tensor:
    """FPS anchored at the point nearest the centroid.

    The anchor depends only on geometry, so the selected set does not change
    when the input order is permuted (up to exact distance ties).

    Returns:
        ``[B, npoint]`` long indices
    """
    batch, n, _ = xyz.shape
    centroids = torch.zeros(batch, npoint, dtype=torch.long, device=xyz.device)
    distance = torch.full((batch, n), float("inf"), dtype=xyz.dtype, device=xyz.device)
    farthest = torch.argmin(torch.sum((xyz - xyz.mean(dim=1, keepdim=True)) ** 2, -1), dim=-1)
    batch_indices = torch.arange(batch, device=xyz.device)
    for i in range(npoint):
        centroids[:, i] = farthest
        centroid = xyz[batch_indices, farthest, :].view(batch, 1, 3)
        dist = torch.sum((xyz - centroid) ** 2, -1)
        distance = torch.minimum(distance, dist)
        farthest = torch.argmax(distance, dim=-1)
    return centroids


@torch.no_grad()
def ball_query(
    radius: float | None,
    cap: int,
    xyz: torch.Tensor,
    new_xyz: torch.Tensor,
    center_idx: torch.Tensor,
) -> torch.Tensor:
    """Nearest-first neighbourhoods, center first, padded with the center.

    Args:
        radius: Inclusive radius, or None to accept every point
        cap: Neighbourhood size
        xyz: ``[B, N, 3]`` candidates
        new_xyz: ``[B, S, 3]`` centers
        center_idx: ``[B, S]`` index of each center inside ``xyz``

    Returns:
        ``[B, S, cap]`` long indices
    """
    n = xyz.shape[1]
    dist = square_distance(new_xyz, xyz).clamp_min(0.0)
    dist.scatter_(2, center_idx.unsqueeze(-1), -1.0)
    if radius is not None:
        dist = dist.masked_fill(dist > radius**2, float("inf"))
    k = min(cap, n)
    sorted_dist, order = torch.sort(dist, dim=-1, stable=True)
    group_idx = order[:, :, :k]
    first = group_idx[:, :, :1].expand_as(group_idx)
    group_idx = torch.where(torch.isinf(sorted_dist[:, :, :k]), first, group_idx)
    if k < cap:
        pad = group_idx[:, :, :1].expand(-1, -1, cap - k)
        group_idx = torch.cat([group_idx, pad], dim=-1)
    return group_idx


class SetAbstraction(nn.Module):
    """Sample centroids, group neighbourhoods, shared pointwise MLP, max-pool.

    Args:
        npoint: Centroid count
        radius: Ball radius in normalized units, None for the whole set
        nsample: Neighbourhood size
        in_channel: Feature width of the incoming points (0 for raw xyz)
        mlp: Output widths of the pointwise layers
    """

    def __init__(
        self, npoint: int, radius: float | None, nsample: int, in_channel: int, mlp: list[int]
    ):
        super().__init__()
        self.npoint = npoint
        self.radius = radius
        self.nsample = nsample
        self.mlp_convs = nn.ModuleList()
        self.mlp_bns = nn.ModuleList()
        last = in_channel + 3
        for width in mlp:
            self.mlp_convs.append(nn.Conv2d(last, width, 1))
            self.mlp_bns.append(nn.BatchNorm2d(width))
            last = width
        self.out_channel = last

    def forward(
        self, xyz: torch.Tensor, features: torch.Tensor | None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            xyz: ``[B, N, 3]``
            features: ``[B, N, C]`` or None

        Returns:
            (centroids ``[B, S, 3]``, pooled features ``[B, S, C']``)
        """
        fps_idx = farthest_point_sample(xyz, self.npoint)
        new_xyz = index_points(xyz, fps_idx)
        idx = ball_query(self.radius, self.nsample, xyz, new_xyz, fps_idx)
        grouped = index_points(xyz, idx) - new_xyz.unsqueeze(2)
        if features is not None:
            grouped = torch.cat([grouped, index_points(features, idx)], dim=-1)

        x = grouped.permute(0, 3, 2, 1)  # [B, C, K, S]
        for conv, bn in zip(self.mlp_convs, self.mlp_bns):
            x = F.relu(bn(conv(x)))
        x = torch.max(x, 2)[0]
        return new_xyz, x.transpose(1, 2)
