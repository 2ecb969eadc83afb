"""Fusion module: rebuild a face from an expression face and an identity face.

Two role-specific encoder stems feed a fully-connected trunk. The trunk starts
from both global features and takes the per-level pooled features of both
stems at decreasing depth: level 2 joins at the second trunk layer, level 1
at the third. With the global features this gives one tap per level.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config_schema import LATENT_WIDTH, BranchParams, FusionParams
from .branch import BranchEncoder, check_points
from .layers import Frame, denormalize_points


class FusionModule(nn.Module):
    def __init__(self, branch: BranchParams, params: FusionParams):
        super().__init__()
        self.skip_connections = params.skip_connections
        self.output_points = branch.output_points
        self.input_points = branch.input_points
        self.expression_stem = BranchEncoder(branch)
        self.identity_stem = BranchEncoder(branch)

        level_widths = branch.level_widths
        # skip widths for trunk layers 2 and 3: level 2 then level 1, both stems
        taps = [2 * level_widths[1], 2 * level_widths[0]] if self.skip_connections else [0, 0]
        t1, t2, t3 = params.trunk_widths
        self.fc1 = nn.Linear(2 * LATENT_WIDTH, t1)
        self.fc2 = nn.Linear(t1 + taps[0], t2)
        self.fc3 = nn.Linear(t2 + taps[1], t3)
        self.norms = nn.ModuleList([nn.LayerNorm(t1), nn.LayerNorm(t2), nn.LayerNorm(t3)])
        self.out = nn.Linear(t3, self.output_points * 3)

    def forward(self, face_exp: torch.Tensor, face_id: torch.Tensor) -> torch.Tensor:
        """
        Args:
            face_exp: ``[B, N, 3]`` face carrying the expression
            face_id: ``[B, N, 3]`` face carrying the identity

        Returns:
            ``[B, N_out, 3]`` fused face in millimetres
        """
        check_points(face_exp, self.input_points, "expression face")
        check_points(face_id, self.input_points, "identity face")
        e = self.expression_stem(face_exp)
        i = self.identity_stem(face_id)

        h = F.relu(self.norms[0](self.fc1(torch.cat([e.feature, i.feature], dim=-1))))
        if self.skip_connections:
            h = torch.cat([h, e.pooled[1], i.pooled[1]], dim=-1)
        h = F.relu(self.norms[1](self.fc2(h)))
        if self.skip_connections:
            h = torch.cat([h, e.pooled[0], i.pooled[0]], dim=-1)
        h = F.relu(self.norms[2](self.fc3(h)))
        out = self.out(h).view(-1, self.output_points, 3)

        frame = Frame(
            centroid=0.5 * (e.frame.centroid + i.frame.centroid),
            scale=0.5 * (e.frame.scale + i.frame.scale),
        )
        return denormalize_points(out, frame)
