"""DrFER model: expression and identity branches, cross-over wiring, fusion."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..config_schema import NetworkConfig
from ..data.samples import NUM_EXPRESSIONS
from ..errors import ConfigurationError, InvalidArgumentError
from .branch import Branch, ClassifierHead
from .fusion import FusionModule

BRANCHES = ("expression", "identity")
HEADS = ("expression", "identity")


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


@dataclass
class DisentangledOutput:
    """Everything the stage-three objective needs for one batch."""
    exp_feature: torch.Tensor
    id_feature: torch.Tensor
    exp_logits: torch.Tensor
    exp_recon: torch.Tensor
    id_recon: torch.Tensor
    exp_id: torch.Tensor
    id_exp: torch.Tensor
    fused: torch.Tensor | None


class DrFERModel(nn.Module):
    """Two identical branches plus heads and (optionally) the fusion module.

    Args:
        config: Network configuration
        num_identities: Identity classes, i.e. training subjects
        num_expressions: Expression classes
    """

    def __init__(
        self, config: NetworkConfig, num_identities: int, num_expressions: int = NUM_EXPRESSIONS
    ):
        super().__init__()
        self.config = config
        self.num_identities = num_identities
        self.expression = Branch(config.branch)
        self.identity = Branch(config.branch)
        self.expression_head = ClassifierHead(num_expressions, config.head)
        self.identity_head = ClassifierHead(num_identities, config.head)
        self.fusion = FusionModule(config.branch, config.fusion) if config.fusion.enabled else None

    def branch(self, name: str) -> Branch:
        if name not in BRANCHES:
            raise InvalidArgumentError(f"Unknown branch '{name}', expected one of {BRANCHES}")
        return self.expression if name == "expression" else self.identity

    def branch_forward(self, name: str, points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Encode then decode with one branch. Returns (feature, reconstruction)."""
        return self.branch(name)(points)

    def check_reentry(self) -> None:
        params = self.config.branch
        if params.output_points != params.input_points:
            raise ConfigurationError(
                f"Cross-over needs decoder output size == encoder input size "
                f"({params.output_points} != {params.input_points})"
            )

    def crossover_forward(self, points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns ``(id(exp(x)), exp(id(x)))`` using the shared branch weights."""
        self.check_reentry()
        _, exp_recon = self.expression(points)
        _, id_recon = self.identity(points)
        return self.cross_reconstruct(exp_recon, id_recon)

    def cross_reconstruct(
        self, exp_recon: torch.Tensor, id_recon: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        _, exp_id = self.identity(exp_recon)
        _, id_exp = self.expression(id_recon)
        return exp_id, id_exp

    def fusion_forward(self, face_exp: torch.Tensor, face_id: torch.Tensor) -> torch.Tensor:
        if self.fusion is None:
            raise ConfigurationError("Fusion module is disabled in this configuration")
        return self.fusion(face_exp, face_id)

    def classify(self, head: str, feature: torch.Tensor) -> torch.Tensor:
        if head not in HEADS:
            raise InvalidArgumentError(f"Unknown head '{head}', expected one of {HEADS}")
        module = self.expression_head if head == "expression" else self.identity_head
        return module(feature)

    def disentangle(self, points: torch.Tensor) -> DisentangledOutput:
        """Full forward used by stage three."""
        self.check_reentry()
        exp_feature, exp_recon = self.expression(points)
        id_feature, id_recon = self.identity(points)
        exp_id, id_exp = self.cross_reconstruct(exp_recon, id_recon)
        fused = self.fusion(exp_recon, id_recon) if self.fusion is not None else None
        return DisentangledOutput(
            exp_feature=exp_feature,
            id_feature=id_feature,
            exp_logits=self.expression_head(exp_feature),
            exp_recon=exp_recon,
            id_recon=id_recon,
            exp_id=exp_id,
            id_exp=id_exp,
            fused=fused,
        )

    def expression_features(self, points: torch.Tensor) -> torch.Tensor:
        return self.expression.encode(points).feature

    def expression_logits(self, points: torch.Tensor) -> torch.Tensor:
        return self.expression_head(self.expression_features(points))
