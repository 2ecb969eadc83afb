"""Tests for the branch, fusion and checkpoint machinery."""

import pytest
import torch

from drfer.config_schema import NetworkConfig
from drfer.errors import CheckpointError, ConfigurationError, InvalidArgumentError, StageOrderError
from drfer.network import (
    DrFERModel,
    check_stage_order,
    count_parameters,
    farthest_point_sample,
    load_checkpoint,
    normalize_points,
    save_checkpoint,
)


@pytest.fixture
def network(tiny_config) -> NetworkConfig:
    return tiny_config.network


@pytest.fixture
def model(network) -> DrFERModel:
    torch.manual_seed(0)
    return DrFERModel(network, num_identities=4)


@pytest.fixture
def faces() -> torch.Tensor:
    gen = torch.Generator().manual_seed(0)
    return torch.randn(3, 64, 3, generator=gen) * 40.0


class TestShapes:
    def test_branch_forward(self, model, faces):
        feature, recon = model.branch_forward("expression", faces)
        assert feature.shape == (3, 1024)
        assert recon.shape == (3, 64, 3)

    def test_heads(self, model, faces):
        feature = model.expression_features(faces)
        assert model.classify("expression", feature).shape == (3, 6)
        assert model.classify("identity", feature).shape == (3, 4)

    def test_disentangle(self, model, faces):
        out = model.disentangle(faces)
        assert out.exp_logits.shape == (3, 6)
        for t in (out.exp_recon, out.id_recon, out.exp_id, out.id_exp, out.fused):
            assert t.shape == (3, 64, 3)

    def test_wrong_point_count(self, model):
        with pytest.raises(InvalidArgumentError, match="expects 64"):
            model.branch_forward("identity", torch.zeros(2, 63, 3))

    def test_unknown_branch(self, model, faces):
        with pytest.raises(InvalidArgumentError):
            model.branch_forward("pose", faces)


def test_reconstruction_lives_in_the_input_frame(model, faces):
    shifted = faces + torch.tensor([500.0, 0.0, 0.0])
    _, recon = model.branch_forward("expression", shifted)
    centre = recon.mean(dim=1)[:, 0]
    # decoder output is normalised to unit radius, then moved back
    assert torch.all(centre > 300.0)


def test_encoder_ignores_point_order(model, faces):
    model.eval()
    perm = torch.randperm(64, generator=torch.Generator().manual_seed(3))
    with torch.no_grad():
        a = model.expression_features(faces)
        b = model.expression_features(faces[:, perm])
    torch.testing.assert_close(a, b, atol=1e-5, rtol=1e-5)


def test_fps_starts_near_the_centroid():
    xyz = torch.tensor([[[0.0, 0, 0], [10.0, 0, 0], [4.0, 0, 0], [-3.0, 0, 0]]])
    idx = farthest_point_sample(xyz, 3)
    assert idx.tolist() == [[2, 3, 1]]


def test_normalize_points_unit_radius(faces):
    xyz, frame = normalize_points(faces)
    radius = xyz.norm(dim=-1).amax(dim=1)
    torch.testing.assert_close(radius, torch.ones(3))
    torch.testing.assert_close(xyz * frame.scale + frame.centroid, faces)


def test_fusion_disabled(tiny_dict, tiny_config, faces):
    tiny_dict["network"]["fusion"] = {"enabled": False}
    network = NetworkConfig(**tiny_dict["network"])
    model = DrFERModel(network, num_identities=2)
    assert model.fusion is None
    assert count_parameters(model) < count_parameters(DrFERModel(tiny_config.network, 2))
    assert model.disentangle(faces).fused is None
    with pytest.raises(ConfigurationError):
        model.fusion_forward(faces, faces)


def test_crossover_needs_matching_sizes(tiny_dict, faces):
    tiny_dict["network"]["branch"]["output_points"] = 32
    model = DrFERModel(NetworkConfig(**tiny_dict["network"]), num_identities=2)
    _, recon = model.branch_forward("expression", faces)
    assert recon.shape == (3, 32, 3)
    with pytest.raises(ConfigurationError, match="32 != 64"):
        model.crossover_forward(faces)


class TestCrossover:
    def test_gradients_reach_both_branches(self, model, faces):
        exp_id, _ = model.crossover_forward(faces)
        exp_id.pow(2).mean().backward()
        for branch in (model.expression, model.identity):
            for part in (branch.encoder, branch.decoder):
                grads = [p.grad for p in part.parameters()]
                assert all(g is not None for g in grads)
                assert sum(float(g.abs().sum()) for g in grads) > 0
        assert all(p.grad is None for p in model.expression_head.parameters())

    def test_outputs_are_finite_across_the_coordinate_range(self, model):
        gen = torch.Generator().manual_seed(5)
        points = torch.rand(4, 64, 3, generator=gen) * 400.0 - 200.0
        out = model.disentangle(points)
        for t in (out.exp_recon, out.id_recon, out.exp_id, out.id_exp, out.fused, out.exp_logits):
            assert torch.isfinite(t).all()

class TestCheckpoint:
    def test_save_then_load(self, tmp_path, model, network, faces):
        ck_id = save_checkpoint(model, tmp_path / "m.pt", "stage1", [3, 5, 8, 9], [1])
        ck = load_checkpoint(tmp_path / "m.pt", network=network, runner_stage="stage2")
        assert ck.checkpoint_id == ck_id
        assert ck.stage == "stage1"
        assert ck.identity_labels == [3, 5, 8, 9]
        assert ck.test_subjects == [1]
        model.eval()
        with torch.no_grad():
            torch.testing.assert_close(
                ck.model.expression_logits(faces), model.expression_logits(faces)
            )

    def test_same_weights_same_id(self, tmp_path, model):
        a = save_checkpoint(model, tmp_path / "a.pt", "stage2")
        b = save_checkpoint(model, tmp_path / "b.pt", "stage2")
        c = save_checkpoint(model, tmp_path / "c.pt", "stage3")
        assert a == b != c

    @pytest.mark.parametrize("saved,runner", [("init", "stage2"), ("stage2", "stage2")])
    def test_stage_order_on_load(self, tmp_path, model, saved, runner):
        save_checkpoint(model, tmp_path / "m.pt", saved)
        with pytest.raises(StageOrderError):
            load_checkpoint(tmp_path / "m.pt", runner_stage=runner)

    def test_stage_order_messages(self):
        check_stage_order("stage2", "stage3")
        with pytest.raises(StageOrderError, match="regression"):
            check_stage_order("stage3", "stage2")
        with pytest.raises(StageOrderError, match="skip"):
            check_stage_order("init", "stage3")

    def test_config_mismatch(self, tmp_path, model, tiny_dict):
        save_checkpoint(model, tmp_path / "m.pt", "stage1")
        tiny_dict["network"]["head"]["hidden"] = [32, 32]
        other = NetworkConfig(**tiny_dict["network"])
        with pytest.raises(CheckpointError, match="head.hidden"):
            load_checkpoint(tmp_path / "m.pt", network=other)

    def test_tampered_weights(self, tmp_path, model):
        path = tmp_path / "m.pt"
        save_checkpoint(model, path, "stage1")
        payload = torch.load(path, weights_only=True)
        name = next(iter(payload["state_dict"]))
        payload["state_dict"][name] = payload["state_dict"][name] + 1.0
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        torch.save({"weights": torch.zeros(2)}, tmp_path / "x.pt")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "x.pt")
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "missing.pt")

    def test_unknown_tag(self, tmp_path, model):
        with pytest.raises(CheckpointError):
            save_checkpoint(model, tmp_path / "m.pt", "stage4")
