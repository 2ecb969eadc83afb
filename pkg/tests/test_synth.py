"""Tests for the synthetic face generator."""

import numpy as np
import pytest

from drfer.data import NEUTRAL, build_synth_model, face_template, synth_generate
from drfer.errors import InvalidArgumentError


@pytest.fixture(scope="module")
def model():
    return build_synth_model(subjects=30, template_points=256, seed=5)


def test_counts_and_labels(model):
    data = synth_generate(model, 30, 6, [0.5, 1.0], 64, seed=1)
    assert len(data.samples) == 360
    assert len(data.neutrals) == 30
    assert {s.expression for s in data.samples} == set(range(6))
    assert all(n.expression == NEUTRAL and n.intensity == 0.0 for n in data.neutrals)
    assert len({s.sample_id for s in data.samples + data.neutrals}) == 390


def test_every_cloud_is_canonical_at_the_requested_size(model):
    data = synth_generate(model, 3, 2, [1.0], 48, seed=2)
    assert len(data.fps_indices) == 48
    assert all(s.cloud.canonical and s.cloud.size == 48 for s in data.samples + data.neutrals)


def test_same_seed_is_deterministic(model):
    a = synth_generate(model, 4, 3, [1.0], 32, seed=9)
    b = synth_generate(model, 4, 3, [1.0], 32, seed=9)
    c = synth_generate(model, 4, 3, [1.0], 32, seed=10)
    assert all(x.cloud == y.cloud for x, y in zip(a.samples, b.samples))
    assert any(x.cloud != z.cloud for x, z in zip(a.samples, c.samples))


def test_basis_is_orthogonal_with_unit_rms(model):
    basis = np.concatenate([model.identity_basis, model.expression_basis])
    flat = basis.reshape(basis.shape[0], -1)
    gram = flat @ flat.T / flat.shape[1]
    np.testing.assert_allclose(gram, np.eye(flat.shape[0]), atol=1e-9)


def test_neutral_prototype_is_zero(model):
    assert not model.expression_prototypes[NEUTRAL].any()


def test_zero_intensity_without_noise_is_the_neutral():
    quiet = build_synth_model(subjects=2, template_points=128, noise_sigma=0.0, seed=4)
    data = synth_generate(quiet, 2, 3, [0.0], 32, seed=0)
    by_subject = {n.identity: n.cloud for n in data.neutrals}
    for s in data.samples:
        np.testing.assert_allclose(s.cloud.points, by_subject[s.identity].points, atol=1e-12)


def test_face_template_faces_forward():
    tpl = face_template(500)
    assert tpl.canonical and tpl.size == 500
    assert np.all(tpl.points[:, 2] >= 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"subjects": 1},
        {"subjects": 31},
        {"expressions": 7},
        {"points": 257},
        {"intensities": [1.5]},
    ],
)
def test_generator_argument_checks(model, kwargs):
    args = {"subjects": 2, "expressions": 6, "intensities": [1.0], "points": 32, "seed": 0}
    args.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        synth_generate(model, **args)
