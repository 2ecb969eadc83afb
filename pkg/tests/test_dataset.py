"""Tests for samples, mean faces, folds and dataset manifests."""

import json

import numpy as np
import pytest

from drfer.data import (
    NEUTRAL,
    FaceSample,
    compute_mean_faces,
    fold_subjects,
    load_dataset,
    make_folds,
    prepare_dataset,
    split_by_subjects,
    synth_generate,
    write_dataset,
    write_raw_scans,
)
from drfer.errors import DatasetLoadError, IncompleteDataError, InvalidArgumentError
from drfer.geometry import PointCloud, write_drf


def _face(value, expression, identity, canonical=True):
    return FaceSample(PointCloud([value], canonical=canonical), expression, identity)


class TestFaceSample:
    def test_default_sample_id(self):
        sample = FaceSample(PointCloud([0, 0, 0]), 3, 12, intensity=0.5)
        assert sample.sample_id == "s012_e3_i050"

    @pytest.mark.parametrize("expression,intensity", [(7, 1.0), (-1, 1.0), (0, 1.5)])
    def test_label_ranges(self, expression, intensity):
        with pytest.raises(InvalidArgumentError):
            FaceSample(PointCloud([0, 0, 0]), expression, 0, intensity=intensity)


class TestMeanFaces:
    def test_index_wise_means(self):
        samples = [_face([0, 0, 0], 0, 0), _face([2, 2, 2], 0, 1)]
        neutrals = [_face([0, 0, 0], NEUTRAL, 0), _face([4, 0, 0], NEUTRAL, 1)]
        table = compute_mean_faces(samples, neutrals, expressions=(0,))
        np.testing.assert_allclose(table.expression_face(0).points, [[1, 1, 1]])
        np.testing.assert_allclose(table.neutral_face(1).points, [[4, 0, 0]])
        np.testing.assert_allclose(table.mean_neutral.points, [[2, 0, 0]])
        assert table.is_complete()

    def test_missing_class(self):
        samples = [_face([0, 0, 0], 0, 0)]
        with pytest.raises(IncompleteDataError, match="Missing expression"):
            compute_mean_faces(samples, [_face([0, 0, 0], NEUTRAL, 0)], expressions=(0, 1))

    def test_subject_without_neutral(self):
        samples = [_face([0, 0, 0], 0, 0), _face([1, 0, 0], 0, 1)]
        with pytest.raises(IncompleteDataError, match="neutral"):
            compute_mean_faces(samples, [_face([0, 0, 0], NEUTRAL, 0)], expressions=(0,))

    def test_non_canonical_rejected(self):
        samples = [_face([0, 0, 0], 0, 0, canonical=False)]
        with pytest.raises(InvalidArgumentError):
            compute_mean_faces(samples, [_face([0, 0, 0], NEUTRAL, 0)], expressions=(0,))

    def test_unknown_lookups(self, tiny_dataset):
        table = compute_mean_faces(tiny_dataset.samples, tiny_dataset.neutrals)
        with pytest.raises(IncompleteDataError):
            table.neutral_face(99)


class TestFolds:
    def test_sixty_subjects_ten_folds(self):
        assignment = make_folds(range(60), 10, seed=0)
        assert sorted(assignment) == list(range(60))
        assert [len(fold_subjects(assignment, f)) for f in range(10)] == [6] * 10

    def test_uneven_sizes_differ_by_one(self):
        assignment = make_folds(range(7), 3, seed=1)
        sizes = sorted(len(fold_subjects(assignment, f)) for f in range(3))
        assert sizes == [2, 2, 3]

    def test_seeded(self):
        assert make_folds(range(20), 4, 3) == make_folds(range(20), 4, 3)
        assert make_folds(range(20), 4, 3) != make_folds(range(20), 4, 4)

    @pytest.mark.parametrize("folds", [1, 7])
    def test_fold_count_bounds(self, folds):
        with pytest.raises(InvalidArgumentError):
            make_folds(range(6), folds, 0)

    def test_split_by_subjects(self, tiny_dataset):
        part = split_by_subjects(tiny_dataset.samples, [0, 4])
        assert {s.identity for s in part} == {0, 4}
        assert len(part) == 2 * 12


class TestManifest:
    def test_cache_miss_then_hit(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
        first = load_dataset(path)
        second = load_dataset(path)
        assert not first.cache_hit and second.cache_hit
        assert first.content_hash == second.content_hash
        assert len(first.samples) == 72 and len(first.neutrals) == 6
        assert first.points == 64
        for e in range(6):
            assert first.mean_faces.expression_face(e) == second.mean_faces.expression_face(e)

    def test_cached_table_matches_fresh_means(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
        loaded = load_dataset(path, use_cache=False)
        fresh = compute_mean_faces(tiny_dataset.samples, tiny_dataset.neutrals)
        np.testing.assert_allclose(
            loaded.mean_faces.mean_neutral.points, fresh.mean_neutral.points, atol=1e-3
        )

    def test_cache_root_override(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
        load_dataset(path, cache_root=tmp_path / "cache")
        assert (tmp_path / "cache" / "meanfaces").is_dir()
        assert not (tmp_path / "ds" / "meanfaces").exists()

    def test_mismatched_point_count_names_the_file(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
        victim = tiny_dataset.samples[5]
        write_drf(
            PointCloud(np.zeros((10, 3)), canonical=True),
            tmp_path / "ds" / "clouds" / f"{victim.sample_id}.drf",
        )
        with pytest.raises(DatasetLoadError, match=victim.sample_id):
            load_dataset(path)

    def test_bad_expression_label(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
        data = json.loads(path.read_text(encoding="utf-8"))
        data["samples"][0]["expression"] = 9
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(DatasetLoadError, match="out of range"):
            load_dataset(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetLoadError, match="not found"):
            load_dataset(tmp_path / "manifest.json")

    def test_missing_neutral_is_incomplete(self, tmp_path, tiny_dataset):
        path = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals[1:], tmp_path / "ds")
        with pytest.raises(IncompleteDataError):
            load_dataset(path)


def test_prepare_from_raw_scans(tmp_path, tiny_synth_model):
    full = synth_generate(tiny_synth_model, 2, 6, [1.0], 256, seed=21)
    raw_manifest = write_raw_scans(full, tiny_synth_model.template, tmp_path / "raw", seed=4)
    manifest = prepare_dataset(raw_manifest, tmp_path / "ready", input_points=64)
    loaded = load_dataset(manifest)
    assert loaded.points == 64
    assert [s.sample_id for s in loaded.samples] == [s.sample_id for s in full.samples]
    assert [(s.expression, s.identity) for s in loaded.samples] == [
        (s.expression, s.identity) for s in full.samples
    ]
    assert all(s.cloud.canonical for s in loaded.samples + loaded.neutrals)


def test_prepare_rejects_oversized_thinning(tmp_path, tiny_synth_model):
    full = synth_generate(tiny_synth_model, 2, 6, [1.0], 256, seed=21)
    raw_manifest = write_raw_scans(full, tiny_synth_model.template, tmp_path / "raw", seed=4)
    with pytest.raises(InvalidArgumentError):
        prepare_dataset(raw_manifest, tmp_path / "ready", input_points=512)
