"""Dataset model: synthetic faces, samples, mean faces, folds and manifests."""

from .manifest import LoadedDataset, load_dataset, prepare_dataset, write_dataset, write_raw_scans
from .samples import (
    EXPRESSION_NAMES,
    NEUTRAL,
    NUM_EXPRESSIONS,
    FaceSample,
    MeanFaceTable,
    compute_mean_faces,
    fold_subjects,
    make_folds,
    split_by_subjects,
    subject_ids,
)
from .synth import SynthDataset, SynthModel, build_synth_model, face_template, synth_generate

__all__ = [
    "EXPRESSION_NAMES",
    "NEUTRAL",
    "NUM_EXPRESSIONS",
    "FaceSample",
    "LoadedDataset",
    "MeanFaceTable",
    "SynthDataset",
    "SynthModel",
    "build_synth_model",
    "compute_mean_faces",
    "face_template",
    "fold_subjects",
    "load_dataset",
    "make_folds",
    "prepare_dataset",
    "split_by_subjects",
    "subject_ids",
    "synth_generate",
    "write_dataset",
    "write_raw_scans",
]
