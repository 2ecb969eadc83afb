"""Synthetic faces with known identity and expression factors.

A face-like height field is deformed by an identity field per subject and an
expression field per class scaled by intensity:

    cloud(s, e, t) = template + id(s) + t * expr(e) + noise

All clouds are thinned with one FPS index set computed on the template, so
every generated cloud is canonical.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry.cloud import PointCloud
from ..geometry.kernels import fps_sample
from ..utils.logger import get_logger
from .samples import NEUTRAL, NUM_EXPRESSIONS, FaceSample

logger = get_logger(__name__)

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def face_template(
    n: int,
    half_width: float = 80.0,
    half_height: float = 95.0,
    depth: float = 60.0,
    nose_height: float = 18.0,
    nose_sigma: float = 10.0,
) -> PointCloud:
    """Face-like height field sampled on a sunflower lattice, facing +z.

    The horizontal profile is flat-topped (``1 - u^4``) while the vertical one
    is elliptic (``1 - w^2``), so tilting the face hides more of it than
    turning it.
    """
    i = np.arange(n, dtype=np.float64)
    r = np.sqrt((i + 0.5) / n)
    theta = i * _GOLDEN_ANGLE
    u = r * np.cos(theta)
    w = r * np.sin(theta)
    x = half_width * u
    y = half_height * w
    z = depth * np.sqrt(np.clip(1.0 - u**4 - w**2, 0.0, None))
    z += nose_height * np.exp(-(x**2 + (y + 5.0) ** 2) / (2.0 * nose_sigma**2))
    return PointCloud(np.stack([x, y, z], axis=1), canonical=True)


def _smooth_fields(
    template: PointCloud, count: int, rng: np.random.Generator, bumps: int, width: float
) -> np.ndarray:
    pts = template.points
    fields = np.zeros((count, template.size, 3))
    for k in range(count):
        centers = pts[rng.choice(template.size, size=bumps, replace=False)]
        vectors = rng.normal(size=(bumps, 3))
        for c, v in zip(centers, vectors):
            weight = np.exp(-np.sum((pts - c) ** 2, axis=1) / (2.0 * width**2))
            fields[k] += weight[:, None] * v
    return fields


@dataclass(frozen=True, eq=False)
class SynthModel:
    """Linear factor model behind the synthetic faces.

    Basis fields are mutually orthogonal as flattened vectors, each with RMS
    1 mm per coordinate. Row ``NEUTRAL`` of ``expression_prototypes`` is zero.
    """

    template: PointCloud
    identity_basis: np.ndarray
    expression_basis: np.ndarray
    identity_coeffs: np.ndarray
    expression_prototypes: np.ndarray
    noise_sigma: float = 0.3
    expression_jitter: float = 0.0

    @property
    def subjects(self) -> int:
        return int(self.identity_coeffs.shape[0])

    def identity_field(self, subject: int) -> np.ndarray:
        return np.tensordot(self.identity_coeffs[subject], self.identity_basis, axes=1)

    def expression_field(self, coeffs: np.ndarray) -> np.ndarray:
        return np.tensordot(coeffs, self.expression_basis, axes=1)


def build_synth_model(
    subjects: int = 30,
    template_points: int = 4096,
    identity_components: int = 8,
    expression_components: int = 6,
    identity_scale: float = 4.0,
    expression_scale: float = 3.0,
    noise_sigma: float = 0.3,
    expression_jitter: float = 0.0,
    seed: int = 0,
) -> SynthModel:
    """Draw a SynthModel.

    Args:
        subjects: Number of subjects with identity coefficients
        template_points: Template size
        identity_components: K_id
        expression_components: K_exp
        identity_scale: Std of identity coefficients (mm)
        expression_scale: Std of expression prototype coefficients (mm)
        noise_sigma: Per-coordinate Gaussian noise (mm)
        expression_jitter: Relative per-sample jitter of expression coefficients
        seed: Seed of the factor draw

    Returns:
        SynthModel
    """
    if subjects < 1:
        raise InvalidArgumentError("SynthModel needs at least one subject")
    total = identity_components + expression_components
    if total > 3 * template_points:
        raise InvalidArgumentError("More basis fields than template coordinates")

    rng = np.random.default_rng(seed)
    template = face_template(template_points)
    raw = _smooth_fields(template, total, rng, bumps=6, width=25.0)
    q, _ = np.linalg.qr(raw.reshape(total, -1).T)
    basis = q.T.reshape(total, template_points, 3) * np.sqrt(3.0 * template_points)

    prototypes = np.zeros((NUM_EXPRESSIONS + 1, expression_components))
    prototypes[:NUM_EXPRESSIONS] = rng.normal(
        0.0, expression_scale, size=(NUM_EXPRESSIONS, expression_components)
    )
    prototypes[NEUTRAL] = 0.0

    return SynthModel(
        template=template,
        identity_basis=basis[:identity_components],
        expression_basis=basis[identity_components:],
        identity_coeffs=rng.normal(0.0, identity_scale, size=(subjects, identity_components)),
        expression_prototypes=prototypes,
        noise_sigma=noise_sigma,
        expression_jitter=expression_jitter,
    )


@dataclass(frozen=True)
class SynthDataset:
    samples: list[FaceSample]
    neutrals: list[FaceSample]
    fps_indices: tuple[int, ...]


def synth_generate(
    model: SynthModel,
    subjects: int,
    expressions: int,
    intensities: Sequence[float],
    points: int,
    seed: int,
) -> SynthDataset:
    """Generate labelled canonical faces.

    Produces one neutral per subject plus ``subjects x expressions x
    len(intensities)`` expressive samples.

    Raises:
        InvalidArgumentError: Arguments outside the generator's range
    """
    if subjects < 2:
        raise InvalidArgumentError(f"Need at least 2 subjects, got {subjects}")
    if subjects > model.subjects:
        raise InvalidArgumentError(f"Model has {model.subjects} subjects, {subjects} requested")
    if not 1 <= expressions <= NUM_EXPRESSIONS:
        raise InvalidArgumentError(f"expressions must be in 1..{NUM_EXPRESSIONS}")
    if points > model.template.size:
        raise InvalidArgumentError(
            f"points={points} exceeds template size {model.template.size}"
        )
    if any(not 0.0 <= t <= 1.0 for t in intensities):
        raise InvalidArgumentError("intensities must lie in [0, 1]")

    order = np.asarray(fps_sample(model.template, points, 0))
    rng = np.random.default_rng(seed)
    base = model.template.points
    k_exp = model.expression_basis.shape[0]

    def _noise() -> np.ndarray:
        if model.noise_sigma > 0:
            return rng.normal(0.0, model.noise_sigma, size=base.shape)
        return 0.0

    def _cloud(full: np.ndarray) -> PointCloud:
        return PointCloud(full[order], canonical=True)

    samples: list[FaceSample] = []
    neutrals: list[FaceSample] = []
    for s in range(subjects):
        with_identity = base + model.identity_field(s)
        neutrals.append(
            FaceSample(_cloud(with_identity + _noise()), NEUTRAL, s, intensity=0.0)
        )
        for e in range(expressions):
            for t in intensities:
                coeffs = model.expression_prototypes[e]
                if model.expression_jitter > 0:
                    coeffs = coeffs * (1.0 + model.expression_jitter * rng.normal(size=k_exp))
                full = with_identity + t * model.expression_field(coeffs) + _noise()
                samples.append(FaceSample(_cloud(full), e, s, intensity=float(t)))

    logger.info(
        f"Generated {len(samples)} samples and {len(neutrals)} neutrals "
        f"({points} points each, seed {seed})"
    )
    return SynthDataset(samples, neutrals, tuple(int(i) for i in order))
