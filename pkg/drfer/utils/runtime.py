"""Runtime controls: seeding, deterministic mode and thread caps.

All randomness in a run flows from one integer seed. Per-epoch generators are
derived from ``(seed, stage, component, epoch)`` so a stage can be re-run alone
and still see the same batches as in a full run.
"""

import os
import random
import zlib

import numpy as np
import torch

from .logger import get_logger

logger = get_logger(__name__)

THREADS_ENV = "DRFER_THREADS"


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def derive_rng(seed: int, *names: str | int) -> np.random.Generator:
    """Return a numpy generator keyed by the seed and a path of names.

    Args:
        seed: Run seed
        *names: Stage, component, epoch or any other stable key

    Returns:
        Independent ``numpy.random.Generator``
    """
    entropy = [int(seed) % (2**32)]
    for name in names:
        entropy.append(int(name) if isinstance(name, int) else _key(str(name)))
    return np.random.default_rng(entropy)


def derive_seed(seed: int, *names: str | int) -> int:
    """Integer seed derived like ``derive_rng``; used for torch generators."""
    return int(derive_rng(seed, *names).integers(0, 2**31 - 1))


def set_deterministic(enabled: bool) -> None:
    """Toggle torch deterministic algorithms."""
    if enabled:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
    torch.use_deterministic_algorithms(enabled, warn_only=True)


def configure_threads() -> int | None:
    """Cap torch intra-op threads from ``DRFER_THREADS``.

    Returns:
        The applied thread count, or None when the variable is unset
    """
    raw = os.getenv(THREADS_ENV)
    if not raw:
        return None
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return None
    if threads < 1:
        logger.warning(f"Ignoring {THREADS_ENV}={threads}; must be >= 1")
        return None
    torch.set_num_threads(threads)
    logger.debug(f"torch intra-op threads capped at {threads}")
    return threads
