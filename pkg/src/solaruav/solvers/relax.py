"""Continuous relaxation of the per-UAV {ground, serve, charge} choice."""
import numpy as np

BOX_LOW, BOX_HIGH = -0.5, 2.5


def relax_and_discretize(raw) -> tuple:
    """Clamp to the relaxed box, then round each coordinate to the nearest code.

    Half-way values round up: 0.5 -> 1 and 1.5 -> 2.
    """
    x = np.clip(np.asarray(raw, dtype=float).reshape(-1), BOX_LOW, BOX_HIGH)
    return tuple(int(v) for v in np.clip(np.floor(x + 0.5), 0, 2))


def discretize_batch(raw):
    """Array version of :func:`relax_and_discretize` (any shape)."""
    x = np.clip(np.asarray(raw, dtype=float), BOX_LOW, BOX_HIGH)
    return np.clip(np.floor(x + 0.5), 0, 2).astype(np.int64)
