"""
Blood glucose risk cost and ensemble cost statistics.

The cost is the symmetrised risk function of Kovatchev et al. with the natural logarithm:

    risk(bgl) = 15.09 * (ln(bgl) ** 1.084 - 5.381) ** 2

Its minimum sits at ~112.5 mg/dl and it rises faster towards hypoglycaemia than towards
hyperglycaemia. The function is convex below ~310 mg/dl only; statements that rely on Jensen's
inequality (a non-negative risk margin) hold on convex sub-intervals.
"""

import numpy as np
from numpy.typing import ArrayLike

RISK_SCALE = 15.09
RISK_EXPONENT = 1.084
RISK_OFFSET = 5.381

BG_FLOOR = 1.0
BG_CEILING = 1000.0


def clamp_bg(values: ArrayLike) -> np.ndarray:
    """Clamp glucose values to the costable range [1, 1000] mg/dl."""
    return np.clip(np.asarray(values, dtype=float), BG_FLOOR, BG_CEILING)


def risk_array(values: ArrayLike) -> np.ndarray:
    """
    Vectorised risk over an array of glucose levels.

    Values are clamped to [1, 1000] mg/dl first, so the logarithm is always defined.
    """
    bg = clamp_bg(values)
    return RISK_SCALE * (np.log(bg) ** RISK_EXPONENT - RISK_OFFSET) ** 2


def risk(bgl: float) -> float:
    """
    Risk cost of a single glucose level.

    Args:
        bgl: Blood glucose level in mg/dl.

    Raises:
        ValueError: If bgl is not a positive finite number.

    Example:
        risk(112.5)   # ~0.0, the global minimum
        risk(50) > risk(180)
    """
    if not np.isfinite(bgl) or bgl <= 0:
        raise ValueError(f"bgl must be a positive finite glucose level, got {bgl}")
    return float(risk_array(bgl))


def mean_ensemble_cost(preds: ArrayLike) -> float:
    """
    Mean risk over an M x T prediction matrix (models x horizon steps).

    Raises:
        ValueError: If the matrix is empty.
    """
    values = np.atleast_2d(np.asarray(preds, dtype=float))
    if values.size == 0:
        raise ValueError("prediction matrix is empty")
    return float(risk_array(values).mean())


def cost_of_mean(preds: ArrayLike) -> float:
    """Mean over the horizon of the risk of the ensemble-mean prediction."""
    values = np.atleast_2d(np.asarray(preds, dtype=float))
    if values.size == 0:
        raise ValueError("prediction matrix is empty")
    return float(risk_array(values.mean(axis=0)).mean())


def risk_margin(preds_at_t: ArrayLike) -> float:
    """
    Risk margin E[c(BGL)] - c(E[BGL]) over the M member predictions at one time step.

    Zero for a degenerate ensemble; non-negative where the risk is convex.
    """
    values = np.asarray(preds_at_t, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("need at least one prediction")
    return float(risk_array(values).mean() - risk_array(values.mean()))


def risk_margin_profile(preds: ArrayLike) -> np.ndarray:
    """Risk margin at every horizon step of an M x T prediction matrix."""
    values = np.atleast_2d(np.asarray(preds, dtype=float))
    return risk_array(values).mean(axis=0) - risk_array(values.mean(axis=0))
