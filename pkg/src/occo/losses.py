"""Point-set distances and the two-stage completion loss.

Chamfer distance uses plain (non-squared) Euclidean distances, normalized
per cloud.  Nearest-neighbour ties go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .cloud import CloudLike, as_points
from .errors import EmptyCloud, SizeMismatch, TooLarge

EMD_EXACT_MAX = 16


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray | None = None


@dataclass
class Assignment:
    mapping: np.ndarray  # mapping[i] = target index matched to pred point i
    cost: float


@dataclass
class CompletionLossValue:
    value: float
    cd_coarse: float
    cd_fine: float
    alpha: float
    grad_coarse: np.ndarray
    grad_fine: np.ndarray


def _pair(pred: CloudLike, target: CloudLike) -> tuple[np.ndarray, np.ndarray]:
    p = as_points(pred)
    t = as_points(target)
    if len(p) == 0 or len(t) == 0:
        raise EmptyCloud("Chamfer distance needs two non-empty clouds")
    return p, t


def _chamfer_from_nn(p, t, d_pt, i_pt, d_tp, i_tp, with_grad):
    n, m = len(p), len(t)
    value = float(d_pt.sum() / n + d_tp.sum() / m)
    if not with_grad:
        return LossValue(value)
    grad = np.zeros_like(p)
    diff = p - t[i_pt]
    safe = np.where(d_pt > 0, d_pt, 1.0)
    grad += np.where(d_pt[:, None] > 0, diff / (n * safe[:, None]), 0.0)
    diff = p[i_tp] - t
    safe = np.where(d_tp > 0, d_tp, 1.0)
    contrib = np.where(d_tp[:, None] > 0, diff / (m * safe[:, None]), 0.0)
    np.add.at(grad, i_tp, contrib)
    return LossValue(value, grad)


def chamfer(pred: CloudLike, target: CloudLike, with_grad: bool = True) -> LossValue:
    """Symmetric normalized Chamfer distance and its gradient w.r.t. ``pred``."""
    p, t = _pair(pred, target)
    d_pt, i_pt = kernels.nearest(p, t)
    d_tp, i_tp = kernels.nearest(t, p)
    return _chamfer_from_nn(p, t, d_pt, i_pt, d_tp, i_tp, with_grad)


def chamfer_bruteforce(pred: CloudLike, target: CloudLike, with_grad: bool = True) -> LossValue:
    """Chamfer distance from the full O(n*m) distance matrix."""
    p, t = _pair(pred, target)
    diff = p[:, None, :] - t[None, :, :]
    D = np.sqrt((diff ** 2).sum(axis=2))
    i_pt = D.argmin(axis=1)
    i_tp = D.argmin(axis=0)
    d_pt = D[np.arange(len(p)), i_pt]
    d_tp = D[i_tp, np.arange(len(t))]
    return _chamfer_from_nn(p, t, d_pt, i_pt, d_tp, i_tp, with_grad)


def _cost_matrix(pred: CloudLike, target: CloudLike) -> np.ndarray:
    p = as_points(pred)
    t = as_points(target)
    if len(p) != len(t):
        raise SizeMismatch(f"EMD needs equal sizes, got {len(p)} and {len(t)}")
    if len(p) == 0:
        raise EmptyCloud("EMD of empty clouds")
    diff = p[:, None, :] - t[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def emd_exact(pred: CloudLike, target: CloudLike) -> Assignment:
    """Optimal bijection (Hungarian method) for clouds of at most 16 points."""
    C = _cost_matrix(pred, target)
    if len(C) > EMD_EXACT_MAX:
        raise TooLarge(f"emd_exact is limited to {EMD_EXACT_MAX} points")
    rows, cols = linear_sum_assignment(C)
    mapping = np.empty(len(C), dtype=np.int64)
    mapping[rows] = cols
    return Assignment(mapping, float(C[np.arange(len(C)), mapping].mean()))


def emd_auction(pred: CloudLike, target: CloudLike, eps_final: float = 1e-6,
                scaling: float = 5.0) -> Assignment:
    """Epsilon-scaling auction; mean cost within ``eps_final`` of optimal."""
    C = _cost_matrix(pred, target)
    mapping = kernels.auction(C, float(eps_final), float(scaling))
    return Assignment(mapping, float(C[np.arange(len(C)), mapping].mean()))


ALPHA_STEPS = ((50000, 1.0), (20000, 0.5), (10000, 0.1))
ALPHA_START = 0.01


def alpha_schedule(step: int) -> float:
    """Weight of the fine-cloud term at a global training step."""
    if step < 0:
        raise ValueError("step must be >= 0")
    for boundary, value in ALPHA_STEPS:
        if step >= boundary:
            return value
    return ALPHA_START


def completion_loss(coarse_pred: CloudLike, fine_pred: CloudLike,
                    coarse_gt: CloudLike, fine_gt: CloudLike, step: int,
                    alpha: float | None = None) -> CompletionLossValue:
    """CD(coarse) + alpha * CD(fine); ``alpha`` overrides the schedule."""
    a = alpha_schedule(step) if alpha is None else float(alpha)
    lc = chamfer(coarse_pred, coarse_gt)
    lf = chamfer(fine_pred, fine_gt)
    return CompletionLossValue(
        value=lc.value + a * lf.value,
        cd_coarse=lc.value,
        cd_fine=lf.value,
        alpha=a,
        grad_coarse=lc.gradient,
        grad_fine=a * lf.gradient,
    )
