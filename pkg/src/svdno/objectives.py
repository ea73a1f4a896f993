"""Scalar objectives and analysis metrics.

Everything here is differentiable through the autodiff engine when given
Tensors; plain numpy arrays are accepted wherever gradients are not needed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, constant
from .errors import ConfigurationError, DegenerateFieldError, ShapeError
from .grids import Grid

__all__ = [
    "trapezoidal_weights",
    "gram_matrix",
    "orthogonality_loss",
    "relative_l2",
    "mean_l2_relative_error",
    "l_inf_error",
    "total_loss",
    "beta_variability",
    "MetricsRecord",
    "METRICS_CSV_HEADER",
    "write_metrics_csv",
]


def trapezoidal_weights(grid: Grid) -> np.ndarray:
    """Quadrature weights for the grid: h*[1/2, 1, ..., 1, 1/2] per axis,
    outer product across axes; sum equals the domain volume."""
    per_axis = []
    for e, h in zip(grid.extents, grid.spacing):
        if e < 2:
            raise ConfigurationError("trapezoidal weights need >= 2 points per axis")
        w = np.full(e, h)
        w[0] = w[-1] = 0.5 * h
        per_axis.append(w)
    w = per_axis[0]
    for wa in per_axis[1:]:
        w = np.multiply.outer(w, wa)
    return w.reshape(-1)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))


def gram_matrix(basis, weights) -> Tensor:
    """Weighted Gram matrix G = sum_j w_j B_j^T B_j for basis of shape (n, d, L)."""
    b = _as_tensor(basis)
    if b.data.ndim != 3:
        raise ShapeError(f"gram_matrix expects (n, d, L), got {b.data.shape}")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != b.data.shape[0]:
        raise ShapeError(f"{w.shape[0]} weights for {b.data.shape[0]} basis rows")
    prods = b.transpose((0, 2, 1)) @ b  # (n, L, L)
    return (prods * constant(w[:, None, None])).sum(axis=0)


def orthogonality_loss(g_phi, g_psi) -> Tensor:
    """Squared Frobenius distance of both Gram matrices from the identity."""
    total = None
    for g in (g_phi, g_psi):
        g = _as_tensor(g)
        ell = g.data.shape[0]
        if g.data.shape != (ell, ell):
            raise ShapeError(f"Gram matrix must be square, got {g.data.shape}")
        dev = g - constant(np.eye(ell))
        term = (dev * dev).sum()
        total = term if total is None else total + term
    return total


def _batch_norms(u: np.ndarray) -> np.ndarray:
    flat = u.reshape(u.shape[0], -1)
    return np.sqrt((flat * flat).sum(axis=1))


def relative_l2(u, u_hat) -> Tensor:
    """Mean over the leading (batch) axis of ||u_i - u_hat_i|| / ||u_i||.

    `u` is the ground truth (treated as constant); `u_hat` may carry gradients.
    Unit-scaled; multiply by 100 for the percentage metric.
    """
    uh = _as_tensor(u_hat)
    ut = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64)
    if ut.shape != uh.data.shape:
        raise ShapeError(f"target shape {ut.shape} != prediction shape {uh.data.shape}")
    norms = _batch_norms(ut)
    if np.any(norms == 0.0):
        raise DegenerateFieldError("relative L2 undefined: a target sample has zero norm")
    nbatch = ut.shape[0]
    diff = uh.reshape(nbatch, -1) - constant(ut.reshape(nbatch, -1))
    per_sample = (diff * diff).sum(axis=1).sqrt() / constant(norms)
    return per_sample.mean()


def mean_l2_relative_error(u, u_hat) -> float:
    """Eq.-style percent metric: 100 * mean_i ||u_i - u_hat_i|| / ||u_i||."""
    uh = u_hat.data if isinstance(u_hat, Tensor) else np.asarray(u_hat, dtype=np.float64)
    return 100.0 * float(relative_l2(u, constant(uh)).data)


def l_inf_error(u, u_hat) -> float:
    """Max absolute pointwise error over the whole batch."""
    ut = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64)
    uh = np.asarray(u_hat.data if isinstance(u_hat, Tensor) else u_hat, dtype=np.float64)
    if ut.shape != uh.shape:
        raise ShapeError(f"target shape {ut.shape} != prediction shape {uh.shape}")
    return float(np.abs(ut - uh).max())


def total_loss(u, u_hat, g_phi, g_psi, ortho_weight=1.0) -> Tensor:
    """Training objective: unit-scaled relative L2 plus the orthogonality penalty."""
    loss = relative_l2(u, u_hat)
    if ortho_weight != 0.0:
        loss = loss + ortho_weight * orthogonality_loss(g_phi, g_psi)
    return loss


def _beta_single(u: np.ndarray, offsets) -> float:
    var = float(u.var())
    if var == 0.0:
        raise DegenerateFieldError("beta undefined: field has zero variance")
    vals = []
    for h in offsets:
        src = [slice(0, n - s) for n, s in zip(u.shape, h)]
        dst = [slice(s, n) for n, s in zip(u.shape, h)]
        diff = u[tuple(dst)] - u[tuple(src)]
        vals.append(float((diff * diff).mean()) / var)
    return float(np.mean(vals))


def beta_variability(u, grid: Grid, time_major=False, max_offset=5) -> float:
    """Spatial-variability statistic: mean over offsets h in {1..max_offset}^d of
    the mean squared increment (u(x+h)-u(x))^2 normalized by Var(u).

    Non-wrapping offsets; time-dependent fields (time_major=True, leading time
    axis) average the statistic over time slices.
    """
    u = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64)
    shape = tuple(grid.extents)
    if time_major:
        slices = u.reshape(u.shape[0], *shape)
    else:
        slices = u.reshape(1, *shape)
    for e in shape:
        if e <= max_offset:
            raise ShapeError(f"grid extent {e} too small for offsets up to {max_offset}")
    offsets = list(itertools.product(range(1, max_offset + 1), repeat=len(shape)))
    return float(np.mean([_beta_single(s, offsets) for s in slices]))


METRICS_CSV_HEADER = "epoch,split,mean_l2_rel_pct,l_inf,l_ortho,wall_ms"


@dataclass
class MetricsRecord:
    """One evaluation of a model over a split."""

    epoch: int
    split: str
    mean_l2_rel_pct: float
    l_inf: float
    l_ortho: float
    wall_ms: float
    beta: float = float("nan")

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.split},{self.mean_l2_rel_pct!r},"
                f"{self.l_inf!r},{self.l_ortho!r},{self.wall_ms!r}")


def write_metrics_csv(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")
