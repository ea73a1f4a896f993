"""Empirical scaling probes for the factorized integral layer."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import constant, parameter, track_allocations
from .grids import Grid
from .model import apply_factorized_kernel
from .objectives import trapezoidal_weights

__all__ = ["measure_integral_layer", "linear_fit_r2", "zero_padding_consistent",
           "ScalingPoint"]


@dataclass
class ScalingPoint:
    rank: int
    n: int
    layer_ms: float
    alloc_bytes: float


def _random_instance(n, d, rank, seed):
    rng = np.random.default_rng(seed)
    w = trapezoidal_weights(Grid((n,)))
    v = parameter(rng.standard_normal((n, d)))
    phi = parameter(rng.standard_normal((n, d, rank)))
    psi = parameter(rng.standard_normal((n, d, rank)))
    sigma = parameter(rng.standard_normal(rank))
    return v, phi, psi, sigma, w


def measure_integral_layer(n, d, rank, repeats=5, seed=0) -> ScalingPoint:
    """Wall time (median over repeats) and tensor bytes allocated for one
    forward+backward pass of the low-rank kernel application."""
    v, phi, psi, sigma, w = _random_instance(n, d, rank, seed)

    def run():
        for p in (v, phi, psi, sigma):
            p.zero_grad()
        out = apply_factorized_kernel(v, phi, psi, sigma, w)
        out.sum().backward()

    run()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run()
        times.append((time.perf_counter() - t0) * 1e3)
    with track_allocations() as tracker:
        run()
    return ScalingPoint(rank=rank, n=n, layer_ms=float(np.median(times)),
                        alloc_bytes=float(tracker.bytes))


def linear_fit_r2(x, y) -> float:
    """R^2 of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    if ss_tot == 0.0:
        return 1.0
    return float(1.0 - (resid ** 2).sum() / ss_tot)


def zero_padding_consistent(n, d, rank, pad_to, seed=0) -> bool:
    """Padding sigma with zero modes (and arbitrary extra basis columns) must
    not change the layer output.

    Compared to within a few ulps rather than bit-for-bit: extra (zeroed)
    modes change the BLAS reduction blocking, which perturbs the last bit."""
    rng = np.random.default_rng(seed)
    v, phi, psi, sigma, w = _random_instance(n, d, rank, seed)
    out = apply_factorized_kernel(v, phi, psi, sigma, w).data
    extra = pad_to - rank
    phi2 = constant(np.concatenate([phi.data, rng.standard_normal((n, d, extra))], axis=2))
    psi2 = constant(np.concatenate([psi.data, rng.standard_normal((n, d, extra))], axis=2))
    sigma2 = constant(np.concatenate([sigma.data, np.zeros(extra)]))
    out2 = apply_factorized_kernel(constant(v.data), phi2, psi2, sigma2, w).data
    scale = max(float(np.abs(out).max()), 1e-30)
    return bool(np.abs(out - out2).max() <= 1e-12 * scale)
