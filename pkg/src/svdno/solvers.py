"""Classical solvers used to synthesize supervised datasets.

Parabolic problems use Strang splitting: explicit-midpoint reaction half-steps
around a Crank-Nicolson diffusion step, with a small fixed internal time step
validated by self-convergence tests.  The Darcy problem is a finite-volume
5-point scheme with harmonic-mean face coefficients solved by CG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, ShapeError, SolverError
from .grids import Grid

__all__ = [
    "PdeSpec",
    "default_constants",
    "sample_initial_condition_1d",
    "sample_darcy_coefficient",
    "solve_diffusion_reaction_1d",
    "solve_allen_cahn_1d",
    "solve_darcy_2d",
    "solve_sample",
]

PDE_KINDS = ("diffusion_reaction_1d", "allen_cahn_1d", "darcy_2d")

_DEFAULTS = {
    "diffusion_reaction_1d": {"nu": 0.5},
    "allen_cahn_1d": {"eps": 1e-4},
    "darcy_2d": {"forcing": 1.0, "perm_low": 3.0, "perm_high": 12.0,
                 "length_scale": 0.2},
}


def default_constants(kind):
    if kind not in PDE_KINDS:
        raise ConfigurationError(f"unknown pde kind {kind!r}")
    return dict(_DEFAULTS[kind])


def periodic_grid_1d(n_points: int) -> Grid:
    """n points covering one period of [0, 1): spacing 1/n, endpoint excluded."""
    h = 1.0 / n_points
    return Grid((n_points,), ((0.0, (n_points - 1) * h),))


@dataclass(frozen=True)
class PdeSpec:
    """Which equation to solve, on which grid, with which constants."""

    kind: str
    grid: Grid
    t_final: float = 1.0
    time_slices: int = 11
    constants: dict = None
    # fine enough that halving it moves parabolic solutions by < 1e-6 relative
    internal_dt: float = 5e-4

    def __post_init__(self):
        if self.kind not in PDE_KINDS:
            raise ConfigurationError(f"unknown pde kind {self.kind!r}")
        merged = default_constants(self.kind)
        merged.update(self.constants or {})
        object.__setattr__(self, "constants", merged)
        if self.kind.endswith("_1d") and self.grid.ndim != 1:
            raise ConfigurationError(f"{self.kind} needs a 1D grid")
        if self.kind == "darcy_2d" and self.grid.ndim != 2:
            raise ConfigurationError("darcy_2d needs a 2D grid")
        if self.time_slices < 2 and self.kind != "darcy_2d":
            raise ConfigurationError("parabolic problems need >= 2 stored time slices")

    def to_dict(self):
        return {"kind": self.kind, "grid": self.grid.to_dict(),
                "t_final": self.t_final, "time_slices": self.time_slices,
                "constants": dict(self.constants), "internal_dt": self.internal_dt}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], grid=Grid.from_dict(d["grid"]),
                   t_final=d["t_final"], time_slices=d["time_slices"],
                   constants=dict(d["constants"]), internal_dt=d["internal_dt"])


# ---------------------------------------------------------------------------
# random inputs

def sample_initial_condition_1d(grid: Grid, seed, target="allen_cahn") -> np.ndarray:
    """Truncated random Fourier series, K=5, coefficient std 1/k, rescaled:
    max-abs 1 for the Allen-Cahn target, into [0.1, 0.9] for diffusion-reaction."""
    rng = np.random.default_rng(seed)
    lo, hi = grid.bounds[0]
    x = grid.axis_coords(0)
    xt = (x - lo) / (hi - lo)
    u = np.zeros_like(x)
    for k in range(1, 6):
        ak, bk = rng.normal(0.0, 1.0 / k, size=2)
        u += ak * np.sin(2 * np.pi * k * xt) + bk * np.cos(2 * np.pi * k * xt)
    if target == "allen_cahn":
        m = np.abs(u).max()
        return u / m if m > 0 else u
    if target == "diffusion_reaction":
        span = u.max() - u.min()
        if span == 0:
            return np.full_like(u, 0.5)
        return 0.1 + 0.8 * (u - u.min()) / span
    raise ConfigurationError(f"unknown initial-condition target {target!r}")


def sample_darcy_coefficient(grid: Grid, seed, length_scale=0.2,
                             low=3.0, high=12.0) -> np.ndarray:
    """Two-phase permeability: a smooth Gaussian random field (spectral synthesis,
    squared-exponential spectrum) thresholded at its spatial mean."""
    ny, nx = grid.extents
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((ny, nx))
    ky = 2 * np.pi * np.fft.fftfreq(ny, d=1.0 / ny)
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx)
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    amp = np.exp(-0.25 * length_scale ** 2 * k2)
    g = np.real(np.fft.ifft2(np.fft.fft2(noise) * amp))
    g -= g.mean()
    return np.where(g >= 0.0, high, low)


# ---------------------------------------------------------------------------
# parabolic solvers

def _output_times(spec):
    return np.linspace(0.0, spec.t_final, spec.time_slices)


def _substeps(segment, internal_dt):
    m = max(1, math.ceil(segment / internal_dt - 1e-12))
    return m, segment / m


def _midpoint_reaction(u, f, tau):
    mid = u + 0.5 * tau * f(u)
    return u + tau * f(mid)


def _strang_march(u0, spec, diffusion_matrices, reaction, include_reaction=True):
    """Shared Strang loop; `diffusion_matrices(dt)` returns (solver, rhs_matrix)."""
    out = np.empty((spec.time_slices, u0.shape[0]))
    out[0] = u0
    u = u0.copy()
    times = _output_times(spec)
    cache = {}
    for k in range(1, spec.time_slices):
        seg = times[k] - times[k - 1]
        m, dt = _substeps(seg, spec.internal_dt)
        if dt not in cache:
            cache[dt] = diffusion_matrices(dt)
        solve, rhs = cache[dt]
        for _ in range(m):
            if include_reaction:
                u = _midpoint_reaction(u, reaction, 0.5 * dt)
            u = solve(rhs @ u)
            if include_reaction:
                u = _midpoint_reaction(u, reaction, 0.5 * dt)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"{spec.kind}: non-finite values at t={times[k]:g}")
        out[k] = u
    return out


def _laplacian_periodic(n, h):
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    lap[0, n - 1] = 1.0
    lap[n - 1, 0] = 1.0
    return lap.tocsr() / (h * h)


def _laplacian_neumann(n, h):
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    lap[0, 1] = 2.0
    lap[n - 1, n - 2] = 2.0
    return lap.tocsr() / (h * h)


def _cn_pair(lap, nu, dt, n):
    eye = sp.identity(n, format="csr")
    a = (eye - 0.5 * nu * dt * lap).tocsc()
    b = (eye + 0.5 * nu * dt * lap).tocsr()
    lu = spla.splu(a)
    return lu.solve, b


def solve_diffusion_reaction_1d(u0, spec: PdeSpec, include_reaction=True) -> np.ndarray:
    """du/dt = nu u_xx + u(1-u) on a periodic 1D grid; returns (time_slices, n)
    including t=0.  `include_reaction=False` is a test hook (pure diffusion)."""
    u0 = np.asarray(u0, dtype=np.float64)
    n = spec.grid.extents[0]
    if u0.shape != (n,):
        raise ShapeError(f"initial condition shape {u0.shape} != ({n},)")
    h = spec.grid.spacing[0]
    nu = spec.constants["nu"]
    lap = _laplacian_periodic(n, h)
    return _strang_march(u0, spec, lambda dt: _cn_pair(lap, nu, dt, n),
                         lambda u: u * (1.0 - u), include_reaction)


def solve_allen_cahn_1d(u0, spec: PdeSpec, include_reaction=True) -> np.ndarray:
    """du/dt = eps u_xx + 5u - 5u^3 with homogeneous Neumann boundaries."""
    u0 = np.asarray(u0, dtype=np.float64)
    n = spec.grid.extents[0]
    if u0.shape != (n,):
        raise ShapeError(f"initial condition shape {u0.shape} != ({n},)")
    h = spec.grid.spacing[0]
    eps = spec.constants["eps"]
    lap = _laplacian_neumann(n, h)
    return _strang_march(u0, spec, lambda dt: _cn_pair(lap, eps, dt, n),
                         lambda u: 5.0 * u - 5.0 * u ** 3, include_reaction)


# ---------------------------------------------------------------------------
# Darcy

def solve_darcy_2d(a, spec: PdeSpec, forcing=None) -> np.ndarray:
    """-div(a grad u) = f on the unit square, u = 0 on the boundary.

    Finite-volume 5-point scheme with harmonic-mean face coefficients; the SPD
    system is solved by conjugate gradients to relative residual 1e-10.
    `forcing` overrides the constant right-hand side (for manufactured tests).
    """
    ny, nx = spec.grid.extents
    a = np.asarray(a, dtype=np.float64).reshape(ny, nx)
    if np.any(a <= 0):
        raise SolverError("darcy_2d: permeability must be strictly positive")
    hy, hx = spec.grid.spacing
    if forcing is None:
        f = np.full((ny, nx), float(spec.constants["forcing"]))
    else:
        f = np.asarray(forcing, dtype=np.float64).reshape(ny, nx)

    niy, nix = ny - 2, nx - 2
    idx = -np.ones((ny, nx), dtype=np.int64)
    idx[1:-1, 1:-1] = np.arange(niy * nix).reshape(niy, nix)

    def harm(a1, a2):
        return 2.0 * a1 * a2 / (a1 + a2)

    rows, cols, vals = [], [], []
    b = np.empty(niy * nix)
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            k = idx[i, j]
            diag = 0.0
            for (ii, jj, h2) in ((i - 1, j, hy * hy), (i + 1, j, hy * hy),
                                 (i, j - 1, hx * hx), (i, j + 1, hx * hx)):
                w = harm(a[i, j], a[ii, jj]) / h2
                diag += w
                if idx[ii, jj] >= 0:
                    rows.append(k); cols.append(idx[ii, jj]); vals.append(-w)
            rows.append(k); cols.append(k); vals.append(diag)
            b[k] = f[i, j]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(niy * nix, niy * nix))
    maxiter = 10 * ny * nx
    try:
        u_int, info = spla.cg(mat, b, rtol=1e-10, atol=0.0, maxiter=maxiter)
    except TypeError:  # scipy < 1.12 spelling
        u_int, info = spla.cg(mat, b, tol=1e-10, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise SolverError(f"darcy_2d: CG did not converge within {maxiter} iterations")
    u = np.zeros((ny, nx))
    u[1:-1, 1:-1] = u_int.reshape(niy, nix)
    return u


def solve_sample(spec: PdeSpec, a) -> np.ndarray:
    if spec.kind == "diffusion_reaction_1d":
        return solve_diffusion_reaction_1d(a, spec)
    if spec.kind == "allen_cahn_1d":
        return solve_allen_cahn_1d(a, spec)
    return solve_darcy_2d(a, spec)
