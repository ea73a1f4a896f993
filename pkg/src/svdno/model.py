"""The low-rank neural operator: lifting/projection, singular-function nets,
factorized kernel integral layers, and the two ablation kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor, constant, parameter
from .errors import ConfigurationError, ShapeError
from .grids import Grid, make_augmented_coordinates
from .objectives import trapezoidal_weights

__all__ = [
    "SingularNetConfig",
    "SvdNoConfig",
    "SineMlp",
    "Recurrent1d",
    "apply_factorized_kernel",
    "apply_dense_kernel",
    "apply_mercer_kernel",
    "assemble_kernel_from_factors",
    "ForwardResult",
    "SvdNeuralOperator",
]

KERNEL_KINDS = ("svd", "mercer", "dense_mlp")
NET_KINDS = ("sine_mlp", "recurrent_1d")


@dataclass(frozen=True)
class SingularNetConfig:
    kind: str = "sine_mlp"
    num_layers: int = 3
    hidden_dim: int = 64

    def __post_init__(self):
        if self.kind not in NET_KINDS:
            raise ConfigurationError(f"unknown singular-net kind {self.kind!r}")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ConfigurationError("singular net needs >= 1 layer and hidden_dim >= 1")


@dataclass(frozen=True)
class SvdNoConfig:
    """Architecture description; `basis_dim` defaults to `lifting_dim`."""

    rank: int = 4
    lifting_dim: int = 16
    blocks: int = 4
    singular_net: SingularNetConfig = field(default_factory=SingularNetConfig)
    kernel_kind: str = "svd"
    shared_basis: bool = True
    basis_dim: int = None
    w_bias: bool = True
    dense_hidden: int = 64
    dense_layers: int = 3

    def __post_init__(self):
        if self.rank < 1 or self.blocks < 1 or self.lifting_dim < 1:
            raise ConfigurationError("rank, blocks and lifting_dim must all be >= 1")
        if self.kernel_kind not in KERNEL_KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kernel_kind!r}")
        if self.basis_dim is None:
            object.__setattr__(self, "basis_dim", self.lifting_dim)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["singular_net"] = SingularNetConfig(**d["singular_net"])
        return cls(**d)


# ---------------------------------------------------------------------------
# parameter initialisation helpers

def _uniform(rng, lo, hi, shape):
    return rng.uniform(lo, hi, size=shape)


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return _uniform(rng, -bound, bound, (fan_out, fan_in))


class Linear:
    """Pointwise affine map applied along the last axis."""

    def __init__(self, rng, fan_in, fan_out, bias=True, init="glorot"):
        if init == "glorot":
            w = _glorot(rng, fan_in, fan_out)
        elif init == "sine_first":
            w = _uniform(rng, -1.0 / fan_in, 1.0 / fan_in, (fan_out, fan_in))
        elif init == "sine_hidden":
            bound = math.sqrt(6.0 / fan_in)
            w = _uniform(rng, -bound, bound, (fan_out, fan_in))
        else:
            raise ConfigurationError(f"unknown init {init!r}")
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(fan_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        wt = self.weight.transpose((1, 0))
        out = x @ wt
        if self.bias is not None:
            out = out + self.bias
        return out

    def parameters(self, prefix):
        out = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out


class SineMlp:
    """Sine-activated MLP mapping augmented coordinates to a (d, L) matrix per point."""

    def __init__(self, rng, in_dim, out_d, rank, num_layers, hidden_dim):
        self.out_d, self.rank = out_d, rank
        self.layers = []
        fan = in_dim
        for i in range(num_layers):
            self.layers.append(Linear(rng, fan, hidden_dim,
                                      init="sine_first" if i == 0 else "sine_hidden"))
            fan = hidden_dim
        self.head = Linear(rng, fan, out_d * rank, init="sine_hidden")

    def __call__(self, z: Tensor) -> Tensor:
        h = z
        for layer in self.layers:
            h = layer(h).sin()
        out = self.head(h)
        n = out.data.shape[0]
        return out.reshape(n, self.out_d, self.rank)

    def parameters(self, prefix):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.parameters(f"{prefix}.sine{i}"))
        out.update(self.head.parameters(f"{prefix}.head"))
        return out


def _lstm_layer(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One recurrent layer over the point sequence, as a single fused graph node.

    Gate order i, f, g, o; sigmoid gates, tanh cell output.  The recurrence
    and its backward sweep run in plain numpy so the graph stays small.
    """
    xd, wxd, whd, bd = x.data, wx.data, wh.data, b.data
    n, _ = xd.shape
    hdim = whd.shape[0]
    pre_x = xd @ wxd + bd  # (n, 4h)
    I = np.empty((n, hdim)); F = np.empty((n, hdim))
    G = np.empty((n, hdim)); O = np.empty((n, hdim))
    C = np.empty((n, hdim)); TC = np.empty((n, hdim))
    Hprev = np.empty((n, hdim)); Cprev = np.empty((n, hdim))
    H = np.empty((n, hdim))
    h = np.zeros(hdim); c = np.zeros(hdim)
    for t in range(n):
        Hprev[t] = h; Cprev[t] = c
        a = pre_x[t] + h @ whd
        ai, af, ag, ao = a[:hdim], a[hdim:2 * hdim], a[2 * hdim:3 * hdim], a[3 * hdim:]
        i = 1.0 / (1.0 + np.exp(-ai))
        f = 1.0 / (1.0 + np.exp(-af))
        g = np.tanh(ag)
        o = 1.0 / (1.0 + np.exp(-ao))
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        I[t], F[t], G[t], O[t], C[t], TC[t], H[t] = i, f, g, o, c, tc, h

    def backward(out):
        upstream = out.grad  # (n, h)
        dA = np.empty((n, 4 * hdim))
        whT = whd.T
        dh_next = np.zeros(hdim); dc_next = np.zeros(hdim)
        for t in range(n - 1, -1, -1):
            dh = upstream[t] + dh_next
            do = dh * TC[t]
            dc = dh * O[t] * (1.0 - TC[t] * TC[t]) + dc_next
            di = dc * G[t]
            dg = dc * I[t]
            df = dc * Cprev[t]
            dc_next = dc * F[t]
            da = dA[t]
            da[:hdim] = di * I[t] * (1.0 - I[t])
            da[hdim:2 * hdim] = df * F[t] * (1.0 - F[t])
            da[2 * hdim:3 * hdim] = dg * (1.0 - G[t] * G[t])
            da[3 * hdim:] = do * O[t] * (1.0 - O[t])
            dh_next = da @ whT
        if x.requires_grad:
            x._accumulate(dA @ wxd.T)
        if wx.requires_grad:
            wx._accumulate(xd.T @ dA)
        if wh.requires_grad:
            wh._accumulate(Hprev.T @ dA)
        if b.requires_grad:
            b._accumulate(dA.sum(axis=0))

    req = any(t.requires_grad for t in (x, wx, wh, b))
    return Tensor(H, requires_grad=req,
                  _parents=(x, wx, wh, b) if req else (),
                  _backward=backward if req else None, op="lstm")


class Recurrent1d:
    """Stacked recurrent layers over the 1D point sequence plus a linear head.

    Only valid on 1D grids: points are consumed in ascending x order.
    """

    def __init__(self, rng, in_dim, out_d, rank, num_layers, hidden_dim):
        self.out_d, self.rank = out_d, rank
        self.cells = []
        fan = in_dim
        for _ in range(num_layers):
            bound = 1.0 / math.sqrt(hidden_dim)
            self.cells.append((
                parameter(_uniform(rng, -bound, bound, (fan, 4 * hidden_dim))),
                parameter(_uniform(rng, -bound, bound, (hidden_dim, 4 * hidden_dim))),
                parameter(np.zeros(4 * hidden_dim)),
            ))
            fan = hidden_dim
        self.head = Linear(rng, fan, out_d * rank)

    def __call__(self, z: Tensor) -> Tensor:
        h = z
        for wx, wh, b in self.cells:
            h = _lstm_layer(h, wx, wh, b)
        out = self.head(h)
        n = out.data.shape[0]
        return out.reshape(n, self.out_d, self.rank)

    def parameters(self, prefix):
        out = {}
        for i, (wx, wh, b) in enumerate(self.cells):
            out[f"{prefix}.cell{i}.wx"] = wx
            out[f"{prefix}.cell{i}.wh"] = wh
            out[f"{prefix}.cell{i}.b"] = b
        out.update(self.head.parameters(f"{prefix}.head"))
        return out


def _make_singular_net(rng, cfg: SingularNetConfig, in_dim, out_d, rank, grid_ndim):
    if cfg.kind == "recurrent_1d":
        if grid_ndim != 1:
            raise ConfigurationError("recurrent_1d singular nets require a 1D grid")
        return Recurrent1d(rng, in_dim, out_d, rank, cfg.num_layers, cfg.hidden_dim)
    return SineMlp(rng, in_dim, out_d, rank, cfg.num_layers, cfg.hidden_dim)


# ---------------------------------------------------------------------------
# kernel applications

def _check_kernel_shapes(v, basis, w, name):
    n, d = v.data.shape
    if basis.data.shape[0] != n or basis.data.shape[1] != d:
        raise ShapeError(f"{name}: basis shape {basis.data.shape} does not match "
                         f"latent field {v.data.shape}")
    if w.shape[0] != n:
        raise ShapeError(f"{name}: {w.shape[0]} quadrature weights for {n} points")


def apply_factorized_kernel(v: Tensor, phi: Tensor, psi: Tensor, sigma: Tensor,
                            w: np.ndarray) -> Tensor:
    """Two-step low-rank application: q_l = sum_j w_j (Psi_j^T v_j)_l, then
    out_i = Phi_i diag(sigma) q.  Cost O(n d L); no n x n object is formed."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    _check_kernel_shapes(v, psi, w, "apply_factorized_kernel")
    _check_kernel_shapes(v, phi, w, "apply_factorized_kernel")
    n, d = v.data.shape
    rank = sigma.data.shape[0]
    proj = psi.transpose((0, 2, 1)) @ v.reshape(n, d, 1)      # (n, L, 1)
    q = (proj * constant(w[:, None, None])).sum(axis=0)        # (L, 1)
    scaled = sigma.reshape(rank, 1) * q
    return (phi @ scaled).reshape(n, d)


def apply_dense_kernel(v: Tensor, kappa: Tensor, w: np.ndarray) -> Tensor:
    """Reference O(n^2 d^2) application: out_i = sum_j w_j kappa_ij v_j."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    n, d = v.data.shape
    if kappa.data.shape != (n, n, d, d):
        raise ShapeError(f"apply_dense_kernel: kernel shape {kappa.data.shape} "
                         f"!= {(n, n, d, d)}")
    if w.shape[0] != n:
        raise ShapeError(f"apply_dense_kernel: {w.shape[0]} weights for {n} points")
    kv = kappa @ v.reshape(1, n, d, 1)                         # (n, n, d, 1)
    weighted = kv * constant(w[None, :, None, None])
    return weighted.sum(axis=1).reshape(n, d)


def apply_mercer_kernel(v: Tensor, phi: Tensor, lam: Tensor, w: np.ndarray) -> Tensor:
    """Symmetric positive-semidefinite variant: Psi := Phi, Sigma := diag(lam)."""
    return apply_factorized_kernel(v, phi, phi, lam, w)


def assemble_kernel_from_factors(phi, psi, sigma) -> np.ndarray:
    """Materialize kappa(z_i, z_j) = Phi_i diag(sigma) Psi_j^T as (n, n, d, d)."""
    p = phi.data if isinstance(phi, Tensor) else np.asarray(phi)
    s = psi.data if isinstance(psi, Tensor) else np.asarray(psi)
    sig = sigma.data if isinstance(sigma, Tensor) else np.asarray(sigma)
    return np.einsum("idl,l,jel->ijde", p, sig, s)


# ---------------------------------------------------------------------------
# the operator

@dataclass
class ForwardResult:
    u_hat: Tensor            # (n, out_channels)
    phi: Tensor = None       # (n, d, L) or None for the dense ablation
    psi: Tensor = None
    bases: list = field(default_factory=list)  # all (phi, psi) pairs used


class _Block:
    """One operator layer: gelu(W v + bias + K v)."""

    def __init__(self, rng, model, index):
        cfg = model.config
        self.model = model
        self.w = Linear(rng, cfg.lifting_dim, cfg.lifting_dim, bias=cfg.w_bias)
        self.sigma = None
        self.lam_free = None
        self.nets = None
        self.dense_net = None
        d = cfg.basis_dim
        if cfg.kernel_kind == "svd":
            self.sigma = parameter(1.0 / np.arange(1, cfg.rank + 1))
            if not cfg.shared_basis:
                self.nets = (_make_singular_net(rng, cfg.singular_net, model.in_dim, d,
                                                cfg.rank, model.grid.ndim),
                             _make_singular_net(rng, cfg.singular_net, model.in_dim, d,
                                                cfg.rank, model.grid.ndim))
        elif cfg.kernel_kind == "mercer":
            self.lam_free = parameter(1.0 / np.sqrt(np.arange(1, cfg.rank + 1)))
            if not cfg.shared_basis:
                self.nets = (_make_singular_net(rng, cfg.singular_net, model.in_dim, d,
                                                cfg.rank, model.grid.ndim),)
        else:  # dense_mlp
            if not cfg.shared_basis:
                self.dense_net = _DenseKernelNet(rng, model.in_dim, d,
                                                 cfg.dense_hidden, cfg.dense_layers)
        self.index = index

    def _latent_mismatch(self, v):
        if v.data.shape[1] != self.model.config.lifting_dim:
            raise ShapeError(f"block {self.index}: latent width {v.data.shape[1]} != "
                             f"lifting_dim {self.model.config.lifting_dim}")

    def kernel(self, v, shared):
        cfg = self.model.config
        wq = self.model.weights
        if cfg.kernel_kind == "svd":
            if cfg.shared_basis:
                phi, psi = shared
            else:
                phi, psi = self.nets[0](self.model._z), self.nets[1](self.model._z)
                self.model._bases.append((phi, psi))
            return apply_factorized_kernel(v, phi, psi, self.sigma, wq)
        if cfg.kernel_kind == "mercer":
            if cfg.shared_basis:
                phi = shared[0]
            else:
                phi = self.nets[0](self.model._z)
                self.model._bases.append((phi, phi))
            return apply_mercer_kernel(v, phi, self.lam_free.square(), wq)
        kappa = shared if cfg.shared_basis else self.dense_net(self.model._z)
        return apply_dense_kernel(v, kappa, wq)

    def __call__(self, v, shared):
        self._latent_mismatch(v)
        return (self.w(v) + self.kernel(v, shared)).gelu()

    def parameters(self, prefix):
        out = self.w.parameters(f"{prefix}.w")
        if self.sigma is not None:
            out[f"{prefix}.sigma"] = self.sigma
        if self.lam_free is not None:
            out[f"{prefix}.lam_free"] = self.lam_free
        if self.nets is not None:
            for tag, net in zip(("phi", "psi"), self.nets):
                out.update(net.parameters(f"{prefix}.{tag}"))
        if self.dense_net is not None:
            out.update(self.dense_net.parameters(f"{prefix}.dense"))
        return out


class _DenseKernelNet:
    """Pointwise MLP over concatenated coordinate pairs (z, z') -> d x d matrix."""

    def __init__(self, rng, in_dim, out_d, hidden, layers):
        self.out_d = out_d
        self.layers = []
        fan = 2 * in_dim
        for _ in range(layers):
            self.layers.append(Linear(rng, fan, hidden))
            fan = hidden
        self.head = Linear(rng, fan, out_d * out_d)

    def __call__(self, z: Tensor) -> Tensor:
        zd = z.data
        n = zd.shape[0]
        pairs = np.concatenate(
            [np.repeat(zd, n, axis=0), np.tile(zd, (n, 1))], axis=1)
        h = constant(pairs)
        for layer in self.layers:
            h = layer(h).gelu()
        out = self.head(h)
        return out.reshape(n, n, self.out_d, self.out_d)

    def parameters(self, prefix):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.parameters(f"{prefix}.h{i}"))
        out.update(self.head.parameters(f"{prefix}.head"))
        return out


class SvdNeuralOperator:
    """Full operator: lift, T kernel-integral blocks, project.

    The augmented coordinate z = (x, a(x)) is fixed for all blocks; the latent
    field evolves.  With `shared_basis` the singular nets are evaluated once
    per forward pass and reused by every block.
    """

    def __init__(self, config: SvdNoConfig, grid: Grid, d_a=1, out_channels=1, seed=0):
        self.config = config
        self.grid = grid
        self.d_a = int(d_a)
        self.out_channels = int(out_channels)
        self.in_dim = grid.ndim + self.d_a
        self.weights = trapezoidal_weights(grid)
        rng = np.random.default_rng(seed)
        self.lift = Linear(rng, self.in_dim, config.lifting_dim)
        self.shared_nets = None
        self.shared_dense = None
        d = config.basis_dim
        if config.shared_basis:
            if config.kernel_kind == "svd":
                self.shared_nets = (
                    _make_singular_net(rng, config.singular_net, self.in_dim, d,
                                       config.rank, grid.ndim),
                    _make_singular_net(rng, config.singular_net, self.in_dim, d,
                                       config.rank, grid.ndim))
            elif config.kernel_kind == "mercer":
                self.shared_nets = (
                    _make_singular_net(rng, config.singular_net, self.in_dim, d,
                                       config.rank, grid.ndim),)
            else:
                self.shared_dense = _DenseKernelNet(rng, self.in_dim, d,
                                                    config.dense_hidden, config.dense_layers)
        self.blocks = [_Block(rng, self, t) for t in range(config.blocks)]
        self.project = Linear(rng, config.lifting_dim, self.out_channels)
        self._z = None
        self._bases = []

    # -- parameters ----------------------------------------------------------

    def parameters(self):
        out = self.lift.parameters("lift")
        if self.shared_nets is not None:
            for tag, net in zip(("phi", "psi"), self.shared_nets):
                out.update(net.parameters(f"shared.{tag}"))
        if self.shared_dense is not None:
            out.update(self.shared_dense.parameters("shared.dense"))
        for t, block in enumerate(self.blocks):
            out.update(block.parameters(f"block{t}"))
        out.update(self.project.parameters("project"))
        return out

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state):
        params = self.parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise ShapeError(f"parameter name mismatch: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: stored shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    # -- forward -------------------------------------------------------------

    def augmented(self, a) -> np.ndarray:
        return make_augmented_coordinates(self.grid, a)

    def forward(self, a) -> ForwardResult:
        z = self.augmented(a)
        self._z = constant(z)
        self._bases = []
        phi = psi = None
        shared = None
        cfg = self.config
        if cfg.shared_basis:
            if cfg.kernel_kind == "svd":
                phi = self.shared_nets[0](self._z)
                psi = self.shared_nets[1](self._z)
                shared = (phi, psi)
                self._bases.append((phi, psi))
            elif cfg.kernel_kind == "mercer":
                phi = self.shared_nets[0](self._z)
                psi = phi
                shared = (phi,)
                self._bases.append((phi, phi))
            else:
                shared = self.shared_dense(self._z)
        v = self.lift(self._z)
        for block in self.blocks:
            v = block(v, shared)
        u_hat = self.project(v)
        if phi is None and self._bases:
            phi, psi = self._bases[0]
        return ForwardResult(u_hat=u_hat, phi=phi, psi=psi, bases=list(self._bases))

    def predict(self, a) -> np.ndarray:
        return self.forward(a).u_hat.data
