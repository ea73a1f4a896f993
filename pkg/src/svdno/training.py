"""Adam, the training loop, evaluation, checkpointing and ablation runs."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import zero_grads
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, read_dataset
from .errors import ConfigurationError, ShapeError, TrainingError
from .model import SvdNeuralOperator, SvdNoConfig
from .objectives import MetricsRecord, l_inf_error, orthogonality_loss, gram_matrix, \
    relative_l2, write_metrics_csv

__all__ = [
    "Adam",
    "RunConfig",
    "TrainResult",
    "train",
    "fit_model",
    "evaluate_model",
    "evaluate_checkpoint",
    "model_from_checkpoint",
    "run_ablation",
    "write_ablation_csv",
    "ABLATION_KINDS",
    "ABLATION_CSV_HEADER",
]

ABLATION_KINDS = ("dense_mlp", "mercer", "no_ortho")
ABLATION_CSV_HEADER = "variant,seed,mean_l2_rel_pct,l_inf,l_ortho,epoch_time_ms"


class Adam:
    """Standard bias-corrected Adam; gradients are zeroed after each step."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.zero_grad()


@dataclass
class RunConfig:
    """Everything needed to reproduce a training run."""

    dataset: str
    model: SvdNoConfig = field(default_factory=SvdNoConfig)
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    ortho_weight: float = 1.0
    seed: int = 0
    outdir: str = "runs/default"
    eval_every: int = 10

    def to_dict(self):
        d = dict(self.__dict__)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["model"] = SvdNoConfig.from_dict(d["model"])
        return cls(**d)


def target_matrix(u: np.ndarray, n_points: int) -> np.ndarray:
    """Reshape a stored solution to the model's (n_points, channels) layout.

    Time-dependent solutions are stored time-major; all time steps become
    output channels (they are predicted jointly)."""
    u = np.asarray(u, dtype=np.float64)
    if u.size % n_points != 0:
        raise ShapeError(f"solution of size {u.size} does not cover {n_points} points")
    if u.ndim >= 2 and u.shape[-1] != n_points and u.size // n_points == u.shape[0]:
        return u.reshape(u.shape[0], n_points).T.copy()
    if u.size == n_points:
        return u.reshape(n_points, 1)
    return u.reshape(-1, n_points).T.copy()


def dataset_pairs(ds: Dataset, split):
    n = ds.spec.grid.num_points
    return [(a, target_matrix(u, n)) for a, u in ds.split_samples(split)]


def out_channels_for(ds: Dataset) -> int:
    n = ds.spec.grid.num_points
    return ds.samples[0][1].size // n


def build_model(cfg: RunConfig, ds: Dataset) -> SvdNeuralOperator:
    return SvdNeuralOperator(cfg.model, ds.spec.grid, d_a=1,
                             out_channels=out_channels_for(ds), seed=cfg.seed)


def _sample_loss(model, a, target, ortho_weight):
    res = model.forward(a)
    pred = res.u_hat.reshape(1, *res.u_hat.shape)
    loss = relative_l2(target[None], pred)
    if ortho_weight != 0.0 and res.bases:
        for phi, psi in res.bases:
            g_phi = gram_matrix(phi, model.weights)
            g_psi = gram_matrix(psi, model.weights) if psi is not phi else g_phi
            loss = loss + ortho_weight * orthogonality_loss(g_phi, g_psi)
    return loss


def evaluate_model(model, pairs, split="val", epoch=0) -> MetricsRecord:
    """Deterministic, mutation-free evaluation over (input, target) pairs."""
    t0 = time.perf_counter()
    rels, orthos, linf = [], [], 0.0
    for a, target in pairs:
        res = model.forward(a)
        pred = res.u_hat.data
        rels.append(float(relative_l2(target[None], pred[None]).data))
        linf = max(linf, l_inf_error(target, pred))
        if res.bases:
            phi, psi = res.bases[0]
            g_phi = gram_matrix(phi, model.weights)
            g_psi = gram_matrix(psi, model.weights) if psi is not phi else g_phi
            orthos.append(float(orthogonality_loss(g_phi, g_psi).data))
        else:
            orthos.append(0.0)
    wall_ms = (time.perf_counter() - t0) * 1e3
    return MetricsRecord(epoch=epoch, split=split,
                         mean_l2_rel_pct=100.0 * float(np.mean(rels)),
                         l_inf=linf, l_ortho=float(np.mean(orthos)), wall_ms=wall_ms)


@dataclass
class TrainResult:
    metrics: list                 # MetricsRecord rows in emission order
    best_state: dict              # parameter arrays at the best validation epoch
    final_state: dict
    best_epoch: int
    epoch_times_ms: list
    train_losses: list            # mean batch loss per epoch


def fit_model(model, train_pairs, val_pairs, epochs, batch_size=16, lr=1e-3,
              ortho_weight=1.0, seed=0, eval_every=10, on_abort=None) -> TrainResult:
    """Core loop shared by `train`, the estimator and the ablation driver."""
    params = model.parameters()
    opt = Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    metrics = [evaluate_model(model, val_pairs, "val", 0)]
    best = (metrics[0].mean_l2_rel_pct, 0, model.state_dict())
    epoch_times, train_losses = [], []
    last_good = model.state_dict()
    n_train = len(train_pairs)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, batch_size):
            idx = order[start:start + batch_size]
            zero_grads(params)
            scale = 1.0 / len(idx)
            batch_loss = 0.0
            for i in idx:
                a, target = train_pairs[i]
                loss = _sample_loss(model, a, target, ortho_weight) * scale
                if not np.isfinite(loss.data):
                    if on_abort:
                        on_abort(last_good)
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                loss.backward()
                batch_loss += float(loss.data)
            opt.step()
            batch_losses.append(batch_loss)
        train_losses.append(float(np.mean(batch_losses)))
        epoch_times.append((time.perf_counter() - t0) * 1e3)
        last_good = model.state_dict()
        if epoch % eval_every == 0 or epoch == epochs:
            rec = evaluate_model(model, val_pairs, "val", epoch)
            metrics.append(rec)
            if rec.mean_l2_rel_pct < best[0]:
                best = (rec.mean_l2_rel_pct, epoch, model.state_dict())
    return TrainResult(metrics=metrics, best_state=best[2], final_state=model.state_dict(),
                       best_epoch=best[1], epoch_times_ms=epoch_times,
                       train_losses=train_losses)


def _checkpoint_echo(cfg: RunConfig, model) -> dict:
    return {
        "run": cfg.to_dict(),
        "grid": model.grid.to_dict(),
        "d_a": model.d_a,
        "out_channels": model.out_channels,
    }


def train(cfg: RunConfig, ds: Dataset = None):
    """Full protocol: fit on the train split, evaluate val on cadence, test at
    the end; writes metrics.csv plus best/final checkpoints under cfg.outdir."""
    if ds is None:
        ds = read_dataset(cfg.dataset)
    os.makedirs(cfg.outdir, exist_ok=True)
    model = build_model(cfg, ds)
    train_pairs = dataset_pairs(ds, "train")
    val_pairs = dataset_pairs(ds, "val")
    echo = _checkpoint_echo(cfg, model)

    def on_abort(state):
        save_checkpoint(os.path.join(cfg.outdir, "aborted.ckpt"), echo, state)

    result = fit_model(model, train_pairs, val_pairs, cfg.epochs,
                       batch_size=cfg.batch_size, lr=cfg.lr,
                       ortho_weight=cfg.ortho_weight, seed=cfg.seed,
                       eval_every=cfg.eval_every, on_abort=on_abort)
    save_checkpoint(os.path.join(cfg.outdir, "final.ckpt"), echo, result.final_state)
    save_checkpoint(os.path.join(cfg.outdir, "best.ckpt"), echo, result.best_state)
    if cfg.epochs > 0:
        test_pairs = dataset_pairs(ds, "test")
        model.load_state_dict(result.best_state)
        result.metrics.append(evaluate_model(model, test_pairs, "test", cfg.epochs))
        model.load_state_dict(result.final_state)
    write_metrics_csv(os.path.join(cfg.outdir, "metrics.csv"), result.metrics)
    return result, model


def model_from_checkpoint(path):
    """Rebuild a model (architecture + weights) from a checkpoint file."""
    from .grids import Grid

    echo, params = load_checkpoint(path)
    cfg = RunConfig.from_dict(echo["run"])
    grid = Grid.from_dict(echo["grid"])
    model = SvdNeuralOperator(cfg.model, grid, d_a=echo["d_a"],
                              out_channels=echo["out_channels"], seed=cfg.seed)
    model.load_state_dict(params)
    return model, cfg


def evaluate_checkpoint(ckpt_path, ds: Dataset, split="test") -> MetricsRecord:
    model, _ = model_from_checkpoint(ckpt_path)
    if tuple(model.grid.extents) != tuple(ds.spec.grid.extents):
        raise ShapeError(f"checkpoint grid {model.grid.extents} does not match "
                         f"dataset grid {ds.spec.grid.extents}")
    return evaluate_model(model, dataset_pairs(ds, split), split, 0)


def variant_config(cfg: RunConfig, kind) -> RunConfig:
    if kind not in ABLATION_KINDS:
        raise ConfigurationError(f"unknown ablation kind {kind!r}")
    if kind == "no_ortho":
        return replace(cfg, ortho_weight=0.0)
    return replace(cfg, model=replace(cfg.model, kernel_kind=kind))


def run_ablation(cfg: RunConfig, kind, seeds=(0,), ds: Dataset = None):
    """Train the base model and one ablated variant on identical data and seeds;
    returns paired rows of final test metrics (CSV layout: ABLATION_CSV_HEADER)."""
    if ds is None:
        ds = read_dataset(cfg.dataset)
    rows = []
    for seed in seeds:
        for variant, vcfg in (("svd", replace(cfg, seed=seed)),
                              (kind, replace(variant_config(cfg, kind), seed=seed))):
            model = build_model(vcfg, ds)
            result = fit_model(model, dataset_pairs(ds, "train"),
                               dataset_pairs(ds, "val"), vcfg.epochs,
                               batch_size=vcfg.batch_size, lr=vcfg.lr,
                               ortho_weight=vcfg.ortho_weight, seed=seed,
                               eval_every=max(1, vcfg.epochs))
            model.load_state_dict(result.best_state)
            rec = evaluate_model(model, dataset_pairs(ds, "test"), "test", vcfg.epochs)
            rows.append({
                "variant": variant, "seed": seed,
                "mean_l2_rel_pct": rec.mean_l2_rel_pct,
                "l_inf": rec.l_inf, "l_ortho": rec.l_ortho,
                "epoch_time_ms": float(np.mean(result.epoch_times_ms))
                if result.epoch_times_ms else 0.0,
            })
    return rows


def write_ablation_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ABLATION_CSV_HEADER + "\n")
        for r in rows:
            fh.write(f"{r['variant']},{r['seed']},{r['mean_l2_rel_pct']!r},"
                     f"{r['l_inf']!r},{r['l_ortho']!r},{r['epoch_time_ms']!r}\n")
