"""Command-line harness: data generation, training, evaluation, ablations,
complexity probing and the spatial-variability analysis.

Exit codes: 0 success, 2 usage error, 3 numeric/solver failure, 4 shape or
compatibility failure.  All figures are emitted as CSV for external plotting.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .complexity import linear_fit_r2, measure_integral_layer, zero_padding_consistent
from .data import build_dataset, read_dataset, write_dataset
from .errors import (ConfigurationError, DegenerateFieldError, FormatError,
                     NumericError, ShapeError, SolverError, TrainingError)
from .grids import Grid
from .model import SingularNetConfig, SvdNoConfig
from .objectives import METRICS_CSV_HEADER, beta_variability, mean_l2_relative_error
from .solvers import PdeSpec, periodic_grid_1d
from .training import (ABLATION_CSV_HEADER, RunConfig, dataset_pairs,
                       evaluate_checkpoint, model_from_checkpoint, run_ablation,
                       train, write_ablation_csv)

OUT_ROOT_ENV = "SVDNO_OUT_ROOT"

PDE_NAMES = {
    "diffusion-reaction": "diffusion_reaction_1d",
    "allen-cahn": "allen_cahn_1d",
    "darcy": "darcy_2d",
}
ABLATION_NAMES = {"dense-mlp": "dense_mlp", "mercer": "mercer", "no-ortho": "no_ortho"}


class UsageError(Exception):
    pass


def _resolve(path):
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


# ---------------------------------------------------------------------------
# config handling

_MODEL_KEYS = {
    "model.rank": ("rank", int),
    "model.lifting_dim": ("lifting_dim", int),
    "model.blocks": ("blocks", int),
    "model.kernel_kind": ("kernel_kind", str),
    "model.shared_basis": ("shared_basis", None),
    "model.basis_dim": ("basis_dim", int),
    "model.net_kind": ("net_kind", str),
    "model.net_layers": ("net_layers", int),
    "model.hidden_dim": ("hidden_dim", int),
}
_TRAIN_KEYS = {
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.lr": ("lr", float),
    "train.ortho_weight": ("ortho_weight", float),
    "train.seed": ("seed", int),
    "train.eval_every": ("eval_every", int),
}


def _parse_bool(s):
    if str(s).lower() in ("1", "true", "yes"):
        return True
    if str(s).lower() in ("0", "false", "no"):
        return False
    raise UsageError(f"expected a boolean, got {s!r}")


def parse_config_file(path):
    """Flat `key = value` document with '#' comments and dotted namespaces."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _effective_config(args, file_values):
    """Merge defaults <- config file <- flags; returns (RunConfig kwargs, flat echo)."""
    model_kwargs = {}
    train_kwargs = {}

    def put(key, raw):
        if key in _MODEL_KEYS:
            name, conv = _MODEL_KEYS[key]
            model_kwargs[name] = _parse_bool(raw) if conv is None else conv(raw)
        elif key in _TRAIN_KEYS:
            name, conv = _TRAIN_KEYS[key]
            train_kwargs[name] = conv(raw)
        else:
            raise UsageError(f"unknown config key {key!r}")

    for key, raw in file_values.items():
        put(key, raw)
    flag_map = {
        "rank": "model.rank", "lifting_dim": "model.lifting_dim",
        "blocks": "model.blocks", "kernel_kind": "model.kernel_kind",
        "shared_basis": "model.shared_basis", "basis_dim": "model.basis_dim",
        "net_kind": "model.net_kind", "net_layers": "model.net_layers",
        "hidden_dim": "model.hidden_dim", "epochs": "train.epochs",
        "batch_size": "train.batch_size", "lr": "train.lr",
        "ortho_weight": "train.ortho_weight", "seed": "train.seed",
        "eval_every": "train.eval_every",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            put(key, val)
    net_fields = {k: v for k, v in model_kwargs.items()
                  if k in ("net_kind", "net_layers", "hidden_dim")}
    for k in net_fields:
        model_kwargs.pop(k)
    net = SingularNetConfig(
        kind=net_fields.get("net_kind", "sine_mlp"),
        num_layers=net_fields.get("net_layers", 3),
        hidden_dim=net_fields.get("hidden_dim", 64))
    model = SvdNoConfig(singular_net=net, **model_kwargs)
    return model, train_kwargs


def _write_effective_config(outdir, cfg: RunConfig):
    lines = {
        "data": cfg.dataset,
        "out": cfg.outdir,
        "model.rank": cfg.model.rank,
        "model.lifting_dim": cfg.model.lifting_dim,
        "model.blocks": cfg.model.blocks,
        "model.kernel_kind": cfg.model.kernel_kind,
        "model.shared_basis": cfg.model.shared_basis,
        "model.basis_dim": cfg.model.basis_dim,
        "model.net_kind": cfg.model.singular_net.kind,
        "model.net_layers": cfg.model.singular_net.num_layers,
        "model.hidden_dim": cfg.model.singular_net.hidden_dim,
        "train.epochs": cfg.epochs,
        "train.batch_size": cfg.batch_size,
        "train.lr": cfg.lr,
        "train.ortho_weight": cfg.ortho_weight,
        "train.seed": cfg.seed,
        "train.eval_every": cfg.eval_every,
    }
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "effective_config"), "w", encoding="utf-8",
              newline="\n") as fh:
        for key in sorted(lines):
            fh.write(f"{key} = {lines[key]}\n")


def _run_config(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    model, train_kwargs = _effective_config(args, file_values)
    outdir = _resolve(args.out)
    cfg = RunConfig(dataset=args.data, model=model, outdir=outdir, **train_kwargs)
    _write_effective_config(outdir, cfg)
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def _parse_grid(spec, pde):
    parts = spec.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}") from None
    if pde == "darcy_2d":
        if len(dims) == 1:
            dims = [dims[0], dims[0]]
        if len(dims) != 2:
            raise UsageError("darcy needs a 2D grid, e.g. 32x32")
        return Grid(tuple(dims))
    if len(dims) != 1:
        raise UsageError(f"{pde} needs a 1D grid")
    if pde == "allen_cahn_1d":
        return Grid((dims[0],), ((-1.0, 1.0),))
    return periodic_grid_1d(dims[0])


def cmd_generate(args):
    kind = PDE_NAMES[args.pde]
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    grid = _parse_grid(args.grid, kind)
    spec = PdeSpec(kind=kind, grid=grid, t_final=args.t_final,
                   time_slices=args.time_slices)
    ds = build_dataset(spec, args.n, args.seed, threads=args.threads)
    out = _resolve(args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_dataset(out, ds)
    json_size = os.path.getsize(out + ".json")
    bin_size = os.path.getsize(out + ".bin")
    print(f"wrote {len(ds)} samples on grid {'x'.join(map(str, grid.extents))} "
          f"to {out}.json ({json_size} B) + {out}.bin ({bin_size} B)")
    return 0


def cmd_train(args):
    cfg = _run_config(args)
    result, _ = train(cfg)
    print(METRICS_CSV_HEADER)
    for rec in result.metrics:
        print(rec.csv_row())
    print(f"best validation epoch: {result.best_epoch}")
    print(f"checkpoints: {cfg.outdir}/best.ckpt {cfg.outdir}/final.ckpt")
    return 0


def cmd_eval(args):
    if not os.path.exists(args.ckpt):
        raise UsageError(f"checkpoint not found: {args.ckpt}")
    ds = read_dataset(args.data)
    rec = evaluate_checkpoint(args.ckpt, ds, args.split)
    print(METRICS_CSV_HEADER)
    print(rec.csv_row())
    return 0


def cmd_ablate(args):
    cfg = _run_config(args)
    kind = ABLATION_NAMES[args.kind]
    rows = run_ablation(cfg, kind, seeds=range(args.seeds))
    path = os.path.join(cfg.outdir, "ablation.csv")
    write_ablation_csv(path, rows)
    print(ABLATION_CSV_HEADER)
    with open(path, encoding="utf-8") as fh:
        print(fh.read().split("\n", 1)[1].rstrip())
    return 0


def cmd_scaling(args):
    ranks = [int(r) for r in args.ranks.split(",")]
    sizes = [int(n) for n in args.sizes.split(",")]
    if len(ranks) < 3:
        raise UsageError("need at least 3 rank values")
    outdir = _resolve(args.out)
    os.makedirs(outdir, exist_ok=True)
    points = []
    for n in sizes:
        for rank in ranks:
            points.append(measure_integral_layer(n, args.d, rank,
                                                 repeats=args.repeats))
    path = os.path.join(outdir, "scaling.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank,n,layer_ms,peak_bytes\n")
        for p in points:
            fh.write(f"{p.rank},{p.n},{p.layer_ms!r},{p.alloc_bytes!r}\n")
    for n in sizes:
        sub = [p for p in points if p.n == n]
        r2_time = linear_fit_r2([p.rank for p in sub], [p.layer_ms for p in sub])
        r2_mem = linear_fit_r2([p.rank for p in sub], [p.alloc_bytes for p in sub])
        print(f"n={n}: time-vs-rank R^2 = {r2_time:.4f}, memory-vs-rank R^2 = {r2_mem:.4f}")
    sane = all(zero_padding_consistent(sizes[0], args.d, r1, r2)
               for r1, r2 in zip(ranks[:-1], ranks[1:]))
    print(f"zero-padding sanity: {'ok' if sane else 'FAILED'}")
    print(f"wrote {path}")
    return 0 if sane else 3


def cmd_variability(args):
    ds = read_dataset(args.data)
    d_x = ds.spec.grid.ndim
    time_major = ds.spec.kind != "darcy_2d"
    print(f"offsets H = {{1,...,5}}^{d_x}")
    betas = []
    for i, (_, u) in enumerate(ds.samples):
        try:
            b = beta_variability(u, ds.spec.grid, time_major=time_major)
        except DegenerateFieldError:
            print(f"warning: sample {i} has a constant field, beta = NaN",
                  file=sys.stderr)
            b = float("nan")
        betas.append(b)
        print(f"sample {i}: beta = {b!r}")
    finite = [b for b in betas if np.isfinite(b)]
    print(f"mean beta = {float(np.mean(finite)) if finite else float('nan')!r}")
    if args.ckpt:
        model, _ = model_from_checkpoint(args.ckpt)
        if tuple(model.grid.extents) != tuple(ds.spec.grid.extents):
            raise ShapeError("checkpoint grid does not match dataset grid")
        outdir = _resolve(args.out)
        os.makedirs(outdir, exist_ok=True)
        path = os.path.join(outdir, "variability.csv")
        pairs = dataset_pairs(ds, "test")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,beta,l2_rel_pct\n")
            for i, (a, target) in zip(ds.splits["test"], pairs):
                err = mean_l2_relative_error(target[None], model.predict(a)[None])
                fh.write(f"{i},{betas[i]!r},{err!r}\n")
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="svdno", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a PDE dataset")
    g.add_argument("--pde", required=True, choices=sorted(PDE_NAMES))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--grid", default="64")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--time-slices", type=int, default=11)
    g.add_argument("--t-final", type=float, default=1.0)
    g.add_argument("--threads", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    def add_train_flags(sp):
        sp.add_argument("--config")
        sp.add_argument("--data", required=True)
        sp.add_argument("--out", required=True)
        for flag, typ in (("--epochs", int), ("--batch-size", int), ("--lr", float),
                          ("--ortho-weight", float), ("--seed", int),
                          ("--eval-every", int), ("--rank", int),
                          ("--lifting-dim", int), ("--blocks", int),
                          ("--basis-dim", int), ("--net-layers", int),
                          ("--hidden-dim", int)):
            sp.add_argument(flag, type=typ)
        sp.add_argument("--kernel-kind", choices=("svd", "mercer", "dense_mlp"))
        sp.add_argument("--net-kind", choices=("sine_mlp", "recurrent_1d"))
        sp.add_argument("--shared-basis", choices=("true", "false"))

    t = sub.add_parser("train", help="train a model")
    add_train_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="paired base-vs-variant training runs")
    add_train_flags(a)
    a.add_argument("--kind", required=True, choices=sorted(ABLATION_NAMES))
    a.add_argument("--seeds", type=int, default=1)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("scaling", help="measure integral-layer cost vs rank")
    s.add_argument("--ranks", default="2,4,8,16")
    s.add_argument("--sizes", default="4096")
    s.add_argument("--d", type=int, default=16)
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scaling)

    v = sub.add_parser("variability", help="spatial-variability statistic")
    v.add_argument("--data", required=True)
    v.add_argument("--ckpt")
    v.add_argument("--out", default=".")
    v.set_defaults(func=cmd_variability)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (SolverError, TrainingError, NumericError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
