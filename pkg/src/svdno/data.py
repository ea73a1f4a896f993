"""Seeded dataset generation, train/val/test splitting and on-disk persistence.

On disk a dataset is a `<name>.json` metadata file plus a `<name>.bin` payload:
for each sample in index order, the input field's values then the solution's
values, row-major little-endian float64, no padding.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError
from .solvers import PdeSpec, sample_darcy_coefficient, sample_initial_condition_1d, \
    solve_sample

__all__ = ["Dataset", "build_dataset", "write_dataset", "read_dataset"]

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    spec: PdeSpec
    samples: list  # [(a, u)] as float64 arrays
    seed: int
    splits: dict   # split name -> list of sample indices

    def __len__(self):
        return len(self.samples)

    def split_samples(self, split):
        if split not in self.splits:
            raise ConfigurationError(f"unknown split {split!r}")
        return [self.samples[i] for i in self.splits[split]]

    @property
    def a_shape(self):
        return self.samples[0][0].shape

    @property
    def u_shape(self):
        return self.samples[0][1].shape


def _sample_input(spec: PdeSpec, seed):
    if spec.kind == "diffusion_reaction_1d":
        return sample_initial_condition_1d(spec.grid, seed, target="diffusion_reaction")
    if spec.kind == "allen_cahn_1d":
        return sample_initial_condition_1d(spec.grid, seed, target="allen_cahn")
    c = spec.constants
    return sample_darcy_coefficient(spec.grid, seed, length_scale=c["length_scale"],
                                    low=c["perm_low"], high=c["perm_high"])


def _make_splits(n, seed, fracs):
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions {fracs} must sum to 1")
    if n < 10:
        warnings.warn(f"only {n} samples: enforcing at least one sample per split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, round(n * fracs[1]))
    n_test = max(1, round(n * fracs[2]))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ConfigurationError(f"cannot split {n} samples into three non-empty parts")
    return {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train:n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val:]),
    }


def _solve_one(spec, seed, i):
    a = _sample_input(spec, seed ^ i)
    return np.asarray(a, dtype=np.float64), np.asarray(solve_sample(spec, a),
                                                       dtype=np.float64)


def build_dataset(spec: PdeSpec, n_samples, seed, split_fracs=(0.8, 0.1, 0.1),
                  threads=1) -> Dataset:
    """Generate `n_samples` solved pairs; per-sample seeds are seed XOR index.

    Generation is embarrassingly parallel; output order is by sample index
    regardless of `threads`."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(lambda i: _solve_one(spec, seed, i),
                                    range(n_samples)))
    else:
        samples = [_solve_one(spec, seed, i) for i in range(n_samples)]
    return Dataset(spec=spec, samples=samples, seed=int(seed),
                   splits=_make_splits(n_samples, seed, split_fracs))


def _base(path):
    path = os.fspath(path)
    for ext in (".json", ".bin"):
        if path.endswith(ext):
            return path[:-len(ext)]
    return path


def write_dataset(path, ds: Dataset):
    """Write `<path>.json` + `<path>.bin`; round-trip is bit-exact."""
    base = _base(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "pde": ds.spec.to_dict(),
        "dtype": "f64",
        "n_samples": len(ds.samples),
        "a_shape": list(ds.a_shape),
        "u_shape": list(ds.u_shape),
        "seed": ds.seed,
        "splits": {k: list(v) for k, v in ds.splits.items()},
    }
    with open(base + ".json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(base + ".bin", "wb") as fh:
        for a, u in ds.samples:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def read_dataset(path) -> Dataset:
    base = _base(path)
    try:
        with open(base + ".json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{base}.json: corrupt metadata: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{base}.json: unsupported format version")
    if meta.get("dtype") != "f64":
        raise FormatError(f"{base}.json: unsupported dtype {meta.get('dtype')!r}")
    spec = PdeSpec.from_dict(meta["pde"])
    a_shape = tuple(meta["a_shape"])
    u_shape = tuple(meta["u_shape"])
    n = int(meta["n_samples"])
    a_count = int(np.prod(a_shape))
    u_count = int(np.prod(u_shape))
    grid_points = spec.grid.num_points
    if a_count % grid_points != 0 or u_count % grid_points != 0:
        raise FormatError(f"{base}.json: sample shapes {a_shape}/{u_shape} inconsistent "
                          f"with grid of {grid_points} points")
    per_sample = (a_count + u_count) * 8
    with open(base + ".bin", "rb") as fh:
        raw = fh.read()
    if len(raw) != n * per_sample:
        raise FormatError(f"{base}.bin: expected {n * per_sample} bytes, found "
                          f"{len(raw)} (truncation at offset {len(raw)})")
    samples = []
    off = 0
    for _ in range(n):
        a = np.frombuffer(raw, dtype="<f8", count=a_count, offset=off).reshape(a_shape)
        off += a_count * 8
        u = np.frombuffer(raw, dtype="<f8", count=u_count, offset=off).reshape(u_shape)
        off += u_count * 8
        samples.append((a.copy(), u.copy()))
    splits = {k: [int(i) for i in v] for k, v in meta["splits"].items()}
    covered = sorted(i for v in splits.values() for i in v)
    if covered != list(range(n)):
        raise FormatError(f"{base}.json: splits do not partition 0..{n - 1}")
    return Dataset(spec=spec, samples=samples, seed=int(meta["seed"]), splits=splits)
