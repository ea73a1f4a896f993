import os

import numpy as np
import pytest

from svdno.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rc = main(["generate", "--pde", "diffusion-reaction", "--n", "12",
               "--grid", "16", "--seed", "0", "--time-slices", "3",
               "--out", str(d / "ds")])
    assert rc == 0
    return d


def run_train(workdir, out, extra=()):
    return main(["train", "--data", str(workdir / "ds"), "--out", str(out),
                 "--epochs", "2", "--batch-size", "4", "--rank", "2",
                 "--lifting-dim", "4", "--blocks", "2", "--hidden-dim", "8",
                 "--net-layers", "1", *extra])


def test_generate_writes_pair(workdir):
    assert (workdir / "ds.json").exists() and (workdir / "ds.bin").exists()


def test_generate_idempotent(workdir, tmp_path):
    rc = main(["generate", "--pde", "diffusion-reaction", "--n", "12",
               "--grid", "16", "--seed", "0", "--time-slices", "3",
               "--out", str(tmp_path / "ds2")])
    assert rc == 0
    assert (tmp_path / "ds2.bin").read_bytes() == (workdir / "ds.bin").read_bytes()


def test_generate_rejects_unknown_pde(capsys):
    assert main(["generate", "--pde", "bogus", "--n", "1", "--out", "x"]) == 2


def test_generate_rejects_zero_samples(workdir, tmp_path):
    rc = main(["generate", "--pde", "diffusion-reaction", "--n", "0",
               "--out", str(tmp_path / "z")])
    assert rc == 2


def test_train_and_eval(workdir, tmp_path, capsys):
    assert run_train(workdir, tmp_path / "run") == 0
    out = capsys.readouterr().out
    assert "epoch,split,mean_l2_rel_pct,l_inf,l_ortho,wall_ms" in out
    assert (tmp_path / "run" / "effective_config").exists()
    rc = main(["eval", "--ckpt", str(tmp_path / "run" / "best.ckpt"),
               "--data", str(workdir / "ds"), "--split", "test"])
    assert rc == 0


def test_train_zero_epochs_writes_init_checkpoint(workdir, tmp_path):
    rc = main(["train", "--data", str(workdir / "ds"),
               "--out", str(tmp_path / "r0"), "--epochs", "0",
               "--rank", "2", "--lifting-dim", "4", "--blocks", "1",
               "--hidden-dim", "8", "--net-layers", "1"])
    assert rc == 0
    assert (tmp_path / "r0" / "final.ckpt").exists()


def test_train_metrics_deterministic(workdir, tmp_path):
    for tag in ("m1", "m2"):
        assert run_train(workdir, tmp_path / tag) == 0
    mask = lambda p: [",".join(line.split(",")[:5])
                      for line in (p / "metrics.csv").read_text().splitlines()]
    assert mask(tmp_path / "m1") == mask(tmp_path / "m2")


def test_eval_missing_checkpoint(workdir):
    assert main(["eval", "--ckpt", "does_not_exist.ckpt",
                 "--data", str(workdir / "ds")]) == 2


def test_eval_grid_mismatch_exit_4(workdir, tmp_path):
    assert run_train(workdir, tmp_path / "run") == 0
    rc = main(["generate", "--pde", "diffusion-reaction", "--n", "10",
               "--grid", "32", "--time-slices", "3", "--out", str(tmp_path / "big")])
    assert rc == 0
    rc = main(["eval", "--ckpt", str(tmp_path / "run" / "best.ckpt"),
               "--data", str(tmp_path / "big")])
    assert rc == 4


def test_config_file_and_flag_precedence(workdir, tmp_path):
    cfgfile = tmp_path / "run.conf"
    cfgfile.write_text("model.rank = 2\nmodel.lifting_dim = 4\n"
                       "model.blocks = 1\nmodel.hidden_dim = 8\n"
                       "model.net_layers = 1\ntrain.epochs = 5\n")
    rc = main(["train", "--config", str(cfgfile), "--data", str(workdir / "ds"),
               "--out", str(tmp_path / "rc"), "--epochs", "1"])
    assert rc == 0
    text = (tmp_path / "rc" / "effective_config").read_text()
    assert "train.epochs = 1" in text  # flag wins over the file
    assert "model.rank = 2" in text


def test_unknown_config_key_rejected(workdir, tmp_path):
    cfgfile = tmp_path / "bad.conf"
    cfgfile.write_text("model.bogus = 3\n")
    rc = main(["train", "--config", str(cfgfile), "--data", str(workdir / "ds"),
               "--out", str(tmp_path / "rb")])
    assert rc == 2


def test_ablate_unknown_kind(workdir, tmp_path):
    rc = main(["ablate", "--data", str(workdir / "ds"),
               "--out", str(tmp_path / "ab"), "--kind", "bogus"])
    assert rc == 2


def test_ablate_rerun_identical_csv(workdir, tmp_path):
    args = ["--data", str(workdir / "ds"), "--kind", "no-ortho", "--seeds", "1",
            "--epochs", "1", "--batch-size", "4", "--rank", "2",
            "--lifting-dim", "4", "--blocks", "1", "--hidden-dim", "8",
            "--net-layers", "1"]
    texts = []
    for tag in ("a1", "a2"):
        assert main(["ablate", "--out", str(tmp_path / tag), *args]) == 0
        rows = (tmp_path / tag / "ablation.csv").read_text().splitlines()
        texts.append([",".join(r.split(",")[:5]) for r in rows])  # mask timings
    assert texts[0] == texts[1]


def test_scaling_csv_layout(tmp_path, capsys):
    rc = main(["scaling", "--ranks", "2,4,8", "--sizes", "128", "--d", "4",
               "--repeats", "2", "--out", str(tmp_path / "sc")])
    assert rc == 0
    lines = (tmp_path / "sc" / "scaling.csv").read_text().splitlines()
    assert lines[0] == "rank,n,layer_ms,peak_bytes"
    assert len(lines) == 4
    out = capsys.readouterr().out
    assert "R^2" in out and "zero-padding sanity: ok" in out


def test_variability_echoes_offsets(workdir, capsys):
    rc = main(["variability", "--data", str(workdir / "ds")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "H = {1,...,5}^1" in out
    assert "beta" in out


def test_out_root_env(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("SVDNO_OUT_ROOT", str(tmp_path))
    rc = main(["generate", "--pde", "diffusion-reaction", "--n", "4",
               "--grid", "16", "--time-slices", "2", "--out", "nested/ds"])
    assert rc == 0
    assert (tmp_path / "nested" / "ds.json").exists()
