import filecmp
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from hicon import __version__
from hicon.cli import main
from hicon.config import load_config
from hicon.pipeline import Pipeline

TINY = {
    "geometry": {"center": [0.5, 0.5], "a": 0.2, "b": 0.15, "target_h": 0.12, "boundary_segments": 16},
    "lame": {"lambda": 1.0, "mu": 0.1},
    "n_modes": 4,
    "epsilons": [1.0e-3, 1.0e-4],
    "z_grid": {"n_points": 60},
    "n_directions": 4,
    "refine": 0,
    "element_order": 2,
    "steklov": {"chi_norms": [0.02, 0.04], "directions": [[1.0, 0.0]], "k": 3, "refine": 0},
}
STAGE_OF = {
    "bloch_eigs.csv": "bloch",
    "beta_eigs.csv": "zhikov",
    "band_gaps.csv": "zhikov",
    "dispersion_eps1e-03.csv": "dispersion",
    "dispersion_eps1e-04.csv": "dispersion",
    "steklov.csv": "steklov",
}
OUTPUTS = ["bloch_eigs.csv", "amacro.json", "beta_eigs.csv", "band_gaps.csv", "dispersion_eps1e-03.csv", "dispersion_eps1e-04.csv", "steklov.csv", "steklov_rates.json"]


def write_config(tmp_path, **changes) -> Path:
    d = yaml.safe_load(yaml.safe_dump(TINY))
    for k, v in changes.items():
        d[k] = v
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(d))
    return p


@pytest.fixture
def no_env_cache(monkeypatch):
    monkeypatch.delenv("HICON_CACHE", raising=False)


def test_pipeline_emits_all_outputs_with_headers(tmp_path, no_env_cache):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out), "--cache", str(tmp_path / "c")]) == 0
    digest = load_config(cfg).digest()
    for name in OUTPUTS:
        text = (out / name).read_text()
        if name.endswith(".csv"):
            assert text.splitlines()[0] == f"# hicon {__version__} config={digest} stage={STAGE_OF[name]}"
        else:
            assert f'"_config": "{digest}"' in text and f"hicon {__version__}" in text


def test_cached_rerun_is_byte_identical(tmp_path, no_env_cache):
    cfg = write_config(tmp_path)
    cache = str(tmp_path / "c")
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "a"), "--cache", cache]) == 0
    c = load_config(cfg)
    from hicon.store import ArtifactStore

    pipe = Pipeline(c, tmp_path / "b", ArtifactStore(cache))
    pipe.run("pipeline")
    assert {"bloch", "macro", "steklov"} <= set(pipe.cache_hits)
    for name in OUTPUTS:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name


def test_env_cache_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("HICON_CACHE", str(tmp_path / "env"))
    cfg = write_config(tmp_path)
    assert main(["bloch", "--config", str(cfg), "--out", str(tmp_path / "o"), "--cache", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "bloch").is_dir()
    assert not (tmp_path / "flag").exists()


def test_no_cache_writes_nothing(tmp_path, no_env_cache):
    cfg = write_config(tmp_path)
    assert main(["macro", "--config", str(cfg), "--out", str(tmp_path / "o"), "--cache", str(tmp_path / "c"), "--no-cache"]) == 0
    assert not (tmp_path / "c").exists()


def test_touching_ellipse_exits_2(tmp_path, capsys):
    geo = dict(TINY["geometry"], center=[0.9, 0.5])
    cfg = write_config(tmp_path, geometry=geo)
    assert main(["pipeline", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "o")]) == 2
    assert "GeometryError" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_and_malformed_config_exit_2(tmp_path):
    assert main(["bloch", "--config", str(tmp_path / "nope.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("geometry: {a: 0.1, b: 0.1}\nunknown_key: 1\n")
    assert main(["bloch", "--config", str(bad)]) == 2


def test_numeric_failure_exits_3_and_removes_partial_outputs(tmp_path, capsys, no_env_cache):
    # an explicit z grid containing a pole makes the zhikov stage fail after
    # bloch and macro have already written their files
    cfg = write_config(tmp_path)
    pipe = Pipeline(load_config(cfg), tmp_path / "probe")
    pole = float(pipe.zhikov_function().poles[0])
    cfg = write_config(tmp_path, z_grid={"values": [0.5 * pole, pole, 1.5 * pole]})
    out = tmp_path / "o"
    assert main(["pipeline", "--config", str(cfg), "--no-cache", "--out", str(out)]) == 3
    err = capsys.readouterr().err
    assert "zhikov_function failed" in err and "PoleError" in err
    assert not any(out.glob("*"))


def test_refine_and_order_overrides(tmp_path, no_env_cache):
    cfg = write_config(tmp_path)
    mesh_out = tmp_path / "m.json"
    rc = main(["mesh", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "o"), "--refine", "1", "--element-order", "1", "--mesh-out", str(mesh_out)])
    assert rc == 0
    import json

    n_tri = len(json.loads(mesh_out.read_text())["triangles"])
    base = Pipeline(load_config(cfg), tmp_path / "x").mesh(0)
    assert n_tri == 4 * len(base.triangles)


def test_mesh_in_round_trip(tmp_path, no_env_cache):
    cfg = write_config(tmp_path)
    m = tmp_path / "m.json"
    assert main(["mesh", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "a"), "--mesh-out", str(m)]) == 0
    assert main(["bloch", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "b"), "--mesh-in", str(m)]) == 0
    assert main(["bloch", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "c")]) == 0
    a = (tmp_path / "b" / "bloch_eigs.csv").read_text().splitlines()[1:]
    b = (tmp_path / "c" / "bloch_eigs.csv").read_text().splitlines()[1:]
    assert a == b


def test_threads_flag_gives_identical_steklov(tmp_path, no_env_cache):
    cfg = write_config(tmp_path, steklov=dict(TINY["steklov"], directions=[[1.0, 0.0], [0.0, 1.0]]))
    assert main(["steklov", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "a")]) == 0
    assert main(["steklov", "--config", str(cfg), "--no-cache", "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    assert filecmp.cmp(tmp_path / "a" / "steklov.csv", tmp_path / "b" / "steklov.csv", shallow=False)


def test_validate_reports_table(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["validate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out and "FAIL" not in out


def test_validate_flags_negative_lambda(tmp_path, capsys):
    cfg = write_config(tmp_path, lame={"lambda": -1.0, "mu": 0.1})
    assert main(["validate", "--config", str(cfg)]) == 1
    out = capsys.readouterr().out
    assert any(line.startswith("lame_nonnegative") and "FAIL" in line for line in out.splitlines())


def test_validate_flags_pole_on_grid(tmp_path, capsys):
    cfg = write_config(tmp_path)
    pole = float(Pipeline(load_config(cfg), tmp_path / "p").zhikov_function().poles[0])
    cfg = write_config(tmp_path, z_grid={"values": [0.5 * pole, pole]})
    assert main(["validate", "--config", str(cfg)]) == 1
    out = capsys.readouterr().out
    assert any(line.startswith("z_grid_avoids_poles") and "FAIL" in line for line in out.splitlines())
