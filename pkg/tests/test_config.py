import json
from pathlib import Path

import pytest

from bcs_meissner.config import ConfigError, RunConfig, load_config, parse_config

DEMO = Path(__file__).resolve().parents[1] / "configs" / "demo.ini"


def test_defaults():
    cfg = RunConfig()
    assert cfg.grid.n_per_axis == 64 and cfg.model.gamma == 10.0
    assert cfg.solver.starts == ("zero", "screened")
    assert load_config(None) == cfg


def test_demo_config_loads():
    cfg = load_config(DEMO)
    assert cfg.model.lam == 0.0
    assert cfg.external.center == (0.0, 0.0, 0.8)
    assert cfg.sweep.axes == (("gamma", 1.0, 12.0, 12),)
    assert cfg.source_dir == str(DEMO.parent)


def test_lambda_key():
    assert parse_config("[model]\nlambda = 0.3\n").model.lam == 0.3


def test_field_section_attribute():
    cfg = parse_config("[field]\nkind = constant\nstrength = 2\n")
    assert cfg.bfield.kind == "constant" and cfg.bfield.strength == 2.0


@pytest.mark.parametrize(
    "text,match",
    [
        ("[grid]\nn_per_axs = 64\n", "unknown key"),
        ("[gird]\nn_per_axis = 64\n", "unknown section"),
        ("[grid]\nn_per_axis = 63\n", "even"),
        ("[grid]\nn_per_axis = 8\n", "even"),
        ("[grid]\nn_per_axis = sixty\n", "n_per_axis"),
        ("[model]\nbeta = 0\n", "positive"),
        ("[model]\nbeta = nan\n", "finite"),
        ("[model]\ndispersion = nearest_neighbor\nlambda = 1\n", "lambda"),
        ("[solver]\ntol = 0\n", "tol"),
        ("[solver]\ndamping = 1.5\n", "damping"),
        ("[solver]\nstarts = zero, random\n", "starts"),
        ("[solver]\nmode = B\n", "mode"),
        ("[sweep]\ngamma = 1:12\n", "start:stop:steps"),
        ("[sweep]\ngamma = 1:12:0\n", "empty"),
        ("[sweep]\naxes = 1\n", "unknown key"),
        ("[external]\ncenter = 0, 0\n", "center"),
        ("[external]\nkind = file\n", "path"),
        ("[output]\nfigures = maybe\n", "boolean"),
        ("not an ini file", "unreadable"),
    ],
)
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_hash_is_stable_and_sensitive():
    a = parse_config("[model]\ngamma = 10\n")
    b = parse_config("[model]\ngamma = 10.0\n\n# comment\n")
    c = parse_config("[model]\ngamma = 9\n")
    assert a.sha256 == b.sha256 != c.sha256
    assert json.loads(a.canonical_json())["model"]["gamma"] == 10.0


def test_hash_ignores_config_location(tmp_path):
    text = DEMO.read_text()
    p = tmp_path / "copy.ini"
    p.write_text(text)
    assert load_config(p).sha256 == load_config(DEMO).sha256


def test_overrides():
    cfg = RunConfig().with_overrides(grid=32, seed=7, threads=2, out="x")
    assert (cfg.grid.n_per_axis, cfg.run.seed, cfg.run.threads, cfg.output.directory) == (32, 7, 2, "x")
    assert cfg.sha256 != RunConfig().sha256
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(grid=33)


def test_sweep_points_order():
    cfg = parse_config("[sweep]\nbeta = 1:2:2\ngamma = 5:7:3\n")
    pts = cfg.sweep_points()
    assert len(pts) == 6
    assert pts[0] == {"beta": 1.0, "gamma": 5.0} and pts[1] == {"beta": 1.0, "gamma": 6.0}
    assert pts[-1] == {"beta": 2.0, "gamma": 7.0}


def test_resolve_path(tmp_path):
    cfg = parse_config("", source_dir=str(tmp_path))
    assert cfg.resolve_path("a.vfld1") == tmp_path / "a.vfld1"
    assert cfg.resolve_path("/abs/a.vfld1") == Path("/abs/a.vfld1")
