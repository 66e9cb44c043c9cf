import json

import numpy as np
import pytest

from xsrc import io
from xsrc.cli import run
from xsrc.config import RunConfig, dump, load, parse_text
from xsrc.errors import ConfigError


# -- config ----------------------------------------------------------------------


def test_config_defaults_validate():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.fd_scheme().half_order == 4
    assert cfg.symbol_ratios() == [0.0, 0.25, 0.5]


def test_config_text_and_aliases():
    cfg = parse_text("run.threads = 2  # comment\n\nlambda.delta_z=-60\ninvert.compare = yes\n")
    assert cfg.run.threads == 2 and cfg.lam.delta_z == -60.0 and cfg.invert.compare is True


@pytest.mark.parametrize("text", ["run.bogus = 1", "nosection = 1", "weird.key = 1", "run.threads = two",
                                  "just words"])
def test_config_rejects_bad_lines(text):
    with pytest.raises(ConfigError):
        parse_text(text)


@pytest.mark.parametrize("key,val", [("scenario.name", "mars"), ("invert.method", "lbfgs"),
                                     ("run.threads", "0"), ("symbol.ratios", "0,1.5"),
                                     ("scheme.k", "0"), ("invert.alpha", "-1")])
def test_config_validation_errors(key, val):
    cfg = RunConfig()
    cfg.set(key, val)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_config_dump_round_trip(tmp_path):
    cfg = parse_text("scenario.name = small-lens\ninvert.alpha = 0.001\n")
    p = tmp_path / "c.txt"
    p.write_text(dump(cfg))
    assert load(p).flat() == cfg.flat()


# -- commands --------------------------------------------------------------------


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = run([*argv, "--out", str(out)])
    return code, out


def test_unknown_key_exits_2(tmp_path, capsys):
    code, _ = _run(tmp_path, "simulate", "--scenario", "small-homog", "run.nonsense=1")
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def test_bad_verb_and_flag_exit_2(tmp_path):
    assert run(["teleport"]) == 2
    assert run(["simulate", "--scenario", "small-homog", "--alpha", "abc"]) == 2


def test_simulate_small_writes_outputs(tmp_path):
    code, out = _run(tmp_path, "simulate", "--scenario", "small-homog")
    assert code == 0
    d = io.read_gather(out / "d.xsg")
    assert d.shape == (61, 401) and d.depth_z == 400.0
    for name in ("h_s", "f_s", "p_s", "vz_s"):
        assert (out / f"{name}.xsg").exists() and (out / f"{name}.pgm").exists()
    man = io.read_manifest(out / "manifest.json")
    assert man["params"]["scenario.name"] == "small-homog"
    assert man["files"]["d.xsg"] == io.sha256(out / "d.xsg")
    assert man["results"]["exit_code"] == 0


def test_simulate_paper_lens_has_201_traces(tmp_path):
    code, out = _run(tmp_path, "simulate", "--scenario", "paper-lens")
    assert code == 0
    assert io.read_gather(out / "d.xsg").ntr == 201


def test_zero_amplitude_gives_zero_outputs(tmp_path):
    code, out = _run(tmp_path, "simulate", "--scenario", "small-homog", "scenario.amplitude=0")
    assert code == 0
    for name in ("d", "h_s", "f_s"):
        assert not np.any(io.read_gather(out / f"{name}.xsg").values)


def test_rerun_from_manifest_is_bit_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run(["simulate", "--scenario", "small-lens", "--out", str(a)]) == 0
    assert run(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    ma, mb = (io.read_manifest(p / "manifest.json")["files"] for p in (a, b))
    ma.pop("config.txt")
    mb.pop("config.txt")
    assert ma == mb and "d.xsg" in ma


def test_dottest_small_passes(tmp_path):
    code, out = _run(tmp_path, "dottest", "--scenario", "small-homog", "dottest.trials=2",
                     "dottest.nt=60")
    assert code == 0
    rows = (out / "dottest.csv").read_text().splitlines()
    assert rows[0].startswith("operator")
    names = {r.split(",")[0] for r in rows[1:]}
    assert {"S", "V", "Wm", "Wm_inv", "N", "M_inv"} <= names


def test_dottest_threshold_breach_exits_4(tmp_path):
    code, _ = _run(tmp_path, "dottest", "--scenario", "small-homog", "dottest.trials=1",
                   "dottest.nt=40", "dottest.threshold=0")
    assert code == 4


def test_invert_approx_writes_products(tmp_path):
    code, out = _run(tmp_path, "invert", "--scenario", "small-lens", "--method", "approx",
                     "--invert-medium", "homog")
    assert code == 0
    for name in ("h", "resimulated", "difference"):
        assert (out / f"{name}.xsg").exists()
    # the difference raster shares the data raster's grey scale
    assert io.read_pgm_clip(out / "difference.pgm") == io.read_pgm_clip(out / "data.pgm")
    man = io.read_manifest(out / "manifest.json")
    assert man["results"]["in_band_error"] <= 0.3


def test_invert_pcg_with_compare(tmp_path):
    code, out = _run(tmp_path, "invert", "--scenario", "small-homog", "--method", "pcg", "--alpha", "0",
                     "--max-iter", "3", "--compare", "invert.cg_iter=6")
    assert code == 0
    header = (out / "compare.csv").read_text().splitlines()[0]
    assert "pcg" in header and "cg" in header
    assert (out / "residuals.csv").read_text().startswith("iter,normal_residual,data_misfit,wall_seconds")
    assert "speedup" in io.read_manifest(out / "manifest.json")["results"]


def test_lambda_linearity_and_outputs(tmp_path):
    code, out = _run(tmp_path, "lambda", "--scenario", "small-homog")
    assert code == 0
    phi = io.read_gather(out / "input.xsg")
    lam = io.read_gather(out / "lambda.xsg")
    for name in ("lambda_T", "lambda_sym", "diff_lambda_lambda_T"):
        assert (out / f"{name}.xsg").exists()
    # feed twice the input back through the file interface
    io.write_gather(tmp_path / "twice.xsg", phi * 2.0)
    code, out2 = run(["lambda", "--scenario", "small-homog", "--input", str(tmp_path / "twice.xsg"),
                      "--out", str(tmp_path / "o2")]), tmp_path / "o2"
    assert code == 0
    lam2 = io.read_gather(out2 / "lambda.xsg")
    assert np.allclose(lam2.values, 2.0 * lam.values, rtol=1e-5, atol=1e-6 * np.abs(lam.values).max())


def test_symbol_check_small_breaches(tmp_path):
    """Narrow aperture: the small preset misses the 5% band and reports a breach."""
    code, out = _run(tmp_path, "symbol-check", "--scenario", "small-homog")
    assert code == 4
    rows = (out / "symbol.csv").read_text().splitlines()
    assert len(rows) == 4


def test_missing_input_file_exits_2(tmp_path):
    code, _ = _run(tmp_path, "lambda", "--scenario", "small-homog", "--input", str(tmp_path / "nope.xsg"))
    assert code == 2
