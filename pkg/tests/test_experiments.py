import math
import os

import pytest

from lse_precoding.experiments import (ConfigError,
                                       SchemaError, apply_overrides,
                                       calibrated_point, emit_plot,
                                       manifest_text, match_random_selection,
                                       parse_config, read_csv, run,
                                       validate_config, write_csv)

BASE = """
[run]
mode = replica
seed = 11

[system]
alpha_inverse = 2.0
lambda_s = 1.0

[penalty]
support = full
p_target = 0.5
eta_target = 0.5
"""


def cfg_from(text=BASE, **kw):
    cfg = parse_config(text)
    for key, val in kw.items():
        setattr(cfg, key, val)
    return cfg


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------

def test_parse_round_values():
    cfg = parse_config(BASE)
    assert cfg.mode == "replica" and cfg.seed == 11
    assert cfg.alpha_inverse == (2.0,)
    assert cfg.p_target == 0.5 and cfg.eta_target == 0.5


def test_parse_grid_forms():
    assert parse_config("[system]\nalpha_inverse = 1.0:0.5:2.0\n").alpha_inverse == \
        (1.0, 1.5, 2.0)
    assert parse_config("[system]\nalpha_inverse = 1.0,1.7\n").alpha_inverse == \
        (1.0, 1.7)


def test_parse_rejects_decreasing_grid():
    with pytest.raises(ConfigError):
        parse_config("[system]\nalpha_inverse = 2.0,1.0\n")


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config("[system]\nbogus = 1\n")


def test_validate_requires_exactly_one_parameterization():
    cfg = cfg_from()
    cfg.lam = 0.1  # both direct and targets
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = cfg_from()
    cfg.p_target = None
    cfg.eta_target = None
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_validate_disk_direct_needs_peak():
    cfg = cfg_from()
    cfg.p_target = cfg.eta_target = None
    cfg.lam = 0.1
    cfg.support = "disk"
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_validate_single_point_modes():
    cfg = cfg_from()
    cfg.alpha_inverse = (1.0, 2.0)
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_overrides():
    cfg = apply_overrides(parse_config(BASE), ["penalty.eta_target=0.3",
                                               "run.seed=99"])
    assert cfg.eta_target == 0.3 and cfg.seed == 99
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["nonsense"])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["foo.bar=1"])


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_csv_round_trip_twelve_digits(tmp_path):
    rows = [((1.0 / 3.0, 2.0 ** 0.5, -1.2345678901234e-7), "ok"),
            ((math.inf, 0.0, 42.0), "ok")]
    path = write_csv(str(tmp_path / "t.csv"), ("a", "b", "c"), rows)
    header, data = read_csv(path)
    assert header == ["a", "b", "c", "status"]
    for (orig, _), got in zip(rows, data):
        for o, g in zip(orig, got[:-1]):
            assert float(g) == pytest.approx(o, rel=1e-11)
            # and formatting is stable under one more round trip
            assert f"{float(g):.12g}" == g


# ---------------------------------------------------------------------------
# manifest and reruns
# ---------------------------------------------------------------------------

def test_manifest_skips_execution_knobs():
    text = manifest_text(cfg_from())
    assert "threads" not in text and "out =" not in text
    assert "[versions]" in text


def test_replica_rerun_from_manifest_is_byte_identical(tmp_path):
    cfg = cfg_from(out=str(tmp_path / "a"))
    files = run(cfg)
    manifest = files["manifest"]
    with open(manifest) as fh:
        cfg2 = parse_config(fh.read())
    cfg2.out = str(tmp_path / "b")
    files2 = run(cfg2)
    for name in files:
        with open(files[name], "rb") as f1, open(files2[name], "rb") as f2:
            assert f1.read() == f2.read(), name


def test_sweep_single_point_matches_replica_mode(tmp_path):
    cfg = cfg_from(out=str(tmp_path / "r"))
    run(cfg)
    cfg2 = cfg_from(out=str(tmp_path / "s"))
    cfg2.mode = "sweep"
    files = run(cfg2)
    _, data = read_csv(files["eta0.5"])
    assert len(data) == 1
    row = dict(zip(("alpha_inverse", "lambda", "lambda0", "chi", "p", "eta",
                    "papr_db", "distortion_db", "residual", "iterations",
                    "status"), data[0]))
    with open(os.path.join(str(tmp_path / "r"), "replica.txt")) as fh:
        ref = dict(line.strip().split(" = ") for line in fh if " = " in line)
    assert float(row["chi"]) == pytest.approx(float(ref["chi"]), rel=1e-10)
    assert float(row["distortion_db"]) == pytest.approx(float(ref["distortion_db"]), rel=1e-10)
    assert row["status"] == "ok"


# ---------------------------------------------------------------------------
# calibrated points and savings
# ---------------------------------------------------------------------------

def test_calibrated_point_peak_clamp_status():
    pt = calibrated_point(2.0, 1.0, 0.5, 0.5, papr_db=0.0)
    assert pt.status == "peak-clamped"
    # the boundary solution transmits eta * P = papr * p * eta
    assert pt.solution.state.p == pytest.approx(0.25, rel=1e-10)
    assert pt.solution.eta == pytest.approx(0.5, rel=1e-12)


def test_match_random_selection_frozen_anchor():
    pt = calibrated_point(2.0, 1.0, 0.5, 0.5, papr_db=None)
    eta_r = match_random_selection(2.0, 1.0, 0.5, pt.solution.distortion)
    assert eta_r == pytest.approx(0.84657359, abs=1e-4)


def test_saving_mode_csv(tmp_path):
    cfg = cfg_from(out=str(tmp_path / "sv"))
    cfg.mode = "saving"
    cfg.eta_targets = (0.5,)
    files = run(cfg)
    header, data = read_csv(files["saving"])
    row = dict(zip(header, data[0]))
    assert float(row["eta_random"]) == pytest.approx(0.8466, abs=0.01)
    assert float(row["saving"]) == pytest.approx(0.3466, abs=0.01)


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

def _tiny_csv(tmp_path, name="c.csv", rows=((1.0, -10.0), (2.0, -12.0))):
    data = [((ainv, 0.1, 0.0, 1.0, 0.5, 1.0, math.inf, ddb, 0.0, 3), "ok")
            for ainv, ddb in rows]
    cols = ("alpha_inverse", "lambda", "lambda0", "chi", "p", "eta",
            "papr_db", "distortion_db", "residual", "iterations")
    return write_csv(str(tmp_path / name), cols, data)


def test_emit_plot_single_polyline(tmp_path):
    path = _tiny_csv(tmp_path)
    svg = emit_plot([path], str(tmp_path / "p.svg"))
    text = open(svg).read()
    assert text.count("<polyline") == 1
    pts = text.split('points="')[1].split('"')[0].split()
    assert len(pts) == 2


def test_emit_plot_empty_inputs():
    with pytest.raises(SchemaError):
        emit_plot([], "nowhere.svg")


def test_emit_plot_missing_column(tmp_path):
    bad = str(tmp_path / "bad.csv")
    with open(bad, "w") as fh:
        fh.write("x,y\n1,2\n")
    with pytest.raises(SchemaError):
        emit_plot([bad], str(tmp_path / "p.svg"))


def test_emit_plot_byte_identical(tmp_path):
    path = _tiny_csv(tmp_path)
    a = emit_plot([path], str(tmp_path / "a.svg"))
    b = emit_plot([path], str(tmp_path / "b.svg"))
    assert open(a, "rb").read() == open(b, "rb").read()


# ---------------------------------------------------------------------------
# compare mode
# ---------------------------------------------------------------------------

def test_compare_mode_small_run(tmp_path):
    cfg = cfg_from(out=str(tmp_path / "cmp"))
    cfg.mode = "compare"
    cfg.p_target = cfg.eta_target = None
    cfg.lam = 0.0
    cfg.lam0 = 0.0
    cfg.alpha_inverse = (0.5,)   # overloaded: exact closed form D = 0.5
    cfg.n = 48
    cfg.trials = 8
    files = run(cfg)
    header, data = read_csv(files["compare"])
    rows = {r[0]: r for r in data}
    replica_d = float(rows["distortion"][1])
    empirical_d = float(rows["distortion"][2])
    assert replica_d == pytest.approx(0.5, abs=1e-10)
    assert empirical_d == pytest.approx(0.5, abs=0.1)
    summary = open(files["summary"]).read()
    assert "ks_decoupled" in summary and "ks_index_halves" in summary


def test_fig_style_sweep_orderings(tmp_path):
    # more antenna freedom never hurts; looser peak caps never hurt
    cfg = cfg_from(out=str(tmp_path / "o1"))
    cfg.mode = "sweep"
    cfg.alpha_inverse = (1.0, 1.9, 2.8)
    cfg.eta_targets = (1.0, 0.5, 0.3)
    files = run(cfg)
    assert sorted(k for k in files if k.startswith("eta")) == \
        ["eta0.3", "eta0.5", "eta1"]
    by_eta = {}
    for key in ("eta1", "eta0.5", "eta0.3"):
        _, data = read_csv(files[key])
        by_eta[key] = [float(r[7]) for r in data]  # distortion_db
    for a, b, c in zip(by_eta["eta1"], by_eta["eta0.5"], by_eta["eta0.3"]):
        assert a <= b <= c

    cfg = cfg_from(out=str(tmp_path / "o2"))
    cfg.mode = "sweep"
    cfg.support = "disk"
    cfg.alpha_inverse = (1.0, 1.9, 2.8)
    cfg.eta_targets = (1.0, 0.5)
    cfg.papr_db_targets = (0.0, 3.0, 8.0)
    files = run(cfg)
    for eta in ("eta1", "eta0.5"):
        curves = []
        for papr in ("papr0db", "papr3db", "papr8db"):
            _, data = read_csv(files[f"{eta}_{papr}"])
            curves.append([float(r[7]) for r in data])
        for d0, d3, d8 in zip(*curves):
            assert d0 >= d3 - 1e-9 and d3 >= d8 - 1e-9


def test_validate_sweep_needs_eta_targets():
    cfg = cfg_from()
    cfg.mode = "sweep"
    cfg.eta_target = None
    with pytest.raises(ConfigError):
        validate_config(cfg)
