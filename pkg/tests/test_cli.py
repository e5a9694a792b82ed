import json

import pytest
from gmpy2 import mpc, mpfr

from dissipative_tori import cli
from dissipative_tori import lindstedt as L
from dissipative_tori import pade as pd
from dissipative_tori import xfourier as xf
from dissipative_tori.xfourier import PeriodicFunction as PF


def run(tmp_path, *argv):
    return cli.main([argv[0], "--out", str(tmp_path), *argv[1:]])


def status_lines(tmp_path):
    lines = (tmp_path / "status.txt").read_text().splitlines()
    assert lines[0] == "status v1"
    return {ln.split()[0]: ln.split()[1] for ln in lines[1:]}


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# desk run\ndigits = 80\norder=12  # short\nfilter_tol = 1e-4\n")
    vals = cli.load_config(path)
    assert vals == {"digits": 80, "order": 12, "filter_tol": "1e-4"}
    args = cli.build_parser().parse_args(["poles", "--config", str(path), "--digits", "90",
                                          "--set", "probe=drift"])
    cfg = cli.resolve_config(args)
    assert (cfg.digits, cfg.order, cfg.probe, cfg.filter_tol) == (90, 12, "drift", "1e-4")


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 3\n")
    with pytest.raises(ValueError):
        cli.load_config(bad)
    with pytest.raises(ValueError):
        cli.RunConfig(newton_grid=300).validate()
    with pytest.raises(ValueError):
        cli.RunConfig(digits=5).validate()
    assert cli.main(["selftest", "--set", "order=-1"]) == 2


def test_hash_deterministic():
    a, b = cli.RunConfig(), cli.RunConfig()
    assert a.hash() == b.hash() and len(a.hash()) == 16
    assert cli.RunConfig(digits=301).hash() != a.hash()


def test_lindstedt_order_three(tmp_path, capsys):
    assert run(tmp_path, "lindstedt", "--order", "3", "--digits", "50") == 0
    out = capsys.readouterr().out
    assert "c_3 = omega check PASS" in out
    assert status_lines(tmp_path) == {"lindstedt": "ok"}
    head = (tmp_path / "series.ls").read_text().splitlines()[:3]
    assert head[0] == "#ls v1" and head[1] == f"config_hash={cli.RunConfig(digits=50, order=3, out=str(tmp_path)).hash()}"
    cfg_text = (tmp_path / "config.txt").read_text().splitlines()
    assert cfg_text[0].endswith(head[1].split("=")[1]) and "digits=50" in cfg_text


def test_lindstedt_order_zero_and_determinism(tmp_path):
    assert run(tmp_path, "lindstedt", "--order", "0", "--digits", "30") == 0
    s = L.load_series(tmp_path / "series.ls")
    assert s.N == 0
    assert run(tmp_path, "lindstedt", "--order", "8", "--digits", "40") == 0
    first = (tmp_path / "series.ls").read_bytes()
    assert run(tmp_path, "lindstedt", "--order", "8", "--digits", "40") == 0
    assert (tmp_path / "series.ls").read_bytes() == first


def test_missing_series_fails_with_status(tmp_path):
    assert run(tmp_path, "norms") == 1
    assert status_lines(tmp_path) == {"norms": "fail"}


def test_norms_reports_and_empty_lists(tmp_path):
    assert run(tmp_path, "lindstedt", "--order", "30", "--digits", "40") == 0
    assert run(tmp_path, "norms", "--set", "rhos=0.1,0.01", "--set", "sobolev_r=0") == 0
    doc = json.loads((tmp_path / "norms_report.json").read_text())
    assert [f["kind"] for f in doc["fits"]] == ["A_rho=0.1", "A_rho=0.01", "H_r=0"]
    assert doc["config_hash"] and doc["tool_version"]
    assert run(tmp_path, "norms", "--set", "rhos=", "--set", "sobolev_r=") == 0
    assert json.loads((tmp_path / "norms_report.json").read_text())["fits"] == []
    st = status_lines(tmp_path)
    assert st["lindstedt"] == "ok" and st["norms"] == "ok"


def planted_series_file(path, poles, N, digits=40):
    """A series whose drift coefficients are those of prod 1/(1 - eps/p)."""
    params = L.MapParams.standard(digits)
    with xf.working_precision(digits):
        den = [mpc(1)]
        for p in poles:
            den = [(den[i] if i < len(den) else 0) - (den[i - 1] / p if i else 0)
                   for i in range(len(den) + 1)]
        c = [mpc(1)]
        for k in range(1, N + 1):
            c.append(-sum(den[j] * c[k - j] for j in range(1, min(k, len(den) - 1) + 1)))
    us = tuple(PF.zeros(0, digits) for _ in range(N + 1))
    L.save_series(L.LindstedtSeries(N, us, tuple(c), params, digits), path)


def test_poles_planted_rational(tmp_path):
    with xf.working_precision(40):
        poles = [mpc(mpfr("0.5")), mpc(mpfr("0.2"), mpfr("0.6")), mpc(mpfr("0.2"), mpfr("-0.6"))]
    planted_series_file(tmp_path / "planted.ls", poles, 10)
    args = ["poles", "--seed-series", str(tmp_path / "planted.ls"), "--pade", "3,3",
            "--set", "probe=drift", "--digits", "40", "--workers", "1"]
    assert run(tmp_path, *args) == 0
    found = [complex(z) for z in pd.read_poles_csv(tmp_path / "poles.csv")]
    assert len(found) == 3
    for p in poles:
        assert min(abs(complex(p) - z) for z in found) < 1e-15
    summary = json.loads((tmp_path / "poles_summary.json").read_text())
    assert summary["stable"] == 3 and summary["config_hash"]
    assert (tmp_path / "pole_plots" / "poles_b.dat").exists()


def test_poles_order_too_low_and_q_zero(tmp_path, capsys):
    assert run(tmp_path, "lindstedt", "--order", "10", "--digits", "40") == 0
    assert run(tmp_path, "poles", "--pade", "6,6") == 1
    assert status_lines(tmp_path)["poles"] == "fail"
    assert run(tmp_path, "poles", "--pade", "0,0", "--digits", "40") == 0
    assert "q = 0" in capsys.readouterr().err
    assert json.loads((tmp_path / "poles_summary.json").read_text())["stable"] == 0


def test_monodromy_contractible_loop(tmp_path, capsys):
    assert run(tmp_path, "lindstedt", "--order", "40", "--digits", "60") == 0
    rc = run(tmp_path, "monodromy", "--center", "0.1", "--radius", "0.01", "--steps", "8",
             "--set", "newton_grid=256")
    assert rc == 0
    doc = json.loads((tmp_path / "monodromy_summary.json").read_text())
    loop = doc["loops"][0]
    assert loop["monodromy_defect_u"] < 1e-38 and loop["monodromy_defect_c"] < 1e-38
    assert len((tmp_path / "loop0_table.txt").read_text().splitlines()) == 7
    assert (tmp_path / "loop0_instances" / "instance1.dat").exists()
    assert status_lines(tmp_path)["monodromy"] == "ok"


def test_defect_scan(tmp_path, capsys):
    assert run(tmp_path, "lindstedt", "--order", "6", "--digits", "60") == 0
    assert run(tmp_path, "defect-scan", "--orders", "3,6") == 0
    lines = (tmp_path / "defect_scan.dat").read_text().splitlines()
    assert len(lines) == 1 + 2 * 8
    out = capsys.readouterr().out
    assert "N=3" in out and "N=6" in out
