"""Command-line driver: series, norm fits, Pade poles, Newton monodromy."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from gmpy2 import mpfr

from . import __version__
from . import diagnostics as dg
from . import lindstedt as L
from . import newton as nt
from . import pade as pd
from . import xfourier as xf

log = logging.getLogger("dissipative_tori")


@dataclass(frozen=True)
class RunConfig:
    digits: int = 300
    order: int = 400
    M0: int = 32
    delta: int = 2
    M_cap: int = 2048
    omega: str = "golden"
    exponent: int = 3
    probe: str = "probe_theta"
    probe_theta: str = "0.33"
    probe_mode: int = 1
    pade: str = "90,100"
    filter_tol: str = "1e-3"
    froissart_scale: str = "resolution"
    norm_variant: str = "as_printed"
    rhos: str = "0.5,0.1,0.01,0.001"
    sobolev_r: str = "0,1,2,3,4,5,6"
    window: str = ""
    newton_digits: int = 60
    newton_tol: str = "1e-40"
    newton_max_iter: int = 20
    newton_grid: int = 512
    seed_order: int = 40
    loop_steps: int = 64
    loop_center: str = ""
    loop_radius: str = ""
    loops: int = 1
    instances: str = ""
    eps_list: str = "1e-3,1.39e-3,1.93e-3,2.68e-3,3.73e-3,5.18e-3,7.2e-3,1e-2"
    out: str = "out"
    workers: int = 0

    def validate(self) -> "RunConfig":
        if self.digits < 15 or self.newton_digits < 15:
            raise ValueError("digits must be at least 15")
        if self.order < 0:
            raise ValueError("order must be non-negative")
        if min(self.M0, self.M_cap) < 1 or self.delta < 0:
            raise ValueError("truncation schedule must be positive")
        if self.exponent < 1:
            raise ValueError("exponent must be >= 1")
        if self.probe not in ("probe_theta", "fourier_mode", "drift"):
            raise ValueError(f"unknown probe {self.probe!r}")
        if self.newton_grid & (self.newton_grid - 1) or self.newton_grid < 16:
            raise ValueError("newton_grid must be a power of two >= 16")
        if self.loop_steps < 8 or self.loops < 0 or self.workers < 0:
            raise ValueError("loop_steps >= 8, loops >= 0, workers >= 0 required")
        if float(self.filter_tol) < 0:
            raise ValueError("filter_tol must be non-negative")
        self.pade_degrees()
        return self

    def pade_degrees(self) -> list[int]:
        vals = [int(x) for x in self.pade.split(",") if x.strip()]
        if any(v < 0 for v in vals):
            raise ValueError("Pade degrees must be non-negative")
        return vals

    def text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def hash(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]

    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


def _coerce(name: str, value: str):
    typ = {f.name: f.type for f in fields(RunConfig)}[name]
    return int(value) if typ in (int, "int") else value


def load_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise ValueError(f"{path}:{n}: bad config line {raw!r}")
        out[key] = _coerce(key, val.strip())
    return out


# ---------------------------------------------------------------------------
# helpers


def map_params(cfg: RunConfig, digits: int | None = None) -> L.MapParams:
    d = digits or cfg.digits
    if cfg.omega == "golden":
        omega = xf.Frequency.golden_mean(d)
    else:
        omega = xf.Frequency.from_string(cfg.omega, d)
    return L.MapParams.standard(d, omega, cfg.exponent)


def out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    (p / "config.txt").write_text(f"# dissipative_tori {__version__} config {cfg.hash()}\n" + cfg.text())
    return p


def provenance(cfg: RunConfig) -> dict:
    return {"tool_version": __version__, "config_hash": cfg.hash()}


class Status:
    """``status v1`` file with one ``<stage> <ok|fail> <detail>`` line per stage."""

    def __init__(self, path: Path):
        self.path = path
        self.lines: dict[str, str] = {}
        if path.exists():
            for line in path.read_text().splitlines()[1:]:
                stage, _, rest = line.partition(" ")
                self.lines[stage] = rest
        self.failed = False

    def record(self, stage: str, ok: bool, detail: str = ""):
        detail = " ".join(detail.split()) or "-"
        self.lines[stage] = f"{'ok' if ok else 'fail'} {detail}"
        self.failed |= not ok
        self.path.write_text("status v1\n" + "".join(f"{k} {v}\n" for k, v in self.lines.items()))


def series_path(cfg: RunConfig, args) -> Path:
    if getattr(args, "seed_series", None):
        return Path(args.seed_series)
    return Path(cfg.out) / "series.ls"


def load_or_fail(path: Path, digits: int | None = None) -> L.LindstedtSeries:
    if not path.exists():
        raise FileNotFoundError(f"series file {path} not found (run the lindstedt subcommand first)")
    return L.load_series(path, digits)


def defect_slope(params: L.MapParams, series: L.LindstedtSeries, eps_values) -> float:
    xs, ys = [], []
    for e in eps_values:
        with xf.working_precision(series.digits):
            eps = xf.xreal(e, series.digits)
        u, c = L.evaluate(series, eps)
        xs.append(math.log(float(e)))
        ys.append(math.log(float(L.defect(params, u, c, eps))))
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)


def _eps_values(cfg: RunConfig) -> list[str]:
    return [x.strip() for x in cfg.eps_list.split(",") if x.strip()]


def slope_check_order(cfg: RunConfig, params: L.MapParams) -> int:
    """Largest truncation order whose defects over ``eps_list`` stay above roundoff.

    The defect scales like ``eps^(N+1)``; beyond this order the smallest
    sample drowns in ``10^-d`` and the slope says nothing.
    """
    eps_min = min(float(e) for e in _eps_values(cfg))
    room = (cfg.digits - 20) / max(1.0, -math.log10(eps_min)) - 1
    return max(0, min(cfg.order, int(room) // params.max_harmonic))


# ---------------------------------------------------------------------------
# subcommands


def cmd_lindstedt(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    params = map_params(cfg)
    sched = L.TruncationSchedule(cfg.M0, cfg.delta, cfg.M_cap)
    t0 = time.time()
    series = L.compute_series(params, cfg.order, sched)
    path = out / "series.ls"
    lines = L.series_lines(series)
    lines.insert(1, f"config_hash={cfg.hash()}")
    lines.insert(2, f"tool_version={__version__}")
    path.write_text("\n".join(lines) + "\n")
    print(f"series N={cfg.order} d={cfg.digits} written to {path} ({time.time() - t0:.1f} s)")
    ok = True
    with xf.working_precision(cfg.digits):
        tol = mpfr(10) ** (-(cfg.digits - 10))
        w = params.omega.omega
        p = params.conformal_exponent
        for k in range(min(cfg.order, p) + 1):
            expect = w if k == p else 0
            good = abs(series.c[k] - expect) <= tol * max(1, abs(expect))
            ok &= good
            label = "omega" if k == p else "0"
            print(f"c_{k} = {label} check {'PASS' if good else 'FAIL'}")
    detail = "c-structure ok" if ok else "c-structure mismatch"
    n_check = slope_check_order(cfg, params)
    if n_check >= 1:
        sub = L.LindstedtSeries(n_check, series.u[:n_check + 1], series.c[:n_check + 1],
                                params, series.digits, series.schedule)
        slope = defect_slope(params, sub, _eps_values(cfg))
        good = abs(slope - (n_check + 1)) <= 0.1
        ok &= good
        print(f"defect slope at order {n_check}: {slope:.4f} (expected {n_check + 1}) "
              f"{'PASS' if good else 'FAIL'}")
        detail += f"; slope(N={n_check}) {slope:.4f}"
    status.record("lindstedt", ok, detail)
    return 0 if ok else 1


def cmd_norms(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    try:
        series = load_or_fail(series_path(cfg, args))
    except (FileNotFoundError, xf.FormatError) as err:
        status.record("norms", False, str(err))
        print(err, file=sys.stderr)
        return 1
    rhos = [x.strip() for x in cfg.rhos.split(",") if x.strip()]
    rs = [x.strip() for x in cfg.sobolev_r.split(",") if x.strip()]
    kinds = dg.default_kinds(rhos, rs, cfg.norm_variant)
    window = None
    if cfg.window:
        window = tuple(int(x) for x in cfg.window.split(","))
    pts = out / "norm_points"
    pts.mkdir(exist_ok=True)
    recs = dg.gevrey_exponent_report(series, kinds, window, pts) if kinds else []
    (out / "norms_report.json").write_text(dg.report_json(recs, **provenance(cfg), N=series.N))
    for r in recs:
        if "error" in r:
            print(f"{r['kind']}: {r['error']}")
        else:
            print(f"{r['kind']}: a={r['a']:.6f} b={r['b']:.4f} c={r['c']:.6f} rms={r['residual']:.2e}")
    bad = [r["kind"] for r in recs if "error" in r]
    status.record("norms", not bad, f"{len(recs)} fits" + (f"; failed {bad}" if bad else ""))
    return 0 if not bad else 1


def _approximant(args):
    g, p = args
    a = pd.build_pade(g, p, p)
    roots = pd.denominator_roots(a) if a.q else None
    return a, roots


def compute_poles(cfg: RunConfig, series: L.LindstedtSeries, workers: int = 1):
    """Build the configured diagonal approximants and intersect the first two."""
    degs = cfg.pade_degrees()
    K = 2 * max(degs) if degs else 0
    g = pd.extract_scalar_series(series, cfg.probe, cfg.probe_theta, cfg.probe_mode, K)
    jobs = [(g, p) for p in degs]
    results, errors = [], []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as ex:
            futs = [ex.submit(_approximant, j) for j in jobs]
            outs = []
            for p, f in zip(degs, futs):
                try:
                    outs.append(f.result())
                except (pd.SingularSystem, pd.RootNonConvergence) as err:
                    errors.append(f"[{p}/{p}]: {err}")
    else:
        outs = []
        for p, j in zip(degs, jobs):
            try:
                outs.append(_approximant(j))
            except (pd.SingularSystem, pd.RootNonConvergence) as err:
                errors.append(f"[{p}/{p}]: {err}")
    results = [o for o in outs if o[0].q > 0]
    if len(results) < 2:
        return pd.PoleSet((), float(cfg.filter_tol), g.provenance), errors, outs
    (a1, r1), (a2, r2) = results[0], results[1]
    ps = pd.stable_poles(a1, a2, cfg.filter_tol, froissart_scale=cfg.froissart_scale,
                         roots1=r1, roots2=r2)
    return ps, errors, outs


def cmd_poles(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    try:
        series = load_or_fail(series_path(cfg, args))
    except (FileNotFoundError, xf.FormatError) as err:
        status.record("poles", False, str(err))
        print(err, file=sys.stderr)
        return 1
    degs = cfg.pade_degrees()
    if 2 * max(degs, default=0) > series.N:
        msg = f"series order {series.N} < 2 x max Pade degree {max(degs)}"
        status.record("poles", False, msg)
        print(msg, file=sys.stderr)
        return 1
    ps, errors, outs = compute_poles(cfg, series, cfg.n_workers())
    for e in errors:
        print(f"warning: {e}", file=sys.stderr)
    if any(a.q == 0 for a, _ in outs):
        print("warning: q = 0 approximant has no poles", file=sys.stderr)
    pd.write_poles_csv(ps, out / "poles.csv", cfg.exponent)
    pd.write_plot_data(ps, out / "pole_plots", cfg.exponent)
    stable = ps.stable()
    images = pd.map_conformal([p.location for p in stable], cfg.exponent, series.digits)
    summary = {
        **provenance(cfg),
        "probe": ps.provenance,
        "pairs": degs[:2],
        "matched": len(ps),
        "stable": len(stable),
        "froissart_flagged": len(ps) - len(stable),
        "min_modulus": min((float(abs(p.location)) for p in stable), default=None),
        "unit_circle": pd.unit_circle_summary(images),
        "errors": errors,
    }
    (out / "poles_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    ok = not errors
    status.record("poles", ok, f"{len(stable)} stable poles" + (f"; {len(errors)} errors" if errors else ""))
    return 0 if ok else 1


def _loop_centers(cfg: RunConfig, out: Path) -> list[tuple[complex, float]]:
    """Loop centers and radii: explicit, or the leading poles of ``poles.csv``.

    The default radius is half the distance to the nearest other detected
    pole, so the loop encloses exactly one.
    """
    if cfg.loop_center:
        c = complex(cfg.loop_center.replace(" ", ""))
        return [(c, float(cfg.loop_radius or "0.01"))]
    path = out / "poles.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found and no loop_center given")
    poles = [complex(z) for z in pd.read_poles_csv(path)]
    # upper half plane representatives, ordered by modulus as in the file
    chosen = [z for z in poles if z.imag > 0][: cfg.loops]
    return [(z, float(cfg.loop_radius) if cfg.loop_radius else default_loop_radius(z, poles))
            for z in chosen]


def default_loop_radius(z: complex, poles, fallback: float = 0.05) -> float:
    """Half the distance from ``z`` to the nearest other pole."""
    return 0.5 * min((abs(z - w) for w in poles if w != z), default=2 * fallback)


def loop_start_angle(center: complex) -> float:
    """Start on the side facing the origin, where the Lindstedt seed is best."""
    return math.atan2(center.imag, center.real) + math.pi


def _instances(cfg: RunConfig) -> list[complex]:
    return [complex(x.strip().replace(" ", "")) for x in cfg.instances.split(";") if x.strip()]


def cmd_monodromy(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    d = cfg.newton_digits
    try:
        series = load_or_fail(series_path(cfg, args))
        loops = _loop_centers(cfg, out)
    except (FileNotFoundError, xf.FormatError) as err:
        status.record("monodromy", False, str(err))
        print(err, file=sys.stderr)
        return 1
    params = map_params(cfg, d)
    tol = cfg.newton_tol
    ok = True
    summaries = []
    for i, (center, radius) in enumerate(loops):
        loop = nt.LoopPath(center, radius, cfg.loop_steps, loop_start_angle(center))
        tag = f"loop{i}"
        try:
            seed = nt.reach(params, series, loop.point(0, d), tol, order=cfg.seed_order,
                            digits=d, n=cfg.newton_grid, max_iter=cfg.newton_max_iter)
            res = nt.monodromy_loop(params, loop, seed, tol, n=cfg.newton_grid,
                                    max_iter=cfg.newton_max_iter)
        except (nt.StepFailure, nt.NonConvergence) as err:
            ok = False
            recs = getattr(err, "log", [])
            if recs:
                nt.write_log(recs, out / f"{tag}_log.txt")
            summaries.append({"loop": tag, "center": [center.real, center.imag], "radius": radius,
                              "error": str(err)})
            print(f"{tag}: FAILED {err}")
            continue
        nt.write_log(res.records, out / f"{tag}_log.txt")
        inst_dir = out / f"{tag}_instances"
        rows = []
        for j, s in enumerate(res.instances):
            nt.dump_instance(s, inst_dir, f"instance{j + 1}")
            e, c = complex(s.eps), complex(s.c)
            rows.append(f"{j + 1} {e.real:.7f}{e.imag:+.7f}i {c.real:.8g}{c.imag:+.8g}i")
        summaries.append({"loop": tag, "center": [center.real, center.imag], "radius": radius,
                          "steps": cfg.loop_steps, "monodromy_defect_u": float(res.defect_u),
                          "monodromy_defect_c": float(res.defect_c),
                          "max_defect": max(r["defect"] for r in res.records)})
        print(f"{tag}: center {center:.6f} radius {radius:.4g} "
              f"monodromy u {float(res.defect_u):.3e} c {float(res.defect_c):.3e}")
        print("instance eps c")
        print("\n".join(rows))
        (out / f"{tag}_table.txt").write_text("# instance eps c\n" + "\n".join(rows) + "\n")
    table = []
    for j, e in enumerate(_instances(cfg)):
        try:
            s = nt.reach(params, series, e, tol, order=cfg.seed_order, digits=d, n=cfg.newton_grid,
                         max_iter=cfg.newton_max_iter)
        except (nt.StepFailure, nt.NonConvergence) as err:
            ok = False
            table.append({"eps": [e.real, e.imag], "error": str(err)})
            continue
        c = complex(s.c)
        table.append({"eps": [e.real, e.imag], "c": [c.real, c.imag], "defect": float(s.defect)})
        print(f"solve at {e}: c = {c:.10g}")
    (out / "monodromy_summary.json").write_text(json.dumps(
        {**provenance(cfg), "loops": summaries, "direct_solves": table}, indent=2, sort_keys=True))
    status.record("monodromy", ok, f"{len(summaries)} loops, {len(table)} direct solves")
    return 0 if ok else 1


def cmd_defect_scan(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    try:
        series = load_or_fail(series_path(cfg, args))
    except (FileNotFoundError, xf.FormatError) as err:
        status.record("defect-scan", False, str(err))
        print(err, file=sys.stderr)
        return 1
    params = series.params
    orders = [int(x) for x in (args.orders or str(series.N)).split(",")]
    lines = ["# order eps defect"]
    slopes = {}
    for N in orders:
        if N > series.N:
            continue
        sub = L.LindstedtSeries(N, series.u[:N + 1], series.c[:N + 1], params, series.digits,
                                series.schedule)
        for e in _eps_values(cfg):
            with xf.working_precision(series.digits):
                eps = xf.xreal(e, series.digits)
            u, c = L.evaluate(sub, eps)
            lines.append(f"{N} {e} {float(L.defect(params, u, c, eps)):.6e}")
        slopes[N] = defect_slope(params, sub, _eps_values(cfg))
        print(f"N={N}: slope {slopes[N]:.4f}")
    (out / "defect_scan.dat").write_text("\n".join(lines) + "\n")
    status.record("defect-scan", True, ", ".join(f"N={k}:{v:.3f}" for k, v in slopes.items()))
    return 0


def cmd_selftest(cfg: RunConfig, args) -> int:
    out = out_dir(cfg)
    status = Status(out / "status.txt")
    checks = []
    d = 60
    params = map_params(cfg, d)
    s = L.compute_series(params, 10)
    with xf.working_precision(d):
        checks.append(("c_3 = omega", abs(s.c[3] - params.omega.omega) < mpfr(10) ** (-(d - 10))))
    slope = defect_slope(params, L.compute_series(params, 5), _eps_values(cfg))
    checks.append((f"defect slope N=5 ({slope:.3f})", abs(slope - 6) < 0.1))
    means = L.symplectic_zero_average_check(params, 20)
    checks.append(("zero averages", max(means) < mpfr(10) ** (-(d - 15))))
    g = pd.ScalarSeries.from_values([1] * 4, d)
    roots = pd.denominator_roots(pd.build_pade(g, 0, 1))
    with xf.working_precision(d):
        checks.append(("geometric pole at 1", abs(roots.roots[0] - 1) < mpfr(10) ** (-(d - 15))))
    s20 = L.compute_series(params, 20)
    u, c = nt.seed_from_series(s20, "0.1")
    try:
        sol = nt.solve_at(params, "0.1", (u, c), "1e-30", 6)
        checks.append((f"Newton to 1e-30 in {sol.iterations} steps", sol.iterations <= 6))
    except nt.NonConvergence:
        checks.append(("Newton at eps=0.1", False))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    ok = all(v for _, v in checks)
    status.record("selftest", ok, f"{sum(v for _, v in checks)}/{len(checks)} passed")
    return 0 if ok else 1


COMMANDS = {
    "lindstedt": cmd_lindstedt,
    "norms": cmd_norms,
    "poles": cmd_poles,
    "monodromy": cmd_monodromy,
    "defect-scan": cmd_defect_scan,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--digits", type=int)
    common.add_argument("--order", type=int)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed-series", help="series file to read instead of <out>/series.ls")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="dissipative-tori", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "monodromy":
            sp.add_argument("--center", help="loop center, e.g. 0.27+0.16j")
            sp.add_argument("--radius")
            sp.add_argument("--steps", type=int)
        if name == "defect-scan":
            sp.add_argument("--orders", help="comma separated truncation orders")
        if name == "poles":
            sp.add_argument("--pade", help="comma separated diagonal degrees")
    return p


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep or key not in {f.name for f in fields(RunConfig)}:
            raise ValueError(f"bad --set {item!r}")
        values[key] = _coerce(key, val)
    for key in ("digits", "order", "out", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "center", None):
        values["loop_center"] = args.center
    if getattr(args, "radius", None):
        values["loop_radius"] = args.radius
    if getattr(args, "steps", None):
        values["loop_steps"] = args.steps
    if getattr(args, "pade", None):
        values["pade"] = args.pade
    return RunConfig(**values).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
