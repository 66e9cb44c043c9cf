"""Command-line driver: ``xsrc <verb> [options] [section.key=value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 threshold breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io
from .errors import ConfigError, GeometryError, InstabilityError, SolverBreakdown, XsrcError
from .grid import Gather, TimeAxis

log = logging.getLogger("xsrc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 2, 3, 4
VERBS = ("simulate", "dottest", "invert", "lambda", "energy", "symbol-check")


class ThresholdBreach(XsrcError):
    pass


# -- helpers ---------------------------------------------------------------------


class _Out:
    """Output directory that remembers what it wrote, for the manifest."""

    def __init__(self, path: Path):
        self.path = path
        self.files: list[Path] = []
        path.mkdir(parents=True, exist_ok=True)

    def gather(self, name: str, g: Gather, clip_from: str | None = None) -> float:
        p = self.path / f"{name}.xsg"
        io.write_gather(p, g)
        clip = None
        if clip_from is not None:
            clip = io.read_pgm_clip(self.path / f"{clip_from}.pgm")
        used = io.write_pgm(self.path / f"{name}.pgm", g.values, clip)
        self.files += [p, self.path / f"{name}.pgm"]
        return used

    def file(self, name: str) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def manifest(self, command: str, cfg: cfgmod.RunConfig, started: float, extra=None):
        return io.write_manifest(self.path / "manifest.json", command, cfg.flat(), self.files,
                                 started, extra)


def _sources(sc):
    from .scenarios import make_downgoing_sources

    return make_downgoing_sources(sc)


def _inversion_medium(cfg: cfgmod.RunConfig, sc):
    from .experiments import background

    choice = cfg.invert.medium
    if choice == "same":
        return sc.medium
    if choice == "homog":
        return background(sc)
    return cfg.build_scenario(sc.name.rsplit("-", 1)[0] + "-lens").medium


def _load_data(cfg: cfgmod.RunConfig, sc) -> Gather:
    if cfg.invert.data:
        d = io.read_gather(cfg.invert.data)
        if d.shape != (sc.rec_x.size, sc.time.nt):
            raise ConfigError(f"data file {cfg.invert.data} has shape {d.shape}; scenario expects "
                              f"{(sc.rec_x.size, sc.time.nt)}")
        return d
    return _sources(sc).d


# -- commands ----------------------------------------------------------------------


def cmd_simulate(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    sc = cfg.build_scenario()
    src = _sources(sc)
    out.gather("d", src.d)
    out.gather("h_s", src.h_s)
    out.gather("f_s", src.f_s)
    out.gather("p_s", src.p_s)
    out.gather("vz_s", src.vz_s)
    kp, rp = io.write_medium(out.path / "medium", sc.medium)
    out.files += [kp, rp]
    info = {"ntr_d": src.d.ntr, "nt": src.d.nt, "max_abs_d": float(np.abs(src.d.values).max())}
    print(f"simulate {sc.name}: d has {src.d.ntr} traces x {src.d.nt} samples")
    return info


def cmd_dottest(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    from .experiments import build_operators, source_lambda
    from .solver import NormalOperator, preconditioner
    from .wave_ops import dot_test, make_S_offdiag

    sc = cfg.build_scenario()
    t = sc.time
    nt = min(cfg.dottest.nt, t.nt)
    short = TimeAxis(nt, t.dt, t.t0)
    import dataclasses

    sc = dataclasses.replace(sc, time=short)
    ops = build_operators(sc)
    zero = ops.S.range.zeros()
    pb = ops.problem(zero, sc.alpha)
    table = {
        "S": ops.S, "V": ops.V,
        "S[h->vz]": make_S_offdiag(ops.cfg, "h", "vz"), "S[f->p]": make_S_offdiag(ops.cfg, "f", "p"),
        "Lt": source_lambda(sc), "Wm_inv": ops.Wm_inv, "Wm": ops.W_m, "Wd": ops.W_d, "A": ops.A,
        "N": NormalOperator(pb), "M_inv": preconditioner(pb),
    }
    results = {}
    path = out.file("dottest.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["operator", "max_rel_error"])
        for name, op in table.items():
            err = dot_test(op, trials=cfg.dottest.trials, seed=cfg.run.seed)
            results[name] = err
            wr.writerow([name, repr(err)])
            print(f"{name:10s} {err:.3e}")
    worst = max(results.values())
    if worst > cfg.dottest.threshold:
        raise ThresholdBreach(f"dot test error {worst:.3e} exceeds {cfg.dottest.threshold:g}")
    return {"dot_test": results}


def cmd_invert(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    from .experiments import build_operators
    from .scenarios import in_band_error
    from .solver import approx_inverse, cg, pcg, speedup_at_level

    sc = cfg.build_scenario()
    d = _load_data(cfg, sc)
    medium = _inversion_medium(cfg, sc)
    ops = build_operators(sc, medium)
    inv = cfg.invert
    info: dict = {"method": inv.method, "alpha": inv.alpha}
    clip = out.gather("data", d)
    if inv.method == "approx":
        h = approx_inverse(d, ops.V)
        sh = ops.S.apply(h)
        err = in_band_error(sh, d)
        info["in_band_error"] = err
        with open(out.file("residuals.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "normal_residual", "data_misfit", "wall_seconds"])
            wr.writerow([0, "", repr((sh - d).norm()), ""])
        print(f"approx inverse: in-band relative data error {err:.4f}")
    else:
        pb = ops.problem(d, inv.alpha, weighted=inv.method == "pcg")
        if inv.method == "pcg":
            rep = pcg(pb, inv.max_iter, inv.tol)
        else:
            rep = cg(pb, inv.cg_iter if inv.compare else inv.max_iter, inv.tol)
        rep.to_csv(out.file("residuals.csv"))
        h = rep.h
        sh = ops.S.apply(h)
        info["iterations"] = rep.iterations
        info["final_relative_residual"] = float(rep.relative_residuals[-1])
        print(f"{rep.method}: {rep.iterations} iterations, relative residual "
              f"{rep.relative_residuals[-1]:.3e}")
        if inv.compare:
            other = cg(pb.euclidean(), inv.cg_iter, inv.tol) if inv.method == "pcg" else \
                pcg(ops.problem(d, inv.alpha), inv.max_iter, inv.tol)
            fast, slow = (rep, other) if inv.method == "pcg" else (other, rep)
            k = min(inv.max_iter, fast.iterations)
            ratio, n = speedup_at_level(fast, slow, k)
            info.update(speedup=ratio, cg_iterations_to_match=n, matched_level=float(fast.relative_residuals[k]))
            with open(out.file("compare.csv"), "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["iter", "pcg_relative_residual", "cg_relative_residual"])
                a, b = fast.relative_residuals, slow.relative_residuals
                for i in range(max(a.size, b.size)):
                    wr.writerow([i, repr(float(a[i])) if i < a.size else "",
                                 repr(float(b[i])) if i < b.size else ""])
            bound = "" if n is not None else " (lower bound: CG never reached the level)"
            print(f"speedup at k={k}: {ratio:.2f}{bound}")
            if inv.min_speedup > 0 and ratio < inv.min_speedup:
                out.gather("h", h)
                raise ThresholdBreach(f"speedup {ratio:.2f} below required {inv.min_speedup:g}")
    out.gather("h", h)
    out.gather("resimulated", sh)
    out.gather("difference", sh - d, clip_from="data")
    info["clip"] = clip
    return info


def cmd_lambda(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    from .experiments import asymmetry, source_lambda

    sc = cfg.build_scenario()
    lam = cfg.lam
    L = source_lambda(sc, thickness=abs(lam.delta_z), surface=lam.surface,
                      datum_margin=lam.datum_margin, crop=lam.crop)
    reference = None
    if lam.input:
        phi = io.read_gather(lam.input)
        L.domain.check(phi)
    else:
        src = _sources(sc)
        if lam.surface == "source":
            phi, reference = src.p_s, src.h_s
        else:
            phi = src.d
    ratio, peak_ratio, a, b = asymmetry(L, phi)
    sym = (a + b) * 0.5
    out.gather("input", phi)
    out.gather("lambda", a)
    out.gather("lambda_T", b, clip_from="lambda")
    out.gather("lambda_sym", sym, clip_from="lambda")
    out.gather("diff_lambda_lambda_T", a - b, clip_from="lambda")
    info = {"asymmetry_l2": ratio, "asymmetry_max": peak_ratio}
    if reference is not None:
        from .scenarios import in_band_error

        out.gather("h_s", reference, clip_from="lambda")
        out.gather("diff_lambda_h_s", a - reference, clip_from="lambda")
        info["error_vs_h_s"] = in_band_error(a, reference)
    print(f"lambda: asymmetry L2 {ratio:.4f}, max {peak_ratio:.4f}")
    return info


def cmd_energy(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    from .experiments import background, energy_identity

    sc = cfg.build_scenario()
    sc = sc.with_medium(background(sc))
    src = _sources(sc)
    res = energy_identity(sc, src.p_s, src.h_s, pad=cfg.energy.pad)
    t = res["time"].t
    with open(out.file("energy.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "energy"])
        for ti, ei in zip(t, res["energy"]):
            wr.writerow([f"{ti:.6f}", repr(float(ei))])
    print(f"energy plateau {res['plateau']:.6g}, quadratic form {res['quadratic_form']:.6g}, "
          f"ratio {res['ratio']:.4f}")
    info = {k: res[k] for k in ("plateau", "quadratic_form", "ratio", "plateau_spread")}
    if abs(res["ratio"] - 1.0) > cfg.energy.tolerance:
        raise ThresholdBreach(f"energy ratio {res['ratio']:.4f} off by more than {cfg.energy.tolerance:g}")
    return info


def cmd_symbol_check(cfg: cfgmod.RunConfig, out: _Out) -> dict:
    from .experiments import symbol_check

    sc = cfg.build_scenario()
    rows = symbol_check(sc, cfg.symbol_ratios(), convention=cfg.symbol.convention)
    with open(out.file("symbol.csv"), "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["s", "measured", "predicted", "rel_error"])
        wr.writeheader()
        wr.writerows(rows)
    for r in rows:
        print(f"s={r['s']:.3f} measured {r['measured']:.6e} predicted {r['predicted']:.6e} "
              f"error {r['rel_error']:.3%}")
    worst = max(r["rel_error"] for r in rows)
    if worst > cfg.symbol.tolerance:
        raise ThresholdBreach(f"symbol mismatch {worst:.3%} above {cfg.symbol.tolerance:.0%}")
    return {"symbol": rows}


COMMANDS = {
    "simulate": cmd_simulate, "dottest": cmd_dottest, "invert": cmd_invert, "lambda": cmd_lambda,
    "energy": cmd_energy, "symbol-check": cmd_symbol_check,
}


# -- argument handling --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xsrc", description="Surface-source modeling and inversion.")
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("overrides", nargs="*", metavar="section.key=value",
                    help="config overrides applied after --config")
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--out", help="output directory (run.out)")
    ap.add_argument("--threads", type=int, help="worker threads (run.threads)")
    ap.add_argument("--seed", type=int, help="random seed (run.seed)")
    ap.add_argument("--scenario", help="preset name (scenario.name)")
    ap.add_argument("--method", choices=("approx", "cg", "pcg"), help="invert.method")
    ap.add_argument("--alpha", type=float, help="invert.alpha")
    ap.add_argument("--max-iter", type=int, help="invert.max_iter")
    ap.add_argument("--compare", action="store_true", help="invert.compare = true")
    ap.add_argument("--invert-medium", choices=("homog", "lens", "same"), help="invert.medium")
    ap.add_argument("--data", help="invert.data: XSG1 data gather")
    ap.add_argument("--delta-z", type=float, help="lambda.delta_z")
    ap.add_argument("--input", help="lambda.input: XSG1 gather")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


_FLAG_KEYS = {
    "out": "run.out", "threads": "run.threads", "seed": "run.seed", "scenario": "scenario.name",
    "method": "invert.method", "alpha": "invert.alpha", "max_iter": "invert.max_iter",
    "invert_medium": "invert.medium", "data": "invert.data", "delta_z": "lambda.delta_z",
    "input": "lambda.input",
}


def resolve_config(args: argparse.Namespace) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not section.key=value")
        k, _, v = item.partition("=")
        cfg.set(k.strip(), v)
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr)
        if val is not None:
            cfg.set(key, val)
    if args.compare:
        cfg.set("invert.compare", True)
    cfg.validate()
    return cfg


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_intermixed_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    started = time.time()
    out = _Out(Path(cfg.run.out))
    (out.path / "config.txt").write_text(cfgmod.dump(cfg))
    out.files.append(out.path / "config.txt")
    code, info = EXIT_OK, {}
    try:
        info = COMMANDS[args.verb](cfg, out) or {}
    except ThresholdBreach as exc:
        print(f"threshold breach: {exc}", file=sys.stderr)
        code, info = EXIT_THRESHOLD, {"error": str(exc)}
    except (ConfigError, GeometryError, KeyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverBreakdown, InstabilityError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code, info = EXIT_NUMERIC, {"error": str(exc)}
    except (XsrcError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, info = EXIT_NUMERIC, {"error": str(exc)}
    info["exit_code"] = code
    out.manifest(args.verb, cfg, started, {"results": json.loads(json.dumps(info, default=_plain))})
    return code


def _plain(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
