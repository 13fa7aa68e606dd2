"""Command-line experiment runner.

Subcommands: ``curve build``, ``hls``, ``strichartz``, ``nls evolve``,
``nls picard`` and ``scan``.  Each command accepts ``--config FILE`` (JSON
whose keys mirror the long flags, or a run manifest, whose ``params`` are
used); flags given on the command line override the file.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import hls, io, nls, propagator, selfaffine
from .errors import NotAdmissible, NumericalFailure, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2
# options that only steer where and how output is written
_NOT_PARAMS = {"config", "out", "plot", "func", "command", "action"}


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors as validation failures (exit 1)."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _int_range(text: str) -> list[int]:
    """``"2:6"`` -> [2..6] inclusive, ``"3,5"`` -> [3, 5]."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse level list {text!r}") from None
    if not out:
        raise ValidationError(f"empty level list {text!r}")
    return out


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None


def _load_config(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError("config file must hold a JSON object")
    if "params" in obj and "command" in obj:
        obj = obj["params"]
    return {k.replace("-", "_"): v for k, v in obj.items()}


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_PARAMS}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _curve_arg(path):
    if not path:
        raise ValidationError("--curve is required")
    curve, digest = io.load_curve(path)
    return curve, {str(path): digest}


# ------------------------------------------------------------------ commands


def cmd_curve_build(args, manifest):
    pattern = selfaffine.validate_pattern(args.a, args.b, args.m, args.d)
    curve = selfaffine.build(pattern, args.level)
    out = Path(args.out)
    digest = io.save_curve(curve, out)
    rep = selfaffine.assumption_constant(curve)
    m = 1 if curve.level > 1 else 0
    _, N = selfaffine.family_of_pieces(curve, m)
    c_const = rep.c_constant
    c_text = str(c_const) if not isinstance(c_const, float) else repr(c_const)
    print(f"H={curve.order:.12g}")
    print(f"C={c_text}")
    print(f"N={N}")
    manifest.outputs["curve"] = {"path": str(out), "sha256": digest}
    manifest.results.update(H=curve.order, C=c_text, N=N, values=int(curve.values.size))
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(plotting.plot_curve(curve, out.with_suffix(".png")))
    return out.with_name(out.stem + ".manifest.json")


HLS_COLUMNS = ["level", "alpha", "p", "q", "max_iota_normalized", "max_ratio", "argmax_id"]


def cmd_hls(args, manifest):
    curve, hashes = _curve_arg(args.curve)
    manifest.input_hashes.update(hashes)
    manifest.seed = args.seed
    h = curve.order if args.h is None else args.h
    strict = args.h is None or abs(args.h - curve.order) <= 1e-12
    exps = hls.HlsExponents.matched(args.alpha, h, args.p)
    levels = _int_range(args.levels)
    if max(levels) > curve.level or min(levels) < 1:
        raise ValidationError(f"levels {levels} outside 1..{curve.level}")
    rep = hls.worst_case_search(curve, exps, args.trials, args.seed, levels, strict=strict)
    rows = [
        [r.level, exps.alpha, exps.p, exps.q, r.max_iota_normalized, r.max_ratio, r.argmax_id]
        for r in rep.levels
    ]
    out = _out_dir(args)
    io.write_csv(out / "hls.csv", HLS_COLUMNS, rows)

    verify = {}
    if args.verify_cells > 0:
        # spot check of the closed form against the quadrature oracle
        c = curve.coarsen(min(levels))
        rng = hls.trial_generator(args.seed, 0, 2**32)
        N = c.n_intervals
        worst = 0.0
        for _ in range(args.verify_cells):
            k, l = (int(v) for v in rng.integers(0, N, size=2))
            ref = hls.iota_quadrature(c, k, l, exps.alpha)
            got = hls.iota_closed_form(c, k, l, exps.alpha)
            worst = max(worst, abs(got - ref) / abs(ref))
        verify = {"level": c.level, "cells": args.verify_cells, "max_rel_error": worst}

    norm_rows = [
        {"level": r.level, "b": curve.b, "max_iota_normalized": r.max_iota_normalized} for r in rep.levels
    ]
    summary = {
        "curve_sha256": next(iter(hashes.values())),
        "seed": args.seed,
        "trials": args.trials,
        "exponents": {"alpha": exps.alpha, "p": exps.p, "q": exps.q, "h": exps.h},
        "matched_order": strict,
        "tolerances": {"quad_rtol": hls.QUAD_RTOL, "exponent_relation": 1e-12},
        "levels": [vars(r) for r in rep.levels],
        "max_ratio": rep.max_ratio,
        "scaling_slope": hls.scaling_slope(norm_rows) if len(levels) > 1 else None,
        "verification": verify,
    }
    io.write_json(out / "hls_summary.json", summary)
    manifest.outputs.update(csv=str(out / "hls.csv"), summary=str(out / "hls_summary.json"))
    manifest.results.update(max_ratio=rep.max_ratio)
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(plotting.plot_hls(io.read_csv(out / "hls.csv"), out / "hls.png"))
    return out / "manifest.json"


STRICHARTZ_COLUMNS = ["level", "q", "p", "width", "ratio"]


def cmd_strichartz(args, manifest):
    curve, hashes = _curve_arg(args.curve)
    manifest.input_hashes.update(hashes)
    d = args.dim
    if args.auto_q:
        pair = propagator.AdmissiblePair.from_p(args.p, curve.order, d)
        strict = True
    else:
        if args.q is None:
            raise ValidationError("give --q or --auto-q")
        h = curve.order if args.h is None else args.h
        strict = args.h is None
        pair = propagator.AdmissiblePair(args.q, args.p, h, d)
    if strict and abs(pair.h - curve.order) > 1e-12:
        raise NotAdmissible(f"pair is {pair.h}-admissible but the curve has order {curve.order}")
    grid = propagator.SpatialGrid(d, args.grid, args.domain)
    widths = _float_list(args.widths)
    if not widths or min(widths) <= 0:
        raise ValidationError("widths must be positive")
    levels = _int_range(args.levels)
    rows = []
    for n in levels:
        for w in widths:
            f = propagator.gaussian(grid, w, args.amplitude)
            _, ratio = propagator.strichartz_norm(f, pair, curve, n, args.T, strict=strict)
            rows.append([n, pair.q, pair.p, w, ratio])
    out = _out_dir(args)
    io.write_csv(out / "strichartz.csv", STRICHARTZ_COLUMNS, rows)
    ratios = np.array([r[-1] for r in rows])
    manifest.outputs["csv"] = str(out / "strichartz.csv")
    manifest.results.update(
        q=pair.q,
        p=pair.p,
        h=pair.h,
        max_over_min=float(ratios.max() / ratios.min()) if ratios.min() > 0 else None,
    )
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(
            plotting.plot_strichartz(io.read_csv(out / "strichartz.csv"), out / "strichartz.png")
        )
    return out / "manifest.json"


TRACE_COLUMNS = ["step", "t", "mass", "peak", "grad_norm"]


def _solver_config(args, method):
    grid = propagator.SpatialGrid(args.dim, args.grid, args.domain)
    if args.curve:
        curve, hashes = _curve_arg(args.curve)
    else:
        curve, hashes = selfaffine.build(selfaffine.DEFAULT_PATTERN, args.time_level), {}
    init = nls.InitialData("gaussian", args.amplitude, args.width)
    cfg = nls.SolverConfig(args.sigma, args.lam, args.T, args.time_level, grid, curve, method, init)
    return cfg, hashes


def _write_trace(out, trace):
    io.write_csv(out / "trace.csv", TRACE_COLUMNS, list(trace.rows()))


def cmd_nls_evolve(args, manifest):
    cfg, hashes = _solver_config(args, args.method)
    manifest.input_hashes.update(hashes)
    manifest.results["config"] = cfg.metadata()
    out = _out_dir(args)
    manifest.outputs.update(trace=str(out / "trace.csv"), field=str(out / "field.bin"))
    try:
        final, trace = nls.evolve(cfg)
    except NumericalFailure as exc:
        if getattr(exc, "partial", None) is not None:
            _write_trace(out, exc.partial)
        raise
    _write_trace(out, trace)
    io.save_field(final, out / "field.bin")
    manifest.results.update(
        mass_drift=trace.mass_drift,
        peak_growth=trace.peak_growth,
        grad_growth=trace.grad_growth,
        divergence_suspected=trace.divergence_suspected,
        mixed_norm=trace.mixed_norm,
    )
    if cfg.lam == 0:
        c = cfg.curve.coarsen(cfg.time_level)
        tau = (int(c.values[cfg.steps]) - int(c.values[0])) / float(c.scale)
        ref = propagator.apply_propagator(cfg.initial_field(), tau)
        err = propagator.WaveField(cfg.grid, final.values - ref.values).l2() / ref.l2()
        manifest.results["linear_reference_error"] = err
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(plotting.plot_trace(io.read_csv(out / "trace.csv"), out / "trace.png"))
    return out / "manifest.json"


PICARD_COLUMNS = ["iteration", "difference", "ratio"]


def cmd_nls_picard(args, manifest):
    cfg, hashes = _solver_config(args, "picard")
    manifest.input_hashes.update(hashes)
    manifest.results["config"] = cfg.metadata()
    out = _out_dir(args)
    manifest.outputs.update(
        picard=str(out / "picard.csv"), trace=str(out / "trace.csv"), field=str(out / "field.bin")
    )

    def write_iters(res):
        d = res.distances
        rows = [[i + 1, d[i], (d[i] / d[i - 1] if i and d[i - 1] > 0 else "")] for i in range(len(d))]
        io.write_csv(out / "picard.csv", PICARD_COLUMNS, rows)

    try:
        res = nls.picard_iterate(cfg, args.iters)
    except NumericalFailure as exc:
        if getattr(exc, "partial", None) is not None:
            write_iters(exc.partial)
        raise
    write_iters(res)
    grid = cfg.grid
    dt = cfg.dt
    rows = []
    for j in range(1, cfg.steps + 1):
        f = propagator.WaveField(grid, res.slices[j])
        rows.append([j, j * dt, f.mass(), f.peak(), f.grad_norm()])
    io.write_csv(out / "trace.csv", TRACE_COLUMNS, rows)
    io.save_field(res.final(grid), out / "field.bin")
    manifest.results.update(distances=res.distances, ratios=res.ratios, r=res.r, p=res.p)
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(plotting.plot_picard(res.distances, out / "picard.png"))
    return out / "manifest.json"


SCAN_COLUMNS = [
    "sigma", "curve", "H", "subcritical", "peak_growth", "grad_growth",
    "mass_drift", "divergence_suspected", "status",
]


def cmd_scan(args, manifest):
    sigmas = _float_list(args.sigmas)
    if not sigmas:
        raise ValidationError("empty sigma list")
    cfg, hashes = _solver_config(argparse.Namespace(**{**vars(args), "sigma": sigmas[0]}), args.method)
    manifest.input_hashes.update(hashes)
    rows = nls.criticality_scan(cfg, sigmas, args.control)
    out = _out_dir(args)
    io.write_csv(out / "scan.csv", SCAN_COLUMNS, rows)
    manifest.outputs["csv"] = str(out / "scan.csv")
    manifest.results["rows"] = len(rows)
    if args.plot:
        from . import plotting

        manifest.outputs["figure"] = str(plotting.plot_scan(io.read_csv(out / "scan.csv"), out / "scan.png"))
    return out / "manifest.json"


# ------------------------------------------------------------------ parser


def _common(p, out_default):
    p.add_argument("--config", help="JSON file of defaults (flag names or a run manifest)")
    p.add_argument("--out", default=out_default, help="output location")
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSV")


def _solver_flags(p, sigma=True):
    if sigma:
        p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--time-level", type=int, default=5)
    p.add_argument("--grid", type=int, default=1024, help="points per axis")
    p.add_argument("--domain", type=float, default=32.0, help="box length L")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--curve", default=None, help="curve JSON (default pattern if omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdl", description="Rough-dispersion NLS experiments.")
    parser.add_argument("--version", action="version", version=f"fdl {io.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    curve = sub.add_parser("curve", help="self-affine curves")
    csub = curve.add_subparsers(dest="action", required=True)
    b = csub.add_parser("build", help="build a pattern curve and write it as JSON")
    b.add_argument("--a", type=int, default=2)
    b.add_argument("--b", type=int, default=4)
    b.add_argument("--m", default="++-+", help="up-interval steps, e.g. ++-+")
    b.add_argument("--d", default="--+-", help="down-interval steps")
    b.add_argument("--level", type=int, default=8)
    _common(b, "curve.json")
    b.set_defaults(func=cmd_curve_build)

    h = sub.add_parser("hls", help="worst-case search for the modified HLS constant")
    h.add_argument("--curve", required=False)
    h.add_argument("--alpha", type=float, default=0.5)
    h.add_argument("--p", type=float, default=None, help="default p = q")
    h.add_argument("--h", type=float, default=None, help="order used for the exponents (default: curve order)")
    h.add_argument("--levels", default="2:6")
    h.add_argument("--trials", type=int, default=64)
    h.add_argument("--seed", type=int, default=42)
    h.add_argument("--verify-cells", type=int, default=0, help="quadrature spot checks")
    _common(h, "hls_out")
    h.set_defaults(func=cmd_hls)

    s = sub.add_parser("strichartz", help="homogeneous Strichartz ratios over Gaussian widths")
    s.add_argument("--curve", required=False)
    s.add_argument("--p", type=float, default=4.0)
    s.add_argument("--q", type=float, default=None)
    s.add_argument("--auto-q", action="store_true", help="solve the admissibility relation for q")
    s.add_argument("--h", type=float, default=None, help="admissibility order if not the curve's")
    s.add_argument("--levels", default="5:7")
    s.add_argument("--widths", default="1,0.5,0.25,0.125,0.0625,0.03125")
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=8192)
    s.add_argument("--domain", type=float, default=64.0)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--T", type=float, default=1.0)
    _common(s, "strichartz_out")
    s.set_defaults(func=cmd_strichartz)

    n = sub.add_parser("nls", help="nonlinear solvers")
    nsub = n.add_subparsers(dest="action", required=True)
    ev = nsub.add_parser("evolve", help="split-step evolution")
    _solver_flags(ev)
    ev.add_argument("--method", choices=["lie", "strang"], default="strang")
    _common(ev, "nls_out")
    ev.set_defaults(func=cmd_nls_evolve)
    pc = nsub.add_parser("picard", help="Picard iteration of the Duhamel map")
    _solver_flags(pc)
    pc.add_argument("--iters", type=int, default=10)
    _common(pc, "picard_out")
    pc.set_defaults(func=cmd_nls_picard)

    sc = sub.add_parser("scan", help="criticality scan against a control curve")
    sc.add_argument("--sigmas", default="1,2,3,4")
    sc.add_argument("--control", default="identity", choices=["identity", "none"])
    sc.add_argument("--method", choices=["lie", "strang"], default="strang")
    _solver_flags(sc, sigma=False)
    _common(sc, "scan_out")
    sc.set_defaults(func=cmd_scan, time_level=4, grid=512)
    return parser


def _leaf(parser, argv):
    """The subparser that handles ``argv`` (walks the subcommand words)."""
    node = parser
    for word in argv:
        if word.startswith("-"):
            break
        actions = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions or word not in actions[0].choices:
            break
        node = actions[0].choices[word]
    return node


# step patterns such as "--+-" look like options to argparse
_STEP_FLAGS = ("--m", "--d")


def _glue_steps(argv):
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _STEP_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def parse_args(argv=None):
    argv = _glue_steps(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        leaf = _leaf(parser, argv)
        cfg = _load_config(known.config)
        dests = {a.dest for a in leaf._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        leaf.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    manifest = None
    manifest_path = None
    try:
        args = parse_args(argv)
        command = " ".join(w for w in [args.command, getattr(args, "action", None)] if w)
        manifest = io.ExperimentManifest(command, _params(args), seed=getattr(args, "seed", None))
        t0 = time.perf_counter()
        out = Path(args.out)
        if args.func is cmd_curve_build:
            manifest_path = out.with_name(out.stem + ".manifest.json")
        else:
            manifest_path = out / "manifest.json"
        args.func(args, manifest)
        manifest.results["wall_time_s"] = time.perf_counter() - t0
        status = EXIT_OK
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    if manifest is not None and manifest_path is not None:
        manifest.close(status)
        try:
            manifest.write(manifest_path)
        except OSError as exc:  # pragma: no cover
            print(f"warning: could not write manifest: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
