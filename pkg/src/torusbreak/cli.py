"""Command-line front end binding all modules.

Subcommands: approximants, lindstedt, pade, newton, greene, tongue, verify.
Each run writes its outputs plus a ``manifest.json`` (config echo, versions,
wall time) under ``--out``.  Exit codes: 0 success, 1 usage error, 2
numerical failure (partial outputs are kept).
"""
import argparse
import json
import os
import platform
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .precision import Context
from . import maps, frequencies, lindstedt, pade, kamnewton, greene


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _default_digits():
    env = os.environ.get("TORUSBREAK_DIGITS")
    if env:
        try:
            return max(int(env), 15)
        except ValueError:
            raise UsageError(f"TORUSBREAK_DIGITS={env!r} is not an integer")
    return 60


def _load_config(path):
    """TOML config: map keys at top level, method sections below."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc}")


def _spec_from_args(args, need_map=True):
    cfg = {}
    if getattr(args, "map", None):
        cfg = _load_config(args.map)
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    if getattr(args, "epsilon", None) is not None:
        flat["epsilon"] = args.epsilon
    if not flat:
        if need_map:
            raise UsageError("a --map config file is required")
        return None, cfg
    flat.setdefault("epsilon", 0.0)
    try:
        spec = maps.spec_from_config(flat)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad map config: {exc}")
    return spec, cfg


def _section(cfg, name):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise UsageError(f"[{name}] must be a table")
    return sec


def _resolve_frequency(name, d):
    """Named frequency -> scalar (d=1) or 2-vector (d=2) object."""
    if d == 1:
        if name in frequencies.NAMED_SCALARS:
            return frequencies.NAMED_SCALARS[name]
        raise UsageError(
            f"unknown scalar frequency {name!r} "
            f"(choose from {sorted(frequencies.NAMED_SCALARS)})")
    if name in frequencies.NAMED_VECTORS:
        return frequencies.NAMED_VECTORS[name]
    raise UsageError(
        f"unknown frequency vector {name!r} "
        f"(choose from {sorted(frequencies.NAMED_VECTORS)})")


def _omega_values(freq, ctx):
    v = freq.value(ctx)
    return v if isinstance(v, tuple) else (v,)


def _write_manifest(outdir, subcommand, config, t0, extra=None):
    import numpy
    import gmpy2
    from . import __version__
    doc = {
        "subcommand": subcommand,
        "config": config,
        "versions": {
            "torusbreak": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "gmpy2": gmpy2.version(),
        },
        "wall_time_s": round(time.time() - t0, 3),
    }
    if extra:
        doc.update(extra)
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_approximants(args):
    ctx = Context(_default_digits())
    n = args.n
    path = os.path.join(args.out, "approximants.csv")
    if args.freq in frequencies.NAMED_VECTORS:
        triples = frequencies.jacobi_perron(
            frequencies.NAMED_VECTORS[args.freq], n, ctx=ctx)
        with open(path, "w") as f:
            f.write("p1,p2,q\n")
            for p1, p2, q in triples:
                f.write(f"{p1},{p2},{q}\n")
    elif args.freq in frequencies.NAMED_SCALARS:
        pairs = frequencies.cf_approximants(
            frequencies.NAMED_SCALARS[args.freq], n, ctx=ctx)
        with open(path, "w") as f:
            f.write("p,q\n")
            for p, q in pairs:
                f.write(f"{p},{q}\n")
    else:
        raise UsageError(f"unknown frequency {args.freq!r}")
    return {"freq": args.freq, "n": n}


def _cmd_lindstedt(args):
    spec, cfg = _spec_from_args(args)
    sec = _section(cfg, "lindstedt")
    order = args.order or int(sec.get("order", 32))
    backend = args.backend or sec.get("backend", "gmp")
    digits = args.digits or int(sec.get("digits", _default_digits()))
    ctx = Context(digits)
    freq = _resolve_frequency(args.freq, spec.d)
    series = lindstedt.lindstedt_series(spec, freq, order, ctx=ctx,
                                        backend=backend)
    lindstedt.save_series(series, os.path.join(args.out, "series.txt"))
    est = lindstedt.radius_estimate(series)
    with open(os.path.join(args.out, "radius.json"), "w") as f:
        json.dump([{k: v for k, v in r.items() if k != "sequence"}
                   for r in est], f, indent=2)
        f.write("\n")
    return {"freq": args.freq, "order": order, "backend": backend,
            "digits": digits,
            "radius": [r["estimate"] for r in est]}


def _point_series(series, psibar, component):
    ctx = series.ctx
    coeffs = [series.P[j - 1][component].value(psibar)
              for j in range(1, series.order + 1)]
    return pade.ScalarSeries(coeffs=coeffs, ctx=ctx,
                             provenance=f"component {component + 1}")


def _cmd_pade(args):
    t0 = time.time()
    if args.series:
        series = lindstedt.load_series(args.series)
        spec = series.spec
    else:
        spec, cfg = _spec_from_args(args)
        sec = _section(cfg, "lindstedt")
        order = args.order or int(sec.get("order", 64))
        backend = sec.get("backend", "dd" if spec.d == 2 else "gmp")
        ctx = Context(args.digits or _default_digits())
        freq = _resolve_frequency(args.freq, spec.d)
        series = lindstedt.lindstedt_series(spec, freq, order, ctx=ctx,
                                            backend=backend)
    psibar = lindstedt.default_psibar(spec.d)
    all_poles = []
    for comp in range(spec.d):
        ss = _point_series(series, psibar, comp)
        poles, _ = pade.pole_analysis(ss)
        all_poles.extend(poles)
    pade.write_poles_csv(all_poles, os.path.join(args.out, "poles.csv"))
    est = pade.threshold_estimate(all_poles)
    pade.write_threshold_json(est, os.path.join(args.out, "threshold.json"),
                              meta={"order": series.order})
    if est.n_genuine == 0:
        raise NumericalFailure("no genuine poles survived filtering")
    return {"order": series.order, "annulus": [est.inner, est.outer],
            "crossing": est.crossing, "n_genuine": est.n_genuine,
            "wall_pade_s": round(time.time() - t0, 1)}


def _cmd_newton(args):
    spec, cfg = _spec_from_args(args)
    sec = _section(cfg, "newton")
    freq = _resolve_frequency(args.freq, spec.d)
    omega = _omega_values(freq, Context(30))
    kwargs = {}
    if args.stop_norm or "stop_norm" in sec:
        kwargs["stop_norm"] = args.stop_norm or float(sec["stop_norm"])
    if args.eps_max or "eps_max" in sec:
        kwargs["eps_max"] = args.eps_max or float(sec["eps_max"])
    if "tail_bound" in sec:
        kwargs["tail_bound"] = float(sec["tail_bound"])
    if "tol" in sec:
        kwargs["tol"] = float(sec["tol"])
    result = kamnewton.continuation(spec, omega, **kwargs)
    kamnewton.write_continuation_csv(
        result.records, os.path.join(args.out, "continuation.csv"), spec.d)
    kamnewton.save_embedding(result.embedding,
                             os.path.join(args.out, "embedding.txt"))
    if not result.records:
        raise NumericalFailure("continuation produced no accepted steps")
    last = result.records[-1]
    return {"freq": args.freq, "reason": result.reason,
            "eps_last": last.eps, "norms_last": list(last.norms)}


def _parse_orbits(args, d):
    """-p/-q pairs: -p takes d integers, repeatable; -q one per -p."""
    if not args.p or not args.q or len(args.p) != len(args.q):
        raise UsageError("need matching -p and -q (repeat the pair per orbit)")
    orbits = []
    for pvec, q in zip(args.p, args.q):
        if len(pvec) != d:
            raise UsageError(f"-p takes {d} integer(s) for this map")
        orbits.append((tuple(pvec), q))
    return orbits


def _cmd_greene(args):
    spec, cfg = _spec_from_args(args)
    sec = _section(cfg, "greene")
    eps_hi = args.eps_hi or float(sec.get("eps_hi", 1.5))
    tol = float(sec.get("tol", 1e-3))
    orbits = _parse_orbits(args, spec.d)
    results = []
    for pvec, q in orbits:
        res = greene.greene_threshold(spec, pvec, q, eps_hi, tol=tol)
        results.append(res)
        print(f"p={pvec} q={q}: eps_c={res.eps_c:.4f}"
              f"{' (censored)' if res.censored else ''}", flush=True)
    greene.write_greene_csv(results, os.path.join(args.out, "greene.csv"))
    if any(r.censored for r in results):
        raise NumericalFailure("orbit lost before instability for some p/q")
    return {"orbits": [[list(p), q] for p, q in orbits],
            "eps_c": [r.eps_c for r in results]}


def _cmd_tongue(args):
    spec, cfg = _spec_from_args(args)
    sec = _section(cfg, "greene")
    orbits = _parse_orbits(args, spec.d)
    if len(orbits) != 1:
        raise UsageError("tongue takes exactly one -p/-q pair")
    pvec, q = orbits[0]
    eps_values = args.eps or [float(e) for e in sec.get("eps_values", [])]
    if not eps_values:
        raise UsageError("need --eps values (or eps_values in [greene])")
    tng = greene.tongue_scan(spec, pvec, q, eps_values)
    greene.write_tongue_csv(tng, os.path.join(args.out, "tongue.csv"))
    if not tng.slices:
        raise NumericalFailure("no tongue slice converged")
    return {"p": list(pvec), "q": q, "n_slices": len(tng.slices)}


# -- verify suites -----------------------------------------------------------

def _suite_conformal():
    import random
    rng = random.Random(7)
    for spec in (
        maps.MapSpec(dim=2, lam=(0.8,), mu=(0.3,), epsilon=0.4,
                     potential=maps.PotentialSpec(maps.ONE_HARMONIC_2D)),
        maps.MapSpec(dim=4, lam=(0.8, 0.7), mu=(0.3, 0.9), epsilon=0.2,
                     potential=maps.PotentialSpec(maps.COUPLED_W_4D,
                                                  gamma=0.1)),
    ):
        for _ in range(25):
            vals = [rng.uniform(-2, 2) for _ in range(4)]
            pt = maps.PhasePoint(*vals[:spec.dim])
            err = maps.conformal_check(spec, pt)
            if isinstance(err, tuple):
                err = max(err)
            if err > 1e-12:
                return False, f"conformal identity off by {err:.2e}"
    return True, "conformal identity holds (50 random points)"


def _suite_cohomology():
    ctx = Context(60)
    om = frequencies.NAMED_VECTORS["omega_s"].value(ctx)
    with ctx:
        rhs = (lindstedt.harmonic(2, (3, -2), ctx)
               + lindstedt.harmonic(2, (1, 1), ctx)
               + lindstedt.TrigPoly(2, {(0, 0): ctx.complex("0.5")}, ctx))
        lam = ctx.real("0.8")
        g, mu = lindstedt.cohomology_solve(lam, om, rhs, ctx=ctx)
        delta = tuple(ctx.two_pi * w for w in om)
        mdelta = tuple(-d for d in delta)
        # residual of the functional equation L g - mu = rhs, checked by
        # applying the shifted-difference operator directly
        res = (g.shift(delta) + g.scale(-(1 + lam)) + g.shift(mdelta).scale(lam)
               + rhs.scale(ctx.real(-1)))
        res = res + lindstedt.TrigPoly(2, {(0, 0): ctx.complex(-mu)}, ctx)
        worst = max((float(abs(c)) for c in res.coeffs.values()), default=0.0)
    ok = worst < 10.0 ** (-(ctx.digits - 5))
    return ok, f"cohomology residual {worst:.2e}"


def _suite_pade():
    ctx = Context(40)
    with ctx:
        coeffs = [ctx.complex(1) / (j * j) for j in range(1, 25)]
    ss = pade.ScalarSeries(coeffs=coeffs, ctx=ctx)
    ap = pade.pade(ss, 6, 6)
    tay = ap.taylor(12)
    worst = max(float(abs(tay[k] - ss.coeff(k))) for k in range(13))
    return worst < 1e-30, f"Pade Taylor match {worst:.2e}"


def _suite_pairing():
    spec = maps.MapSpec(dim=2, lam=(0.8,), mu=(0.0,), epsilon=0.5,
                        potential=maps.PotentialSpec(maps.ONE_HARMONIC_2D))
    prob = greene.OrbitProblem(spec=spec, p=(2,), q=3)
    orbit = greene.find_orbit(prob)
    k1, k2 = orbit.eigenvalues
    err = abs(k1 * k2 - 0.8 ** 3)
    return float(err) < 1e-6, f"eigenvalue pairing off by {float(err):.2e}"


_SUITES = {"conformal": _suite_conformal, "cohomology": _suite_cohomology,
           "pade": _suite_pade, "pairing": _suite_pairing}


def _cmd_verify(args):
    names = sorted(_SUITES) if args.suite == "all" else [args.suite]
    failures = []
    report = {}
    for name in names:
        ok, msg = _SUITES[name]()
        print(f"{name}: {'ok' if ok else 'FAIL'} ({msg})", flush=True)
        report[name] = {"ok": ok, "detail": msg}
        if not ok:
            failures.append(name)
    if failures:
        raise NumericalFailure(f"suites failed: {', '.join(failures)}")
    return {"suites": report}


# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="torusbreak", description=__doc__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, with_map=True):
        p.add_argument("--out", default=".", help="output directory")
        if with_map:
            p.add_argument("--map", help="TOML map/method config file")
            p.add_argument("--epsilon", type=float,
                           help="override epsilon from the config")
        p.add_argument("--workers", type=int, default=1,
                       help="worker pool size for independent jobs")
        p.add_argument("--seed", type=int, default=0,
                       help="recorded in the manifest for reproducibility")

    p = sub.add_parser("approximants", help="rational approximants of a frequency")
    p.add_argument("--freq", required=True)
    p.add_argument("-n", type=int, default=6)
    common(p, with_map=False)

    p = sub.add_parser("lindstedt", help="compute and store a Lindstedt series")
    p.add_argument("--freq", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--digits", type=int)
    p.add_argument("--backend", choices=["gmp", "dd"])
    common(p)

    p = sub.add_parser("pade", help="Pade singularity analysis of a series")
    p.add_argument("--freq")
    p.add_argument("--order", type=int)
    p.add_argument("--digits", type=int)
    p.add_argument("--series", help="reuse a stored series file")
    common(p)

    p = sub.add_parser("newton", help="spectral Newton continuation in epsilon")
    p.add_argument("--freq", required=True)
    p.add_argument("--stop-norm", type=float, dest="stop_norm")
    p.add_argument("--eps-max", type=float, dest="eps_max")
    common(p)

    p = sub.add_parser("greene", help="periodic-orbit stability thresholds")
    p.add_argument("-p", type=int, nargs="+", action="append")
    p.add_argument("-q", type=int, action="append")
    p.add_argument("--eps-hi", type=float, dest="eps_hi")
    common(p)

    p = sub.add_parser("tongue", help="Arnold tongue widths over an eps ladder")
    p.add_argument("-p", type=int, nargs="+", action="append")
    p.add_argument("-q", type=int, action="append")
    p.add_argument("--eps", type=float, nargs="+")
    common(p)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("--suite", default="all",
                   choices=sorted(_SUITES) + ["all"])
    common(p, with_map=False)
    return ap


_DISPATCH = {
    "approximants": _cmd_approximants,
    "lindstedt": _cmd_lindstedt,
    "pade": _cmd_pade,
    "newton": _cmd_newton,
    "greene": _cmd_greene,
    "tongue": _cmd_tongue,
    "verify": _cmd_verify,
}


def run(argv):
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if v is not None}
    try:
        extra = _DISPATCH[args.subcommand](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, greene.OrbitError,
            kamnewton.UnderResolvedError, kamnewton.SolvabilityError,
            lindstedt.DivisorUnderflow, pade.SingularMatrixError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _write_manifest(args.out, args.subcommand, config, t0,
                        {"failure": str(exc)})
        return 2
    _write_manifest(args.out, args.subcommand, config, t0, extra)
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
