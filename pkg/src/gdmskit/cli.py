"""Command line interface: ``gdmskit <command> --system FILE [options]``.

Exit codes: 0 success, 1 invalid input, 2 node budget exceeded (partial
results are still written, flagged as truncated).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config
from .counting import DEFAULT_BUDGET, BorelRegion, Coding, count_diameters, count_periodic, count_preimages, growth_rate
from .errors import BudgetExceededError, GdmsError, InvalidGeometryError, InvalidInputError
from .gdms import detect_parabolic, is_D_generic, validate

log = logging.getLogger("gdmskit")

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def _load(args):
    defn = config.load_definition(args.system)
    return defn, config.build_system(defn)


def _hyperbolic(system, n_cap: int):
    """The system itself, or its induced system when parabolic."""
    from .parabolic import induce

    if detect_parabolic(system).is_parabolic:
        ind = induce(system, n_cap)
        return ind.star, ind
    return system, None


def _dimension(system, n_cap: int):
    from .thermo import PressureEvaluator, bowen_dimension

    hyp, ind = _hyperbolic(system, n_cap)
    ev = PressureEvaluator(hyp)
    lo = 0.5 + 1e-6 if hyp.tails else None
    return bowen_dimension(ev, s_min=lo), hyp, ind, ev


def _coding(args) -> Coding:
    prefix = tuple(int(x) for x in args.rho_prefix.split(",") if x != "") if args.rho_prefix else ()
    period = tuple(int(x) for x in args.rho_period.split(",") if x != "")
    return Coding(prefix, period)


def _region(text: str | None) -> BorelRegion:
    if not text:
        return BorelRegion("whole")
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"--region: {exc.msg}") from None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInputError("--region must be a JSON object with a 'kind' key")
    return BorelRegion(spec["kind"], tuple(spec.get("params", ())), bool(spec.get("complement", False)),
                       bool(spec.get("boundary_null_assumed", True)))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_pressure(args) -> int:
    from .thermo import PressureEvaluator

    _, system = _load(args)
    hyp, _ = _hyperbolic(system, args.n_cap)
    ev = PressureEvaluator(hyp, method=args.method, level=args.level)
    rows = []
    for s in args.s:
        pv = ev.pressure(s)
        rows.append({"s": s, "pressure": pv.value, "error": pv.error, "method": ev.method})
        print(f"P({s:g}) = {pv.value:.12g} +/- {pv.error:.3g} [{ev.method}]")
    if args.out:
        _write_json(_out_dir(args) / "pressure.json", rows)
    return EXIT_OK


def cmd_dimension(args) -> int:
    _, system = _load(args)
    res, hyp, ind, _ = _dimension(system, args.n_cap)
    lo, hi = res.bracket
    print(f"delta = {res.delta:.10f} bracket [{lo:.10f}, {hi:.10f}] error {res.error:.3g} method {res.method}")
    if ind is not None:
        print(f"induced system: {ind.n_letters} letters, N_cap {ind.N_cap}")
    if args.out:
        rep = validate(hyp)
        _write_json(_out_dir(args) / "dimension.json", {
            "delta": res.delta, "bracket": list(res.bracket), "error": res.error, "method": res.method,
            "induced": ind is not None,
            "validation": {k: v.status for k, v in rep.checks.items()},
        })
    return EXIT_OK


def cmd_measure(args) -> int:
    from .thermo import gibbs_measure, thermo_report

    _, system = _load(args)
    res, hyp, _, ev = _dimension(system, args.n_cap)
    meas = gibbs_measure(hyp, res.delta, args.depth)
    C = meas.gibbs_constant(args.depth)
    print(f"delta = {res.delta:.10f}  Gibbs constant C = {C:.6g} (|w| <= {args.depth})")
    if args.out:
        out = _out_dir(args)
        t = meas.table(args.depth)
        with open(out / "cylinders.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["word", "m", "mu", "psi"])
            for word, m, mu in zip(t.words, t.m, t.mu):
                w.writerow([".".join(str(int(e)) for e in word), repr(float(m)), repr(float(mu)), repr(float(mu / m))])
        rep = thermo_report(hyp, args.depth, ev)
        _write_json(out / "thermo.json", rep.to_dict())
    return EXIT_OK


def _t_grid(args) -> np.ndarray:
    if args.t_max <= args.t_min or args.t_points < 2:
        raise InvalidInputError("need t_min < t_max and t_points >= 2")
    return np.linspace(args.t_min, args.t_max, args.t_points)


def cmd_count(args) -> int:
    _, system = _load(args)
    T = _t_grid(args)
    region = _region(args.region)
    delta = args.delta
    if delta is None:
        delta = _dimension(system, args.n_cap)[0].delta
    kw = dict(region=region, delta=delta, max_len=args.max_len, budget=args.budget, threads=args.threads)
    status = EXIT_OK
    try:
        if args.kind == "preimage":
            rep = count_preimages(system, _coding(args), T, **kw)
        elif args.kind == "periodic":
            rep = count_periodic(system, T, **kw)
        else:
            if not args.y:
                raise InvalidInputError("--y is required for diameter counts")
            Y = json.loads(args.y)
            Y = np.array([complex(*p) if isinstance(p, list) else float(p) for p in Y])
            rep = count_diameters(system, _coding(args), Y, T, mode="D" if args.kind == "diameter-D" else "E", **kw)
    except BudgetExceededError as exc:
        rep = exc.partial
        status = EXIT_BUDGET
        print(f"budget exceeded: {exc}", file=sys.stderr)
        if rep is None:
            return status
    last = int(rep.counts[-1])
    print(f"N({T[-1]:.6g}) = {last}  limit estimate {rep.limit_estimate:.6g}  oscillation {rep.oscillation:.4g}"
          + ("  [truncated]" if rep.truncated else ""))
    if len(T) >= 5 and rep.counts[0] > 0:
        print(f"growth rate {growth_rate(rep):.6g} (delta {delta:.6g})")
    if args.out:
        out = _out_dir(args)
        rep.to_csv(out / f"count_{args.kind}.csv")
        rep.to_json(out / f"count_{args.kind}.json")
    return status


def cmd_induce(args) -> int:
    from .parabolic import classify_finiteness, induce, parabolic_profile
    from .thermo import PressureEvaluator, bowen_dimension

    _, system = _load(args)
    ind = induce(system, args.n_cap)
    res = bowen_dimension(PressureEvaluator(ind.star), s_min=0.5 + 1e-6 if ind.star.tails else None)
    prof = classify_finiteness(res.delta, parabolic_profile(ind.base)) if ind.omega else None
    print(f"{ind.n_letters} induced letters (N_cap {ind.N_cap}); delta = {res.delta:.10f}")
    if prof is not None:
        for a, p in prof.indices.items():
            print(f"letter {a}: parabolic index p = {p:.4f} (residual {prof.residuals[a]:.3g})")
        print(f"Omega_infinity = {list(prof.Omega_infinity)}; invariant measure finite: {prof.measure_finite}"
              + (f"; boundary cases {list(prof.boundary_cases)}" if prof.boundary_cases else ""))
    verdict = is_D_generic(ind.star, word_budget=2)
    print(f"D-genericity of the induced system: {verdict}")
    if args.out:
        out = _out_dir(args)
        with open(out / "induced_letters.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["letter", "base_word", "sup_log_derivative"])
            for k, (word, sl) in enumerate(zip(ind.star_words, ind.sup_logs)):
                w.writerow([k, ".".join(map(str, word)), repr(float(sl))])
        _write_json(out / "induce.json", {
            "delta": res.delta, "N_cap": ind.N_cap, "letters": ind.n_letters,
            "indices": {str(k): v for k, v in (prof.indices.items() if prof else [])},
            "Omega_infinity": list(prof.Omega_infinity) if prof else [],
            "measure_finite": prof.measure_finite if prof else True,
            "d_generic": verdict.verdict,
        })
    return EXIT_OK


def cmd_pack(args) -> int:
    from .kleinian import Packing, enumerate_packing, generation_counts
    from .systems import apollonian

    defn = config.load_definition(args.system)
    if defn["family"] != "apollonian":
        raise InvalidInputError("pack needs an apollonian system file")
    cs = config._circles(defn) if "circles" in defn else None
    ap = apollonian(cs)
    source = ap if args.convention == "packing" else ap.triangle
    status = EXIT_OK
    try:
        if args.by_generation is not None:
            pk = enumerate_packing(source, generations=args.by_generation, budget=args.budget)
        else:
            pk = enumerate_packing(source, T=args.by_diameter, budget=args.budget)
    except BudgetExceededError as exc:
        status = EXIT_BUDGET
        print(f"budget exceeded: {exc}", file=sys.stderr)
        pk = exc.partial or Packing(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0, dtype=int), [])
    n_gen = len(pk)
    seeds = [(c, 0, ()) for c in ap.circles]
    print(f"{n_gen} circles ({args.convention} convention) + {len(seeds)} seed circles")
    if args.by_generation is not None:
        gc = generation_counts(args.by_generation)
        print("generation counts by convention: " + ", ".join(f"{k}={v}" for k, v in gc.items()))
    if args.out:
        out = _out_dir(args)
        with open(out / "packing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cx", "cy", "r", "generation", "word"])
            for c, _, _ in seeds:
                w.writerow([repr(c.center.real), repr(c.center.imag), repr(float(c.radius)), 0, ""])
            for c, r, g, wd in zip(pk.centers, pk.radii, pk.generations, pk.words):
                w.writerow([repr(float(c.real)), repr(float(c.imag)), repr(float(r)), int(g), "".join(str(s) for s in wd)])
    return status


def cmd_clt(args) -> int:
    from .stats import HistogramSpec, apollonian_histogram, exact_counting_distribution, gibbs_chain_sample, ks_distance
    from .thermo import gibbs_measure, lyapunov, variance

    defn, system = _load(args)
    out = _out_dir(args) if args.out else None
    if defn["family"] == "apollonian":
        from .kleinian import enumerate_packing
        from .systems import apollonian

        delta = args.delta or _dimension(system, args.n_cap)[0].delta
        cs = config._circles(defn) if "circles" in defn else None
        tri = apollonian(cs).triangle
        gen = args.generation
        if gen is None:
            gen = int(np.floor(np.log(args.budget) / np.log(3)))
        pk = enumerate_packing(tri, generations=gen, budget=args.budget, keep_words=False)
        h = apollonian_histogram(pk, HistogramSpec(args.bins), delta)
        print(f"generation {gen}: {h.n_circles} circles; weighted mean {h.mean:.6g} variance {h.var:.6g} "
              f"skewness {h.skewness:.4f} excess kurtosis {h.excess_kurtosis:.4f}; "
              f"Gaussian moment check {'pass' if h.gaussian_check() else 'fail'}")
        if out:
            h.to_csv(out / "histogram.csv")
        return EXIT_OK
    res, hyp, _, ev = _dimension(system, args.n_cap)
    delta = res.delta
    chi = lyapunov(hyp, delta, ev).chi
    sig2 = variance(hyp, delta, ev)
    tab = exact_counting_distribution(hyp, _coding(args), args.n, delta, chi, budget=args.budget)
    ks = ks_distance(tab, np.sqrt(sig2)) if sig2 > 0 else float("nan")
    ksm = ks_distance(tab, np.sqrt(sig2), midpoint=True) if sig2 > 0 else float("nan")
    print(f"n = {args.n}: chi = {chi:.10g} sigma^2 = {sig2:.6g} KS = {ks:.4f} (midpoint {ksm:.4f}) "
          f"atoms {len(tab)} total weight {tab.total_weight:.6g}")
    if args.chain:
        meas = gibbs_measure(hyp, delta, 2)
        smp = gibbs_chain_sample(hyp, meas, args.chain, args.seed)
        print(f"chain of {args.chain} steps: mean step {np.mean(smp.steps):.6g}")
    if out:
        tab.to_csv(out / "distribution.csv")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .thermo import spectral_radius_complex

    _, system = _load(args)
    res, hyp, _, _ = _dimension(system, args.n_cap)
    sigma = res.delta if args.sigma is None else args.sigma
    rows = []
    for t in args.t:
        r = spectral_radius_complex(hyp, complex(sigma, t), args.depth)
        rows.append({"t": t, "normalized_radius": r})
        print(f"t = {t:g}: normalized spectral radius {r:.10f}")
    verdict = is_D_generic(hyp)
    print(f"D-genericity: {verdict}")
    for r in verdict.ratios[:5]:
        print(f"  basis ratio {r:.15g}")
    if args.out:
        _write_json(_out_dir(args) / "spectrum.json", {"sigma": sigma, "depth": args.depth, "radii": rows,
                                                      "d_generic": verdict.verdict})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", required=True, help="system definition file (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--budget", type=int, default=int(DEFAULT_BUDGET), help="node budget")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n-cap", type=int, default=200, help="inducing truncation for parabolic systems")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gdmskit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pressure", parents=[common], help="topological pressure P(s)")
    sp.add_argument("--s", type=float, nargs="+", required=True)
    sp.add_argument("--method", default="auto", choices=["auto", "exact", "operator", "words"])
    sp.add_argument("--level", type=int)
    sp.set_defaults(func=cmd_pressure)

    sp = sub.add_parser("dimension", parents=[common], help="Bowen dimension")
    sp.set_defaults(func=cmd_dimension)

    sp = sub.add_parser("measure", parents=[common], help="conformal and invariant cylinder measures")
    sp.add_argument("--depth", type=int, default=4)
    sp.set_defaults(func=cmd_measure)

    sp = sub.add_parser("count", parents=[common], help="counting functions")
    sp.add_argument("--kind", choices=["preimage", "periodic", "diameter-D", "diameter-E"], default="preimage")
    sp.add_argument("--t-min", type=float, default=1.0)
    sp.add_argument("--t-max", type=float, required=True)
    sp.add_argument("--t-points", type=int, default=201)
    sp.add_argument("--rho-prefix", default="")
    sp.add_argument("--rho-period", default="0")
    sp.add_argument("--region", help='JSON, e.g. {"kind": "interval", "params": [0, 0.5]}')
    sp.add_argument("--y", help="JSON list of points of Y (numbers or [x, y] pairs)")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--max-len", type=int)
    sp.set_defaults(func=cmd_count)

    sp = sub.add_parser("induce", parents=[common], help="induced system and parabolic profile")
    sp.set_defaults(func=cmd_induce)

    sp = sub.add_parser("pack", parents=[common], help="enumerate Apollonian packing circles")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--by-generation", type=int)
    g.add_argument("--by-diameter", type=float, help="T: keep circles of diameter >= exp(-T)")
    sp.add_argument("--convention", choices=["triangle", "packing"], default="triangle")
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("clt", parents=[common], help="counting CLT distribution or packing histogram")
    sp.add_argument("--n", type=int, default=12)
    sp.add_argument("--rho-prefix", default="")
    sp.add_argument("--rho-period", default="0")
    sp.add_argument("--chain", type=int, default=0, help="also sample a Gibbs chain of this length")
    sp.add_argument("--generation", type=int)
    sp.add_argument("--bins", type=int, default=46)
    sp.add_argument("--delta", type=float)
    sp.set_defaults(func=cmd_clt)

    sp = sub.add_parser("spectrum", parents=[common], help="complex spectral radius and D-genericity")
    sp.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--depth", type=int, default=8)
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InvalidInputError, InvalidGeometryError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GdmsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
