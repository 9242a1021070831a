"""Command-line interface.

Subcommands: ``verdict``, ``roots``, ``chart``, ``simulate``, ``extremal``
and ``selftest``. Machine-readable output is JSON on stdout or CSV files;
``--format svg`` additionally renders matplotlib figures next to the
delimited files.

Exit codes: ``verdict`` returns 0 (stable), 1 (unstable) or 2 (marginal or
undecided); every command returns 64 for malformed input or usage errors
and 70 for internal failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import criteria, distributions, simulator, spectrum
from .criteria import classify, extremal_f_star, extremal_given_u, hayes_bound
from .distributions import DelayDistribution, dist_from_json, single_delay
from .simulator import DelayMode, HematoModel, HistorySpec, classify_trace, hemato_from_json
from .spectrum import CharacteristicProblem, rightmost_root

EXIT_STABLE = 0
EXIT_UNSTABLE = 1
EXIT_MARGINAL = 2
EXIT_USAGE = 64
EXIT_FAILURE = 70

#: (r, h) panel points of the model comparison figure
FIG_POINTS = {
    "i": (1.0, 1.5),
    "ii": (1.0, 1.9),
    "iii": (1.0, 3.0),
    "iv": (0.0, 1.9),
    "v": (1.0, 1.9),
    "vi": (1.3, 1.9),
}


class CliError(Exception):
    """Bad input or usage; maps to exit 64."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2), which collides with "marginal"
        raise CliError(message)


def parse_dist(spec: str) -> DelayDistribution:
    """Parse --dist values: ``single:X``, a JSON file path, or inline JSON."""
    if spec.startswith("single:"):
        try:
            return single_delay(float(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise CliError(f"bad single-delay spec {spec!r}: {exc}") from exc
    text = spec
    if not spec.lstrip().startswith("{"):
        path = Path(spec)
        if not path.exists():
            raise CliError(f"distribution file {spec!r} not found")
        text = path.read_text()
    try:
        return dist_from_json(json.loads(text))
    except (json.JSONDecodeError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"bad distribution JSON: {exc}") from exc


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_verdict(args) -> int:
    problem = CharacteristicProblem(args.a, args.b, parse_dist(args.dist))
    verdict = classify(problem, eps_stab=args.tol if args.tol is not None else spectrum.EPS_STAB)
    _emit(verdict.to_json())
    if verdict.stable is True:
        return EXIT_STABLE
    if verdict.stable is False:
        return EXIT_UNSTABLE
    return EXIT_MARGINAL


def cmd_roots(args) -> int:
    problem = CharacteristicProblem(args.a, args.b, parse_dist(args.dist))
    report = rightmost_root(problem, box_height=args.box_height)
    _emit(report.to_json())
    return 0


def _chart_region(a: float, b: float, dist: DelayDistribution, mean: float) -> int:
    if a <= -b:
        return 5
    if a >= abs(b):
        return 1
    bound = hayes_bound(a, b)
    if mean < bound:
        return 2
    report = rightmost_root(CharacteristicProblem(a, b, dist))
    return 3 if report.rightmost_real < 0.0 else 4


def _hayes_curve(mean: float, a_lo, a_hi, b_lo, b_hi, n: int = 400) -> np.ndarray:
    # parametrized by phi = omega * E in (0, pi); phi -> 0 gives (-1/E, 1/E)
    pts = [(-1.0 / mean, 1.0 / mean)]
    for phi in np.linspace(1e-6, math.pi - 1e-3, n):
        b = phi / (mean * math.sin(phi))
        a = -b * math.cos(phi)
        pts.append((a, b))
    arr = np.array(pts)
    keep = (arr[:, 0] >= a_lo) & (arr[:, 0] <= a_hi) & (arr[:, 1] >= b_lo) & (arr[:, 1] <= b_hi)
    keep[0] = True  # the intersection endpoint is always emitted
    return arr[keep]


def cmd_chart(args) -> int:
    dist = parse_dist(args.dist)
    mean = dist.mean()
    if mean <= 0:
        raise CliError("chart needs a distribution with positive mean")
    a_lo, a_hi = args.a_range
    b_lo, b_hi = args.b_range
    na, nb = args.resolution
    if na < 2 or nb < 2:
        raise CliError("resolution must be at least 2 per axis")
    a_vals = np.linspace(a_lo, a_hi, na)
    b_vals = np.linspace(b_lo, b_hi, nb)
    labels = np.empty((nb, na), dtype=int)
    for i, b in enumerate(b_vals):
        for j, a in enumerate(a_vals):
            labels[i, j] = _chart_region(float(a), float(b), dist, mean)

    intersection = (-1.0 / mean, 1.0 / mean)
    boundaries = {
        "b=-a": np.array([(a, -a) for a in a_vals if b_lo <= -a <= b_hi]),
        "a=|b|": np.array([(abs(b), b) for b in b_vals if a_lo <= abs(b) <= a_hi]),
        "mean-bound": _hayes_curve(mean, a_lo, a_hi, b_lo, b_hi),
    }

    out = Path(args.out)
    written = []
    if args.format == "json":
        payload = {
            "a": a_vals.tolist(),
            "b": b_vals.tolist(),
            "region": labels.tolist(),
            "boundaries": {k: v.tolist() for k, v in boundaries.items()},
            "intersection": [intersection[0], intersection[1]],
        }
        path = out.with_suffix(".json")
        path.write_text(json.dumps(payload, indent=2))
        written.append(path)
    else:
        path = out.with_suffix(".csv")
        with path.open("w") as fh:
            fh.write("a,b,region\n")
            for i, b in enumerate(b_vals):
                for j, a in enumerate(a_vals):
                    fh.write(f"{float(a)!r},{float(b)!r},{labels[i, j]}\n")
        written.append(path)
        bpath = out.parent / (out.name + "_boundaries.csv")
        with bpath.open("w") as fh:
            fh.write("curve,a,b\n")
            for name, poly in boundaries.items():
                for a, b in poly:
                    fh.write(f"{name},{float(a)!r},{float(b)!r}\n")
            fh.write(f"intersection,{intersection[0]!r},{intersection[1]!r}\n")
        written.append(bpath)
    if args.format == "svg" or args.plot:
        from .plotting import chart_figure, save_figure

        fig = chart_figure(a_vals, b_vals, labels, boundaries, intersection,
                           title=f"stability regions, mean delay {mean:g}")
        fpath = out.with_suffix(".svg")
        save_figure(fig, fpath)
        written.append(fpath)
    for path in written:
        print(path)
    return 0


def _default_linear_dt(dist: DelayDistribution) -> float:
    if dist.is_mixture and dist.rho > 0.0:
        beta_max = max(beta for _, _, beta in dist.effective_kernels())
        return min(0.01, 0.2 / beta_max)
    delays = [t for _, t in dist.effective_atoms() if t > 0.0]
    if not delays:
        return 0.01
    return 0.9 * min(0.01, min(delays) / 20.0)


def cmd_simulate(args) -> int:
    out = Path(args.out)
    summary: dict = {"traces": []}
    if args.model:
        try:
            model = hemato_from_json(json.loads(Path(args.model).read_text()))
        except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
            raise CliError(f"bad model file {args.model!r}: {exc}") from exc
        points = args.points.split(",") if args.points else [None]
        modes = ([DelayMode.DISTRIBUTED_CHAIN, DelayMode.DISCRETE_AT_MEAN]
                 if args.mode == "both" else [DelayMode(args.mode)])
        for point in points:
            if point is None:
                m, tag = model, "model"
            else:
                if point not in FIG_POINTS:
                    raise CliError(f"unknown point {point!r}; expected one of {sorted(FIG_POINTS)}")
                r, h = FIG_POINTS[point]
                m = HematoModel(model.alpha, model.k0, r, h, model.lineages)
                tag = point
            dt = args.dt or 0.9e-3 * min(min(1.0 / b for _, _, b in m.lineages), m.mean_delay() / 20.0)
            t_end = args.t_end or 400.0
            history = HistorySpec.constant(args.history if args.history is not None else 1.1)
            figure_traces = []
            for mode in modes:
                trace = simulator.simulate_hemato(m, history, t_end, dt, mode)
                path = out.parent / f"{out.name}_{tag}_{mode.value}.csv"
                trace.to_csv(path)
                cls = classify_trace(trace)
                summary["traces"].append({
                    "point": tag, "mode": mode.value, "file": str(path),
                    "classification": cls.value, "clipped_steps": trace.clipped_steps,
                    "truncated": trace.truncated,
                })
                figure_traces.append((mode.value, trace))
                print(path)
            if args.format == "svg" or args.plot:
                from .plotting import save_figure, trace_figure

                fig = trace_figure(figure_traces, title=f"point {tag} (r={m.r:g}, h={m.h:g})",
                                   target=1.0)
                fpath = out.parent / f"{out.name}_{tag}.svg"
                save_figure(fig, fpath)
                print(fpath)
    else:
        if args.a is None or args.b is None or args.dist is None:
            raise CliError("simulate needs either --model or the triple --a --b --dist")
        dist = parse_dist(args.dist)
        problem = CharacteristicProblem(args.a, args.b, dist)
        dt = args.dt or _default_linear_dt(dist)
        t_end = args.t_end or 80.0
        history = HistorySpec.constant(args.history if args.history is not None else 1.0)
        trace = simulator.simulate_linear(problem, history, t_end, dt)
        path = out.with_suffix(".csv")
        trace.to_csv(path)
        cls = classify_trace(trace)
        summary["traces"].append({
            "file": str(path), "classification": cls.value, "truncated": trace.truncated,
        })
        print(path)
        if args.format == "svg" or args.plot:
            from .plotting import save_figure, trace_figure

            fig = trace_figure([("x", trace)], title=f"a={args.a:g}, b={args.b:g}")
            fpath = out.with_suffix(".svg")
            save_figure(fig, fpath)
            print(fpath)
    (out.parent / (out.name + "_summary.json")).write_text(json.dumps(summary, indent=2))
    return 0


def cmd_extremal(args) -> int:
    payload: dict = {"a": args.a, "mean": args.mean, "omega_s": args.omega}
    if args.u is not None:
        t_mean = args.omega * args.mean
        sol = extremal_given_u(args.a, t_mean, args.u)
        density = criteria.chord_density(args.u, sol.v1, t_mean, args.omega)
        payload.update({
            "u": args.u,
            "T": t_mean,
            "v1": sol.v1,
            "v_roots": list(sol.v_roots),
            "s_value": sol.s_value,
            "density": density.to_json(),
        })
    else:
        ex = extremal_f_star(args.a, args.mean, args.omega)
        payload.update({
            "p2_star": ex.p2_star,
            "tau2_star": ex.tau2_star,
            "s_value": ex.s_value(),
            "density": ex.to_delay_distribution().to_json(),
        })
    _emit(payload)
    return 0


def cmd_selftest(args) -> int:
    tol = args.tol if args.tol is not None else 1e-4
    rng = np.random.default_rng(args.seed)
    checks: list[tuple[str, bool, str]] = []

    c, theta_c = criteria.constants_c_thetac()
    checks.append(("chord constants", abs(c - 0.7246) < tol and abs(theta_c - 2.3311) < tol,
                   f"c={c:.6f}, theta_c={theta_c:.6f}"))

    fig1 = distributions.discrete([(0.8, 0.625), (0.2, 3.5)])
    ws = criteria.cs_crossings(-0.5, fig1)
    ok = len(ws) >= 1 and abs(ws[0] - 0.8308) < 1e-3
    detail = f"omega_s={ws[0]:.4f}" if ws else "no crossing"
    if ok:
        sol = extremal_given_u(-0.5, ws[0] * 1.2, 0.625 * ws[0])
        ok = abs(sol.v1 - 1.3056) < 1e-3 and abs(sol.v_roots[-1] - 2.9078) < 1e-3
        detail += f", v1={sol.v1:.4f}, v2={sol.v_roots[-1]:.4f}"
    checks.append(("worst-case two-delay construction", ok, detail))

    e_star = hayes_bound(-0.5, 1.0)
    checks.append(("critical mean delay", hayes_bound(0.0, 1.0) == math.pi / 2
                   and abs(e_star - 1.2092) < 1e-4, f"E*={e_star:.6f}"))

    report = rightmost_root(CharacteristicProblem(0.0, 1.0, single_delay(math.pi / 2)))
    checks.append(("boundary roots at +-i", abs(report.rightmost_real) < 1e-6,
                   f"rightmost={report.rightmost_real:.2e}"))

    d = distributions.gamma_mixture([(0.4, 3, 1.5), (0.6, 2, 4.0)], rho=0.7)
    checks.append(("distribution JSON round-trip",
                   dist_from_json(d.to_json()).to_json() == d.to_json(), "gamma mixture"))

    bad = 0
    for _ in range(20):
        b = rng.uniform(0.2, 2.0)
        a = rng.uniform(-b * 0.95, b * 0.95)
        bound = hayes_bound(a, b)
        mean = rng.uniform(0.1, 0.9) * bound
        n = rng.integers(1, 6)
        raw = rng.uniform(0.0, 1.0, n)
        delays = np.sort(rng.uniform(0.0, 3.0, n))
        while delays.sum() == 0.0:
            delays = np.sort(rng.uniform(0.0, 3.0, n))
        weights = raw / raw.sum()
        dist = distributions.discrete(
            [(float(w), float(t)) for w, t in zip(weights, delays * (mean / float(weights @ delays)))])
        rep = rightmost_root(CharacteristicProblem(a, b, dist))
        if not rep.rightmost_real < 0.0:
            bad += 1
    checks.append(("subcritical means are stable (20 random draws)", bad == 0, f"{bad} failures"))

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name} ({detail})")
        failed += 0 if ok else 1
    return 0 if failed == 0 else 1


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _range_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise CliError(f"expected LO:HI, got {text!r}") from exc
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise CliError(f"range {text!r} must be finite with LO < HI")
    return lo, hi


def _resolution(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            n = int(parts[0])
            return n, n
        na, nb = int(parts[0]), int(parts[1])
        return na, nb
    except ValueError as exc:
        raise CliError(f"expected N or NAxNB, got {text!r}") from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="delaystab",
                     description="Stability analysis for linear equations with distributed delays")
    parser.add_argument("--tol", type=float, default=None,
                        help="tolerance override (verdict margin, selftest checks)")
    parser.add_argument("--seed", type=int, default=12345, help="seed for randomized suites")
    parser.add_argument("--format", choices=["csv", "json", "svg"], default="csv",
                        help="output format for file-producing commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verdict", help="stability verdict for (a, b, distribution)")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--dist", required=True, help="single:X, JSON file, or inline JSON")
    p.set_defaults(fn=cmd_verdict)

    p = sub.add_parser("roots", help="certified rightmost characteristic roots")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--box-height", type=float, default=None)
    p.set_defaults(fn=cmd_roots)

    p = sub.add_parser("chart", help="region chart over an (a, b) grid")
    p.add_argument("--a-range", type=_range_pair, required=True, metavar="LO:HI")
    p.add_argument("--b-range", type=_range_pair, required=True, metavar="LO:HI")
    p.add_argument("--resolution", type=_resolution, default=(41, 41), metavar="N[xM]")
    p.add_argument("--dist", required=True)
    p.add_argument("--out", default="chart")
    p.add_argument("--plot", action="store_true", help="also render the figure")
    p.set_defaults(fn=cmd_chart)

    p = sub.add_parser("simulate", help="time-domain integration")
    p.add_argument("--model", help="hemato model JSON file")
    p.add_argument("--mode", default="both",
                   choices=["distributed_chain", "discrete_at_mean", "both"])
    p.add_argument("--points", help="comma-separated figure points (i..vi)")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--dist")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--history", type=float, default=None, help="constant history value")
    p.add_argument("--out", default="simulate_out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("extremal", help="worst-case two-delay construction")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--E", dest="mean", type=float, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--u", type=float, default=None,
                   help="anchor the first rescaled lag at u instead of zero")
    p.set_defaults(fn=cmd_extremal)

    p = sub.add_parser("selftest", help="quick verification of pinned reference values")
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - propagate as nonzero exit, never a traceback
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
