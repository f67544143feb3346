"""Command line front end: calculators, Monte Carlo runs and figure data.

Every subcommand writes a table (CSV by default, or JSON) to stdout or
``--out``. Rows come out in sweep order whatever the number of workers, and
floats are printed with ``repr`` so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .demography import BottleneckPair, Scenario, load_scenario, years_to_coal
from .exact import (
    WstarConfig,
    hellinger_sq_pair,
    hellinger_upper_bound,
    p_correct_multi_locus,
    p_correct_n3,
    p_correct_scaled_multi,
    p_correct_scaled_single,
    p_correct_single_pair,
    scaled_bound_kim,
)
from .montecarlo import MCConfig, Model, RiskQuery, bayes_risk_conjugate, estimate_p_correct
from .simulate import (
    RngSpec,
    Variant,
    genealogy_batch,
    smc_path_batch,
    write_genealogies_csv,
    write_smc_csv,
)

log = logging.getLogger("coalbayes")

SWEEPABLE = ("S", "J", "a", "c", "n")
INT_PARAMS = {"J", "n"}
FIG_IDS = ("min-s", "ancient", "n3-vs-n2", "ooa-n10", "smc-compare", "const-shift",
           "bounds-compare", "risk-curve")


class UsageError(Exception):
    pass


# -- sweeps -------------------------------------------------------------------

def linear_grid(lo: float, hi: float, count: int) -> list[float]:
    if count < 1:
        raise UsageError("--count must be at least 1")
    if count == 1:
        return [float(lo)]
    return [float(x) for x in np.linspace(lo, hi, count)]


def parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse --values {text!r}") from None
    if not vals:
        raise UsageError("--values is empty")
    return vals


def sweep_values(args) -> list[float] | None:
    """Values of the swept axis, or None when no sweep was requested."""
    if args.values is not None:
        return parse_values(args.values)
    if args.sweep_from is not None or args.sweep_to is not None:
        if args.sweep_from is None or args.sweep_to is None:
            raise UsageError("--from and --to go together")
        return linear_grid(args.sweep_from, args.sweep_to, args.count or 10)
    return None


def expand_sweep(args, base: dict, allowed: Sequence[str]) -> list[dict]:
    vals = sweep_values(args)
    if args.sweep is None:
        if vals is not None:
            raise UsageError("--values/--from/--to need --sweep")
        return [dict(base)]
    if args.sweep not in allowed:
        raise UsageError(f"{args.cmd} cannot sweep {args.sweep!r}; choose from {', '.join(allowed)}")
    if vals is None:
        raise UsageError("--sweep needs --values or --from/--to/--count")
    out = []
    for v in vals:
        p = dict(base)
        p[args.sweep] = int(round(v)) if args.sweep in INT_PARAMS else v
        out.append(p)
    return out


def ordered_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- output -------------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(columns: Sequence[str], rows: Sequence[dict], fmt_name: str,
           comment: str | None = None) -> str:
    if fmt_name == "json":
        body = [{c: r.get(c) for c in columns} for r in rows]
        doc = {"provenance": comment, "rows": body} if comment else body
        return json.dumps(doc, indent=2, default=float) + "\n"
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- parameter plumbing -------------------------------------------------------

def scenario_of(args) -> Scenario:
    try:
        return load_scenario(args.scenario)
    except FileNotFoundError as e:
        raise UsageError(str(e)) from None
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(f"bad scenario file {args.scenario!r}: {e}") from None


def pair_params(args, sc: Scenario) -> dict:
    us = sc.unit_scale
    p = {k: getattr(args, k) for k in ("T", "S", "a", "b", "N0")}
    if args.s_kyr is not None:
        p["S"] = years_to_coal(us, args.s_kyr * 1e3)
    if args.t_kya is not None:
        p["T"] = years_to_coal(us, args.t_kya * 1e3)
    if args.sample_kya is not None:
        p["sample"] = years_to_coal(us, args.sample_kya * 1e3)
    return p


def make_pair(sc: Scenario, p: dict) -> BottleneckPair:
    pair = sc.pair(**{k: p.get(k) for k in ("T", "S", "a", "b", "N0")})
    if p.get("sample"):
        pair = pair.sampled_at(p["sample"])
    return pair


def pair_row(pair: BottleneckPair) -> dict:
    return {"T": pair.T, "S": pair.S, "a": pair.a, "b": pair.b, "N0": pair.N0,
            "lam_T": pair.lam_T}


def require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.cmd} runs Monte Carlo and needs --seed")
    return args.seed


def wstar_cfg(args) -> WstarConfig:
    return WstarConfig(args.wstar_reps, RngSpec(args.seed or 0))


# -- calculator subcommands ----------------------------------------------------

PAIR_COLS = ["T", "S", "a", "b", "N0", "lam_T"]


def cmd_thm(args, which: str):
    sc = scenario_of(args)
    base = pair_params(args, sc)
    base["J"] = args.J
    allowed = ("S", "a", "J") if which == "thm2" else ("S", "a")
    cfg = wstar_cfg(args) if which == "thm2" else None

    def one(p):
        pair = make_pair(sc, p)
        row = pair_row(pair)
        if which == "thm1":
            row["p_correct"] = p_correct_single_pair(pair).value
        elif which == "thm3":
            row["p_correct"] = p_correct_n3(pair).value
        else:
            row["J"] = p["J"]
            row["p_correct"] = p_correct_multi_locus(pair, p["J"], cfg).value
        return row

    rows = ordered_map(one, expand_sweep(args, base, allowed), args.workers)
    cols = PAIR_COLS + (["J"] if which == "thm2" else []) + ["p_correct"]
    return cols, rows, None


def cmd_thm4(args):
    def one(p):
        return {"c": p["c"], "p_correct": p_correct_scaled_single(p["c"]).value}
    rows = ordered_map(one, expand_sweep(args, {"c": args.c}, ("c",)), args.workers)
    return ["c", "p_correct"], rows, None


def cmd_thm5(args):
    def one(p):
        return {"c": p["c"], "J": p["J"], "p_correct": p_correct_scaled_multi(p["c"], p["J"]).value}
    rows = ordered_map(one, expand_sweep(args, {"c": args.c, "J": args.J}, ("c", "J")), args.workers)
    return ["c", "J", "p_correct"], rows, None


def cmd_hellinger(args):
    sc = scenario_of(args)
    base = pair_params(args, sc)
    base["J"] = args.J

    def one(p):
        pair = make_pair(sc, p)
        bound = hellinger_upper_bound(pair, p["J"])
        row = pair_row(pair)
        row.update(J=p["J"], hellinger_sq=hellinger_sq_pair(pair), exact_J1=p_correct_single_pair(pair).value,
                   bound=bound.value, raw_bound=bound.info["raw"], clipped=bound.clipped)
        return row

    rows = ordered_map(one, expand_sweep(args, base, ("S", "a", "J")), args.workers)
    return PAIR_COLS + ["J", "hellinger_sq", "exact_J1", "bound", "raw_bound", "clipped"], rows, None


def cmd_bounds(args):
    def one(p):
        kim = scaled_bound_kim(p["c"], p["J"]).value
        return {"c": p["c"], "J": p["J"], "exact": p_correct_scaled_multi(p["c"], p["J"]).value,
                "kim_bound": kim, "exceeds_one": kim > 1.0}
    rows = ordered_map(one, expand_sweep(args, {"c": args.c, "J": args.J}, ("c", "J")), args.workers)
    return ["c", "J", "exact", "kim_bound", "exceeds_one"], rows, None


def cmd_risk(args):
    def one(p):
        risk, root = bayes_risk_conjugate(RiskQuery(p["J"], p["c"], args.alpha, args.beta))
        return {"J": p["J"], "c": p["c"], "alpha": args.alpha, "beta": args.beta,
                "risk": risk, "root_risk": root}
    rows = ordered_map(one, expand_sweep(args, {"J": args.J, "c": args.c}, ("J", "c")), args.workers)
    return ["J", "c", "alpha", "beta", "risk", "root_risk"], rows, None


MC_COLS = ["scenario", "model", "n", "J", "T", "S", "a", "b", "N0", "lam_T",
           "replicates", "p_correct", "se", "seed"]


def cmd_mc(args, smc: bool):
    seed = require_seed(args)
    sc = scenario_of(args)
    model = Model(args.model or ("SMC_PRIME" if smc else "INDEPENDENT"))
    if smc and model is Model.INDEPENDENT:
        raise UsageError("smc takes --model SMC or SMC_PRIME")
    base = pair_params(args, sc)
    base.update(J=args.J, n=2 if smc else args.n)
    cfg = MCConfig(args.reps, RngSpec(seed), model, workers=args.workers)
    allowed = ("S", "a", "J") if smc else ("S", "a", "J", "n")

    def one(p):
        pair = make_pair(sc, p)
        res = estimate_p_correct(pair, p["n"], p["J"], cfg)
        row = pair_row(pair)
        row.update(scenario=sc.name, model=model.value, n=p["n"], J=p["J"], replicates=cfg.replicates_per_hypothesis,
                   p_correct=res.value, se=res.mc_se, seed=seed)
        return row

    rows = [one(p) for p in expand_sweep(args, base, allowed)]
    return MC_COLS, rows, None


def cmd_sim(args):
    seed = require_seed(args)
    sc = scenario_of(args)
    pair = make_pair(sc, pair_params(args, sc))
    traj = pair.trajectory(args.hypothesis)
    gen = RngSpec(seed).generator(0)
    buf = io.StringIO()
    model = Model(args.model or "INDEPENDENT")
    if model is Model.INDEPENDENT:
        times = genealogy_batch(traj, args.n, args.reps * args.J, gen)
        write_genealogies_csv(buf, times, args.n, args.J)
    else:
        variant = Variant(model.value)
        times, repeats = smc_path_batch(traj, args.J, variant, args.reps, gen)
        write_smc_csv(buf, times, repeats, variant)
    return buf.getvalue()


# -- figures -------------------------------------------------------------------

def _js(args, default: Sequence[int]) -> list[int]:
    if args.js:
        return [int(v) for v in args.js.split(",")]
    return list(default)


def _axis(args, default: list[float]) -> list[float]:
    vals = sweep_values(args)
    if vals is not None:
        return vals
    if args.count:
        return linear_grid(default[0], default[-1], args.count)
    return default


def provenance(fig: str, seed, scenarios: Sequence[Scenario]) -> str:
    sc = " ".join(f"{s.name}:{s.sha256}" for s in scenarios)
    approx = " approximate" if any(s.approximate for s in scenarios) else ""
    return f"coalbayes {__version__} fig={fig} seed={fmt(seed) or 'none'} scenario={sc}{approx}"


def fig_min_s(args):
    sc = scenario_of(args)
    us = sc.unit_scale
    cfg = wstar_cfg(args)
    grid = [(s, J) for s in _axis(args, linear_grid(30, 150, 13)) for J in _js(args, (1, 2, 5, 10, 20, 35, 50))]

    def one(item):
        s_kyr, J = item
        pair = sc.pair(S=years_to_coal(us, s_kyr * 1e3))
        return {"S_kyr": s_kyr, "S": pair.S, "J": J, "p_correct": p_correct_multi_locus(pair, J, cfg).value}

    return ["S_kyr", "S", "J", "p_correct"], ordered_map(one, grid, args.workers), args.seed or 0, [sc]


def fig_ancient(args):
    sc = scenario_of(args)
    us = sc.unit_scale
    cfg = wstar_cfg(args)
    T = sc.pair(S=1.0).T
    panels = [("A", T, _js(args, (2, 3, 5, 10, 15))),
              ("B", years_to_coal(us, 50e3), _js(args, (2, 3, 5, 10, 15, 20)))]
    grid = [(panel, t0, s, J) for panel, t0, js in panels
            for s in _axis(args, linear_grid(10, 150, 15)) for J in js]

    def one(item):
        panel, t0, s_kyr, J = item
        pair = sc.pair(S=years_to_coal(us, s_kyr * 1e3)).sampled_at(t0)
        return {"panel": panel, "sample_kya": t0 * us.years_per_time_unit / 1e3, "lam_T": pair.lam_T,
                "S_kyr": s_kyr, "S": pair.S, "J": J, "p_correct": p_correct_multi_locus(pair, J, cfg).value}

    cols = ["panel", "sample_kya", "lam_T", "S_kyr", "S", "J", "p_correct"]
    return cols, ordered_map(one, grid, args.workers), args.seed or 0, [sc]


def fig_n3_vs_n2(args):
    scs = [load_scenario("constant"), load_scenario("exp-growth")]
    grid = [(sc, a, n) for sc in scs for a in _axis(args, linear_grid(0.1, 4.0, 40)) for n in (2, 3)]

    def one(item):
        sc, a, n = item
        pair = sc.pair(T=1.0, S=0.5, a=a, b=1.0, N0=1.0)
        p = p_correct_single_pair(pair) if n == 2 else p_correct_n3(pair)
        return {"trajectory": sc.name, "a": a, "n": n, "p_correct": p.value}

    return ["trajectory", "a", "n", "p_correct"], ordered_map(one, grid, args.workers), None, scs


def _mc_fig(args, models: Sequence[tuple[str, int]], js_default):
    seed = require_seed(args)
    sc = scenario_of(args)
    us = sc.unit_scale
    cfg_w = WstarConfig(args.wstar_reps, RngSpec(seed))
    grid = [(s, J, label, n) for s in _axis(args, linear_grid(30, 150, 9))
            for J in _js(args, js_default) for label, n in models]

    def one(item):
        s_kyr, J, label, n = item
        pair = sc.pair(S=years_to_coal(us, s_kyr * 1e3))
        if label == "EXACT":
            res = p_correct_multi_locus(pair, J, cfg_w)
            model = "INDEPENDENT"
        else:
            cfg = MCConfig(args.reps, RngSpec(seed), Model(label))
            res = estimate_p_correct(pair, n, J, cfg)
            model = label
        return {"S_kyr": s_kyr, "S": pair.S, "n": n, "J": J, "model": model,
                "method": res.method.value, "p_correct": res.value, "se": res.mc_se}

    cols = ["S_kyr", "S", "n", "J", "model", "method", "p_correct", "se"]
    return cols, ordered_map(one, grid, args.workers), seed, [sc]


def fig_ooa_n10(args):
    return _mc_fig(args, [("EXACT", 2), ("INDEPENDENT", 10)], (1, 5, 10, 20))


def fig_smc_compare(args):
    return _mc_fig(args, [("EXACT", 2), ("SMC_PRIME", 2), ("SMC", 2)], (2, 5, 10, 20, 30, 35))


def fig_const_shift(args):
    grid = [(c, J) for c in _axis(args, linear_grid(0.02, 0.98, 49)) for J in _js(args, (1, 2, 5, 10, 20))]

    def one(item):
        c, J = item
        return {"c": c, "J": J, "p_correct": p_correct_scaled_multi(c, J).value}

    return ["c", "J", "p_correct"], ordered_map(one, grid, args.workers), None, []


def fig_bounds_compare(args):
    sc = scenario_of(args)
    rows = []
    grid = linear_grid(0.1, 4.0, args.count or 20)
    s_grid = linear_grid(0.1, 4.0, args.count or 20)
    for a in grid:
        for S in s_grid:
            pair = sc.pair(a=a, b=1.0, S=S)
            bound = hellinger_upper_bound(pair)
            rows.append({"panel": "hellinger", "a": a, "S": S, "exact": p_correct_single_pair(pair).value,
                         "bound": bound.value, "raw_bound": bound.info["raw"]})
    for J in (1, 10):
        for c in linear_grid(0.02, 0.98, 49):
            kim = scaled_bound_kim(c, J).value
            rows.append({"panel": "kim", "c": c, "J": J, "exact": p_correct_scaled_multi(c, J).value,
                         "bound": kim, "raw_bound": kim})
    return ["panel", "a", "S", "c", "J", "exact", "bound", "raw_bound"], rows, None, [sc]


def fig_risk_curve(args):
    def one(J):
        risk, root = bayes_risk_conjugate(RiskQuery(J, 1.0))
        return {"J": J, "risk": risk, "root_risk": root}

    rows = ordered_map(one, list(range(1, args.j_max + 1)), args.workers)
    return ["J", "risk", "root_risk"], rows, None, []


FIGURES = {
    "min-s": fig_min_s,
    "ancient": fig_ancient,
    "n3-vs-n2": fig_n3_vs_n2,
    "ooa-n10": fig_ooa_n10,
    "smc-compare": fig_smc_compare,
    "const-shift": fig_const_shift,
    "bounds-compare": fig_bounds_compare,
    "risk-curve": fig_risk_curve,
}


# -- parser ---------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, scenario: str = "constant"):
    p.add_argument("--scenario", default=scenario, help="builtin name (ooa, constant, exp-growth) or JSON path")
    p.add_argument("--seed", type=int, default=None, help="RNG seed, unsigned 64-bit")
    p.add_argument("--reps", type=int, default=10_000, help="Monte Carlo replicates per hypothesis")
    p.add_argument("--wstar-reps", type=int, default=100_000, help="draws for the window-sum distribution")
    p.add_argument("--out", default=None, help="write here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--sweep", choices=SWEEPABLE, default=None)
    p.add_argument("--from", dest="sweep_from", type=float, default=None)
    p.add_argument("--to", dest="sweep_to", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--values", default=None, help="comma-separated sweep values")


def _pair_flags(p: argparse.ArgumentParser):
    p.add_argument("--T", type=float, default=None, help="window start (coalescent units)")
    p.add_argument("--S", type=float, default=None, help="window length (coalescent units)")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--N0", type=float, default=None)
    p.add_argument("--s-kyr", type=float, default=None, help="window length in thousands of years")
    p.add_argument("--t-kya", type=float, default=None, help="window start, thousands of years ago")
    p.add_argument("--sample-kya", type=float, default=None, help="age of the samples, thousands of years")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coalbayes", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"coalbayes {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    for name, help_ in [("thm1", "exact, n = 2, one locus"), ("thm2", "exact, n = 2, J independent loci"),
                        ("thm3", "exact, n = 3, one locus"), ("hellinger", "Hellinger upper bound")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        _pair_flags(p)
        p.add_argument("--J", type=int, default=1)

    p = sub.add_parser("thm4", help="exact, N2 = c N1, one locus")
    _common(p)
    p.add_argument("--c", type=float, default=0.5)
    for name, help_ in [("thm5", "exact, N2 = c N1, J loci"), ("bounds", "scaled-pair bound vs exact")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--c", type=float, default=0.5)
        p.add_argument("--J", type=int, default=1)

    for name, help_ in [("mc", "Monte Carlo, independent loci or SMC models"),
                        ("smc", "Monte Carlo under SMC / SMC'"),
                        ("sim", "dump simulated coalescent times")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        _pair_flags(p)
        p.add_argument("--J", type=int, default=1)
        p.add_argument("--n", type=int, default=2)
        p.add_argument("--model", choices=[m.value for m in Model], default=None)
        if name == "sim":
            p.add_argument("--hypothesis", type=int, choices=(1, 2), default=1)

    p = sub.add_parser("risk", help="Bayes risk of the conjugate estimator")
    _common(p)
    p.add_argument("--J", type=int, default=100)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)

    p = sub.add_parser("fig", help="figure data")
    p.add_argument("fig_id", choices=FIG_IDS)
    _common(p, scenario="ooa")
    p.add_argument("--js", default=None, help="comma-separated numbers of loci")
    p.add_argument("--j-max", type=int, default=100)
    return ap


def _fix_fig_scenario(args):
    # the scaled-pair and risk figures do not use a scenario; bounds-compare defaults to N = 1
    if args.fig_id == "bounds-compare" and args.scenario == "ooa":
        args.scenario = "constant"


def dispatch(args) -> str:
    cmd = args.cmd
    if cmd in ("thm1", "thm2", "thm3"):
        out = cmd_thm(args, cmd)
    elif cmd == "thm4":
        out = cmd_thm4(args)
    elif cmd == "thm5":
        out = cmd_thm5(args)
    elif cmd == "hellinger":
        out = cmd_hellinger(args)
    elif cmd == "bounds":
        out = cmd_bounds(args)
    elif cmd == "risk":
        out = cmd_risk(args)
    elif cmd in ("mc", "smc"):
        out = cmd_mc(args, smc=cmd == "smc")
    elif cmd == "sim":
        return cmd_sim(args)
    else:
        _fix_fig_scenario(args)
        cols, rows, seed, scs = FIGURES[args.fig_id](args)
        return render(cols, rows, args.format, provenance(args.fig_id, seed, scs))
    cols, rows, comment = out
    return render(cols, rows, args.format, comment)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("coalbayes: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("coalbayes: --workers must be positive", file=sys.stderr)
        return 2
    try:
        text = dispatch(args)
    except UsageError as e:
        print(f"coalbayes {args.cmd}: {e}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as e:
        print(f"coalbayes {args.cmd}: {e}", file=sys.stderr)
        return 1
    emit(args, text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
