"""
cli.py

Command-line front end: one subcommand per experiment, a JSON report (stdout, or --out)
plus pandas side tables next to it. Exit code 0 when every check passed, 2 when a check
failed, 1 on bad input.

Run:
  python run_lab.py check-hormander --model kolmogorov
  python run_lab.py distance --model heat-1d --pair "0,0;0.1,0.04"
  python run_lab.py taylor-order --model kolmogorov --fn "sin(x)"
  python run_lab.py schauder --model kolmogorov --omega-f "pow:0.5" --levels 6 --out runs/wang.json
  python run_lab.py schauder-var --model kolmogorov --out runs/frozen.json --tables xlsx
"""

import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .chart import ExpChart, load_chart, quasi_symmetry_constant, quasi_triangle_constant
from .config import LabSettings, load_settings
from .errors import ChartRadiusError, InputError, LabError, OutOfChartError, RankDeficientError
from .flows import flow_commutator_defect
from .grid import SOLVERS
from .kernel_checks import (annulus_estimates, convolution_check, gamma_bound_check, kernel_residual_check,
                            representation_check, second_derivative_potential_bound)
from .models import CoefficientField, ModelOperator, load_model
from .moduli import dini_integral, parse_modulus, tail_integral
from .reports import TABLE_FORMATS, summary_lines, write_report
from .schauder import (SCALE_RADII, apriori_derivative_check, dini_modulus_of_second_derivatives,
                       mean_value_check, oracle_for, random_trials, reference_solve,
                       variable_coefficient_experiment, wang_iteration)
from .taylor import MIXED_MODES, c2l_mixed_check, fit_slope, remainder_order
from .vectorfields import DRIFT, build_filtration, select_graded_basis

log = logging.getLogger(__name__)

# ---- Config ----
EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FAILED = 2
DEFAULT_MODEL = "kolmogorov"
SAMPLES = 10000
TAYLOR_SLOPE = 2.5
BRACKET_SLOPE = 2.8
BRACKET_STEPS = np.geomspace(1e-3, 1e-1, 9)
TAIL_POINTS = (0.5, 0.1, 0.01, 0.001)
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class Outcome:
    result: dict
    passed: bool
    headline: Tuple[str, ...] = ()
    tables: Dict[str, List[dict]] = field(default_factory=dict)


# ---------- Parsing helpers ----------
def _floats(text: str, what: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise InputError(f"Bad {what} {text!r}: expected comma-separated numbers") from exc


def _point(text: Optional[str], n: int, what: str = "point") -> np.ndarray:
    if not text:
        return np.zeros(n)
    values = _floats(text, what)
    if len(values) != n:
        raise InputError(f"The {what} needs {n} coordinates, got {len(values)}")
    return np.array(values)


def _settings(args) -> LabSettings:
    settings = load_settings(Path(args.settings) if args.settings else None)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid is not None:
        changes["grid"] = args.grid
    if args.width is not None:
        changes["stencil_width"] = args.width
    return settings.replace(**changes) if changes else settings


def _model(args, settings: LabSettings) -> ModelOperator:
    return load_model(args.fields or args.model, settings)


def _rng(settings: LabSettings) -> np.random.Generator:
    return np.random.default_rng(settings.seed)


def _chart(args, model: ModelOperator, settings: LabSettings) -> ExpChart:
    """The --chart dump when given (rebased onto --point if that differs), else a fresh chart at --point."""
    if not args.chart:
        return model.chart(_point(args.point, model.dimension))
    chart = load_chart(Path(args.chart), model.generators, settings)
    if args.point:
        z = _point(args.point, model.dimension)
        if not np.allclose(z, chart.base_point):
            chart = chart.rebase(z)
    return chart


def _caloric(model: ModelOperator) -> str:
    """x1^2 + 2t solves L u = 0 on every shipped model."""
    return f"{model.variables[0]}**2 + 2*{model.variables[-1]}"


def _coefficients(model: ModelOperator, text: Optional[str]) -> CoefficientField:
    if text:
        rows = [[c.strip() for c in row.split(",")] for row in text.split(";")]
    else:
        rows = [["1" if i == j else "0" for j in range(model.m)] for i in range(model.m)]
        rows[0][0] = f"1 + {model.variables[0]}**2/4"
    if len(rows) != model.m or any(len(r) != model.m for r in rows):
        raise InputError(f"Coefficient matrix must be {model.m}x{model.m}")
    return CoefficientField.from_strings(rows, model.variables)


# ---------- Geometry ----------
def _bracket_order(model: ModelOperator, z: np.ndarray, settings: LabSettings) -> List[dict]:
    """Slope of |commutator of flows - exp(a^2 [X, Y])| over a, per generator pair."""
    gens = model.generators
    horizontal = [i for i in range(1, len(gens)) if not gens[i].is_zero()]
    pairs = [(i, j) for k, i in enumerate(horizontal) for j in horizontal[k + 1:]]
    if not gens[DRIFT].is_zero():
        pairs += [(i, DRIFT) for i in horizontal]
    rows = []
    for i, j in pairs:
        defects = np.array([flow_commutator_defect(gens[i], gens[j], a, z, settings) for a in BRACKET_STEPS])
        above = defects > settings.noise_floor
        slope = fit_slope(BRACKET_STEPS[above], defects[above]) if np.sum(above) >= 2 else float("inf")
        rows.append({"pair": f"X{i},X{j}", "slope": slope, "max_defect": float(np.max(defects)),
                     "passed": bool(slope >= BRACKET_SLOPE)})
    return rows


def cmd_check_hormander(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    z = _point(args.point, model.dimension)
    filt = build_filtration(model.generators, z, settings=settings)
    result = {
        "point": z, "dimension": filt.dimension, "ranks": list(filt.ranks),
        "layer_sizes": [len(layer) for layer in filt.layers], "step": filt.step,
        "full_rank": filt.full_rank, "s_max": filt.s_max, "summary": filt.summary(),
    }
    tables = {}
    if not filt.full_rank:
        result["rank"] = filt.ranks[-1]
        return Outcome(result, False, ("step", "rank", "full_rank"))
    basis = select_graded_basis(filt, settings)
    result["basis"] = basis.to_dict()
    result["q"] = basis.q
    brackets = _bracket_order(model, z, settings)
    result["bracket_order"] = brackets
    tables["basis"] = [{"word": e.word.label(), "degree": e.degree} for e in basis.entries]
    tables["bracket_order"] = brackets
    return Outcome(result, all(r["passed"] for r in brackets), ("step", "q", "full_rank"), tables)


def cmd_distance(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    n = model.dimension
    chart = _chart(args, model, settings)
    loaded = chart if args.chart else None
    rows = []
    for text in args.pair or []:
        left, sep, right = text.partition(";")
        if not sep:
            raise InputError(f"Bad pair {text!r}: expected 'z;zeta'")
        z, zeta = _point(left, n, "pair start"), _point(right, n, "pair end")
        row = {"z": z.tolist(), "zeta": zeta.tolist()}
        try:
            local = loaded.rebase(z) if loaded is not None else model.chart(z)
            d = local.quasi_distance(zeta)
            row.update(distance=d, in_chart=bool(d <= local.radius))
        except (OutOfChartError, ChartRadiusError) as exc:
            row.update(distance=None, in_chart=False, reason=str(exc))
        rows.append(row)
    rng = _rng(settings)
    triangle = quasi_triangle_constant(chart, args.samples, rng)
    symmetry = quasi_symmetry_constant(chart, args.samples, rng)
    round_trip = chart.round_trip_error(args.samples, rng)
    result = {
        "pairs": rows, "chart": chart.to_dict(), "quasi_triangle": triangle, "quasi_symmetry": symmetry,
        "C_d": triangle["C_d"], "C_s": symmetry["C_s"], "jacobian_defect": chart.jacobian_defect(),
        "round_trip": round_trip, "round_trip_error": round_trip["max_error"],
    }
    return Outcome(result, True, ("C_d", "C_s", "jacobian_defect", "round_trip_error"), {"pairs": rows})


# ---------- Taylor ----------
def cmd_taylor_order(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    chart = _chart(args, model, settings)
    text = args.fn or f"sin({model.variables[0]})"
    fit = remainder_order(model.function(text), chart, rng=_rng(settings), mixed=args.mixed)
    passed = fit.exact or fit.slope > TAYLOR_SLOPE
    result = {"fn": text, "slope": fit.slope, "exact": fit.exact, "threshold": TAYLOR_SLOPE, "mixed": args.mixed,
              "chart": chart.to_dict()}
    return Outcome(result, passed, ("fn", "slope", "exact"), {"remainders": fit.rows()})


def cmd_c2l_check(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    chart = model.chart(_point(args.point, model.dimension))
    text = args.fn or f"{model.variables[0]}*sqrt(abs({model.variables[-1]}))"
    h = chart.sample_coordinates(args.samples, _rng(settings), chart.radius / 2.0)
    pts, ok = chart.e_map_batch(h)
    report = c2l_mixed_check(model.function(text), chart, pts[ok])
    result = dict(report.to_dict(), fn=text, samples=int(np.sum(ok)), last_ratio=report.sup_ratio[-1])
    rows = [{"s": s, "sup_ratio": r} for s, r in zip(report.steps, report.sup_ratio)]
    return Outcome(result, report.passed, ("fn", "last_ratio", "passed"), {"ratios": rows})


# ---------- Model operators ----------
def cmd_gamma_check(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    rng = _rng(settings)
    bounds = gamma_bound_check(model, args.samples, rng)
    residual = kernel_residual_check(model, rng=rng)
    convolution = convolution_check(model, rng=rng)
    result = {"bounds": bounds.to_dict(), "residual": residual.to_dict(), "convolution": convolution.to_dict(),
              "q": bounds.q, "max_residual": residual.max_relative, "max_convolution_error": convolution.max_error}
    passed = bounds.passed and residual.passed and convolution.passed
    return Outcome(result, passed, ("q", "max_residual", "max_convolution_error"),
                   {"bounds": bounds.rows(), "convolution": convolution.rows()})


def cmd_annulus_check(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    report = annulus_estimates(model, samples=args.samples, seed=settings.seed)
    potential = second_derivative_potential_bound(model, _radii(args), seed=settings.seed)
    result = dict(report.to_dict(), potential=potential.to_dict(), potential_spread=potential.spread)
    passed = report.passed and potential.passed
    return Outcome(result, passed, ("model", "potential_spread", "passed"),
                   {"annulus": report.rows(), "potential": potential.rows()})


def cmd_representation_check(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    text = args.fn or _caloric(model)
    report = representation_check(model, model.function(text), args.radius, rng=_rng(settings))
    result = dict(report.to_dict(), fn=text)
    return Outcome(result, report.passed, ("fn", "relative_error", "halving_gap"), {"points": report.rows()})


# ---------- Schauder experiments ----------
def cmd_max_principle(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    reports = random_trials(model, args.radius, args.trials, _rng(settings))
    rows = [dict(r.to_dict(), trial=k) for k, r in enumerate(reports)]
    violations = sum(not r.passed for r in reports)
    result = {"model": model.name, "radius": args.radius, "trials": rows, "violations": violations}
    return Outcome(result, violations == 0, ("model", "violations"), {"trials": rows})


def _radii(args) -> Sequence[float]:
    return _floats(args.radii, "radii") if args.radii else SCALE_RADII


def cmd_mean_value(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    report = mean_value_check(model, _radii(args), method=args.method)
    result = report.to_dict()
    return Outcome(result, report.passed, ("constant", "stability"), {"constants": report.rows()})


def cmd_apriori(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    report = apriori_derivative_check(model, _radii(args), method=args.method)
    result = report.to_dict()
    return Outcome(result, report.passed, ("passed",), {"directions": report.rows()})


def _rhs_and_reference(args, model: ModelOperator, omega) -> Tuple[Callable, Callable]:
    """Closed-form (u, f) for the modulus, or a fine reference solve with boundary --fn and right side --rhs."""
    if args.rhs and not args.fn:
        raise InputError("--rhs needs boundary data from --fn")
    if args.fn:
        f = model.function(args.rhs) if args.rhs else oracle_for(omega)[1]
        return reference_solve(model, model.function(args.fn), f, method=args.method), f
    return oracle_for(omega)


def cmd_schauder(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    omega = parse_modulus(args.omega_f or "pow:0.5")
    reference, f = _rhs_and_reference(args, model, omega)
    ledger = wang_iteration(model, reference, f, omega, args.levels, method=args.method)
    result = ledger.to_dict()
    return Outcome(result, ledger.passed, ("levels", "last_share", "saturated", "telescoping_error"),
                   {"levels": ledger.rows()})


def cmd_schauder_var(args, settings: LabSettings) -> Outcome:
    model = _model(args, settings)
    coefficients = _coefficients(model, args.coeffs)
    omega_f = parse_modulus(args.omega_f or "zero")
    omega_a = parse_modulus(args.omega_a or "pow:1:0.25")
    f = model.function(args.rhs or "0")
    boundary = model.function(args.fn or f"exp({model.variables[0]})")
    ledger = variable_coefficient_experiment(model, coefficients, omega_a, f, omega_f, args.levels, boundary,
                                             method=args.method)
    result = ledger.to_dict()
    return Outcome(result, ledger.passed, ("levels", "eta", "ellipticity", "last_share"), {"levels": ledger.rows()})


def cmd_dini_integral(args, settings: LabSettings) -> Outcome:
    omega = parse_modulus(args.omega_f or "pow:0.5")
    whole = dini_integral(omega, 0.0, 1.0)
    tails = [{"d": d, "dini": dini_integral(omega, 0.0, d).value, "tail": tail_integral(omega, d)} for d in TAIL_POINTS]
    result = {"omega_f": omega.to_dict(), "dini": whole.value, "divergent": whole.divergent, "tails": tails}
    tables = {"tails": tails}
    headline = ("dini", "divergent")
    if args.second_derivatives:
        model = _model(args, settings)
        u, f = oracle_for(omega)
        report = dini_modulus_of_second_derivatives(model, f, omega, boundary=u, pairs=args.samples,
                                                    rng=_rng(settings), method=args.method)
        result["second_derivatives"] = report.to_dict()
        result["fitted_constant"] = report.constant
        result["fitted_exponent"] = report.exponent
        tables["bins"] = report.rows()
        headline += ("fitted_constant", "fitted_exponent")
    return Outcome(result, not whole.divergent, headline, tables)


COMMANDS: Dict[str, Tuple[Callable, str]] = {
    "check-hormander": (cmd_check_hormander, "filtration ranks, step, graded basis and bracket-flow order"),
    "distance": (cmd_distance, "quasi-distances for pairs, quasi-triangle constant, chart fidelity"),
    "taylor-order": (cmd_taylor_order, "anisotropic Taylor remainder slope"),
    "c2l-check": (cmd_c2l_check, "half-order drift condition on horizontal derivatives"),
    "gamma-check": (cmd_gamma_check, "d_L-power bounds on the fundamental solution plus both kernel oracles"),
    "annulus-check": (cmd_annulus_check, "scale-invariant kernel and cut-off bounds on annuli"),
    "representation-check": (cmd_representation_check, "reproduce a solution from the cut-off representation"),
    "max-principle": (cmd_max_principle, "random Dirichlet trials against the maximum principle"),
    "mean-value": (cmd_mean_value, "scale-invariant Lipschitz bound for solutions"),
    "apriori": (cmd_apriori, "derivative bounds and their scaling exponents"),
    "schauder": (cmd_schauder, "shrinking-cylinder iteration with constant coefficients"),
    "schauder-var": (cmd_schauder_var, "shrinking-cylinder iteration with frozen variable coefficients"),
    "dini-integral": (cmd_dini_integral, "Dini integral of a modulus, optionally the modulus of second derivatives"),
}


# ---------- Main ----------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=DEFAULT_MODEL, help="shipped model name or a field file")
    common.add_argument("--fields", default=None, help="field file (TOML or JSON); overrides --model")
    common.add_argument("--point", default=None, help="base point, comma-separated (default: origin)")
    common.add_argument("--chart", default=None,
                        help="chart JSON dump (a chart object or a distance report) for distance and taylor-order")
    common.add_argument("--radius", type=float, default=0.5)
    common.add_argument("--radii", default=None, help="comma-separated cylinder radii for scale checks")
    common.add_argument("--levels", type=int, default=None)
    common.add_argument("--grid", type=int, default=None, help="grid nodes per axis (odd)")
    common.add_argument("--width", type=int, default=None, help="second-difference reach in nodes")
    common.add_argument("--method", choices=SOLVERS, default="direct",
                        help="Dirichlet solver: direct (sparse LU, the default) or jacobi (damped relaxation to solver_tol)")
    common.add_argument("--omega-f", default=None, help="zero | pow:a[:c] | log[:c] | expr:<r> | file:<csv/xlsx>")
    common.add_argument("--omega-a", default=None)
    common.add_argument("--fn", default=None, help="test function or boundary data in the model variables")
    common.add_argument("--rhs", default=None, help="right side f in the model variables")
    common.add_argument("--coeffs", default=None, help="coefficient matrix rows split by ';', entries by ','")
    common.add_argument("--mixed", choices=MIXED_MODES, default="chart")
    common.add_argument("--pair", action="append", default=None, help="'z;zeta', repeatable")
    common.add_argument("--samples", type=int, default=SAMPLES,
                        help=f"sampled pairs or points per check (default {SAMPLES})")
    common.add_argument("--trials", type=int, default=20)
    common.add_argument("--second-derivatives", action="store_true")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--settings", default=None, help="TOML or JSON settings overrides")
    common.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    common.add_argument("--tables", choices=TABLE_FORMATS, default="csv")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="hormander-lab",
                                     description="Numerical laboratory for Hormander operators and Schauder estimates.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, text) in COMMANDS.items():
        cmd = sub.add_parser(name, parents=[common], help=text, description=text)
        cmd.set_defaults(func=func)
    return parser


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose", "out", "tables")}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    level = logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        settings = _settings(args)
        outcome = args.func(args, settings)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except RankDeficientError as exc:
        log.error("%s (rank %d of %d)", exc, exc.achieved_rank, exc.dimension)
        return EXIT_FAILED
    except LabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED

    report = {"command": args.command, "inputs": _echo(args), "settings": settings.to_dict(),
              "result": outcome.result, "passed": outcome.passed}
    out = Path(args.out) if args.out else None
    try:
        written = write_report(report, out, outcome.tables, args.tables)
    except OSError as exc:
        log.error("Could not write report: %s", exc)
        return EXIT_INPUT
    if out is not None:
        for line in summary_lines(outcome.result, outcome.headline):
            print(line)
        print(f"Done. Report: {written[0]}")
        for path in written[1:]:
            print(f"Table: {path}")
    if not outcome.passed:
        log.warning("%s: check failed", args.command)
    return EXIT_OK if outcome.passed else EXIT_FAILED
