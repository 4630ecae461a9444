"""Command-line driver: invariant reports and golden checks for the example loops."""
from __future__ import annotations

import argparse
import json
import math
import random
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import geom, toric
from .errors import HamloopError, InvalidParameters
from .invariant import (InvariantReport, chern_pairing, compute_invariant, corollary_punctured,
                        corollary_two_charts, integrable_invariant)
from .scenarios import hirzebruch as hz
from .scenarios import sphere as sph
from .scenarios import torus as tor

SCHEMA = "1"
TWO_PI = 2 * math.pi

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

SPHERE_EPSILON_HATS = (0.1, 0.3, 0.5, 0.8, 1.2)
TORUS_SEEDS = 10
HIRZEBRUCH_DEFAULTS = ((1, "3", "1"), (2, "5", "1"))
IDENTITY_SAMPLES = 20


@dataclass(frozen=True)
class Tolerances:
    invariant_rel: float = 0.01  # extrapolated Hirzebruch totals
    term_rel: float = 0.02  # extrapolated Hirzebruch boundary terms
    ratio_rel: float = 0.02  # numerical I_psi_tilde / I_psi against -k/2
    absolute: float = 1e-6  # quantities that vanish exactly
    chern: float = 1e-4
    maslov_residual: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict
    spec: geom.QuadratureSpec
    ladder: tuple = hz.DEFAULT_LADDER
    output_format: str = "table"
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    out: Optional[str] = None

    def __post_init__(self):
        if not self.ladder or min(self.ladder) <= 0:
            raise InvalidParameters("ladder values must be positive")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise InvalidParameters("ladder must be strictly decreasing")
        if any(v <= 0 for v in asdict(self.tolerances).values()):
            raise InvalidParameters("tolerances must be positive")


# ---------------------------------------------------------------------------
# serialisation


def rational(value: Fraction) -> dict:
    value = Fraction(value)
    return {"num": value.numerator, "den": value.denominator, "float": float(value)}


def _clean(obj):
    """Convert to JSON-ready builtins; rationals become {num, den, float}."""
    if isinstance(obj, Fraction):
        return rational(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    return obj


def report_dict(report: InvariantReport) -> dict:
    return {
        "chart_terms": [
            {"chart": c.chart, "maslov": c.maslov, "residual": c.residual, "volume": c.volume,
             "volume_error": c.volume_error, "contribution": c.contribution}
            for c in report.chart_terms
        ],
        "pair_terms": [
            {"pair": list(p.pair), "chain": p.chain, "value": p.value, "error": p.error,
             "winding": p.winding, "collapsed": p.collapsed}
            for p in report.pair_terms
        ],
        "total": report.total,
        "error": report.error,
        "ladder": list(report.ladder),
        "ladder_totals": list(report.ladder_totals),
        "extrapolated": report.extrapolated,
    }


def check(name: str, computed, expected, tol: float, kind: str = "abs") -> dict:
    """A pass/fail record; kind is "abs", "rel" or "exact"."""
    if kind == "exact":
        passed = computed == expected
        delta = 0.0 if passed else float(abs(Fraction(computed) - Fraction(expected)))
    else:
        delta = abs(float(computed) - float(expected))
        scale = abs(float(expected)) if kind == "rel" else 1.0
        passed = delta <= tol * scale
    return {"name": name, "computed": computed, "expected": expected, "tolerance": tol,
            "kind": kind, "delta": delta, "passed": bool(passed)}


# ---------------------------------------------------------------------------
# scenario runners; each returns a section {"name", "results", "checks"}


def run_sphere(cfg: RunConfig, eps_hats: Sequence[float] = ()) -> dict:
    tol = cfg.tolerances
    spec = cfg.spec
    scenario = sph.SphereScenario(float(cfg.params.get("epsilon_hat", 0.3)))
    atlas, chains, phases, loop = scenario.build(spec)
    report = compute_invariant(atlas, loop, chains, phases, spec)
    expected = sph.sphere_expected()
    j_u, j_v = (c.maslov for c in report.chart_terms)
    chern = chern_pairing(atlas, chains, phases, spec)

    # the two chart corollary for several overlap widths
    corollary = {}
    for eh in eps_hats or (scenario.epsilon_hat,):
        sc = sph.SphereScenario(eh)
        a, ch, ph, lp = sc.build(spec)
        rep = compute_invariant(a, lp, ch, ph, spec, estimate_error=False)
        vols = [c.volume for c in rep.chart_terms]
        corollary[repr(eh)] = corollary_two_charts(
            rep.chart_terms[0].maslov, rep.chart_terms[1].maslov, vols[0], vols[1], 1,
            sc.boundary_value(lp), chern_pairing(a, ch, ph, spec))

    # U is the complement of the south pole, which the rotation fixes
    south = np.array([[0.0, -1.0]])
    tn, tw = geom.gauss_legendre(spec.time_order, 1, 0.0, 1.0)
    f_south = float(sum(w * loop.hamiltonian(t, loop.flow(t, south))[0] for t, w in zip(tn, tw)))
    punctured = corollary_punctured(j_u, 4 * math.pi, 1, f_south, chern)

    caps = integrable_invariant(scenario.polar_cap_data(), lambda x: sph.hamiltonian(0.0, x), 1,
                                spec, sph.MANIFOLD)

    checks = [
        check("J_U", j_u, expected["J_U"], 0, "exact"),
        check("J_V", j_v, expected["J_V"], 0, "exact"),
        check("Maslov residual", max(c.residual for c in report.chart_terms), 0.0,
              tol.maslov_residual),
        check("I", report.total, expected["I"], tol.absolute),
        check("chern pairing", chern, expected["chern"], tol.chern),
        check("punctured-chart formula", punctured, 0, tol.absolute),
        check("polar-cap formula", caps.total, 0, tol.absolute),
        check("polar-cap chern pairing", caps.chern, expected["chern"], tol.chern),
    ]
    checks += [check(f"two-chart formula at epsilon_hat={k}", v, 0, tol.absolute)
               for k, v in corollary.items()]
    return {
        "name": "sphere",
        "results": {
            "epsilon_hat": scenario.epsilon_hat,
            "report": report_dict(report),
            "chern": chern,
            "boundary_value": scenario.boundary_value(loop),
            "two_chart_formula": corollary,
            "punctured_formula": punctured,
            "polar_caps": {"total": caps.total, "chern": caps.chern,
                           "weighted": list(caps.weighted)},
            "expected": expected,
        },
        "checks": checks,
    }


def run_torus(cfg: RunConfig, cases: Sequence[tuple] = ()) -> dict:
    tol = cfg.tolerances
    cases = cases or ((int(cfg.params.get("n", 1)), cfg.seed),)
    terms = int(cfg.params.get("terms", 3))
    results, checks = [], []
    for n, seed in cases:
        report = tor.invariant_report(n, seed, terms, cfg.spec)
        label = f"n={n} seed={seed}"
        results.append({"n": n, "seed": seed, "report": report_dict(report)})
        checks.append(check(f"J ({label})", report.chart_terms[0].maslov, 0, 0, "exact"))
        checks.append(check(f"I ({label})", report.total, 0, tol.absolute))
    return {"name": "torus", "results": {"runs": results, "expected": tor.torus_expected()},
            "checks": checks}


def run_hirzebruch(cfg: RunConfig, k=None, tau=None, mu=None) -> dict:
    tol = cfg.tolerances
    k = int(cfg.params["k"] if k is None else k)
    tau = hz.parse_rational(cfg.params["tau"] if tau is None else tau)
    mu = hz.parse_rational(cfg.params["mu"] if mu is None else mu)
    scenario = hz.HirzebruchScenario(k, tau, mu)
    expected = hz.hirzebruch_expected(k, tau, mu)
    trap = scenario.trapezoid
    label = f"k={k} tau={tau} mu={mu}"

    reports = hz.ladder_reports(scenario, tuple(cfg.ladder), cfg.spec)
    checks = [
        check(f"kappa from moments ({label})", toric.kappa_from_moments(trap),
              expected["kappa"], 0, "exact"),
        check(f"sum of N' = I_psi ({label})", sum(expected["N"], Fraction(0)),
              expected["I_psi"], 0, "exact"),
        check(f"sum of N~' = I_psi~ ({label})", sum(expected["N_tilde"], Fraction(0)),
              expected["I_psi_tilde"], 0, "exact"),
        check(f"exact ratio ({label})", expected["I_psi_tilde"] / expected["I_psi"],
              expected["ratio"], 0, "exact"),
    ]
    results = {"k": k, "tau": tau, "mu": mu, "expected": expected, "loops": {}}
    for which, key_i, key_n, key_m in (("psi", "I_psi", "N", "maslov_psi"),
                                       ("psi_tilde", "I_psi_tilde", "N_tilde",
                                        "maslov_psi_tilde")):
        rep = reports[which]
        results["loops"][which] = report_dict(rep)
        checks.append(check(f"{which}: Maslov indices ({label})",
                            [c.maslov for c in rep.chart_terms], list(expected[key_m]), 0,
                            "exact"))
        checks.append(check(f"{which}: I ({label})", rep.total, expected[key_i],
                            tol.invariant_rel, "rel"))
        for term, exact in zip(rep.pair_terms, expected[key_n]):
            checks.append(check(f"{which}: N'{term.pair[0]}{term.pair[1]} ({label})",
                                term.value, exact, tol.term_rel, "rel"))
    first = reports["psi"].pair_terms[0]
    checks.append(check(f"winding of r01 on A'01 ({label})", first.winding, -1, 0, "exact"))
    ratio = reports["psi_tilde"].total / reports["psi"].total
    results["numerical_ratio"] = ratio
    checks.append(check(f"numerical ratio ({label})", ratio, expected["ratio"], tol.ratio_rel,
                        "rel"))
    return {"name": f"hirzebruch {label}", "results": results, "checks": checks}


def run_chern(cfg: RunConfig) -> dict:
    scenario = cfg.params["scenario"]
    spec = cfg.spec
    if scenario == "sphere":
        atlas, chains, phases, _ = sph.SphereScenario(float(cfg.params.get("epsilon_hat", 0.3))).build(spec)
        expected = Fraction(2)
    elif scenario == "torus":
        atlas, chains, phases, _ = tor.TorusScenario(int(cfg.params.get("n", 1)), cfg.seed).build(spec)
        expected = Fraction(0)
    else:
        k = int(cfg.params["k"])
        tau, mu = hz.parse_rational(cfg.params["tau"]), hz.parse_rational(cfg.params["mu"])
        scenario_obj = hz.HirzebruchScenario(k, tau, mu)
        atlas, chains, phases, _ = scenario_obj.build(cfg.ladder[-1], "psi", spec)
        expected = toric.chern_number(scenario_obj.trapezoid)
    value = chern_pairing(atlas, chains, phases, spec)
    # the chain integrals converge in eps only for the Hirzebruch atlas
    tol = cfg.tolerances.chern if scenario != "hirzebruch" else cfg.tolerances.term_rel
    kind = "abs" if scenario != "hirzebruch" else "rel"
    return {"name": f"chern {scenario}", "results": {"chern": value, "expected": expected},
            "checks": [check("chern pairing", value, expected, tol, kind)]}


def run_identities(cfg: RunConfig, samples: int = IDENTITY_SAMPLES) -> dict:
    """Exact rational identities for randomly drawn trapezoids."""
    rng = random.Random(cfg.seed)
    checks = []
    for _ in range(samples):
        k = rng.randint(1, 4)
        mu = Fraction(rng.randint(1, 9), rng.randint(1, 5))
        tau = k * mu + Fraction(rng.randint(1, 9), rng.randint(1, 5))
        label = f"k={k} tau={tau} mu={mu}"
        e = hz.hirzebruch_expected(k, tau, mu)
        trap = toric.DelzantTrapezoid(k, tau, mu)
        checks += [
            check(f"sum of N' ({label})", sum(e["N"], Fraction(0)), e["I_psi"], 0, "exact"),
            check(f"sum of N~' ({label})", sum(e["N_tilde"], Fraction(0)), e["I_psi_tilde"], 0,
                  "exact"),
            check(f"kappa ({label})", toric.kappa_from_moments(trap), e["kappa"], 0, "exact"),
            check(f"kappa~ ({label})", toric.kappa_tilde_from_moments(trap), e["kappa_tilde"], 0,
                  "exact"),
        ]
    return {"name": "exact identities", "results": {"samples": samples}, "checks": checks}


def run_verify_all(cfg: RunConfig) -> list:
    sections = [run_sphere(cfg, SPHERE_EPSILON_HATS),
                run_torus(cfg, [(n, s) for n in (1, 2) for s in range(TORUS_SEEDS)])]
    sections += [run_hirzebruch(cfg, k, tau, mu) for k, tau, mu in HIRZEBRUCH_DEFAULTS]
    sections.append(run_identities(cfg))
    return sections


# ---------------------------------------------------------------------------
# output


def build_document(cfg: RunConfig, sections: list) -> dict:
    passed = all(c["passed"] for s in sections for c in s["checks"])
    config = {"subcommand": cfg.subcommand, "params": cfg.params, "spec": asdict(cfg.spec),
              "ladder": list(cfg.ladder), "seed": cfg.seed, "tolerances": asdict(cfg.tolerances)}
    return _clean({"schema": SCHEMA, "config": config, "sections": sections, "passed": passed})


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(value) -> str:
    if isinstance(value, dict) and set(value) == {"num", "den", "float"}:
        return f"{value['num']}/{value['den']}" if value["den"] != 1 else str(value["num"])
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def _report_lines(rep: dict, indent: str) -> list:
    lines = [f"{indent}{'chart':<22}{'J':>4}{'volume':>16}{'J*volume':>16}"]
    for c in rep["chart_terms"]:
        lines.append(f"{indent}{c['chart']:<22}{c['maslov']:>4}{_fmt(c['volume']):>16}"
                     f"{_fmt(c['contribution']):>16}")
    if rep["pair_terms"]:
        lines.append(f"{indent}{'chain':<22}{'wind':>4}{'N':>16}{'error':>16}")
        for p in rep["pair_terms"]:
            lines.append(f"{indent}{p['chain']:<22}{p['winding']:>4}{_fmt(p['value']):>16}"
                         f"{_fmt(p['error']):>16}")
    lines.append(f"{indent}total {_fmt(rep['total'])} (error estimate {_fmt(rep['error'])})")
    if rep["ladder"]:
        lines.append(f"{indent}ladder {_fmt(rep['ladder'])} totals {_fmt(rep['ladder_totals'])}")
        ex = rep["extrapolated"]
        lines.append(f"{indent}linear extrapolation {_fmt(ex['value'])}; "
                     f"eps^2 fit {_fmt(ex['eps_squared_fit'])}")
    return lines


def render_table(doc: dict) -> str:
    lines = [f"hamloop report (schema {doc['schema']})"]
    for section in doc["sections"]:
        lines.append("")
        lines.append(f"== {section['name']} ==")
        res = section["results"]
        if "report" in res:
            lines += _report_lines(res["report"], "  ")
        for run in res.get("runs", []):
            lines.append(f"  n={run['n']} seed={run['seed']}")
            lines += _report_lines(run["report"], "    ")
        for which, rep in res.get("loops", {}).items():
            lines.append(f"  loop {which}")
            lines += _report_lines(rep, "    ")
        for c in section["checks"]:
            flag = "PASS" if c["passed"] else "FAIL"
            lines.append(f"  [{flag}] {c['name']}: computed {_fmt(c['computed'])}, "
                         f"expected {_fmt(c['expected'])}, delta {_fmt(c['delta'])}")
    lines.append("")
    lines.append("ALL CHECKS PASSED" if doc["passed"] else "SOME CHECKS FAILED")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidParameters(message)


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _ladder(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("table", "json"), default="table")
    common.add_argument("--out", metavar="PATH", help="also write the report to PATH")
    common.add_argument("--order", type=_positive_int, default=16,
                        help="Gauss-Legendre order per box direction")
    common.add_argument("--circle-samples", type=_positive_int, default=2048)
    common.add_argument("--time-order", type=_positive_int, default=16)
    common.add_argument("--ladder", type=_ladder, default=hz.DEFAULT_LADDER,
                        help="comma separated, strictly decreasing eps values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rel-tol", type=_positive_float, default=Tolerances.invariant_rel)
    common.add_argument("--term-rel-tol", type=_positive_float, default=Tolerances.term_rel)
    common.add_argument("--abs-tol", type=_positive_float, default=Tolerances.absolute)

    parser = _Parser(prog="hamloop", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    p = sub.add_parser("sphere", parents=[common], help="rotation of the round sphere")
    p.add_argument("--epsilon-hat", type=_positive_float, default=0.3)
    p = sub.add_parser("torus", parents=[common], help="reparameterised flow on a torus")
    p.add_argument("--n", type=_positive_int, default=1)
    p.add_argument("--terms", type=_positive_int, default=3)
    p = sub.add_parser("hirzebruch", parents=[common], help="circle actions on a Hirzebruch surface")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--tau", required=True, help="rational, e.g. 3 or 7/2")
    p.add_argument("--mu", required=True, help="rational, e.g. 1 or 1/2")
    p = sub.add_parser("chern", parents=[common], help="pairing of c1 with [omega]")
    p.add_argument("--scenario", choices=("sphere", "torus", "hirzebruch"), required=True)
    p.add_argument("--epsilon-hat", type=_positive_float, default=0.3)
    p.add_argument("--n", type=_positive_int, default=1)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--tau", default="3")
    p.add_argument("--mu", default="1")
    sub.add_parser("verify-all", parents=[common], help="every golden check")
    return parser


_PARAM_NAMES = ("epsilon_hat", "n", "terms", "k", "tau", "mu", "scenario")


def parse_config(argv: Optional[Sequence[str]]) -> RunConfig:
    args = make_parser().parse_args(argv)
    params = {name: getattr(args, name) for name in _PARAM_NAMES if hasattr(args, name)}
    if "tau" in params:
        # validate early so bad parameters are argument errors
        hz.HirzebruchScenario(params["k"], hz.parse_rational(params["tau"]),
                              hz.parse_rational(params["mu"]))
    spec = geom.QuadratureSpec(order=args.order, circle_samples=args.circle_samples,
                               time_order=args.time_order)
    tols = Tolerances(invariant_rel=args.rel_tol, term_rel=args.term_rel_tol,
                      absolute=args.abs_tol)
    return RunConfig(args.subcommand, params, spec, tuple(args.ladder), args.format, args.seed,
                     tols, args.out)


RUNNERS = {
    "sphere": lambda cfg: [run_sphere(cfg)],
    "torus": lambda cfg: [run_torus(cfg)],
    "hirzebruch": lambda cfg: [run_hirzebruch(cfg)],
    "chern": lambda cfg: [run_chern(cfg)],
    "verify-all": run_verify_all,
}


def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        cfg = parse_config(argv)
    except (InvalidParameters, ValueError) as exc:
        print(f"hamloop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        doc = build_document(cfg, RUNNERS[cfg.subcommand](cfg))
    except InvalidParameters as exc:
        print(f"hamloop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HamloopError as exc:
        print(f"hamloop: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    text = render_json(doc) if cfg.output_format == "json" else render_table(doc)
    stdout.write(text)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK if doc["passed"] else EXIT_FAILED


def main() -> None:
    sys.exit(run())
