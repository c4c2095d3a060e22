"""
Concentration Bounds CLI
Bound calculators, norm estimators and verification campaigns from the command line
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

import applications
import canonical
import functional
import montecarlo
import norms
import orlicz
import randomized
from errors import BoundsError, ConfigError
from observability import observability
from schemas import BoundReport, CampaignResult, MonteCarloEstimate, NormEstimate, ValidationReport
from settings import settings


FLOAT_FORMAT = ".12g"
FORMATS = ("table", "json", "csv")


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value.value if hasattr(value, "value") else value)


def _flatten(value: Any, prefix: str = "") -> Dict[str, Any]:
    """Nested dicts become dotted keys; field order is preserved"""
    if isinstance(value, BaseModel):
        value = value.model_dump(mode="json")
    if not isinstance(value, dict):
        return {prefix or "value": value}
    out: Dict[str, Any] = {}
    for key, item in value.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(item, dict):
            out.update(_flatten(item, name))
        else:
            out[name] = item
    return out


def _rows(result: Any) -> List[Dict[str, Any]]:
    if isinstance(result, CampaignResult):
        return [_flatten(point) for point in result.points]
    if isinstance(result, ValidationReport):
        return [_flatten(check) for check in result.properties]
    if isinstance(result, list):
        return [_flatten(item) for item in result]
    return [_flatten(result)]


def _header(result: Any, rows: List[Dict[str, Any]]) -> List[str]:
    if isinstance(result, CampaignResult) and not rows:
        return ["threshold", "empirical_tail", "ci_low", "ci_high", "bound", "dominated", "p_value"]
    header: List[str] = []
    for row in rows:
        header.extend(key for key in row if key not in header)
    return header


def _table(header: List[str], rows: List[Dict[str, Any]]) -> str:
    cells = [[_fmt(row.get(key)) for key in header] for row in rows]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells)
    return "\n".join(lines) + "\n"


def emit_report(result: Any, fmt: str = "table") -> bytes:
    """
    Render a result as JSON, CSV or an aligned text table.

    JSON is the full model dump and parses back into the same model.
    CSV and table hold one row per campaign grid point (one row for any
    other report), floats at 12 significant digits, header always present.
    Single-row tables are printed as key/value pairs.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got '{fmt}'")

    if fmt == "json":
        if isinstance(result, BaseModel):
            return (result.model_dump_json(indent=2) + "\n").encode()
        payload = [r.model_dump(mode="json") if isinstance(r, BaseModel) else r for r in result] \
            if isinstance(result, list) else result
        return (json.dumps(payload, indent=2) + "\n").encode()

    rows = _rows(result)
    header = _header(result, rows)

    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(key)) for key in header])
        return buffer.getvalue().encode()

    if len(rows) == 1 and not isinstance(result, (CampaignResult, ValidationReport, list)):
        pairs = [{"field": key, "value": rows[0][key]} for key in header]
        return _table(["field", "value"], pairs).encode()
    text = _table(header, rows)
    if isinstance(result, CampaignResult):
        s = result.summary
        text += f"\npoints={s.points} violations={s.violations} worst_margin={_fmt(s.worst_margin)}\n"
    return text.encode()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _coefficients(args) -> canonical.CoefficientVector:
    if args.t_file:
        return canonical.CoefficientVector.from_csv(args.t_file)
    if not args.t:
        raise ConfigError("one of --t or --t-file is required")
    return canonical.CoefficientVector(entries=args.t)


def cmd_conjugate(args):
    phi = orlicz.parse_phi(args.phi)
    values = np.atleast_1d(orlicz.conjugate(phi, args.y, numeric=args.numeric))
    return [{"y": y, "phi_star": float(v)} for y, v in zip(args.y, values)]


def cmd_validate_phi(args):
    phi = orlicz.parse_phi(args.phi)
    grid = args.grid if args.grid else orlicz.standard_grid()
    return orlicz.validate_n_function(phi, grid)


def cmd_nv(args):
    phi = orlicz.parse_phi(args.phi)
    return canonical.solve_nv(phi, _coefficients(args), args.v)


def cmd_tail_bound(args) -> BoundReport:
    phi = orlicz.parse_phi(args.phi)
    t = _coefficients(args)
    if args.kind == "general":
        if args.v is None or args.s is None or args.K is None:
            raise ConfigError("tail-bound general needs --v, --s and --K")
        return canonical.tail_bound_general(canonical.solve_nv(phi, t, args.v), args.s, args.K)
    if args.z is None or args.K1 is None or args.K2 is None:
        raise ConfigError("tail-bound iid needs --z, --K1 and --K2")
    return canonical.tail_bound_iid(args.z, t, phi, args.K1, args.K2, args.c, args.l1_mode)


def cmd_randomized(args):
    phi = orlicz.parse_phi(args.phi)
    threshold = randomized.randomized_hoeffding_threshold(args.alpha, args.tau, phi, args.C, args.u)
    return {
        "threshold": threshold,
        "classical": randomized.classical_threshold(args.alpha, args.tau, phi, args.C),
        "expected_tightening": randomized.expected_tightening(args.alpha, args.tau, phi, args.C),
    }


def cmd_functional_bound(args):
    phi = orlicz.parse_phi(args.phi)
    if args.model_file:
        fm = functional.DiscreteFunctionModel.from_json(args.model_file)
    else:
        fm = functional.DiscreteFunctionModel.coins(args.f, args.coins, args.coin)
    inputs = functional.functional_norm_inputs(fm, phi)
    exact = functional.exhaustive_tail(fm, args.t)
    return [
        {"t": t, "A": inputs.A, "B": inputs.B,
         "bound": functional.med_tail_bound(t, inputs.A, inputs.B), "exact_tail": float(p)}
        for t, p in zip(args.t, exact)
    ]


def cmd_pca(args):
    bound = applications.pca_bound(args.d, args.n, args.delta, args.K3)
    report: Dict[str, Any] = {"d": args.d, "n": args.n, "delta": args.delta, "K3": args.K3, "bound": bound}
    if args.psi1 is not None:
        report.update(applications.pca_trace_term_candidates(args.n, args.delta, args.K3, args.psi1))
    return report


def cmd_rademacher(args):
    complexity = args.complexity
    estimate: Optional[MonteCarloEstimate] = None
    if complexity is None:
        if not args.sample:
            raise ConfigError("rademacher needs --complexity or --sample")
        if not Path(args.sample).is_file():
            raise ConfigError(f"sample file not found: {args.sample}")
        data = np.loadtxt(args.sample, delimiter=",", ndmin=2, comments="#")
        estimate = applications.rademacher_complexity_linear(data, args.L, args.n_eps, args.seed)
        complexity = estimate.value
    report: Dict[str, Any] = {
        "complexity": complexity,
        "bound": applications.rademacher_bound(args.n, args.delta, args.L, args.norm_x, complexity),
    }
    if estimate is not None:
        report["complexity_se"] = estimate.standard_error
    if args.norm_y is not None:
        report["regression_bound"] = applications.regression_bound(args.n, args.delta, args.L, args.norm_x, args.norm_y)
    return report


def _campaign_config(args) -> montecarlo.CampaignConfig:
    config = montecarlo.load_config(args.config)
    if args.seed is not None:
        config = montecarlo.CampaignConfig(**{**config.model_dump(), "seed": args.seed})
    return config


def cmd_verify(args) -> CampaignResult:
    result = montecarlo.verify_dominance(_campaign_config(args))
    if args.csv:
        _write(args.csv, emit_report(result, "csv"))
    return result


def cmd_calibrate(args):
    return montecarlo.calibrate_constant(_campaign_config(args), args.constant)


def cmd_norm(args) -> NormEstimate:
    phi = orlicz.parse_phi(args.phi)
    if args.samples:
        samples = norms.load_samples(args.samples)
        if args.kind == "tau":
            return norms.tau_phi_norm_empirical(samples, phi, center=args.center)
        if args.kind == "moment":
            return norms.moment_orlicz_norm_empirical(samples, phi)
        return norms.exp_orlicz_norm(samples)
    if not args.model:
        raise ConfigError("norm needs --model or --samples")
    model = norms.parse_model(args.model)
    if args.kind == "tau":
        return norms.tau_phi_norm(model, phi)
    if args.kind == "moment":
        return norms.moment_orlicz_norm(model, phi)
    return norms.exp_orlicz_norm(model)


COMMANDS = {
    "conjugate": cmd_conjugate,
    "validate-phi": cmd_validate_phi,
    "nv": cmd_nv,
    "tail-bound": cmd_tail_bound,
    "randomized": cmd_randomized,
    "functional-bound": cmd_functional_bound,
    "pca": cmd_pca,
    "rademacher": cmd_rademacher,
    "verify": cmd_verify,
    "calibrate": cmd_calibrate,
    "norm": cmd_norm,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concentration-bounds", description=__doc__.strip().splitlines()[1])
    parser.add_argument("--format", choices=FORMATS, default="table", help="stdout format")
    parser.add_argument("--output", help="also write the JSON report here (relative to the output directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("conjugate", help="Young-Fenchel transform phi*(y)")
    p.add_argument("--phi", required=True)
    p.add_argument("--y", type=_floats, required=True)
    p.add_argument("--numeric", action="store_true", help="numeric sup even when a closed form exists")

    p = sub.add_parser("validate-phi", help="check the N-function properties on a grid")
    p.add_argument("--phi", required=True)
    p.add_argument("--grid", type=_floats)

    for name, help_text in (("nv", "N_v(t) by KKT bisection"), ("tail-bound", "canonical-process tail bound")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--phi", default="quadratic")
        p.add_argument("--t", type=_floats)
        p.add_argument("--t-file")
        if name == "nv":
            p.add_argument("--v", type=float, required=True)
        else:
            p.add_argument("--kind", choices=("general", "iid"), default="general")
            p.add_argument("--v", type=float)
            p.add_argument("--s", type=float)
            p.add_argument("--K", type=float)
            p.add_argument("--z", type=float)
            p.add_argument("--K1", type=float)
            p.add_argument("--K2", type=float)
            p.add_argument("--c", type=float, default=1.0)
            p.add_argument("--l1-mode", choices=("norm", "abs-sum"), default="norm")

    p = sub.add_parser("randomized", help="randomized Hoeffding threshold")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--phi", default="quadratic")
    p.add_argument("--C", type=float, default=randomized.DEFAULT_C)
    p.add_argument("--u", type=float, default=1.0)

    p = sub.add_parser("functional-bound", help="tail bound for a function of independent discrete inputs")
    p.add_argument("--phi", default="scaled-quadratic")
    p.add_argument("--model-file", help="JSON function model")
    p.add_argument("--f", default="sum", choices=sorted(functional.BUILTIN_FUNCTIONS))
    p.add_argument("--coins", type=int, default=12)
    p.add_argument("--coin", type=float, default=1.0)
    p.add_argument("--t", type=_floats, required=True)

    p = sub.add_parser("pca", help="PCA reconstruction-error bound")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--K3", type=float, required=True)
    p.add_argument("--psi1", type=float)

    p = sub.add_parser("rademacher", help="Rademacher-complexity generalization bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--norm-x", type=float, required=True)
    p.add_argument("--norm-y", type=float)
    p.add_argument("--complexity", type=float)
    p.add_argument("--sample", help="CSV of sample points, one per row")
    p.add_argument("--n-eps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    for name, help_text in (("verify", "Monte Carlo dominance campaign"), ("calibrate", "calibrate a universal constant")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        if name == "verify":
            p.add_argument("--csv", help="per-grid-point CSV (relative to the output directory)")
        else:
            p.add_argument("--constant", required=True, choices=("c", "C"))

    p = sub.add_parser("norm", help="tau_phi, moment-ratio or psi1 norm estimate")
    p.add_argument("--phi", default="quadratic")
    p.add_argument("--model")
    p.add_argument("--samples")
    p.add_argument("--kind", choices=("tau", "moment", "psi1"), default="tau")
    p.add_argument("--no-center", dest="center", action="store_false", help="plug-in tau_phi over the samples as given, without subtracting their mean")

    return parser


def _write(path: str, payload: bytes):
    target = Path(path)
    if not target.is_absolute():
        target = Path(settings.output_dir) / target
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(payload)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Exit 0 on success, 1 on domain errors or a violated campaign, 2 on configuration errors"""
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
        sys.stdout.write(emit_report(result, args.format).decode())
        if args.output:
            _write(args.output, emit_report(result, "json"))
    except ConfigError as e:
        observability.log_error(args.command, str(e), "ConfigError")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BoundsError as e:
        observability.log_error(args.command, str(e), type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return 1

    if isinstance(result, CampaignResult) and not result.all_dominated:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
