"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .datasets import (
    SHOCK_DESIGN, TAYLOR_DESIGN, fixture_path, load_csv, load_shock, load_taylor, schema_for,
    sha256_file,
)
from .estimation import (
    ConvergenceError, DataError, DesignSpec, IRLSOptions, MAPOptions, PriorSpec, build_design,
    fit_m_irls, fit_map, fit_ols, profile_hyperparam,
)
from .models import ErrorModel, Family, parse_family
from .report import OBSERVATION_HEADER, Report, Series, csv_text, emit_report, observation_rows
from .robustness import PathExperiment, run_path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

BUILTIN = {"@taylor": ("taylor_triangle.csv", load_taylor, TAYLOR_DESIGN),
           "@shock": ("shock.csv", load_shock, SHOCK_DESIGN)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            a, b, h = (float(v) for v in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
        if h <= 0 or b < a:
            raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
        n = int(round((b - a) / h)) + 1
        decimals = max(0, -int(np.floor(np.log10(h))) + 2)
        return [round(a + i * h, decimals) for i in range(n) if a + i * h <= b + 1e-9 * h]
    return _floats(text)


def _add_data_args(p):
    p.add_argument("--data", required=True,
                   help="CSV file, or @taylor / @shock for a bundled fixture")
    p.add_argument("--design", help="JSON design file (optional for bundled fixtures)")


def _add_model_args(p, default="tukey"):
    p.add_argument("--model", default=default,
                   help="normal, huber, tukey, student_t, lptn, improper_lptn")
    p.add_argument("--k", type=float, help="tuning constant (huber, tukey)")
    p.add_argument("--nu", type=float, help="degrees of freedom (student_t)")
    p.add_argument("--rho", type=float, help="LPTN hyperparameter")
    p.add_argument("--tau", type=float, help="threshold of the improper LPTN")


def _add_common(p):
    p.add_argument("--prior", choices=("flat", "nig"), default="flat")
    p.add_argument("--method", choices=("auto", "ols", "irls", "map"), default="auto")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--svg", action="store_true", help="also draw series as SVG")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustreg", description="Robust and heavy-tailed linear regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("fit", "fit one model and write fit.json"),
                        ("weights", "print per-observation weights"),
                        ("residuals", "print per-observation standardized residuals")):
        p = sub.add_parser(name, help=help_)
        _add_data_args(p)
        _add_model_args(p)
        _add_common(p)
    p = sub.add_parser("profile", help="profile rho (lptn) or nu (student_t) over a grid")
    _add_data_args(p)
    p.add_argument("--family", default="lptn")
    p.add_argument("--grid", type=parse_grid, default=parse_grid("0.70:0.98:0.01"))
    _add_common(p)
    p = sub.add_parser("path", help="drag target responses away from the bulk and refit")
    _add_data_args(p)
    p.add_argument("--targets", required=True, help="comma-separated row ids")
    p.add_argument("--mags", type=_floats, default=[10, 100, 1e3, 1e4, 1e5, 1e6])
    p.add_argument("--direction", choices=("positive", "negative"), default="positive")
    p.add_argument("--models", default="tukey,lptn", help="comma-separated families")
    _add_common(p)
    p = sub.add_parser("reproduce", help="rerun a bundled analysis")
    p.add_argument("study", choices=("shock", "taylor"))
    p.add_argument("--grid", type=parse_grid, help="rho grid for the taylor profile")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--svg", action="store_true")
    return parser


def _load(args):
    """Dataset plus the input checksums and design echo."""
    if args.data in BUILTIN:
        fname, loader, design = BUILTIN[args.data]
        if args.design is None:
            path = fixture_path(fname)
            return loader(path), {fname: sha256_file(path)}, design.to_dict()
        data_path = fixture_path(fname)
    else:
        data_path = Path(args.data)
        if args.design is None:
            raise UsageError("--design is required for a CSV file")
    try:
        spec_dict = json.loads(Path(args.design).read_text(encoding="utf-8"))
        spec = DesignSpec.from_dict(spec_dict)
    except OSError as err:
        raise DataError(f"cannot read design {args.design}: {err.strerror}") from None
    except (ValueError, KeyError, TypeError) as err:
        raise DataError(f"invalid design {args.design}: {err}") from None
    records = load_csv(data_path, schema_for(spec))
    data = build_design(records, spec)
    return data, {Path(data_path).name: sha256_file(data_path), "design": sha256_file(args.design)}, \
        spec.to_dict()


def _model(args) -> ErrorModel:
    fam = parse_family(args.model)
    if fam is Family.NORMAL:
        return ErrorModel.normal()
    if fam is Family.HUBER:
        return ErrorModel.huber(*(() if args.k is None else (args.k,)))
    if fam is Family.TUKEY:
        return ErrorModel.tukey(*(() if args.k is None else (args.k,)))
    if fam is Family.STUDENT_T:
        return ErrorModel.student_t(*(() if args.nu is None else (args.nu,)))
    if fam is Family.LPTN:
        return ErrorModel.lptn(*(() if args.rho is None else (args.rho,)))
    return ErrorModel.improper_lptn(tau=args.tau, rho=args.rho)


def _prior(args, p: int) -> PriorSpec:
    return PriorSpec.flat() if args.prior == "flat" else PriorSpec.diffuse_nig(p)


def _fit(data, model, prior, method, seed):
    if method == "auto":
        if prior.is_flat and model.family is Family.NORMAL:
            method = "ols"
        elif prior.is_flat and model.family in (Family.HUBER, Family.TUKEY):
            method = "irls"
        else:
            method = "map"
    if method == "ols":
        return fit_ols(data)
    if method == "irls":
        return fit_m_irls(data, model)
    return fit_map(data, model, prior, MAPOptions(seed=seed))


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "svg")}


def cmd_fit(args) -> int:
    data, inputs, design = _load(args)
    model = _model(args)
    fit = _fit(data, model, _prior(args, data.p), args.method, args.seed)
    if args.command == "fit":
        for lab, b in zip(data.column_labels, fit.beta_hat):
            print(f"{lab:>14s} {b: .10g}")
        print(f"{'sigma':>14s} {fit.sigma_hat: .10g}")
        print(f"{'objective':>14s} {fit.objective: .10g}  ({fit.method}, converged={fit.converged})")
    else:
        sys.stdout.write(csv_text(OBSERVATION_HEADER, observation_rows(fit)))
    if args.out:
        emit_report(Report(fits={model.label(): fit}, inputs=inputs,
                           config={**_config(args), "design": design, "model_record": model.to_record()},
                           seed=args.seed), args.out, svg=args.svg)
    return EXIT_OK if fit.converged else EXIT_CONVERGENCE


def cmd_profile(args) -> int:
    data, inputs, design = _load(args)
    best, table = profile_hyperparam(data, args.family, args.grid, _prior(args, data.p),
                                     MAPOptions(seed=args.seed))
    name = "rho" if parse_family(args.family) is Family.LPTN else "nu"
    rows = [(g, o) for g, o, _ in table]
    sys.stdout.write(csv_text((name, "objective"), rows))
    print(f"# best {name} = {best}")
    if args.out:
        best_fit = next(f for g, _, f in table if g == best)
        emit_report(Report(fits={best_fit.model.label(): best_fit},
                           tables={"profile": Series((name, "objective"), rows)},
                           series={"profile": Series((name, "objective"), rows, kind="line")},
                           summary={"best": best, "parameter": name},
                           inputs=inputs, config={**_config(args), "design": design},
                           seed=args.seed), args.out, svg=args.svg)
    return EXIT_OK if all(f.converged for _, _, f in table) else EXIT_CONVERGENCE


def cmd_path(args) -> int:
    data, inputs, design = _load(args)
    ids = [t.strip() for t in args.targets.split(",") if t.strip()]
    try:
        rows = [data.row_ids.index(t) for t in ids]
    except ValueError:
        raise UsageError(f"unknown row id among {ids}") from None
    models = []
    for name in args.models.split(","):
        ns = argparse.Namespace(model=name.strip(), k=None, nu=None, rho=None, tau=None)
        models.append(_model(ns))
    exp = PathExperiment(data, tuple(rows), tuple(args.mags), args.direction, tuple(models))
    trace = run_path(exp, _prior(args, data.p), map_opts=MAPOptions(seed=args.seed))
    recs = trace.rows()
    header = tuple(recs[0].keys())
    table = [tuple(r[h] for h in header) for r in recs]
    sys.stdout.write(csv_text(header, table))
    if args.out:
        emit_report(Report(tables={"path": Series(header, table)}, inputs=inputs,
                           config={**_config(args), "design": design}, seed=args.seed),
                    args.out, svg=False)
    return EXIT_CONVERGENCE if any(r.error for r in trace.records) else EXIT_OK


def cmd_reproduce(args) -> int:
    from .studies import RHO_GRID, reproduce

    kwargs = {"seed": args.seed}
    if args.study == "taylor":
        kwargs["grid"] = args.grid or RHO_GRID
    report = reproduce(args.study, **kwargs)
    emit_report(report, args.out, svg=args.svg)
    print(json.dumps({k: v for k, v in report.summary.items()
                      if not isinstance(v, (dict, list)) or k in ("exp_dy5", "with_without_delta")},
                     indent=2, default=float))
    return EXIT_OK if all(f.converged for f in report.fits.values()) else EXIT_CONVERGENCE


COMMANDS = {"fit": cmd_fit, "weights": cmd_fit, "residuals": cmd_fit, "profile": cmd_profile,
            "path": cmd_path, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"robustreg: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as err:
        print(f"robustreg: convergence failure: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, KeyError) as err:
        print(f"robustreg: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:
        # bad hyperparameters and the like
        print(f"robustreg: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
