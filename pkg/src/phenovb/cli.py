"""Command-line front end.

Every run reads one JSON config; flags override dotted config keys.  The
top-level keys of the config are::

    input            cohort CSV path, ``builtin:faithful`` or ``builtin:scd``
    output, figure   result JSON / SVG paths (``--out`` / ``--fig``)
    seed             the single source of randomness
    schema           optional column-type map for the CSV
    <PhenoConfig>    gmm_columns, k, gmm_prior.alpha, init.method, ...
    logit            fit-logit: response, columns, intercept, prior
    cohort           gen-cohort and ``builtin:scd``: generator parameters
    plot             plot: result, columns, level, title

Relative input paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .data_io import (Cohort, CohortError, ColumnType, IndicatorSpec, MalformedResultError, ScdGenParams,
                      dumps, generate_scd_cohort, load_csv, load_faithful, result_to_dict, save_cohort,
                      standardize, trace_to_dict)
from .gmm import GmmFit, fit_gmm
from .initialization import InitConfig, initialize
from .pipeline import BiomarkerPrior, PhenoConfig, build_gmm_prior, run_model
from .plotting import emit_scatter_svg, write_diagnostics
from .regression import LogitPrior, fit_logit_cavi, sens_spec

logger = logging.getLogger("phenovb")

PROG = "phenovb"
EXIT_FAILURE = 1
EXIT_USAGE = 2

PHENO_KEYS = {"gmm_columns", "biomarker_columns", "indicator_columns", "covariate_columns", "k", "gmm_prior",
              "init", "gmm_delta", "gmm_max_iters", "stop_if_elbo_reverse", "standardize", "disease_component",
              "biomarker_priors", "indicator_prior", "phenotype_columns", "logit_prior",
              "soft_phenotype_response", "regression_delta", "regression_max_iters"}
RUN_KEYS = {"input", "output", "figure", "seed", "verbose", "log_diagnostics", "diagnostics", "schema",
            "logit", "cohort", "plot", "include_truth"}


class UsageError(Exception):
    """Bad command line or config; exit code 2."""


class FitError(Exception):
    """Failure inside a fitting module; exit code 1."""

    def __init__(self, module: str, exc: Exception):
        super().__init__(f"{module}: {exc}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- config handling --------------------------------------------------------------

def set_dotted(cfg: dict, key: str, value) -> None:
    """``set_dotted(cfg, "init.eps", 0.2)`` sets ``cfg["init"]["eps"]``."""
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        child = node.setdefault(p, {})
        if not isinstance(child, dict):
            raise UsageError(f"config key {p!r} is not a section, cannot set {key!r}")
        node = child
    node[parts[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        raise UsageError("--config is required for this command")
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg, p.resolve().parent


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    direct = {"seed": "seed", "out": "output", "fig": "figure", "k": "k", "alpha": "gmm_prior.alpha",
              "init": "init.method", "eps": "init.eps", "min_pts": "init.min_pts", "n": "cohort.n",
              "prevalence": "cohort.prevalence"}
    if args.command == "fit-logit":
        direct.update(delta="regression_delta", max_iters="regression_max_iters")
    else:
        direct.update(delta="gmm_delta", max_iters="gmm_max_iters")
    for attr, key in direct.items():
        value = getattr(args, attr, None)
        if value is not None:
            set_dotted(cfg, key, value)
    if getattr(args, "stop_on_elbo_reverse", False):
        cfg["stop_if_elbo_reverse"] = True
    if args.verbose:
        cfg["verbose"] = True
    if args.log_diagnostics:
        cfg["log_diagnostics"] = True
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        set_dotted(cfg, key, _parse_value(value))
    unknown = set(cfg) - PHENO_KEYS - RUN_KEYS
    if unknown:
        raise UsageError(f"unknown config key(s) {sorted(unknown)}")
    return cfg


def _seed(cfg: dict) -> int:
    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise UsageError(f"seed must be a non-negative integer, got {seed!r}")
    return seed


def _required_path(cfg: dict, key: str, flag: str) -> str:
    value = cfg.get(key)
    if not value:
        raise UsageError(f"no {key} path given (set {key!r} in the config or pass {flag})")
    return str(value)


def gen_params(cfg: dict) -> ScdGenParams:
    spec = dict(cfg.get("cohort", {}))
    spec["seed"] = _seed(cfg)
    for key in ("healthy_rc_range", "highrisk_rate"):
        if key in spec:
            spec[key] = tuple(spec[key])
    if "indicators" in spec:
        spec["indicators"] = {k: IndicatorSpec(**v) for k, v in spec["indicators"].items()}
    try:
        return ScdGenParams(**spec)
    except TypeError as exc:
        raise UsageError(f"cohort: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"cohort: {exc}") from None


def load_input(cfg: dict, base: Path) -> Cohort:
    source = _required_path(cfg, "input", "--set input=PATH")
    if source == "builtin:faithful":
        x = load_faithful()
        return Cohort({"eruptions": x[:, 0], "waiting": x[:, 1]},
                      {"eruptions": ColumnType.CONTINUOUS, "waiting": ColumnType.CONTINUOUS})
    if source == "builtin:scd":
        return generate_scd_cohort(gen_params(cfg)).cohort
    path = Path(source)
    if not path.is_absolute():
        path = base / path
    try:
        return load_csv(path, cfg.get("schema"))
    except OSError as exc:
        raise UsageError(f"cannot read input {path}: {exc.strerror or exc}") from None
    except CohortError as exc:
        raise FitError("data_io", exc) from None


def _logit_prior(spec, p: int) -> LogitPrior:
    if spec is None:
        return LogitPrior.isotropic(p, 10.0)
    mean = spec.get("mean", 0.0)
    if "cov" in spec:
        return LogitPrior(np.broadcast_to(np.asarray(mean, dtype=float), (p,)).copy(), spec["cov"])
    return LogitPrior.isotropic(p, float(spec.get("variance", 10.0)), mean)


def pheno_config(cfg: dict) -> PhenoConfig:
    init = dict(cfg.get("init", {}))
    init["seed"] = _seed(cfg)
    try:
        init_cfg = InitConfig(**init)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"init: {exc}") from None
    priors = {name: BiomarkerPrior(**spec) for name, spec in cfg.get("biomarker_priors", {}).items()}
    kwargs = {k: cfg[k] for k in ("gmm_columns", "biomarker_columns", "indicator_columns", "covariate_columns",
                                  "k", "gmm_delta", "gmm_max_iters", "stop_if_elbo_reverse", "standardize",
                                  "disease_component", "phenotype_columns", "soft_phenotype_response",
                                  "regression_delta", "regression_max_iters") if k in cfg}
    kwargs.setdefault("biomarker_columns", [])
    if "gmm_columns" not in kwargs:
        raise UsageError("config needs gmm_columns")
    try:
        pc = PhenoConfig(gmm_prior=dict(cfg.get("gmm_prior", {})), init=init_cfg, biomarker_priors=priors,
                         **kwargs)
        pc.indicator_prior = _logit_prior(cfg.get("indicator_prior"), 2)
        if pc.phenotype_columns:
            pc.logit_prior = _logit_prior(cfg.get("logit_prior"), len(pc.phenotype_columns) + 1)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"model config: {exc}") from None
    return pc


# --- GMM summaries ----------------------------------------------------------------

def _scaling_matrix(cohort: Cohort, columns) -> tuple[np.ndarray, np.ndarray]:
    mean = np.array([cohort.scaling[c].mean if c in cohort.scaling else 0.0 for c in columns])
    sd = np.array([cohort.scaling[c].sd if c in cohort.scaling else 1.0 for c in columns])
    return mean, sd


def gmm_summary(fit: GmmFit, cohort: Cohort, columns) -> dict[str, Any]:
    """Posterior summary; ``means``/``covariances`` are in the original data units."""
    state = fit.state
    shift, sd = _scaling_matrix(cohort, columns)
    means = state.m * sd + shift
    covs = state.expected_covariances() * np.outer(sd, sd)
    return {
        "columns": list(columns),
        "scaling": {c: {"mean": cohort.scaling[c].mean, "sd": cohort.scaling[c].sd}
                    for c in columns if c in cohort.scaling},
        "k": state.n_components,
        "mixing_weights": state.mixing_weights.tolist(),
        "effective_components": state.effective_components(),
        "means": means.tolist(),
        "covariances": covs.tolist(),
        "state": {"alpha": state.alpha.tolist(), "lambda": state.lambda_.tolist(), "m": state.m.tolist(),
                  "W": state.W.tolist(), "nu": state.nu.tolist()},
        "labels": [int(v) for v in fit.labels],
    }


def _plot_gmm(path, data, labels, summary, columns, title=None, level=0.95):
    idx = [summary["columns"].index(c) for c in columns]
    means = np.asarray(summary["means"])[:, idx]
    covs = np.asarray(summary["covariances"])[:, idx][:, :, idx]
    emit_scatter_svg(data, labels, means, covs, path, level=level, axis_labels=tuple(columns), title=title)


def _diag_path(cfg: dict, output: str) -> str:
    return str(cfg.get("diagnostics") or output + ".diag.txt")


# --- subcommands ------------------------------------------------------------------

def cmd_fit_gmm(cfg: dict, base: Path) -> None:
    output = _required_path(cfg, "output", "--out")
    cohort = load_input(cfg, base)
    pc = pheno_config({**cfg, "biomarker_columns": []})
    missing = [c for c in pc.gmm_columns if c not in cohort]
    if missing:
        raise FitError("data_io", CohortError(f"cohort lacks column(s) {missing}"))
    work = standardize(cohort, pc.gmm_columns) if cfg.get("standardize", False) else cohort
    x = work.matrix(pc.gmm_columns)
    try:
        prior = build_gmm_prior(x, pc.k, pc.gmm_prior)
    except ValueError as exc:
        raise UsageError(f"gmm_prior: {exc}") from None
    try:
        start = initialize(x, pc.k, pc.init)
    except ValueError as exc:
        raise FitError("init", exc) from None
    try:
        fit = fit_gmm(x, pc.k, prior, start.labels, delta=pc.gmm_delta, max_iters=pc.gmm_max_iters,
                      stop_if_elbo_reverse=pc.stop_if_elbo_reverse)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError("gmm_engine", exc) from None
    logger.info("fit-gmm: %d iterations, stopped because %s, effective components %d",
                len(fit.trace), fit.trace.stopped_because.value, fit.state.effective_components())
    summary = gmm_summary(fit, work, pc.gmm_columns)
    summary["elbo_trace"] = trace_to_dict(fit.trace)
    summary["config_echo"] = pc.echo()
    Path(output).write_text(dumps(summary))
    if cfg.get("log_diagnostics"):
        write_diagnostics(fit.trace, _diag_path(cfg, output))
    if cfg.get("figure"):
        cols = pc.gmm_columns[:2]
        _plot_gmm(cfg["figure"], cohort.matrix(cols), fit.labels, summary, cols,
                  title=(cfg.get("plot") or {}).get("title"))


def cmd_fit_logit(cfg: dict, base: Path) -> None:
    output = _required_path(cfg, "output", "--out")
    spec = cfg.get("logit") or {}
    if "response" not in spec or "columns" not in spec:
        raise UsageError("fit-logit needs logit.response and logit.columns")
    cohort = load_input(cfg, base)
    try:
        cols = [np.asarray(cohort[c], dtype=float) for c in spec["columns"]]
        y = np.asarray(cohort[spec["response"]], dtype=float)
    except CohortError as exc:
        raise FitError("data_io", exc) from None
    intercept = spec.get("intercept", True)
    X = np.column_stack(([np.ones(cohort.n)] if intercept else []) + cols)
    try:
        prior = _logit_prior(spec.get("prior"), X.shape[1])
        fit = fit_logit_cavi(X, y, prior, delta=cfg.get("regression_delta", 1e-8),
                             max_iters=cfg.get("regression_max_iters", 1000))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError("regression_engine", exc) from None
    names = (["(intercept)"] if intercept else []) + list(spec["columns"])
    doc = {"coefficients": names, "mean": fit.m.tolist(), "cov": fit.S.tolist(),
           "sd": np.sqrt(np.diag(fit.S)).tolist(), "elbo_trace": trace_to_dict(fit.trace),
           "config_echo": {"logit": spec}}
    if intercept and len(names) == 2:
        sens, spec_ = sens_spec(fit)
        doc["sens_spec"] = {"sensitivity": sens, "specificity": spec_}
    Path(output).write_text(dumps(doc))
    if cfg.get("log_diagnostics"):
        write_diagnostics(fit.trace, _diag_path(cfg, output))


def cmd_phenotype(cfg: dict, base: Path) -> None:
    output = _required_path(cfg, "output", "--out")
    cohort = load_input(cfg, base)
    pc = pheno_config(cfg)
    try:
        result = run_model(cohort, pc)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError("pipeline", exc) from None
    doc = result_to_dict(result)
    work = standardize(cohort, pc.gmm_columns) if pc.standardize else cohort
    doc["gmm"] = gmm_summary(result.gmm_fit, work, pc.gmm_columns)
    Path(output).write_text(dumps(doc))
    logger.info("phenotype: %d of %d patients in the disease class", result.n_disease, cohort.n)
    if cfg.get("log_diagnostics"):
        write_diagnostics(result.gmm_trace, _diag_path(cfg, output))
    if cfg.get("figure"):
        cols = ((cfg.get("plot") or {}).get("columns") or pc.gmm_columns)[:2]
        _plot_gmm(cfg["figure"], cohort.matrix(cols), result.gmm_fit.labels, doc["gmm"], cols,
                  title=(cfg.get("plot") or {}).get("title"))


def cmd_gen_cohort(cfg: dict, base: Path) -> None:
    params = gen_params(cfg)
    gen = generate_scd_cohort(params)
    cohort = gen.cohort
    if cfg.get("include_truth", True):
        cohort = Cohort({**cohort.columns, "true_class": gen.truth.labels},
                        {**cohort.types, "true_class": ColumnType.BINARY})
    output = cfg.get("output")
    if output:
        save_cohort(cohort, output)
    else:
        save_cohort(cohort, sys.stdout)
    logger.info("gen-cohort: %d rows, %d disease", params.n, params.n_disease)


def cmd_plot(cfg: dict, base: Path) -> None:
    figure = _required_path(cfg, "figure", "--fig")
    spec = cfg.get("plot") or {}
    if not spec.get("result"):
        raise UsageError("plot needs plot.result (a fit-gmm or phenotype output)")
    rpath = Path(spec["result"])
    if not rpath.is_absolute():
        rpath = base / rpath
    try:
        doc = json.loads(rpath.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read result {rpath}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FitError("data_io", MalformedResultError(f"{rpath}: not valid JSON ({exc})")) from None
    summary = doc.get("gmm", doc)
    if "means" not in summary:
        raise FitError("data_io", MalformedResultError(f"{rpath}: no GMM summary to plot"))
    cohort = load_input(cfg, base)
    cols = (spec.get("columns") or summary["columns"])[:2]
    if len(cols) != 2:
        raise UsageError("plot needs two columns")
    try:
        _plot_gmm(figure, cohort.matrix(cols), summary["labels"], summary, cols, title=spec.get("title"),
                  level=spec.get("level", 0.95))
    except (ValueError, CohortError) as exc:
        raise FitError("cli_plot", exc) from None


COMMANDS = {"fit-gmm": cmd_fit_gmm, "fit-logit": cmd_fit_logit, "phenotype": cmd_phenotype,
            "gen-cohort": cmd_gen_cohort, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Variational Bayes latent-class phenotyping.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--fig")
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--log-diagnostics", action="store_true")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a dotted config key; VALUE is parsed as JSON when possible")
        if name in ("fit-gmm", "phenotype", "plot"):
            p.add_argument("--k", type=int)
            p.add_argument("--alpha", type=float)
            p.add_argument("--init", choices=["kmeans", "dbscan", "random"])
            p.add_argument("--eps", type=float)
            p.add_argument("--min-pts", type=int)
            p.add_argument("--stop-on-elbo-reverse", action="store_true")
        if name in ("fit-gmm", "phenotype", "fit-logit"):
            p.add_argument("--delta", type=float)
            p.add_argument("--max-iters", type=int)
        if name == "gen-cohort":
            p.add_argument("--n", type=int)
            p.add_argument("--prevalence", type=float)
    return parser


def _report(exc) -> None:
    message = " ".join(str(exc).split())
    print(f"{PROG}: error: {message}", file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "gen-cohort" and args.config is None:
            cfg, base = {}, Path.cwd()
        else:
            cfg, base = load_config(args.config)
        cfg = apply_overrides(cfg, args)
        logging.basicConfig(level=logging.INFO if cfg.get("verbose") else logging.WARNING,
                            stream=sys.stderr, format="%(name)s: %(message)s", force=True)
        COMMANDS[args.command](cfg, base)
    except UsageError as exc:
        _report(exc)
        return EXIT_USAGE
    except FitError as exc:
        _report(exc)
        return EXIT_FAILURE
    except OSError as exc:
        _report(f"io: {exc}")
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
