"""Command-line driver: ``archetypal {synth,fit,eval,sweep,alpha}``.

Settings come from an optional flat ``key = value`` file (``--config``)
followed by command-line flags; later sources win.  See README.md for the
list of keys.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .exceptions import (
    CSVParseError,
    DegenerateGeometryError,
    InvalidInputError,
    NumericalFailureError,
)
from .initialization import initialize
from .risk import archetype_loss, nearest_archetypes, regularized_risk, spectrum
from .solvers import SolverConfig, fit
from .synth import (
    default_recipe,
    gen_dataset,
    gen_smooth_archetypes,
    gen_toy_2d,
    load_matrix_csv,
    save_matrix_csv,
)
from .uniqueness import AlphaSearchConfig, estimate_alpha, hexagon_family

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

SOLVER_NAMES = ("palm", "sgd", "altmin", "altmin-inf")
INIT_NAMES = ("spectral", "spa")


class ConfigError(ValueError):
    pass


def _float_list(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _flag(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "out_dir": (str, "."),
    "solver": (_choice(SOLVER_NAMES), "palm"),
    "init": (_choice(INIT_NAMES), "spa"),
    "lambda": (float, None),
    "r": (int, None),
    "n": (int, None),
    "d": (int, 87),
    "sigma": (float, 0.0),
    "dataset": (_choice(("spectra", "toy")), "spectra"),
    "separable": (_flag, False),
    "x": (str, None),
    "h0": (str, None),
    "h_hat": (str, None),
    "h_init": (str, None),
    "max_iter": (int, 5000),
    "rel_tol": (float, 1e-9),
    "grad_tol": (float, 1e-8),
    "sgd_batch": (int, None),
    "sigma_grid": (_float_list, [0.0, 5e-4, 1e-3, 2e-3, 4e-3]),
    "replicates": (int, 10),
    "seeds": (_int_list, None),
    "sweep_solver": (_choice(SOLVER_NAMES), "altmin"),
    "low_noise_lambda": (float, 4.0),
    "high_noise_lambda": (float, 0.8),
    "lambda_switch_sigma": (float, 1e-3),
    "L_grid": (_float_list, [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]),
    "restarts": (int, 200),
    "max_evals": (int, 400),
}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = (value, f"{source}:{lineno}")
    return out


def resolve_config(raw):
    """Apply types and defaults to ``{key: (text, origin)}``."""
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    for key, (text, origin) in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            cfg[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"{origin}: bad value for {key!r}: {exc}") from None
    grid = cfg["sigma_grid"]
    if any(s < 0 for s in grid) or grid != sorted(grid):
        raise ConfigError("sigma_grid must be non-negative and ascending")
    return cfg


def _solver_config(cfg, lam):
    return SolverConfig(
        lam=lam,
        max_iter=cfg["max_iter"],
        rel_tol=cfg["rel_tol"],
        grad_tol=cfg["grad_tol"],
        sgd_batch=cfg["sgd_batch"],
        seed=cfg["seed"],
    )


def _out(cfg, name):
    return os.path.join(cfg["out_dir"], name)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _need(cfg, key):
    if cfg[key] is None:
        raise ConfigError(f"missing required setting {key!r}")
    return cfg[key]


def _archetypes_for(cfg):
    if cfg["h0"]:
        return load_matrix_csv(cfg["h0"])
    r = cfg["r"] or 4
    return gen_smooth_archetypes(r=r, d=cfg["d"], seed=cfg["seed"])


def _recipe(cfg, r, sigma):
    return default_recipe(cfg["n"] or 250, r, sigma, cfg["separable"])


def cmd_synth(cfg):
    if cfg["dataset"] == "toy":
        ds = gen_toy_2d(cfg["n"] or 500, cfg["seed"], cfg["sigma"])
    else:
        H0 = _archetypes_for(cfg)
        ds = gen_dataset(H0, _recipe(cfg, H0.shape[0], cfg["sigma"]), cfg["seed"])
    for name, M in (("X", ds.X), ("X0", ds.X0), ("W0", ds.W0), ("H0", ds.H0)):
        save_matrix_csv(M, _out(cfg, f"{name}.csv"))
    n, d = ds.X.shape
    meta = {
        "seed": ds.seed,
        "sigma": ds.sigma,
        "delta": ds.delta,
        "n": n,
        "d": d,
        "r": ds.H0.shape[0],
        "dataset": cfg["dataset"],
    }
    _write_json(_out(cfg, "meta.json"), meta)
    return EXIT_OK


def _initial_archetypes(cfg, X, r):
    if cfg["h_init"]:
        return load_matrix_csv(cfg["h_init"])
    return initialize(X, r, cfg["init"]).archetypes


def cmd_fit(cfg):
    X = load_matrix_csv(_need(cfg, "x"))
    r = _need(cfg, "r")
    lam = cfg["lambda"]
    if lam is None:
        lam = math.inf if cfg["solver"] == "altmin-inf" else 1.0
    H_init = _initial_archetypes(cfg, X, r)
    rep = fit(X, H_init, cfg["solver"], _solver_config(cfg, lam))
    save_matrix_csv(rep.archetypes, _out(cfg, "H_hat.csv"))
    save_matrix_csv(rep.weights, _out(cfg, "W_hat.csv"))
    report = {
        "solver": rep.solver,
        "init": "file" if cfg["h_init"] else cfg["init"],
        "lambda": lam,
        "risk_trace": rep.risk_trace.tolist(),
        "psi_trace": None if rep.psi_trace is None else rep.psi_trace.tolist(),
        "fit_term": rep.final_risk.fit_term,
        "reg_term": rep.final_risk.reg_term,
        "final_grad_norm": rep.final_grad_norm,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "stop_reason": rep.stop_reason,
        "wall_seconds": rep.wall_seconds,
        "diagnostics": rep.diagnostics,
        "config": cfg,
    }
    _write_json(_out(cfg, "report.json"), _jsonable(report))
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def evaluate_archetypes(H0, Hhat):
    idx, sq = nearest_archetypes(H0, Hhat)
    spec = spectrum(H0)
    loss = float(np.sum(sq))
    return {
        "loss_L": loss,
        "loss_L_sqrt": math.sqrt(loss),
        "relative_loss_L_sqrt": math.sqrt(loss) / spec.sigma_max,
        "nearest_index": idx.tolist(),
        "nearest_distance": np.sqrt(sq).tolist(),
        "sigma_max": spec.sigma_max,
        "sigma_min": spec.sigma_min,
        "kappa": spec.kappa,
    }


def cmd_eval(cfg):
    H0 = load_matrix_csv(_need(cfg, "h0"))
    Hhat = load_matrix_csv(_need(cfg, "h_hat"))
    metrics = evaluate_archetypes(H0, Hhat)
    if cfg["x"]:
        X = load_matrix_csv(cfg["x"])
        lam = cfg["lambda"] if cfg["lambda"] is not None else 1.0
        risk = regularized_risk(X, Hhat, lam)
        metrics["risk"] = {"lambda": lam, "fit_term": risk.fit_term, "reg_term": risk.reg_term, "total": risk.total}
    _write_json(_out(cfg, "metrics.json"), _jsonable(metrics))
    return EXIT_OK


def sweep_lambda(cfg, sigma):
    if cfg["lambda"] is not None:
        return cfg["lambda"]
    if sigma <= cfg["lambda_switch_sigma"]:
        return cfg["low_noise_lambda"]
    return cfg["high_noise_lambda"]


def run_sweep(cfg):
    """Synthesize, fit and score every (sigma, replicate) cell.

    Returns the rows of curve.csv and the list of failed cells.
    """
    H0 = _archetypes_for(cfg)
    r = H0.shape[0]
    seeds = cfg["seeds"] or [cfg["seed"] + j for j in range(cfg["replicates"])]
    rows, failures = [], []
    for sigma in cfg["sigma_grid"]:
        lam = sweep_lambda(cfg, sigma)
        values = []
        for s in seeds:
            try:
                ds = gen_dataset(H0, _recipe(cfg, r, sigma), s)
                H_init = initialize(ds.X, r, cfg["init"]).archetypes
                rep = fit(ds.X, H_init, cfg["sweep_solver"], _solver_config(cfg, lam))
                values.append(math.sqrt(archetype_loss(H0, rep.archetypes)))
            except (NumericalFailureError, DegenerateGeometryError, InvalidInputError) as exc:
                failures.append({"sigma": sigma, "seed": s, "error": f"{type(exc).__name__}: {exc}"})
                values.append(math.nan)
        ok = np.array([v for v in values if not math.isnan(v)])
        mean = float(ok.mean()) if ok.size else math.nan
        std = float(ok.std(ddof=1)) if ok.size > 1 else math.nan
        rows.append((sigma, lam, mean, std, int(ok.size), values))
    return seeds, rows, failures


def write_curve(path, seeds, rows):
    header = ["sigma", "lambda", "mean_loss_sqrt", "std_loss_sqrt", "n_ok"]
    header += [f"seed_{s}" for s in seeds]
    lines = [",".join(header)]
    for sigma, lam, mean, std, n_ok, values in rows:
        cells = [repr(float(sigma)), repr(float(lam)), repr(mean), repr(std), str(n_ok)]
        cells += [repr(float(v)) for v in values]
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_sweep(cfg):
    seeds, rows, failures = run_sweep(cfg)
    write_curve(_out(cfg, "curve.csv"), seeds, rows)
    if failures:
        _write_json(_out(cfg, "sweep_failures.json"), failures)
        for f in failures:
            print(f"replicate failed: sigma={f['sigma']} seed={f['seed']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_alpha(cfg):
    search = AlphaSearchConfig(
        restarts=cfg["restarts"], max_evals=cfg["max_evals"], seed=cfg["seed"], keep_visited=False
    )
    lines = ["L,alpha_hat,evals,flag"]
    status = EXIT_OK
    for L in cfg["L_grid"]:
        fam = hexagon_family(L)
        try:
            est = estimate_alpha(fam.X0, fam.H0, search)
            flag = "non_unique" if fam.non_unique else ""
            lines.append(f"{L!r},{est.alpha_hat!r},{est.search_evals},{flag}")
        except InvalidInputError as exc:
            lines.append(f"{L!r},nan,0,failed")
            print(f"alpha search failed at L={L}: {exc}", file=sys.stderr)
            status = EXIT_PARTIAL
    with open(_out(cfg, "alpha_curve.csv"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return status


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "alpha": cmd_alpha,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="archetypal", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--seed", help="base random seed")
    parser.add_argument("--out-dir", dest="out_dir", help="directory for output files")
    parser.add_argument("--solver", help="|".join(SOLVER_NAMES))
    parser.add_argument("--init", help="|".join(INIT_NAMES))
    parser.add_argument("--lambda", dest="lambda_", help="regularization weight (inf allowed)")
    parser.add_argument("--r", help="number of archetypes")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="any config key; repeatable"
    )
    return parser


def load_settings(args):
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw.update(parse_config_text(fh.read(), args.config))
    flags = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "solver": args.solver,
        "init": args.init,
        "lambda": args.lambda_,
        "r": args.r,
    }
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        raw[key] = (value, "--set")
    for key, value in flags.items():
        if value is not None:
            raw[key] = (value, f"--{key.replace('_', '-')}")
    return resolve_config(raw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_settings(args)
        os.makedirs(cfg["out_dir"], exist_ok=True)
        return COMMANDS[args.command](cfg)
    except (OSError, CSVParseError, ConfigError, InvalidInputError, DegenerateGeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
