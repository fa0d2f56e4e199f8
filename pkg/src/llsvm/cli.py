"""``llsvm`` command line: gen, predict, cv, stability, sweep, risk.

Exit codes: 0 success, 1 usage error, 2 data error, 3 a check failed.
Every setting is resolved as command-line flag, then ``--config`` file,
then the built-in default.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .classifier import (
    EmptyBallPolicy,
    FixedBandwidth,
    KnnBandwidth,
    LLSVMConfig,
    kbr_predict,
    knn_predict,
    linear_predict,
    predict_batch,
    train_global_linear,
)
from .errors import InvalidSpecError, LLSVMError
from .evaluation import (
    GlobalLinearMethod,
    KBRMethod,
    KNNMethod,
    Schedule,
    consistency_sweep,
    cross_validate,
    risk_report,
    stability_check,
)
from .kernels import FAMILY_ALIASES, KernelSpec
from .spatial import build_index
from .synthetic import GENERATORS, SyntheticSpec, generate

log = logging.getLogger("llsvm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _strs(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


# key -> (converter, default); every RunConfig field has an entry here
SETTINGS = {
    "kernel": (str, "epanechnikov"),
    "sigma": (float, 0.5),
    "lambda": (float, 1e-3),
    "bandwidth": (str, "fixed"),
    "k": (int, 15),
    "degree": (int, 1),
    "tol": (_opt_float, None),
    "max_epochs": (int, 10_000),
    "empty_ball": (str, "grow"),
    "grow_max_doublings": (int, 10),
    "grow_min_points": (int, 1),
    "shortcut": (_bool, True),
    "seed": (int, 0),
    "workers": (int, None),
    "format": (str, "dense_csv"),
    "out": (str, None),
    "train": (str, None),
    "queries": (str, None),
    "test": (str, None),
    "method": (str, "llsvm"),
    # gen
    "generator": (str, "two_spirals"),
    "n": (int, 1000),
    "noise": (float, 0.02),
    "turns": (float, 1.5),
    "slope": (float, 2.0),
    "separation": (float, 1.0),
    "sd": (float, 0.5),
    # cv
    "folds": (int, 5),
    "methods": (_strs, ["llsvm"]),
    "lambdas": (_floats, None),
    "sigmas": (_floats, None),
    "ks": (_ints, None),
    "kernels": (_strs, None),
    # stability
    "x0": (_floats, None),
    "controls": (int, 3),
    # sweep
    "probes": (str, "-0.7,-0.5,-0.3,0.3,0.5,0.7"),
    "sigma_exp": (float, 0.125),
    "lambda_exp": (float, 0.125),
    "theta": (float, 0.5),
    "n_list": (_ints, [256, 1024, 4096]),
    "replicates": (int, 20),
    "margin_floor": (float, 0.3),
    "min_agreement": (_opt_float, None),
    # risk
    "delta": (float, 0.05),
}


# per-subcommand overrides of the SETTINGS defaults
COMMAND_DEFAULTS = {"sweep": {"generator": "uniform_1d_smooth"}}


def default_workers() -> int:
    env = os.environ.get("LLSVM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer LLSVM_WORKERS=%r", env)
    return max(1, os.cpu_count() or 1)


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def comment(self) -> str:
        # workers and out never change results, so they stay out of the header
        keys = sorted(k for k, v in self.values.items()
                      if v is not None and k not in ("workers", "out"))
        return f"llsvm {self.command} " + " ".join(f"{k}={_show(self.values[k])}" for k in keys)


def _show(v) -> str:
    if isinstance(v, list):
        return ",".join(io.fmt(x) for x in v)
    return io.fmt(v)


def resolve(command: str, args: argparse.Namespace, file_values: dict) -> RunConfig:
    values = {}
    overrides = COMMAND_DEFAULTS.get(command, {})
    for key, (conv, default) in SETTINGS.items():
        default = overrides.get(key, default)
        if not hasattr(args, key):
            continue  # not a setting of this subcommand
        flag = getattr(args, key)
        if flag is not None:
            values[key] = conv(flag) if isinstance(flag, str) and conv is not str else flag
        elif key in file_values:
            try:
                values[key] = conv(file_values[key])
            except ValueError as exc:
                raise InvalidSpecError(f"config value for {key!r}: {exc}") from None
        else:
            values[key] = default
    if values["workers"] is None:
        values["workers"] = default_workers()
    return RunConfig(command, values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        sys.stderr.write(f"\nerror: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker threads (env LLSVM_WORKERS as fallback)")
    p.add_argument("--out", help="output .csv path or directory")
    p.add_argument("--format", choices=io.FORMATS, help="dataset file format")


def _add_model(p):
    p.add_argument("--kernel", choices=sorted(FAMILY_ALIASES))
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--bandwidth", choices=["fixed", "knn"])
    p.add_argument("--k", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--empty-ball", dest="empty_ball", choices=["abstain", "majority", "grow"])
    p.add_argument("--grow-max-doublings", dest="grow_max_doublings", type=int)
    p.add_argument("--grow-min-points", dest="grow_min_points", type=int)
    p.add_argument("--no-shortcut", dest="shortcut", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="llsvm", description="Local linear SVM experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(g)
    g.add_argument("--generator", choices=GENERATORS)
    g.add_argument("--n", type=int)
    g.add_argument("--noise", type=float, help="two_spirals coordinate noise sd")
    g.add_argument("--turns", type=float)
    g.add_argument("--slope", type=float)
    g.add_argument("--separation", type=float)
    g.add_argument("--sd", type=float)

    p = sub.add_parser("predict", help="classify query points")
    _add_common(p)
    _add_model(p)
    p.add_argument("--train")
    p.add_argument("--queries")
    p.add_argument("--method", choices=["llsvm", "kbr", "knn", "linear"])

    c = sub.add_parser("cv", help="k-fold cross-validation over a config grid")
    _add_common(c)
    _add_model(c)
    c.add_argument("--train")
    c.add_argument("--folds", type=int)
    c.add_argument("--methods", help="comma list of llsvm,kbr,knn,linear")
    c.add_argument("--lambdas")
    c.add_argument("--sigmas")
    c.add_argument("--ks")
    c.add_argument("--kernels")

    s = sub.add_parser("stability", help="leave-one-out stability check at one point")
    _add_common(s)
    _add_model(s)
    s.add_argument("--train")
    s.add_argument("--x0", help="comma-separated coordinates")
    s.add_argument("--controls", type=int)

    w = sub.add_parser("sweep", help="Bayes-agreement sweep over n")
    _add_common(w)
    w.add_argument("--kernel", choices=sorted(FAMILY_ALIASES))
    w.add_argument("--generator", choices=GENERATORS)
    w.add_argument("--slope", type=float)
    w.add_argument("--separation", type=float)
    w.add_argument("--sd", type=float)
    w.add_argument("--probes", help="points separated by ';', coordinates by ','")
    w.add_argument("--sigma-exp", dest="sigma_exp", type=float)
    w.add_argument("--lambda-exp", dest="lambda_exp", type=float)
    w.add_argument("--theta", type=float)
    w.add_argument("--n-list", dest="n_list")
    w.add_argument("--replicates", type=int)
    w.add_argument("--margin-floor", dest="margin_floor", type=float)
    w.add_argument("--min-agreement", dest="min_agreement", type=float,
                   help="exit 3 if the largest n falls below this agreement")

    r = sub.add_parser("risk", help="empirical vs held-out hinge risk with its bound")
    _add_common(r)
    _add_model(r)
    r.add_argument("--train")
    r.add_argument("--test")
    r.add_argument("--delta", type=float)
    return parser


# --------------------------------------------------------------------------


def _outputs(cfg: RunConfig) -> tuple[Path, Path]:
    out = cfg["out"]
    if out and out.lower().endswith(".csv"):
        path = Path(out)
        return path, path.with_suffix(".json")
    base = Path(out) if out else Path(".")
    base.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.command}_{cfg['seed']}"
    return base / f"{stem}.csv", base / f"{stem}.json"


def _require(cfg: RunConfig, *keys):
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise InvalidSpecError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _kernel(cfg: RunConfig, dim: int, family=None, sigma=None) -> KernelSpec:
    family = family or cfg["kernel"]
    return KernelSpec(family, cfg["sigma"] if sigma is None else sigma, dim,
                      allow_negative=FAMILY_ALIASES.get(family) == "negative_order2")


def _model(cfg: RunConfig, dim: int, family=None, sigma=None, lam=None, k=None) -> LLSVMConfig:
    policy = EmptyBallPolicy(cfg["empty_ball"], cfg["grow_max_doublings"], cfg["grow_min_points"])
    if cfg["bandwidth"] == "knn":
        bw = KnnBandwidth(cfg["k"] if k is None else k, FAMILY_ALIASES[family or cfg["kernel"]])
    else:
        bw = FixedBandwidth(_kernel(cfg, dim, family, sigma))
    return LLSVMConfig(bw, cfg["lambda"] if lam is None else lam, cfg["degree"], cfg["tol"],
                       cfg["max_epochs"], policy, cfg["shortcut"])


def _load(cfg: RunConfig, key: str):
    return io.parse_dataset(cfg[key], cfg["format"])


def cmd_gen(cfg: RunConfig) -> int:
    _require(cfg, "out")
    gen = cfg["generator"]
    params = {
        "two_spirals": {"noise_sd": cfg["noise"], "turns": cfg["turns"]},
        "uniform_1d_smooth": {"slope": cfg["slope"]},
        "xor_gaussians": {"separation": cfg["separation"], "sd": cfg["sd"]},
    }[gen]
    ds, truth = generate(SyntheticSpec(gen, cfg["n"], params, cfg["seed"]))
    path = Path(cfg["out"])
    io.write_dataset(path, ds, comment=cfg.comment(), format=cfg["format"])
    meta = {"generator": gen, "n": ds.n, "dim": ds.dim, "seed": cfg["seed"],
            "radius_bound": ds.radius_bound, **params}
    if truth is not None and truth.bayes_risk is not None:
        meta["bayes_risk"] = truth.bayes_risk
    io.write_keyvalue(path.with_suffix(".meta"), meta)
    io.write_json(path.with_suffix(".json"), meta)
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    _require(cfg, "train", "queries")
    train = _load(cfg, "train")
    queries, truth = io.read_points(cfg["queries"], train.dim)
    index = build_index(train)
    method = cfg["method"]
    if method == "llsvm":
        preds = predict_batch(train, index, _model(cfg, train.dim), queries, workers=cfg["workers"])
    elif method == "kbr":
        kern = _kernel(cfg, train.dim)
        preds = [kbr_predict(train, index, kern, q) for q in queries]
    elif method == "knn":
        preds = [knn_predict(train, index, cfg["k"], q) for q in queries]
    else:
        w = train_global_linear(train, cfg["lambda"], cfg["tol"], cfg["degree"])
        preds = [linear_predict(w, q, cfg["degree"]) for q in queries]
    csv_path, json_path = _outputs(cfg)
    header = ["index", "label", "decision_value", "local_count", "effective_bandwidth", "flags"]
    if truth is not None:
        header.append("true_label")
    rows = []
    for i, p in enumerate(preds):
        row = [i, p.label, p.decision_value, p.local_count, p.effective_bandwidth,
               "|".join(sorted(p.flags))]
        if truth is not None:
            row.append(int(truth[i]))
        rows.append(row)
    io.write_table(csv_path, header, rows, comment=cfg.comment())
    summary = {"command": "predict", "queries": len(preds), "method": method}
    flags = {}
    for p in preds:
        for f in p.flags:
            flags[f] = flags.get(f, 0) + 1
    summary["flag_counts"] = flags
    if truth is not None:
        summary["accuracy"] = float(np.mean([p.label == t for p, t in zip(preds, truth)]))
    io.write_json(json_path, summary)
    return EXIT_OK


def _cv_grid(cfg: RunConfig, dim: int) -> list:
    lambdas = cfg["lambdas"] or [cfg["lambda"]]
    sigmas = cfg["sigmas"] or [cfg["sigma"]]
    ks = cfg["ks"] or [cfg["k"]]
    kernels = cfg["kernels"] or [cfg["kernel"]]
    grid = []
    for m in cfg["methods"]:
        if m == "llsvm":
            if cfg["bandwidth"] == "knn":
                for fam, lam, k in itertools.product(kernels, lambdas, ks):
                    grid.append(_model(cfg, dim, family=fam, lam=lam, k=k))
            else:
                for fam, sig, lam in itertools.product(kernels, sigmas, lambdas):
                    grid.append(_model(cfg, dim, family=fam, sigma=sig, lam=lam))
        elif m == "kbr":
            grid.extend(KBRMethod(_kernel(cfg, dim, fam, sig)) for fam, sig in itertools.product(kernels, sigmas))
        elif m == "knn":
            grid.extend(KNNMethod(k) for k in ks)
        elif m == "linear":
            grid.extend(GlobalLinearMethod(lam, cfg["tol"], cfg["degree"]) for lam in lambdas)
        else:
            raise InvalidSpecError(f"unknown method {m!r}")
    return grid


def cmd_cv(cfg: RunConfig) -> int:
    _require(cfg, "train")
    ds = _load(cfg, "train")
    rows = cross_validate(ds, cfg["folds"], _cv_grid(cfg, ds.dim), seed=cfg["seed"], workers=cfg["workers"])
    csv_path, json_path = _outputs(cfg)
    io.write_table(
        csv_path,
        ["config", "mean_accuracy", "sd", "fold_accuracies", "single_class_warning"],
        [[r.name, r.mean_accuracy, r.sd, ";".join(io.fmt(a) for a in r.fold_accuracies),
          r.single_class_warning] for r in rows],
        comment=cfg.comment(),
    )
    io.write_json(json_path, {"command": "cv", "folds": cfg["folds"], "n": ds.n,
                              "results": [{"config": r.name, "mean_accuracy": r.mean_accuracy,
                                           "sd": r.sd} for r in rows]})
    return EXIT_OK


def cmd_stability(cfg: RunConfig) -> int:
    _require(cfg, "train", "x0")
    ds = _load(cfg, "train")
    if cfg["bandwidth"] != "fixed":
        raise InvalidSpecError("stability needs --bandwidth fixed")
    rep = stability_check(ds, cfg["x0"], _model(cfg, ds.dim), tol=cfg["tol"],
                          n_controls=cfg["controls"], seed=cfg["seed"])
    csv_path, json_path = _outputs(cfg)
    io.write_table(
        csv_path,
        ["index", "weight", "observed", "bound", "slack", "control", "ok"],
        [[r.index, r.weight, r.observed, r.bound, r.slack, r.control, r.ok] for r in rep.records],
        comment=cfg.comment(),
    )
    io.write_json(json_path, {"command": "stability", **rep.summary()})
    return EXIT_OK if rep.passed else EXIT_CHECK


def _probes(text: str) -> np.ndarray:
    if ";" in text:
        return np.array([_floats(p) for p in text.split(";") if p.strip()])
    return np.array(_floats(text))[:, None]


def cmd_sweep(cfg: RunConfig) -> int:
    gen = cfg["generator"]
    params = {"slope": cfg["slope"]} if gen == "uniform_1d_smooth" else {
        "separation": cfg["separation"], "sd": cfg["sd"]}
    schedule = Schedule(cfg["sigma_exp"], cfg["lambda_exp"], cfg["theta"])
    curve = consistency_sweep(
        SyntheticSpec(gen, 2, params, cfg["seed"]), _probes(cfg["probes"]), schedule,
        cfg["n_list"], cfg["replicates"], cfg["margin_floor"], family=cfg["kernel"],
        seed=cfg["seed"], workers=cfg["workers"],
    )
    csv_path, json_path = _outputs(cfg)
    io.write_table(
        csv_path,
        ["n", "sigma", "lambda", "schedule_value", "agreement_rate", "agreement_sd",
         "mean_local_risk", "mean_excess_local_risk"],
        [[r.n, r.sigma, r.lam, r.schedule_value, r.agreement_rate, r.agreement_sd,
          r.mean_local_risk, r.mean_excess_local_risk] for r in curve.rows],
        comment=cfg.comment(),
    )
    final = curve.rows[-1].agreement_rate
    gate = cfg["min_agreement"]
    ok = curve.nondecreasing() and (gate is None or final >= gate)
    io.write_json(json_path, {
        "command": "sweep", "probes": curve.probes, "excluded_probes": curve.excluded_probes,
        "spearman": curve.spearman(), "nondecreasing": curve.nondecreasing(),
        "final_agreement": final, "passed": ok,
    })
    return EXIT_OK if ok else EXIT_CHECK


def cmd_risk(cfg: RunConfig) -> int:
    _require(cfg, "train", "test")
    train, test = _load(cfg, "train"), _load(cfg, "test")
    if cfg["bandwidth"] != "fixed":
        raise InvalidSpecError("risk needs --bandwidth fixed")
    rep = risk_report(train, test, _model(cfg, train.dim), cfg["delta"], workers=cfg["workers"])
    csv_path, json_path = _outputs(cfg)
    s = rep.summary()
    io.write_table(csv_path, list(s), [list(s.values())], comment=cfg.comment())
    io.write_json(json_path, {"command": "risk", **s})
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "stability": cmd_stability,
    "sweep": cmd_sweep,
    "risk": cmd_risk,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        file_values = io.read_keyvalue(args.config) if args.config else {}
        unknown = set(file_values) - set(SETTINGS) - {"config"}
        if unknown:
            raise InvalidSpecError("unknown config keys: " + ", ".join(sorted(unknown)))
        cfg = resolve(args.command, args, file_values)
        return COMMANDS[args.command](cfg)
    except InvalidSpecError as exc:
        sys.stderr.write(f"llsvm: {exc}\n")
        return EXIT_USAGE
    except (LLSVMError, OSError) as exc:
        sys.stderr.write(f"llsvm: {exc}\n")
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
