"""Command-line entry point: data generation, training, fitting,
recommendation, evaluation, ATE benchmarking, and the exact limits
calculator, with reproducible run manifests.

Every subcommand resolves its configuration (JSON config file overridden by
explicit flags), writes outputs atomically, and records the resolved
configuration in ``<out>.manifest.json``; ``mvbandit rerun <manifest>``
reproduces the run byte for byte.

Exit codes: 1 usage/config error, 2 data/model error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench
from .bench import (
    DigitBanditConfig,
    DigitBanditEnv,
    GlucoseConfig,
    GlucoseEnv,
    IhdpBConfig,
    IhdpBEnv,
    Mcar,
    estimate_ate,
    evaluate_policy,
)
from .cpvae import CpvaeConfig, CpvaeModel, train_cpvae
from .data import (
    FeatureSchema,
    LoggedDataset,
    PartialFeature,
    atomic_write_text,
    dataset_from_csv,
    dataset_to_csv,
    read_json,
    write_json,
)
from .errors import (
    ConfigError,
    DataError,
    EstimationError,
    MvbanditError,
    TrainingError,
)
from .estimators import SpvaeEstimator, SpvaeOptions
from .infolimits import (
    DiscreteEnv,
    bayes_accuracy,
    decomposition,
    example_environment,
    heuristic_accuracy,
)
from .propensity import PropensityConfig, PropensityModel, fit_propensity
from .pvae import PvaeConfig, PvaeModel, train_pvae
from .strategies import (
    CONSERVATIVE,
    CpvaeOracle,
    SpvaeOracle,
    StrategySpec,
    estimate_risk,
    recommend,
)

FAMILIES = ("digit", "ihdp-b", "glucose")

# per-family hyperparameter defaults (embed, agg, latent, f_hidden,
# dec_hidden, epochs, batch)
FAMILY_DEFAULTS = {
    "digit": dict(embed=20, agg=400, latent=20, f_hidden="500,200", dec_hidden="200,500",
                  epochs=20, batch=8),
    "ihdp-b": dict(embed=10, agg=20, latent=10, f_hidden="20,20,20", dec_hidden="20,20",
                   epochs=25, batch=8),
    "glucose": dict(embed=5, agg=8, latent=5, f_hidden="10,10", dec_hidden="10,10",
                    epochs=25, batch=8),
}


class CliParser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(c) for c in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_manifest(subcommand: str, args: argparse.Namespace, anchor_path: str) -> None:
    config = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func", "config", "subcommand") and v is not None
    }
    write_json(anchor_path + ".manifest.json", {"subcommand": subcommand, "config": config})


def _schema_path(data_path: str) -> str:
    return os.path.splitext(data_path)[0] + ".schema.json"


def _save_schema(data: LoggedDataset, path: str) -> None:
    write_json(path, {"schema": data.schema.to_dict(), "n_actions": data.n_actions})


def _load_dataset(path: str, schema_path: str | None = None) -> LoggedDataset:
    schema_path = schema_path or _schema_path(path)
    if not os.path.exists(schema_path):
        raise DataError(f"schema file {schema_path} not found (pass --schema)")
    blob = read_json(schema_path)
    schema = FeatureSchema.from_dict(blob["schema"])
    return dataset_from_csv(path, schema, int(blob["n_actions"]))


def _parse_hidden(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(w) for w in text.split(","))


def _parse_strategy(text: str) -> StrategySpec:
    """'imputation' | 'mer' | 'mer:7' | 'cons:0.1' | 'conservative:0.7'."""
    parts = text.split(":")
    name = parts[0].strip().lower()
    if name == "imputation":
        return StrategySpec("imputation")
    if name == "mer":
        return StrategySpec("mer", t=int(parts[1]) if len(parts) > 1 else 5)
    if name in ("cons", "conservative"):
        if len(parts) < 2:
            raise ConfigError(f"conservative strategy needs a c value: {text!r}")
        return StrategySpec(CONSERVATIVE, c=float(parts[1]))
    raise ConfigError(f"unknown strategy {text!r}")


def _make_env(args):
    if args.family == "digit":
        return DigitBanditEnv(
            DigitBanditConfig(
                n=args.n, d=args.d or 16, erase_rate=args.missing, seed=args.seed
            )
        )
    if args.family == "ihdp-b":
        return IhdpBEnv(IhdpBConfig(n=args.n, missing_rate=args.missing, seed=args.seed))
    if args.family == "glucose":
        return GlucoseEnv(GlucoseConfig(n=args.n, erase_rate=args.missing, seed=args.seed))
    raise ConfigError(f"unknown family {args.family!r} (choose from {FAMILIES})")


def _net_values(args) -> dict:
    """Resolve net hyperparameters: explicit flags win, then the family's
    documented defaults, then the ihdp-b convention."""
    d = FAMILY_DEFAULTS.get(getattr(args, "family", None), FAMILY_DEFAULTS["ihdp-b"])
    out = {}
    for key in ("embed", "agg", "latent", "f_hidden", "dec_hidden", "epochs", "batch"):
        value = getattr(args, key)
        out[key] = d[key] if value is None else value
    return out


def _pvae_config(args, seed=None) -> PvaeConfig:
    v = _net_values(args)
    return PvaeConfig(
        embed_dim=v["embed"],
        agg_dim=v["agg"],
        latent_dim=v["latent"],
        f_hidden=_parse_hidden(v["f_hidden"]),
        dec_hidden=_parse_hidden(v["dec_hidden"]),
        epochs=v["epochs"],
        batch_size=v["batch"],
        lr=args.lr,
        seed=args.seed if seed is None else seed,
    )


def _cpvae_config(args, seed=None) -> CpvaeConfig:
    v = _net_values(args)
    return CpvaeConfig(
        embed_dim=v["embed"],
        agg_dim=v["agg"],
        latent_dim=v["latent"],
        f_hidden=_parse_hidden(v["f_hidden"]),
        dec_hidden=_parse_hidden(v["dec_hidden"]),
        epochs=v["epochs"],
        batch_size=v["batch"],
        lr=args.lr,
        seed=args.seed if seed is None else seed,
        weight_cap=args.w_max,
    )


def _add_net_flags(p):
    p.add_argument("--embed", type=int, default=None, help="embedding dim per attribute")
    p.add_argument("--agg", type=int, default=None, help="aggregate width K")
    p.add_argument("--latent", type=int, default=None, help="latent dim")
    p.add_argument("--f-hidden", default=None, help="posterior net hidden widths, e.g. 20,20")
    p.add_argument("--dec-hidden", default=None, help="decoder hidden widths")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=1e-3)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    _require(args, "family", "out")
    env = _make_env(args)
    data = env.logged()
    dataset_to_csv(data, args.out)
    _save_schema(data, _schema_path(args.out))
    _write_manifest("gen-data", args, args.out)
    print(f"wrote {len(data)} rows to {args.out}")
    return 0


def cmd_train_pvae(args):
    _require(args, "data", "out")
    data = _load_dataset(args.data, args.schema)
    model = train_pvae(data, data.schema, _pvae_config(args))
    write_json(args.out, model.to_dict())
    _write_manifest("train-pvae", args, args.out)
    trace = model.loss_trace
    if trace:
        print(f"trained pvae: loss {trace[0]:.4f} -> {trace[-1]:.4f} over {len(trace)} epochs")
    return 0


def cmd_fit_propensity(args):
    _require(args, "data", "pvae", "out")
    data = _load_dataset(args.data, args.schema)
    pvae = PvaeModel.from_dict(read_json(args.pvae))
    config = PropensityConfig(m=args.m, clip=args.clip, epochs=args.fit_epochs, seed=args.seed)
    model = fit_propensity(data, pvae, config=config)
    write_json(args.out, model.to_dict())
    _write_manifest("fit-propensity", args, args.out)
    print(f"fitted propensity with m={model.m} imputations")
    return 0


def cmd_train_cpvae(args):
    _require(args, "data", "out")
    data = _load_dataset(args.data, args.schema)
    pvae = PvaeModel.from_dict(read_json(args.pvae)) if args.pvae else None
    propensity = PropensityModel.from_dict(read_json(args.propensity)) if args.propensity else None
    if propensity is not None and pvae is None:
        raise ConfigError("--propensity weighting needs --pvae for its imputations")
    model = train_cpvae(data, propensity, _cpvae_config(args), pvae=pvae)
    write_json(args.out, model.to_dict())
    _write_manifest("train-cpvae", args, args.out)
    trace = model.loss_trace
    if trace:
        print(f"trained cpvae: loss {trace[0]:.4f} -> {trace[-1]:.4f} over {len(trace)} epochs")
    return 0


def _build_oracle(args, data: LoggedDataset):
    pvae = PvaeModel.from_dict(read_json(args.pvae))
    if args.estimator in ("spvae", "spvae-matched"):
        propensity = PropensityModel.from_dict(read_json(args.propensity))
        options = SpvaeOptions(
            subsample=args.subsample, density_draws=args.density_draws,
            weight_cap=args.w_max, seed=args.seed,
        )
        est = SpvaeEstimator(data, propensity, pvae=pvae, options=options)
        return SpvaeOracle(est, matched=args.estimator == "spvae-matched")
    if args.estimator == "cpvae":
        cpvae = CpvaeModel.from_dict(read_json(args.cpvae))
        return CpvaeOracle(cpvae, pvae)
    raise ConfigError(f"unknown estimator {args.estimator!r}")


def cmd_recommend(args):
    _require(args, "data", "pvae", "strategy", "out")
    data = _load_dataset(args.data, args.schema)
    train = _load_dataset(args.train_data, None) if args.train_data else data
    oracle = _build_oracle(args, train)
    spec = _parse_strategy(args.strategy)
    if spec.variant == CONSERVATIVE:
        spec = StrategySpec(CONSERVATIVE, c=args.c if args.c is not None else spec.c, u=args.u)
    elif spec.variant == "mer":
        spec = StrategySpec("mer", t=args.t)
    rng = np.random.Generator(np.random.PCG64((args.seed, 0x8EC)))
    header = ["instance", "action"]
    header += [f"score_{a}" for a in range(data.n_actions)]
    header += ["survivors", "risk"]
    rows = []
    for i in range(len(data)):
        rec = recommend(oracle, data.row(i), spec, rng)
        rows.append(
            [i, rec.action]
            + [float(s) for s in rec.scores]
            + [rec.survivors if rec.survivors is not None else "",
               rec.risk if rec.risk is not None else ""]
        )
    _write_csv(args.out, header, rows)
    _write_manifest("recommend", args, args.out)
    print(f"recommended actions for {len(data)} instances -> {args.out}")
    return 0


def _pipeline_for_seed(args, seed: int):
    """Generate data, train the generative stack, and build the oracle."""
    env_args = argparse.Namespace(
        family=args.family, n=args.n, d=getattr(args, "d", None),
        missing=args.missing, seed=seed,
    )
    env = _make_env(env_args)
    data = env.logged()
    pvae = train_pvae(data, data.schema, _pvae_config(args, seed=(seed, 1)))
    prop = fit_propensity(
        data, pvae,
        config=PropensityConfig(m=args.m, clip=args.clip, seed=(seed, 2)),
    )
    if args.estimator == "cpvae":
        cpvae = train_cpvae(data, prop, _cpvae_config(args, seed=(seed, 3)), pvae=pvae)
        oracle = CpvaeOracle(cpvae, pvae)
    else:
        options = SpvaeOptions(
            subsample=args.subsample, density_draws=args.density_draws,
            weight_cap=args.w_max, seed=seed,
        )
        est = SpvaeEstimator(data, prop, pvae=pvae, options=options)
        oracle = SpvaeOracle(est, matched=args.estimator == "spvae-matched")
    return env, data, oracle


def cmd_evaluate(args):
    _require(args, "family", "out_dir")
    specs = [_parse_strategy(s) for s in args.strategies.split(",")]
    metrics_rows, detail_rows = [], []
    for seed in range(args.seeds):
        env, _, oracle = _pipeline_for_seed(args, args.seed + seed)
        for spec in specs:
            rng = np.random.Generator(np.random.PCG64((args.seed + seed, 0xEA)))
            rec_of = lambda xt: recommend(oracle, xt, spec, rng).action
            m = evaluate_policy(
                env, rec_of, n_test=args.n_test, seed=args.seed + seed,
                tail_threshold=args.threshold,
            )
            run_id = f"{args.family}-{args.estimator}-s{args.seed + seed}"
            c_txt = spec.c if spec.variant == CONSERVATIVE else ""
            metrics_rows.append(
                [run_id, args.family, spec.variant, c_txt, m.avg_reward, m.se,
                 m.tail_fraction, m.tail_count, m.n_test, ""]
            )
            for i in range(m.n_test):
                detail_rows.append(
                    [run_id, i, spec.variant, c_txt, int(m.actions[i]), float(m.rewards[i])]
                )
    os.makedirs(args.out_dir, exist_ok=True)
    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    _write_csv(
        metrics_path,
        ["run_id", "family", "strategy", "c", "avg_reward", "se", "tail_fraction",
         "tail_count", "n_test", "delta_ate"],
        metrics_rows,
    )
    _write_csv(
        os.path.join(args.out_dir, "details.csv"),
        ["run_id", "instance", "strategy", "c", "action", "reward"],
        detail_rows,
    )
    _write_manifest("evaluate", args, metrics_path)
    print(f"wrote {len(metrics_rows)} metric rows to {args.out_dir}")
    return 0


def cmd_ate(args):
    _require(args, "out")
    rates = [float(r) for r in args.rates.split(",")]
    rows = []
    for seed in range(args.seeds):
        for rate in rates:
            ns = argparse.Namespace(**vars(args))
            ns.missing = rate
            ns.family = "ihdp-b"
            ns.n = args.n
            env, data, oracle = _pipeline_for_seed(ns, args.seed + seed)
            rng = np.random.Generator(np.random.PCG64((args.seed + seed, 0xA7E)))
            spec = StrategySpec("mer", t=args.t)

            def theta(row: PartialFeature, action: int) -> float:
                samples = oracle.sample_posterior(row, spec.t, rng)
                values, _ = oracle.score_batch(samples)
                return float(values[:, action].mean())

            tau_hat, delta = estimate_ate(data, theta)
            run_id = f"ihdp-b-{args.estimator}-s{args.seed + seed}-r{rate}"
            rows.append(
                [run_id, "ihdp-b", "mer", "", "", "", "", "", len(data), delta]
            )
            print(f"{run_id}: tau_hat={tau_hat:.3f} delta={delta:.3f}")
    _write_csv(
        args.out,
        ["run_id", "family", "strategy", "c", "avg_reward", "se", "tail_fraction",
         "tail_count", "n_test", "delta_ate"],
        rows,
    )
    _write_manifest("ate", args, args.out)
    return 0


def cmd_limits(args):
    if args.example1:
        env = example_environment()
    elif args.env:
        blob = read_json(args.env)
        env = DiscreteEnv(
            blob["attribute_values"],
            np.asarray(blob["prior"], dtype=np.float64),
            np.asarray(blob["reward_means"], dtype=np.float64),
            erase_prob=blob.get("erase_prob"),
            channel_table=(
                np.asarray(blob["channel_table"], dtype=np.float64)
                if blob.get("channel_table") is not None
                else None
            ),
        )
    else:
        raise ConfigError("limits needs --example1 or --env FILE")
    dec = decomposition(env)
    result = {
        "h_action": dec.h_action,
        "mi_feature_obs": dec.mi_feature_obs,
        "mi_feature_obs_given_action": dec.mi_feature_obs_given_action,
        "h_action_given_obs": dec.h_action_given_obs_direct,
        "h_action_given_obs_identity": dec.h_action_given_obs_identity,
        "heuristic_accuracy": heuristic_accuracy(env),
        "bayes_accuracy": bayes_accuracy(env),
    }
    print(f"H_a={dec.h_action:.3f}, I={dec.mi_feature_obs:.3f}, "
          f"H_cond={dec.h_action_given_obs_direct:.3f}, "
          f"heuristic={result['heuristic_accuracy']:.3f}, "
          f"bayes={result['bayes_accuracy']:.3f}")
    if args.out:
        write_json(args.out, result)
        _write_manifest("limits", args, args.out)
    return 0


def cmd_risk(args):
    _require(args, "model", "data", "c")
    model = PvaeModel.from_dict(read_json(args.model))
    data = _load_dataset(args.data, args.schema)
    if not 0 <= args.row < len(data):
        raise ConfigError(f"--row {args.row} outside 0..{len(data) - 1}")
    result = estimate_risk(model, data.row(args.row), args.c)
    print(f"risk={result.risk:.6f} (missing continuous attributes: "
          f"{result.missing_continuous})")
    return 0


def cmd_rerun(args):
    manifest = read_json(args.manifest)
    sub = manifest["subcommand"]
    config = manifest["config"]
    parser = build_parser()
    argv = [sub]
    for key, value in config.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        else:
            argv += [flag, str(value)]
    parsed = parser.parse_args(argv)
    return parsed.func(parsed)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON config file; flags override it")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")


def _add_estimator_flags(p):
    p.add_argument("--estimator", choices=("spvae", "spvae-matched", "cpvae"), default="cpvae")
    p.add_argument("--m", type=int, default=5, help="propensity imputations")
    p.add_argument("--clip", type=float, default=0.01, help="propensity floor")
    p.add_argument("--w-max", type=float, default=100.0, help="IPS weight cap")
    p.add_argument("--subsample", type=int, default=None, help="M < n similarity subsample")
    p.add_argument("--density-draws", type=int, default=1, help="L latent draws for densities")
    p.add_argument("--t", type=int, default=5, help="MER posterior draws")
    p.add_argument("--u", type=int, default=50, help="conservative prior draws")
    p.add_argument("--c", type=float, default=None, help="conservative threshold")


def build_parser() -> CliParser:
    parser = CliParser(prog="mvbandit", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic logged dataset")
    p.add_argument("--family", choices=FAMILIES, default=None)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--d", type=int, default=None, help="digit bandit dimension")
    p.add_argument("--missing", type=float, default=0.3)
    p.add_argument("--out", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-pvae", help="train the partial VAE on a dataset CSV")
    p.add_argument("--data", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", default=None)
    _add_net_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_pvae)

    p = sub.add_parser("fit-propensity", help="fit the logging-policy model")
    p.add_argument("--data", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--pvae", default=None)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--clip", type=float, default=0.01)
    p.add_argument("--fit-epochs", type=int, default=300)
    p.add_argument("--out", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_fit_propensity)

    p = sub.add_parser("train-cpvae", help="train the conditional (reward) VAE")
    p.add_argument("--data", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--pvae", default=None)
    p.add_argument("--propensity", default=None)
    p.add_argument("--w-max", type=float, default=100.0)
    p.add_argument("--out", default=None)
    _add_net_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_cpvae)

    p = sub.add_parser("recommend", help="recommend actions for a feature CSV")
    p.add_argument("--data", default=None, help="dataset CSV to recommend for")
    p.add_argument("--schema", default=None)
    p.add_argument("--train-data", default=None, help="logged data backing the estimator")
    p.add_argument("--pvae", default=None)
    p.add_argument("--propensity", default=None)
    p.add_argument("--cpvae", default=None)
    p.add_argument("--strategy", default=None, help="imputation | mer | cons:<c>")
    p.add_argument("--out", default=None)
    _add_estimator_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="full pipeline benchmark over seeds")
    p.add_argument("--family", choices=FAMILIES, default=None)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--missing", type=float, default=0.5)
    p.add_argument("--strategies", default="imputation,mer,cons:0.7,cons:0.1,cons:0.001")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--threshold", type=float, default=-7.0)
    p.add_argument("--out-dir", default=None)
    _add_net_flags(p)
    _add_estimator_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ate", help="average treatment effect benchmark (ihdp-b)")
    p.add_argument("--n", type=int, default=747)
    p.add_argument("--rates", default="0.1,0.3,0.5")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_net_flags(p)
    _add_estimator_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ate)

    p = sub.add_parser("limits", help="exact uncertainty decomposition")
    p.add_argument("--example1", action="store_true", help="run the built-in example")
    p.add_argument("--env", default=None, help="JSON environment description")
    p.add_argument("--out", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("risk", help="conservative risk proxy for one instance")
    p.add_argument("--model", default=None, help="pvae model JSON")
    p.add_argument("--data", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--c", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("rerun", help="replay a run manifest byte-identically")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)

    parser.subparser_map = {name: sp for name, sp in sub.choices.items()}
    return parser


def _apply_config_file(parser, argv):
    """--config FILE provides defaults; explicit flags win.

    Defaults must land on the subcommand's own parser: subcommands parse into
    a fresh namespace, so top-level set_defaults would be overwritten.
    """
    probe = CliParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv[1:] if argv and argv[0] != "--config" else argv)
    if not known.config:
        return
    blob = read_json(known.config)
    if not isinstance(blob, dict):
        raise ConfigError(f"config file {known.config} must hold a JSON object")
    target = parser.subparser_map.get(argv[0]) if argv else None
    if target is None:
        raise ConfigError("--config needs a leading subcommand")
    target.set_defaults(**{k.replace("-", "_"): v for k, v in blob.items()})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "threads", None):
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(args.threads)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code else 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, MvbanditError) as exc:
        if isinstance(exc, (TrainingError, EstimationError)):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return 3
        print(f"data/model error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
