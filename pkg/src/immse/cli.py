"""Command-line entry point: ``immse <subcommand> [flags]``.

Settings come from an optional JSON ``--config`` file; command-line flags
override it. Every JSON output echoes the resolved config, seed and package
version, and contains nothing time- or host-dependent, so identical runs give
identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, sources
from .core_math import estimate_moments, make_rng, moment_matched_sampler
from .denoise import build_ensemble
from .estimate import (
    continuous_from_curve,
    convert_density,
    dequantize,
    discrete_from_curve,
    mse_curve,
    nll_continuous,
    nll_discrete,
    tail_constants,
    verify_high_snr_limit,
    verify_pointwise_immse,
)
from .io import ingest
from .nn import MlpDenoiser, TrainConfig, as_denoiser, load_checkpoint, save_checkpoint, train
from .variance import bootstrap_nll

DATA_STREAM = 10
DEQUANT_STREAM = 12

DEFAULTS = {
    "seed": 0,
    "mode": "continuous",
    "source": "gaussian",
    "data": None,
    "format": "csv",
    "n_data": 10000,
    "model": ["oracle"],
    "n_alpha": None,
    "n_eps": 1,
    "gamma0": 1e-4,
    "gamma1": 1e6,
    "delta": None,
    "n_scales": 4.0,
    "stratified": False,
    "dequantize": False,
    "gammas": [0.1, 1.0, 10.0],
    "immse_x": 1.0,
    "x_points": [-1.0, 0.0, 1.0],
    "n_verify": 1_000_000,
    "gamma_large": 1e4,
    "steps": 20000,
    "lr": 1e-3,
    "batch_size": 128,
    "hidden": 128,
    "n_layers": 3,
    "subset_size": 100,
    "n_subsets": 10,
    "out": None,
    "threads": None,
}


class CliError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["continuous", "discrete"])
    common.add_argument("--source", help=f"built-in source: {', '.join(sorted(sources.SOURCES))}")
    common.add_argument("--data", help="dataset file (overrides --source for data)")
    common.add_argument("--format", choices=["csv", "raw-f32", "raw-u8"])
    common.add_argument("--n-data", type=int, help="samples drawn from a built-in source")
    common.add_argument("--model", action="append", help="'oracle' or an MLP checkpoint path; repeat for ensembles")
    common.add_argument("--n-alpha", type=int)
    common.add_argument("--n-eps", type=int)
    common.add_argument("--gamma0", type=float)
    common.add_argument("--gamma1", type=float)
    common.add_argument("--delta", type=float, help="grid spacing of discrete data")
    common.add_argument("--n-scales", type=float, help="half-width of the log-SNR sampler in logistic scales")
    common.add_argument("--stratified", action="store_true", default=None, help="one log-SNR draw per quantile stratum")
    common.add_argument("--dequantize", action="store_true", default=None, help="continuous mode on dequantized data")
    common.add_argument("--steps", type=int)
    common.add_argument("--subset-size", type=int)
    common.add_argument("--n-subsets", type=int)
    common.add_argument("--out", help="output path (JSON, CSV or checkpoint depending on subcommand)")
    common.add_argument("--threads", type=int)

    p = argparse.ArgumentParser(prog="immse", description="Likelihoods from denoising error curves.")
    p.add_argument("--version", action="version", version=f"immse {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="NLL bound of a model on a dataset")
    sub.add_parser("curve", parents=[common], help="MSE curve on a uniform log-SNR grid, as CSV")
    sub.add_parser("verify", parents=[common], help="pointwise I-MMSE and high-SNR checks on a built-in source")
    sub.add_parser("train", parents=[common], help="train an MLP denoiser and save a checkpoint")
    sub.add_parser("ensemble", parents=[common], help="per-SNR best-member ensemble of several models")
    sub.add_parser("bootstrap", parents=[common], help="log-SNR subset spread of an NLL estimate")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["seed"] is None:
        raise CliError("a seed is required")
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if isinstance(cfg["model"], str):
        cfg["model"] = [cfg["model"]]
    cfg["command"] = args.command
    return cfg


def _load_data(cfg):
    """Dataset, its source (if built in) and grid spacing (if known)."""
    if cfg["data"]:
        ds = ingest(cfg["data"], cfg["format"])
        return ds.data, None, cfg["delta"] if cfg["delta"] is not None else ds.delta
    src = sources.get_source(cfg["source"])
    X = src.sample(int(cfg["n_data"]), make_rng(cfg["seed"], DATA_STREAM))
    delta = cfg["delta"] if cfg["delta"] is not None else sources.DELTAS.get(cfg["source"])
    return X, src, delta


def _load_model(name, src):
    if name == "oracle":
        if src is None:
            raise CliError("the oracle model needs a built-in --source")
        return sources.oracle(src)
    return as_denoiser(load_checkpoint(name))


def _n_alpha(cfg, mode):
    if cfg["n_alpha"] is not None:
        return int(cfg["n_alpha"])
    return 100 if mode == "continuous" else 1000


def _estimate(denoiser, X, delta, cfg, mode, n_alpha=None, return_curve=False):
    n_alpha = _n_alpha(cfg, mode) if n_alpha is None else n_alpha
    common = dict(n_alpha=n_alpha, n_eps=cfg["n_eps"], seed=cfg["seed"], stratified=cfg["stratified"],
                  threads=cfg["threads"], return_curve=return_curve)
    if mode == "continuous":
        if cfg["dequantize"]:
            if delta is None:
                raise CliError("--dequantize needs --delta")
            X = dequantize(X, delta, make_rng(cfg["seed"], DEQUANT_STREAM))
        spec = estimate_moments(X)
        sampler = moment_matched_sampler(spec.eigvals, cfg["n_scales"])
        return nll_continuous(denoiser, X, spec, sampler, **common)
    if delta is None:
        raise CliError("discrete mode needs --delta (or data with a known grid)")
    return nll_discrete(denoiser, X, delta, gamma0=cfg["gamma0"], gamma1=cfg["gamma1"], **common)


def _provenance(cfg):
    return {"config": cfg, "seed": cfg["seed"], "version": __version__}


def _write(cfg, text, default_name):
    path = Path(cfg["out"] or default_name)
    path.write_text(text)
    return path


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n"


def cmd_estimate(cfg):
    X, src, delta = _load_data(cfg)
    model = _load_model(cfg["model"][0], src)
    est = _estimate(model, X, delta, cfg, cfg["mode"])
    extra = {}
    if cfg["mode"] == "continuous" and cfg["dequantize"]:
        extra["discrete_nats"] = convert_density(est, delta, X.shape[1], "continuous->discrete").nats
    path = _write(cfg, _dump({**est.to_dict(), **extra, **_provenance(cfg)}), "estimate.json")
    print(f"{est.kind}: {est.nats:.6f} nats  {est.bpd:.6f} bpd  SE {est.std_error_nats:.2g}  -> {path}")


def cmd_curve(cfg):
    X, src, delta = _load_data(cfg)
    model = _load_model(cfg["model"][0], src)
    spec = estimate_moments(X)
    lo, hi = moment_matched_sampler(spec.eigvals, cfg["n_scales"]).support
    alphas = np.linspace(lo, hi, _n_alpha(cfg, "continuous"))
    curve = mse_curve(model, X, alphas, cfg["n_eps"], cfg["seed"], threads=cfg["threads"])
    path = Path(cfg["out"] or "curve.csv")
    curve.to_csv(path, spec.eigvals)
    print(f"curve: {len(alphas)} log-SNR values in [{lo:.3f}, {hi:.3f}]  -> {path}")


def cmd_verify(cfg):
    name = cfg["source"] if cfg["source"] != "gaussian" or cfg["data"] else "gmm2"
    src = sources.get_source(name)
    if cfg["data"]:
        raise CliError("verify runs on built-in sources only")
    n = int(cfg["n_verify"])
    immse = []
    for i, g in enumerate(cfg["gammas"]):
        c = verify_pointwise_immse(src, [cfg["immse_x"]] * src.dim, g, n=n, seed=cfg["seed"] + i)
        immse.append({"gamma": g, "lhs": c.lhs, "rhs": c.rhs, "rel_error": c.rel_error})
    high = []
    if hasattr(src, "log_density"):
        base = sources.moments_of(src)
        for j, x in enumerate(cfg["x_points"]):
            c = verify_high_snr_limit(src, base, [x] * src.dim, cfg["gamma_large"], n=n, seed=cfg["seed"] + j)
            high.append({"x": x, "f_value": c.f_value, "log_ratio": c.log_ratio, "abs_error": c.abs_error})
    rel = max(r["rel_error"] for r in immse)
    doc = {"source": name, "pointwise_immse": immse, "high_snr": high, "rel_error": rel, **_provenance(cfg)}
    path = _write(cfg, _dump(doc), "verify.json")
    print(f"verify {name}: max rel_error {rel:.2e}  -> {path}")


def cmd_train(cfg):
    X, src, delta = _load_data(cfg)
    if cfg["dequantize"]:
        if delta is None:
            raise CliError("--dequantize needs --delta")
        X = dequantize(X, delta, make_rng(cfg["seed"], DEQUANT_STREAM))
    spec = estimate_moments(X)
    sampler = moment_matched_sampler(spec.eigvals, cfg["n_scales"])
    net = MlpDenoiser(X.shape[1], hidden=cfg["hidden"], n_layers=cfg["n_layers"], seed=cfg["seed"])
    tc = TrainConfig(lr=cfg["lr"], batch_size=cfg["batch_size"], steps=cfg["steps"], seed=cfg["seed"])
    res = train(net, X, sampler, tc)
    path = Path(cfg["out"] or "model.json")
    tail = res.nll[-min(1000, len(res.nll)):].mean() if len(res.nll) else float("nan")
    save_checkpoint(res.net, path, tc, extra={"provenance": _provenance(cfg), "final_nll_estimate": float(tail)})
    print(f"trained {tc.steps} steps: running NLL {tail:.4f} nats (Gaussian {spec.entropy():.4f})  -> {path}")


def cmd_ensemble(cfg):
    X, src, delta = _load_data(cfg)
    if len(cfg["model"]) < 2:
        raise CliError("ensemble needs at least two --model entries")
    members = [_load_model(m, src) for m in cfg["model"]]
    spec = estimate_moments(X)
    lo, hi = moment_matched_sampler(spec.eigvals, cfg["n_scales"]).support
    grid = np.linspace(lo, hi, 100)
    val = X[: max(1, len(X) // 2)]
    test = X[len(val):] if len(X) > 1 else X
    curves = [mse_curve(m, val, grid, cfg["n_eps"], cfg["seed"] + 1, threads=cfg["threads"]) for m in members]
    ens = build_ensemble(members, curves)
    results = [_estimate(m, test, delta, cfg, cfg["mode"]).to_dict() for m in members]
    ens_est = _estimate(ens, test, delta, cfg, cfg["mode"])
    doc = {
        "ensemble": ens_est.to_dict(),
        "members": results,
        "breakpoints": ens.breakpoints.tolist(),
        "owners": list(ens.owners),
        **_provenance(cfg),
    }
    path = _write(cfg, _dump(doc), "ensemble.json")
    best = min(r["nats"] for r in results)
    print(f"ensemble: {ens_est.nats:.6f} nats (best member {best:.6f})  -> {path}")


def cmd_bootstrap(cfg):
    X, src, delta = _load_data(cfg)
    model = _load_model(cfg["model"][0], src)
    mode = cfg["mode"]
    n_alpha = cfg["n_alpha"] if cfg["n_alpha"] is not None else 1000
    est, curve = _estimate(model, X, delta, cfg, mode, n_alpha=n_alpha, return_curve=True)
    if mode == "continuous":
        Xe = dequantize(X, delta, make_rng(cfg["seed"], DEQUANT_STREAM)) if cfg["dequantize"] else X
        spec = estimate_moments(Xe)
        fn = lambda c: continuous_from_curve(c, spec)  # noqa: E731
    else:
        lam = estimate_moments(X).eigvals
        tails = tail_constants(cfg["gamma0"], cfg["gamma1"], delta, lam, X.shape[1])
        fn = lambda c: discrete_from_curve(c, X.shape[1], tails)  # noqa: E731
    rep = bootstrap_nll(curve, fn, cfg["subset_size"], cfg["n_subsets"], cfg["seed"])
    path = _write(cfg, rep.to_json(mode=mode, **_provenance(cfg)) + "\n", "bootstrap.json")
    print(f"bootstrap {mode}: {rep.subset_mean:.6f} +- {rep.subset_std:.4f} nats over {rep.n_subsets} subsets  -> {path}")


COMMANDS = {
    "estimate": cmd_estimate,
    "curve": cmd_curve,
    "verify": cmd_verify,
    "train": cmd_train,
    "ensemble": cmd_ensemble,
    "bootstrap": cmd_bootstrap,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except (CliError, ValueError, TypeError, OSError, FloatingPointError, RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
