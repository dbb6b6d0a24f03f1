"""Command-line front end: collect, train, eval, ablate, rollout, regress.

Every command writes its data outputs deterministically from the given
seeds and finishes by writing a run manifest (JSON) next to the primary
output; wall-clock timing lives only in the manifest so the data files stay
byte-stable. On failure, partial outputs are removed and the exit code is
nonzero (2 for usage/input errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, dynsys, evaluate, trainer

log = logging.getLogger("dyncorr")


class CliError(Exception):
    """Input or usage error; maps to exit code 2."""


def _write_manifest(command: str, args: dict, outputs: list, started: float) -> None:
    primary = outputs[0]
    manifest_path = primary + ".manifest.json"
    for path in outputs:
        if not os.path.exists(path):
            raise RuntimeError(f"output {path} missing at manifest time")
    doc = {
        "command": command,
        "args": args,
        "tool_version": __version__,
        "outputs": outputs,
        "duration_seconds": time.time() - started,
    }
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2)
    os.replace(tmp, manifest_path)


def _load_dataset(path):
    if not os.path.exists(path):
        raise CliError(f"dataset file not found: {path}")
    try:
        return dynsys.load_dataset(path)
    except (ValueError, KeyError) as exc:
        raise CliError(f"cannot read dataset {path}: {exc}")


def _load_model(path):
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path}")
    try:
        return trainer.load_model(path)
    except ValueError as exc:
        raise CliError(str(exc))


def _resolve_config(args) -> trainer.TrainConfig:
    if args.config:
        if not os.path.exists(args.config):
            raise CliError(f"config file not found: {args.config}")
        config = trainer.load_config(args.config)
    else:
        preset = args.preset or "wedge"
        if preset not in trainer.PRESETS:
            raise CliError(
                f"unknown preset {preset!r}; available: "
                + ", ".join(sorted(trainer.PRESETS))
            )
        config = trainer.PRESETS[preset]
    if args.steps is not None:
        config = config.replace(steps=args.steps)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if getattr(args, "restarts_override", None) is not None:
        config = config.replace(restarts=args.restarts_override)
    return config


def cmd_collect(args) -> list:
    spec = dynsys.make_spec(args.system)
    reset_noise = args.reset_noise
    if reset_noise is None:
        reset_noise = 1.0 if args.system.startswith("wedge") else 0.1
    dataset = dynsys.collect_dataset(
        spec,
        args.horizon,
        args.resets,
        reset_noise=reset_noise,
        action_noise=args.action_noise,
        seed=args.seed,
    )
    dynsys.save_dataset(dataset, args.out)
    log.info("collected %d pairs -> %s", len(dataset), args.out)
    return [args.out]


def cmd_train(args) -> list:
    dataset_a = _load_dataset(args.a)
    dataset_b = _load_dataset(args.b)
    config = _resolve_config(args)
    log_path = args.log or args.out + ".log.jsonl"

    def on_log(step, breakdown):
        log.info("step %d total %.6f", step, breakdown.total)

    model, train_log = trainer.train(dataset_a, dataset_b, config, log_fn=on_log)
    if train_log.restart_seed is not None:
        log.info("restart selection kept seed %d", train_log.restart_seed)
    trainer.save_model(model, args.out)
    with open(log_path, "w") as fh:
        for rec in train_log.records:
            fh.write(json.dumps(rec) + "\n")
    if train_log.records:
        final = train_log.records[-1]
        print(f"final loss at step {final['step']}: {final['total']!r}")
    return [args.out, log_path]


def cmd_eval(args) -> list:
    model = _load_model(args.model)
    test_a = _load_dataset(args.a)
    test_b = _load_dataset(args.b)
    paths = [args.path] if args.path else list(evaluate.PATH_NAMES)
    n = min(args.test_size, len(test_a), len(test_b))
    scores = evaluate.evaluate_paths(
        model, test_a.s_t[:n], test_b.s_t[:n], paths
    )
    with open(args.out, "w") as fh:
        for path, value in scores.items():
            fh.write(json.dumps({"path": path, "msnn": value}) + "\n")
    for path, value in scores.items():
        print(f"{path} {value!r}")
    return [args.out]


def cmd_ablate(args) -> list:
    dataset_a = _load_dataset(args.a)
    dataset_b = _load_dataset(args.b)
    config = _resolve_config(args)
    report = evaluate.ablate(
        dataset_a,
        dataset_b,
        config,
        seeds=[config.seed + i for i in range(args.seeds)],
        test_size=args.test_size,
    )
    table_path = args.out + ".txt"
    with open(args.out, "w") as fh:
        for rec in report.to_records():
            fh.write(json.dumps(rec) + "\n")
        for failure in report.failures:
            fh.write(json.dumps({"failure": failure}) + "\n")
    table = report.text_table()
    with open(table_path, "w") as fh:
        fh.write(table + "\n")
    print(table)
    return [args.out, table_path]


def cmd_rollout(args) -> list:
    model = _load_model(args.model)
    if args.start:
        dataset = _load_dataset(args.start)
        from .nets import forward

        z0 = forward(
            model.enc_a, model.norm_a.normalize(dataset.s_t[args.start_index])
        )[0]
    else:
        z0 = np.zeros(model.latent_dim)
    lat, dec_a, dec_b = evaluate.latent_rollout(model, z0, args.steps)
    pcs = evaluate.pca_coords(lat, 2)
    header = (
        ["step"]
        + [f"latent_{i}" for i in range(lat.shape[1])]
        + ["pc1", "pc2"]
        + [f"a_{i}" for i in range(dec_a.shape[1])]
        + [f"b_{i}" for i in range(dec_b.shape[1])]
    )
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(lat.shape[0]):
            row = (
                [str(t)]
                + [repr(v) for v in lat[t]]
                + [repr(pcs[t, 0]), repr(pcs[t, 1])]
                + [repr(v) for v in dec_a[t]]
                + [repr(v) for v in dec_b[t]]
            )
            fh.write(",".join(row) + "\n")
    print(f"rolled out {lat.shape[0] - 1} latent steps -> {args.out}")
    return [args.out]


def cmd_regress(args) -> list:
    model = _load_model(args.model)
    dataset = _load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    no_int, with_int = evaluate.perturb_regress(
        model,
        dataset,
        velocity_index=args.index,
        noise_scale=args.noise_scale,
        copies=args.copies,
        rng=rng,
        source=args.source,
        target_index=args.target_index,
    )
    records = [
        {"model": "no_intercept", **_regression_record(no_int)},
        {"model": "with_intercept", **_regression_record(with_int)},
    ]
    with open(args.out, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    for rec in records:
        print(
            f"{rec['model']}: slope={rec['slope']!r} p={rec['slope_p']!r} "
            f"n={rec['n']}"
        )
    return [args.out]


def _regression_record(res) -> dict:
    return {
        "slope": res.slope,
        "intercept": res.intercept,
        "residual_variance": res.residual_variance,
        "slope_se": res.slope_se,
        "intercept_se": res.intercept_se,
        "slope_t": res.slope_t,
        "intercept_t": res.intercept_t,
        "slope_p": res.slope_p,
        "intercept_p": res.intercept_p,
        "n": res.n,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyncorr",
        description="Learn and evaluate state correspondences between "
        "dynamical systems through a shared latent dynamics model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="simulate a system and write a dataset")
    p.add_argument("--system", required=True, choices=dynsys.SYSTEM_KINDS)
    p.add_argument("--horizon", type=int, default=500)
    p.add_argument("--resets", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reset-noise", type=float, default=None,
                   help="default: 0.1 for angular systems, 1.0 for wedges")
    p.add_argument("--action-noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train the correspondence model")
    p.add_argument("--a", required=True, help="dataset file for system A")
    p.add_argument("--b", required=True, help="dataset file for system B")
    p.add_argument("--preset", choices=sorted(trainer.PRESETS))
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None, dest="restarts_override",
                   help="override the config's restart-selection count")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log JSONL (default: <out>.log.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score projection paths with MSNN")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True, help="test dataset for system A")
    p.add_argument("--b", required=True, help="test dataset for system B")
    p.add_argument("--path", choices=evaluate.PATH_NAMES,
                   help="single path; default: all six")
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the loss-ablation grid")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--preset", choices=sorted(trainer.PRESETS))
    p.add_argument("--config")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--out", required=True, help="report JSONL path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("rollout", help="simulate the latent system forward")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--start", help="dataset whose state seeds the rollout "
                   "(encoded with the A encoder); default: latent origin")
    p.add_argument("--start-index", type=int, default=0)
    p.add_argument("--out", required=True, help="per-step CSV path")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("regress", help="perturbation regression across systems")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="source-system dataset")
    p.add_argument("--index", type=int, required=True,
                   help="perturbed state coordinate")
    p.add_argument("--target-index", type=int, default=None)
    p.add_argument("--copies", type=int, default=10)
    p.add_argument("--noise-scale", type=float, default=0.5)
    p.add_argument("--source", choices=("A", "B"), default="A")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regress)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("DYNCORR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    outputs = []
    try:
        outputs = args.func(args)
        _write_manifest(
            args.command,
            {k: v for k, v in vars(args).items() if k != "func"},
            outputs,
            started,
        )
    except CliError as exc:
        _cleanup(outputs, args)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FloatingPointError, ValueError) as exc:
        _cleanup(outputs, args)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _cleanup(outputs, args) -> None:
    # best effort removal of partial outputs so failed runs leave nothing
    candidates = set(outputs)
    for attr in ("out", "log"):
        path = getattr(args, attr, None)
        if path:
            candidates.add(path)
    for path in candidates:
        if os.path.exists(path):
            try:
                os.remove(path)
            except OSError:
                pass


if __name__ == "__main__":
    sys.exit(main())
