"""Training loop, batch sampling, configuration presets, checkpoint I/O."""
from __future__ import annotations

import dataclasses
import json

import numpy as np

from .dynsys import NormalizationStats, TrajectoryDataset
from .losses import LossBreakdown, LossWeights, total_loss
from .model import NET_NAMES, CorrespondenceModel
from .nets import Mlp, mlp_init, opt_init, opt_step

CHECKPOINT_VERSION = 1
CONFIG_VERSION = 1


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = LossWeights()
    sigma: float = 0.1
    batch_size: int = 256
    steps: int = 20000
    learning_rate: float = 3e-4
    hidden: tuple = (64, 64)
    latent_k: int = 1
    seed: int = 0
    eval_every: int = 500
    restarts: int = 1
    probe_steps: int = 2000

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (the nearest-neighbor "
                             "term needs a nonempty opposite set)")
        if self.sigma < 0:
            raise ValueError("noise scale must be >= 0")
        if self.steps < 0 or self.latent_k < 1:
            raise ValueError("invalid step count or latent size")
        if self.restarts < 1 or self.probe_steps < 0:
            raise ValueError("invalid restart count or probe length")

    @property
    def latent_dim(self) -> int:
        return 2 * self.latent_k

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# Named experiment recipes. "wedge" pairs the two mirrored contracting
# systems; its loss landscape has distinct basins (one per approximate
# latent alignment of the two wedges), so the preset probes several seeds
# briefly and keeps the one with the lowest noise-free loss before the full
# run. "periodic" pairs the driven pendulum with the two-link system and
# is calibrated so the learned latent dynamics sustains the shared drive
# cycle in open-loop rollouts (strong FD/PV weights; with weak ones the
# rollout decays to a fixed point). "latent8" is the high-dimensional
# recipe with heavy dynamics weights (FD = PV = 1e3, sigma 5e-3,
# latent dim 8).
PRESETS = {
    "wedge": TrainConfig(
        weights=LossWeights(ae=1.0, nn=1.0, fd=1.0, pv=0.01),
        sigma=0.1,
        batch_size=512,
        steps=12000,
        latent_k=1,
        restarts=8,
        probe_steps=2000,
    ),
    "periodic": TrainConfig(
        weights=LossWeights(ae=1.0, nn=1.0, fd=1.0, pv=1.0),
        sigma=0.1,
        batch_size=256,
        steps=40000,
        latent_k=1,
        restarts=8,
        probe_steps=2000,
    ),
    "latent8": TrainConfig(
        weights=LossWeights(ae=1.0, nn=1.0, fd=1e3, pv=1e3),
        sigma=5e-3,
        batch_size=256,
        steps=20000,
        latent_k=4,
    ),
}


@dataclasses.dataclass
class TrainLog:
    """Per-interval loss records; steps strictly increasing.

    `restart_seed` is the seed kept by restart selection (None when the
    config ran single-shot).
    """

    records: list = dataclasses.field(default_factory=list)
    restart_seed: int | None = None

    def append(self, step: int, breakdown: LossBreakdown) -> None:
        if self.records and step <= self.records[-1]["step"]:
            raise ValueError("log steps must be strictly increasing")
        self.records.append(
            {
                "step": step,
                "ae": breakdown.ae,
                "nn": breakdown.nn,
                "fd": breakdown.fd,
                "pv": breakdown.pv,
                "total": breakdown.total,
            }
        )


def sample_batch(dataset: TrajectoryDataset, batch_size: int, rng):
    """Uniform-with-replacement batch of normalized transition pairs."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    idx = rng.integers(0, n, size=batch_size)
    return (
        dataset.norm.normalize(dataset.s_t[idx]),
        dataset.norm.normalize(dataset.s_next[idx]),
    )


def init_model(dim_a: int, dim_b: int, config: TrainConfig, rng) -> CorrespondenceModel:
    ld = config.latent_dim
    h = tuple(config.hidden)
    return CorrespondenceModel(
        enc_a=mlp_init((dim_a, *h, ld), "tanh", rng),
        dec_a=mlp_init((ld, *h, dim_a), "tanh", rng),
        enc_b=mlp_init((dim_b, *h, ld), "tanh", rng),
        dec_b=mlp_init((ld, *h, dim_b), "tanh", rng),
        dyn=mlp_init((ld, *h, ld), "identity", rng),
        latent_dim=ld,
        norm_a=None,
        norm_b=None,
    )


def clean_loss(
    model: CorrespondenceModel,
    dataset_a: TrajectoryDataset,
    dataset_b: TrajectoryDataset,
    weights: LossWeights,
) -> LossBreakdown:
    """Noise-free loss breakdown over the full datasets."""
    batch_a = (
        dataset_a.norm.normalize(dataset_a.s_t),
        dataset_a.norm.normalize(dataset_a.s_next),
    )
    batch_b = (
        dataset_b.norm.normalize(dataset_b.s_t),
        dataset_b.norm.normalize(dataset_b.s_next),
    )
    breakdown, _ = total_loss(model, batch_a, batch_b, weights, 0.0, None)
    return breakdown


def _select_restart_seed(dataset_a, dataset_b, config: TrainConfig) -> int:
    """Probe each restart seed briefly; return the seed with the lowest
    noise-free loss on the full datasets (ties break to the lowest seed)."""
    probe = config.replace(
        steps=min(config.probe_steps, config.steps), restarts=1
    )
    best_seed, best_loss = config.seed, np.inf
    for i in range(config.restarts):
        candidate = probe.replace(seed=config.seed + i)
        try:
            model, _ = train(dataset_a, dataset_b, candidate)
        except FloatingPointError:
            continue
        loss = clean_loss(model, dataset_a, dataset_b, config.weights).total
        if loss < best_loss:
            best_seed, best_loss = candidate.seed, loss
    return best_seed


def train(
    dataset_a: TrajectoryDataset,
    dataset_b: TrajectoryDataset,
    config: TrainConfig,
    log_fn=None,
):
    """Train the five networks jointly; returns (model, log).

    Fully deterministic given (datasets, config): initialization, batch
    sampling, and input noise each draw from streams derived from
    config.seed. With restarts > 1, each seed in [seed, seed + restarts) is
    probed for probe_steps and the lowest-loss seed is retrained in full
    (the loss landscape has one basin per approximate latent alignment of
    the two systems; the true correspondence is the lowest).
    """
    if len(dataset_a) == 0 or len(dataset_b) == 0:
        raise ValueError("datasets must be nonempty")
    if config.restarts > 1 and config.steps > 0:
        chosen = _select_restart_seed(dataset_a, dataset_b, config)
        model, log = train(
            dataset_a, dataset_b,
            config.replace(seed=chosen, restarts=1),
            log_fn,
        )
        log.restart_seed = chosen
        return model, log
    init_rng = np.random.default_rng([config.seed, 0])
    batch_rng = np.random.default_rng([config.seed, 1])
    noise_rng = np.random.default_rng([config.seed, 2])
    model = init_model(
        dataset_a.spec.state_dim, dataset_b.spec.state_dim, config, init_rng
    )
    model.norm_a = dataset_a.norm
    model.norm_b = dataset_b.norm

    params = model.params()
    opt = opt_init(params, lr=config.learning_rate)
    log = TrainLog()
    for it in range(config.steps):
        batch_a = sample_batch(dataset_a, config.batch_size, batch_rng)
        batch_b = sample_batch(dataset_b, config.batch_size, batch_rng)
        breakdown, grads = total_loss(
            model, batch_a, batch_b, config.weights, config.sigma, noise_rng
        )
        if not np.isfinite(breakdown.total):
            raise FloatingPointError(f"non-finite loss at step {it}")
        flat_grads = []
        for name in NET_NAMES:
            flat_grads.extend(grads[name])
        opt_step(opt, params, flat_grads)
        if (it + 1) % config.eval_every == 0 or it == 0:
            log.append(it + 1, breakdown)
            if log_fn is not None:
                log_fn(it + 1, breakdown)
    return model, log


def _mlp_to_json(net: Mlp) -> dict:
    return {
        "sizes": list(net.sizes),
        "output_activation": net.output_activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _mlp_from_json(obj: dict) -> Mlp:
    return Mlp(
        tuple(obj["sizes"]),
        [np.array(w, dtype=np.float64) for w in obj["weights"]],
        [np.array(b, dtype=np.float64) for b in obj["biases"]],
        obj["output_activation"],
    )


def save_model(model: CorrespondenceModel, path) -> None:
    doc = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "latent_dim": model.latent_dim,
        "nets": {name: _mlp_to_json(net) for name, net in model.nets().items()},
        "norm_a": model.norm_a.to_json(),
        "norm_b": model.norm_b.to_json(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> CorrespondenceModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed checkpoint {path}: {exc}")
    if doc.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version in {path}: "
            f"{doc.get('checkpoint_version')!r}"
        )
    nets = {name: _mlp_from_json(doc["nets"][name]) for name in NET_NAMES}
    return CorrespondenceModel(
        enc_a=nets["enc_a"],
        dec_a=nets["dec_a"],
        enc_b=nets["enc_b"],
        dec_b=nets["dec_b"],
        dyn=nets["dyn"],
        latent_dim=doc["latent_dim"],
        norm_a=NormalizationStats.from_json(doc["norm_a"]),
        norm_b=NormalizationStats.from_json(doc["norm_b"]),
    )


def save_config(config: TrainConfig, path) -> None:
    """Write the flat key=value config file."""
    lines = [
        f"config_version = {CONFIG_VERSION}",
        f"weight_ae = {config.weights.ae!r}",
        f"weight_nn = {config.weights.nn!r}",
        f"weight_fd = {config.weights.fd!r}",
        f"weight_pv = {config.weights.pv!r}",
        f"sigma = {config.sigma!r}",
        f"batch_size = {config.batch_size}",
        f"steps = {config.steps}",
        f"learning_rate = {config.learning_rate!r}",
        f"hidden = {','.join(str(h) for h in config.hidden)}",
        f"latent_k = {config.latent_k}",
        f"seed = {config.seed}",
        f"eval_every = {config.eval_every}",
        f"restarts = {config.restarts}",
        f"probe_steps = {config.probe_steps}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_config(path) -> TrainConfig:
    kv = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            kv[key] = val
    if int(kv.get("config_version", -1)) != CONFIG_VERSION:
        raise ValueError(f"unsupported config version in {path}")
    return TrainConfig(
        weights=LossWeights(
            ae=float(kv["weight_ae"]),
            nn=float(kv["weight_nn"]),
            fd=float(kv["weight_fd"]),
            pv=float(kv["weight_pv"]),
        ),
        sigma=float(kv["sigma"]),
        batch_size=int(kv["batch_size"]),
        steps=int(kv["steps"]),
        learning_rate=float(kv["learning_rate"]),
        hidden=tuple(int(h) for h in kv["hidden"].split(",")),
        latent_k=int(kv["latent_k"]),
        seed=int(kv["seed"]),
        eval_every=int(kv["eval_every"]),
        restarts=int(kv.get("restarts", 1)),
        probe_steps=int(kv.get("probe_steps", 2000)),
    )
