"""Evaluation and analysis: projection paths, the mean symmetric
nearest-neighbor (MSNN) metric, the loss-ablation grid, latent rollouts,
perturbation regression, and the wedge mirror-map check.
"""
from __future__ import annotations

import dataclasses
import enum
import warnings

import numpy as np
from scipy.special import betainc

from . import kernels
from .dynsys import TrajectoryDataset, collect_dataset, mirror
from .losses import LossWeights
from .model import CorrespondenceModel
from .nets import forward
from .trainer import TrainConfig, train


class Hop(enum.Enum):
    ENCODE_A = "encode_a"
    ENCODE_B = "encode_b"
    DECODE_A = "decode_a"
    DECODE_B = "decode_b"
    LATENT_STEP = "latent_step"


# Domain transitions for type checking: hop -> (input domain, output domain)
_HOP_DOMAINS = {
    Hop.ENCODE_A: ("A", "latent"),
    Hop.ENCODE_B: ("B", "latent"),
    Hop.DECODE_A: ("latent", "A"),
    Hop.DECODE_B: ("latent", "B"),
    Hop.LATENT_STEP: ("latent", "latent"),
}

PATH_NAMES = ("ALA", "BLB", "ALB", "BLA", "ALBLA", "BLALB")


def parse_path(name: str) -> list:
    """Parse shorthand like 'ALB' or 'ALBLA' into a hop sequence.

    Letters alternate between system symbols (A/B) and the latent symbol L;
    each system->L step is an encode, each L->system step a decode.
    """
    name = name.upper()
    if len(name) < 3 or len(name) % 2 == 0:
        raise ValueError(f"malformed path {name!r}")
    hops = []
    for i, ch in enumerate(name):
        if i % 2 == 0:
            if ch not in "AB":
                raise ValueError(f"malformed path {name!r}")
        elif ch != "L":
            raise ValueError(f"malformed path {name!r}")
    for i in range(0, len(name) - 1, 2):
        src, dst = name[i], name[i + 2]
        hops.append(Hop.ENCODE_A if src == "A" else Hop.ENCODE_B)
        hops.append(Hop.DECODE_A if dst == "A" else Hop.DECODE_B)
    return hops


def path_domains(path) -> tuple:
    """(input domain, output domain) of a hop sequence; raises if ill-typed."""
    if not path:
        return (None, None)  # empty path: identity on any domain
    domain = _HOP_DOMAINS[path[0]][0]
    start = domain
    for hop in path:
        src, dst = _HOP_DOMAINS[hop]
        if src != domain:
            raise ValueError(f"ill-typed path at hop {hop}: in domain {domain}")
        domain = dst
    return (start, domain)


def project(model: CorrespondenceModel, path, states: np.ndarray) -> np.ndarray:
    """Apply a hop sequence to a batch of raw states, noise-free.

    Normalization is applied on encode and undone on decode; latent-domain
    inputs/outputs are passed through as-is. `path` may be a shorthand
    string or a hop list.
    """
    if isinstance(path, str):
        path = parse_path(path)
    path_domains(path)  # type check
    x = np.atleast_2d(np.asarray(states, dtype=np.float64))
    for hop in path:
        if hop == Hop.ENCODE_A:
            x = forward(model.enc_a, model.norm_a.normalize(x))
        elif hop == Hop.ENCODE_B:
            x = forward(model.enc_b, model.norm_b.normalize(x))
        elif hop == Hop.DECODE_A:
            x = model.norm_a.denormalize(forward(model.dec_a, x))
        elif hop == Hop.DECODE_B:
            x = model.norm_b.denormalize(forward(model.dec_b, x))
        else:
            x = x + forward(model.dyn, x)
    return x


def msnn(original: np.ndarray, reconstructed: np.ndarray) -> float:
    """Mean symmetric nearest-neighbor distance between two equal-size sets.

    (1/2n) * (sum over originals of the distance to the nearest
    reconstruction + sum over reconstructions of the distance to the
    nearest original). Distances are plain Euclidean norms, not squared.
    """
    original = np.atleast_2d(original)
    reconstructed = np.atleast_2d(reconstructed)
    if original.shape[0] == 0 or reconstructed.shape[0] == 0:
        raise ValueError("empty state set")
    if original.shape[0] != reconstructed.shape[0]:
        raise ValueError("state sets must have equal cardinality")
    n = original.shape[0]
    _, sq_ab, _, sq_ba = kernels.nearest_neighbor_match(original, reconstructed)
    return float((np.sqrt(sq_ab).sum() + np.sqrt(sq_ba).sum()) / (2.0 * n))


@dataclasses.dataclass
class AblationReport:
    """MSNN grid: (config, noise) rows x projection-path columns.

    `cells[(config_name, noise_on)][path]` is a dict with mean, std, and
    per-seed values; training failures are recorded under `failures`.
    """

    paths: tuple
    rows: list  # (config_name, noise_on) in display order
    cells: dict
    failures: list

    def to_records(self) -> list:
        out = []
        for row in self.rows:
            for path in self.paths:
                cell = self.cells[row].get(path)
                if cell is None:
                    continue
                out.append(
                    {
                        "config": row[0],
                        "noise": row[1],
                        "path": path,
                        "mean": cell["mean"],
                        "std": cell["std"],
                        "values": cell["values"],
                    }
                )
        return out

    def text_table(self) -> str:
        header = ["noise", "config"] + list(self.paths)
        lines = []
        widths = [len(h) for h in header]
        body = []
        for noise_on, config in [(r[1], r[0]) for r in self.rows]:
            row = ["on" if noise_on else "off", config]
            for path in self.paths:
                cell = self.cells[(config, noise_on)].get(path)
                row.append(
                    "failed"
                    if cell is None
                    else f"{cell['mean']:.4f} (+/-{cell['std']:.4f})"
                )
            body.append(row)
            widths = [max(w, len(c)) for w, c in zip(widths, row)]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


ABLATION_CONFIGS = ("full", "no_fd_pv", "no_nn")


def _ablation_weights(base: LossWeights, config: str) -> LossWeights:
    if config == "full":
        return base
    if config == "no_fd_pv":
        return dataclasses.replace(base, fd=0.0, pv=0.0)
    if config == "no_nn":
        return dataclasses.replace(base, nn=0.0)
    raise ValueError(f"unknown ablation config {config!r}")


def evaluate_paths(
    model: CorrespondenceModel,
    test_a: np.ndarray,
    test_b: np.ndarray,
    paths=PATH_NAMES,
) -> dict:
    """MSNN per projection path, in the target system's raw state space.

    Paths ending in system A are scored against the A test set, paths
    ending in B against the B test set.
    """
    out = {}
    for name in paths:
        hops = parse_path(name)
        start, end = path_domains(hops)
        source = test_a if start == "A" else test_b
        target = test_a if end == "A" else test_b
        out[name] = msnn(target, project(model, hops, source))
    return out


def ablate(
    dataset_a: TrajectoryDataset,
    dataset_b: TrajectoryDataset,
    base_config: TrainConfig,
    seeds,
    test_size: int = 1000,
    test_seed_offset: int = 9000,
    paths=PATH_NAMES,
) -> AblationReport:
    """Train every (loss config x noise on/off) cell per seed and score MSNN.

    Held-out test states are collected with a seed different from the
    training data's. Training failures are recorded per cell, not fatal.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    test_a = _collect_test_states(dataset_a, test_size, test_seed_offset)
    test_b = _collect_test_states(dataset_b, test_size, test_seed_offset)
    rows = []
    cells = {}
    failures = []
    for noise_on in (True, False):
        for config_name in ABLATION_CONFIGS:
            row = (config_name, noise_on)
            rows.append(row)
            per_path = {path: [] for path in paths}
            for seed in seeds:
                cfg = base_config.replace(
                    weights=_ablation_weights(base_config.weights, config_name),
                    sigma=base_config.sigma if noise_on else 0.0,
                    seed=seed,
                )
                try:
                    model, _ = train(dataset_a, dataset_b, cfg)
                    scores = evaluate_paths(model, test_a, test_b, paths)
                except (FloatingPointError, ValueError) as exc:
                    failures.append(
                        {"config": config_name, "noise": noise_on, "seed": seed,
                         "error": str(exc)}
                    )
                    continue
                for path, value in scores.items():
                    per_path[path].append(value)
            cells[row] = {}
            for path, values in per_path.items():
                if values:
                    arr = np.array(values)
                    cells[row][path] = {
                        "mean": float(arr.mean()),
                        "std": float(arr.std()),
                        "values": values,
                    }
    return AblationReport(tuple(paths), rows, cells, failures)


def _collect_test_states(
    dataset: TrajectoryDataset, n: int, seed_offset: int
) -> np.ndarray:
    horizon = min(dataset.horizon, n)
    resets = -(-n // horizon)  # ceil
    test = collect_dataset(
        dataset.spec,
        horizon,
        resets,
        reset_noise=1.0 if dataset.spec.kind.startswith("wedge") else 0.1,
        action_noise=0.0,
        seed=dataset.seed + seed_offset,
    )
    return test.s_t[:n]


def latent_rollout(model: CorrespondenceModel, z0: np.ndarray, steps: int):
    """Iterate z <- z + dyn(z) for `steps` steps, decoding into both systems.

    Returns (latent trajectory, decoded A, decoded B); the latent trajectory
    includes the initial state (steps + 1 rows) and the decoded sequences
    are denormalized. On a non-finite latent state the rollout truncates
    with a warning.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = np.asarray(z0, dtype=np.float64).reshape(1, -1)
    if z.shape[1] != model.latent_dim:
        raise ValueError("latent state dimension mismatch")
    latents = [z[0]]
    for t in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            z = z + forward(model.dyn, z)
        if not np.all(np.isfinite(z)):
            warnings.warn(f"latent rollout became non-finite at step {t + 1}; "
                          "truncating")
            break
        latents.append(z[0].copy())
    lat = np.array(latents)
    dec_a = model.norm_a.denormalize(forward(model.dec_a, lat))
    dec_b = model.norm_b.denormalize(forward(model.dec_b, lat))
    return lat, dec_a, dec_b


def pca_coords(points: np.ndarray, n_components: int = 2) -> np.ndarray:
    """Coordinates of the points in their top principal-component subspace."""
    pts = np.atleast_2d(points)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:n_components].T


def dominant_period(signal: np.ndarray) -> int:
    """Lag of the dominant positive autocorrelation peak of a 1-D signal.

    Uses the unbiased autocorrelation estimate and searches lags up to half
    the signal length (larger lags have too few overlapping samples to be
    reliable).
    """
    x = np.asarray(signal, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    if np.allclose(x, 0.0):
        raise ValueError("constant signal has no period")
    ac = np.correlate(x, x, mode="full")[n - 1 :]
    ac /= np.arange(n, 0, -1)  # unbiased: divide by the overlap count
    ac /= ac[0]
    max_lag = n // 2
    # first local minimum, then the highest peak after it
    lo = 1
    while lo + 1 <= max_lag and ac[lo + 1] <= ac[lo]:
        lo += 1
    if lo + 1 > max_lag:
        raise ValueError("no autocorrelation peak found")
    return int(lo + 1 + np.argmax(ac[lo + 1 : max_lag + 1]))


@dataclasses.dataclass
class RegressionResult:
    """Ordinary least squares fit of y on x (optionally with intercept)."""

    slope: float
    intercept: float | None
    residual_variance: float
    slope_se: float
    intercept_se: float | None
    slope_t: float
    intercept_t: float | None
    slope_p: float
    intercept_p: float | None
    n: int


def _t_sf(t: float, df: int) -> float:
    """Upper-tail probability of Student's t via the regularized incomplete
    beta function (precision ~1e-8, inherited from scipy.special.betainc)."""
    x = df / (df + t * t)
    p = 0.5 * betainc(df / 2.0, 0.5, x)
    return p if t >= 0 else 1.0 - p


def _two_sided_p(t: float, df: int) -> float:
    return min(1.0, 2.0 * _t_sf(abs(t), df))


def ols_fit(x: np.ndarray, y: np.ndarray, intercept: bool) -> RegressionResult:
    """OLS via the normal equations, with t-tests on each coefficient."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    n = x.size
    ncoef = 2 if intercept else 1
    if n <= ncoef:
        raise ValueError("need more samples than coefficients")
    design = np.column_stack([np.ones(n), x]) if intercept else x[:, None]
    gram = design.T @ design
    if np.linalg.matrix_rank(gram) < ncoef or (not intercept and np.all(x == 0)):
        raise ValueError("degenerate design matrix (zero variance)")
    if intercept and np.all(x == x[0]):
        raise ValueError("degenerate design matrix (zero variance)")
    beta = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ beta
    df = n - ncoef
    resid_var = float(resid @ resid / df)
    cov = resid_var * np.linalg.inv(gram)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore"):  # exact fits give se = 0, t = inf
        tstats = beta / se
    pvals = np.array([_two_sided_p(float(t), df) for t in tstats])
    if intercept:
        return RegressionResult(
            slope=float(beta[1]),
            intercept=float(beta[0]),
            residual_variance=resid_var,
            slope_se=float(se[1]),
            intercept_se=float(se[0]),
            slope_t=float(tstats[1]),
            intercept_t=float(tstats[0]),
            slope_p=float(pvals[1]),
            intercept_p=float(pvals[0]),
            n=n,
        )
    return RegressionResult(
        slope=float(beta[0]),
        intercept=None,
        residual_variance=resid_var,
        slope_se=float(se[0]),
        intercept_se=None,
        slope_t=float(tstats[0]),
        intercept_t=None,
        slope_p=float(pvals[0]),
        intercept_p=None,
        n=n,
    )


def perturb_regress(
    model: CorrespondenceModel,
    dataset: TrajectoryDataset,
    velocity_index: int,
    noise_scale: float = 0.5,
    copies: int = 10,
    rng=None,
    source: str = "A",
    target_index: int | None = None,
    max_states: int = 1000,
):
    """Perturb one state coordinate, project across systems, and regress.

    For each sampled source state, `copies` perturbed variants are made by
    adding uniform noise of half-width `noise_scale` times that coordinate's
    dataset standard deviation. Variants are projected through the latent
    space to the other system and the target coordinate is regressed on the
    perturbed source coordinate with OLS, with and without intercept.
    Returns (no-intercept result, with-intercept result).
    """
    if rng is None:
        rng = np.random.default_rng()
    if copies < 1:
        raise ValueError("copies must be >= 1")
    dim = dataset.spec.state_dim
    if not 0 <= velocity_index < dim:
        raise ValueError("velocity index out of range")
    if target_index is None:
        target_index = velocity_index
    path = "ALB" if source.upper() == "A" else "BLA"
    states = dataset.s_t
    if states.shape[0] > max_states:
        idx = rng.choice(states.shape[0], size=max_states, replace=False)
        states = states[idx]
    spread = noise_scale * float(states[:, velocity_index].std())
    base = np.repeat(states, copies, axis=0)
    perturbed = base.copy()
    perturbed[:, velocity_index] += rng.uniform(
        -spread, spread, size=perturbed.shape[0]
    )
    projected = project(model, path, perturbed)
    x = perturbed[:, velocity_index]
    y = projected[:, target_index]
    return ols_fit(x, y, intercept=False), ols_fit(x, y, intercept=True)


def mirror_error(model: CorrespondenceModel, test_states: np.ndarray) -> float:
    """Mean normalized distance between cross projection and the exact mirror.

    `test_states` are raw states of the left wedge system (system A); the
    projection A -> latent -> B is compared with the ground-truth mirror
    map in system B's normalized coordinates.
    """
    projected = project(model, "ALB", test_states)
    expected = mirror(np.atleast_2d(test_states))
    diff = model.norm_b.normalize(projected) - model.norm_b.normalize(expected)
    return float(np.sqrt((diff**2).sum(axis=1)).mean())
