"""Simulated dynamical systems, time stepping, and dataset collection.

Four built-in systems:

* ``pendulum``: a 1-DOF pendulum driven by a PD controller tracking a
  sinusoidal target that repeats with a fixed drive period. The drive phase
  is part of the state, so the system is autonomous. State layout:
  (cos phi, sin phi, theta, theta_dot).
* ``two_link``: two PD-driven joints sharing the same drive phase (and the
  same drive period as the pendulum, so their cycles align in time). State
  layout: (cos phi, sin phi, theta1, theta2, theta1_dot, theta2_dot).
* ``wedge_left`` / ``wedge_right``: 2-D point-mass systems contracting
  toward the origin, x_{t+1} = x_t + rate * (c - x_t). Initial states fill
  a 60-degree wedge on the left (resp. right); the right system is the
  exact mirror image (negated first coordinate) of the left one, giving a
  known ground-truth correspondence. The wedge's radial extent varies with
  the angle so the region has no reflection symmetry about its own
  bisector; the mirror map is then the unique rigid correspondence.

Angular dynamics are integrated with semi-implicit Euler (velocity first,
then position), timestep 0.01 s by default.
"""
from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

FORMAT_VERSION = 1

SYSTEM_KINDS = ("pendulum", "two_link", "wedge_left", "wedge_right")

_STATE_DIMS = {"pendulum": 4, "two_link": 6, "wedge_left": 2, "wedge_right": 2}

_BLOWUP_LIMIT = 1e8


class SimulationBlowupError(RuntimeError):
    """Raised when a state leaves the finite / bounded regime."""


@dataclasses.dataclass(frozen=True)
class SystemSpec:
    """A system kind plus its physical parameters."""

    kind: str
    params: dict
    state_dim: int

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.state_dim != _STATE_DIMS[self.kind]:
            raise ValueError(
                f"{self.kind} state dimension must be {_STATE_DIMS[self.kind]}"
            )
        if self.params.get("dt", 1.0) <= 0:
            raise ValueError("timestep must be positive")
        if self.params.get("drive_period", 1.0) <= 0:
            raise ValueError("drive period must be positive")


def pendulum_spec(**overrides) -> SystemSpec:
    params = {
        "mass": 1.0,
        "length": 1.0,
        "gravity": 9.81,
        "kp": 50.0,
        "kd": 5.0,
        "drive_period": 2.0,
        "drive_amplitude": 0.5,
        "dt": 0.01,
    }
    params.update(overrides)
    return SystemSpec("pendulum", params, 4)


def two_link_spec(**overrides) -> SystemSpec:
    params = {
        "mass1": 1.0,
        "mass2": 0.7,
        "length1": 1.0,
        "length2": 0.8,
        "gravity": 9.81,
        "kp1": 60.0,
        "kp2": 40.0,
        "kd1": 6.0,
        "kd2": 4.0,
        "drive_period": 2.0,
        "drive_amplitude1": 0.4,
        "drive_amplitude2": 0.7,
        "phase_offset2": math.pi / 2.0,
        "dt": 0.01,
    }
    params.update(overrides)
    return SystemSpec("two_link", params, 6)


def wedge_spec(side: str = "left", **overrides) -> SystemSpec:
    params = {
        "rate": 0.1,
        "cx": 0.0,
        "cy": 0.0,
        "dt": 1.0,  # one step of the discrete map
    }
    params.update(overrides)
    return SystemSpec(f"wedge_{side}", params, 2)


def make_spec(kind: str, **overrides) -> SystemSpec:
    if kind == "pendulum":
        return pendulum_spec(**overrides)
    if kind == "two_link":
        return two_link_spec(**overrides)
    if kind in ("wedge_left", "wedge_right"):
        return wedge_spec(kind.split("_", 1)[1], **overrides)
    raise ValueError(f"unknown system kind {kind!r}")


def _check_state(spec: SystemSpec, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (spec.state_dim,):
        raise ValueError(
            f"state has shape {s.shape}, expected ({spec.state_dim},)"
        )
    if not np.all(np.isfinite(s)):
        raise ValueError("state contains non-finite entries")
    return s


def step(spec: SystemSpec, s: np.ndarray, torque_noise=None) -> np.ndarray:
    """Advance the system one timestep. Deterministic when torque_noise is None."""
    s = _check_state(spec, s)
    p = spec.params
    if spec.kind in ("wedge_left", "wedge_right"):
        c = np.array([p["cx"], p["cy"]])
        out = s + p["rate"] * (c - s)
    elif spec.kind == "pendulum":
        phi = math.atan2(s[1], s[0])
        theta, omega = s[2], s[3]
        target = p["drive_amplitude"] * math.sin(phi)
        tau = p["kp"] * (target - theta) - p["kd"] * omega
        if torque_noise is not None:
            tau += torque_noise[0]
        accel = tau / (p["mass"] * p["length"] ** 2) - (
            p["gravity"] / p["length"]
        ) * math.sin(theta)
        omega_next = omega + p["dt"] * accel
        theta_next = theta + p["dt"] * omega_next
        phi_next = phi + 2.0 * math.pi / p["drive_period"] * p["dt"]
        out = np.array(
            [math.cos(phi_next), math.sin(phi_next), theta_next, omega_next]
        )
    elif spec.kind == "two_link":
        phi = math.atan2(s[1], s[0])
        th = s[2:4].copy()
        om = s[4:6].copy()
        targets = (
            p["drive_amplitude1"] * math.sin(phi),
            p["drive_amplitude2"] * math.sin(phi + p["phase_offset2"]),
        )
        gains = ((p["kp1"], p["kd1"]), (p["kp2"], p["kd2"]))
        inertia = (
            p["mass1"] * p["length1"] ** 2,
            p["mass2"] * p["length2"] ** 2,
        )
        lengths = (p["length1"], p["length2"])
        for i in range(2):
            kp, kd = gains[i]
            tau = kp * (targets[i] - th[i]) - kd * om[i]
            if torque_noise is not None:
                tau += torque_noise[i]
            accel = tau / inertia[i] - (p["gravity"] / lengths[i]) * math.sin(
                th[i]
            )
            om[i] = om[i] + p["dt"] * accel
            th[i] = th[i] + p["dt"] * om[i]
        phi_next = phi + 2.0 * math.pi / p["drive_period"] * p["dt"]
        out = np.array(
            [math.cos(phi_next), math.sin(phi_next), th[0], th[1], om[0], om[1]]
        )
    else:  # pragma: no cover - guarded by SystemSpec
        raise ValueError(spec.kind)
    if not np.all(np.isfinite(out)) or np.any(np.abs(out) > _BLOWUP_LIMIT):
        raise SimulationBlowupError(f"{spec.kind}: non-finite state after step")
    return out


def _n_torques(spec: SystemSpec) -> int:
    return {"pendulum": 1, "two_link": 2, "wedge_left": 0, "wedge_right": 0}[
        spec.kind
    ]


def reset_state(spec: SystemSpec, reset_noise: float, rng) -> np.ndarray:
    """Initial state for one trajectory.

    Pendulum and two-link reset at the reference pose (all angles and
    velocities zero, phase zero) with Gaussian noise of scale `reset_noise`
    on angles and velocities. Wedge systems draw from the wedge region:
    angle uniform within +/-30 degrees of the bisector (the negative x axis
    for the left wedge), radius uniform up to an angle-dependent maximum;
    `reset_noise` in [0, 1] scales the spread, 0 collapsing to a single
    point. The right wedge consumes the same draws and negates x, so its
    reset distribution is the exact mirror of the left one.
    """
    if spec.kind == "pendulum":
        s = np.array([1.0, 0.0, 0.0, 0.0])
        s[2:] += reset_noise * rng.standard_normal(2)
        return s
    if spec.kind == "two_link":
        s = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        s[2:] += reset_noise * rng.standard_normal(4)
        return s
    scale = min(max(reset_noise, 0.0), 1.0)
    u = (2.0 * rng.random() - 1.0) * scale
    v = 0.5 + (rng.random() - 0.5) * scale
    ang = math.pi + u * (math.pi / 6.0)
    # The annulus geometry makes the mirror the unique correspondence that
    # also commutes with the contraction: commuting maps are radially
    # linear, the large inner hole pins their radial scale to ~1 on every
    # ray, and the angle-dependent outer radius then rules out everything
    # but the reflection.
    rmax = 1.3 + 0.5 * u  # radial extent varies with angle: no bisector symmetry
    r = 0.6 + v * (rmax - 0.6)
    x, y = r * math.cos(ang), r * math.sin(ang)
    if spec.kind == "wedge_right":
        x = -x
    return np.array([x, y])


@dataclasses.dataclass
class NormalizationStats:
    """Per-dimension min/max of the collected states; maps states to [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape:
            raise ValueError("min/max shape mismatch")
        if np.any(self.hi < self.lo):
            raise ValueError("max must be >= min elementwise")

    @property
    def constant(self) -> np.ndarray:
        return self.hi == self.lo

    @classmethod
    def from_states(cls, states: np.ndarray) -> "NormalizationStats":
        states = np.asarray(states, dtype=np.float64)
        return cls(states.min(axis=0), states.max(axis=0))

    def normalize(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.lo.shape[0]:
            raise ValueError("dimension mismatch in normalize")
        span = self.hi - self.lo
        safe = np.where(self.constant, 1.0, span)
        out = 2.0 * (s - self.lo) / safe - 1.0
        return np.where(self.constant, 0.0, out)

    def denormalize(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.lo.shape[0]:
            raise ValueError("dimension mismatch in denormalize")
        out = self.lo + (s + 1.0) / 2.0 * (self.hi - self.lo)
        return np.where(self.constant, self.lo, out)

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "NormalizationStats":
        return cls(np.array(obj["min"]), np.array(obj["max"]))


@dataclasses.dataclass
class TrajectoryDataset:
    """All transition pairs collected for one system, with normalization stats.

    `s_t` and `s_next` hold the raw (unnormalized) states, row i being one
    transition pair. Rows are grouped by trajectory: rows [j*H, (j+1)*H) are
    trajectory j in time order.
    """

    spec: SystemSpec
    s_t: np.ndarray
    s_next: np.ndarray
    horizon: int
    resets: int
    seed: int
    norm: NormalizationStats

    def __post_init__(self):
        if self.s_t.shape != self.s_next.shape:
            raise ValueError("s_t / s_next shape mismatch")
        if self.s_t.shape[0] != self.horizon * self.resets:
            raise ValueError("pair count must equal horizon * resets")

    def __len__(self) -> int:
        return self.s_t.shape[0]

    def normalized_pairs(self):
        return self.norm.normalize(self.s_t), self.norm.normalize(self.s_next)


def collect_dataset(
    spec: SystemSpec,
    horizon: int,
    resets: int,
    reset_noise: float = 0.1,
    action_noise: float = 0.0,
    seed: int = 0,
) -> TrajectoryDataset:
    """Roll out `resets` trajectories of `horizon` transitions each.

    Each trajectory draws its random stream from (seed, trajectory index),
    so results are independent of collection order. Per-step Gaussian noise
    of scale `action_noise` is added to the control torques (wedge systems
    have no control input and ignore it).
    """
    if horizon < 1 or resets < 1:
        raise ValueError("horizon and resets must be >= 1")
    if reset_noise < 0 or action_noise < 0:
        raise ValueError("noise scales must be >= 0")
    n_torque = _n_torques(spec)
    s_t = np.empty((horizon * resets, spec.state_dim))
    s_next = np.empty_like(s_t)
    for traj in range(resets):
        rng = np.random.default_rng([seed, traj])
        s = reset_state(spec, reset_noise, rng)
        for t in range(horizon):
            noise = None
            if n_torque and action_noise > 0:
                noise = action_noise * rng.standard_normal(n_torque)
            try:
                nxt = step(spec, s, torque_noise=noise)
            except SimulationBlowupError as exc:
                raise SimulationBlowupError(
                    f"{exc} (trajectory {traj}, step {t})"
                ) from exc
            row = traj * horizon + t
            s_t[row] = s
            s_next[row] = nxt
            s = nxt
    all_states = np.concatenate([s_t, s_next[horizon - 1 :: horizon]], axis=0)
    norm = NormalizationStats.from_states(all_states)
    return TrajectoryDataset(spec, s_t, s_next, horizon, resets, seed, norm)


def save_dataset(dataset: TrajectoryDataset, path) -> None:
    """Write the dataset as JSONL: one header line, then one line per pair."""
    header = {
        "format_version": FORMAT_VERSION,
        "system": dataset.spec.kind,
        "params": dataset.spec.params,
        "state_dim": dataset.spec.state_dim,
        "horizon": dataset.horizon,
        "resets": dataset.resets,
        "seed": dataset.seed,
        "norm": dataset.norm.to_json(),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(dataset)):
            row = {
                "s_t": dataset.s_t[i].tolist(),
                "s_next": dataset.s_next[i].tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def load_dataset(path) -> TrajectoryDataset:
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed dataset header in {path}: {exc}")
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported dataset format version in {path}: "
                f"{header.get('format_version')!r}"
            )
        spec = SystemSpec(header["system"], header["params"], header["state_dim"])
        s_t, s_next = [], []
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            s_t.append(row["s_t"])
            s_next.append(row["s_next"])
    return TrajectoryDataset(
        spec,
        np.array(s_t, dtype=np.float64),
        np.array(s_next, dtype=np.float64),
        header["horizon"],
        header["resets"],
        header["seed"],
        NormalizationStats.from_json(header["norm"]),
    )


def mirror(states: np.ndarray) -> np.ndarray:
    """Ground-truth wedge correspondence: negate the first coordinate."""
    out = np.array(states, dtype=np.float64, copy=True)
    out[..., 0] = -out[..., 0]
    return out
