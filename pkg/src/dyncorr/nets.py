"""Minimal dense-network stack: MLPs with hand-rolled reverse mode,
a rectified adaptive-moment optimizer, and a finite-difference gradient
checker.

There is no general autodiff graph. The composite losses in this project
chain at most three networks, so each loss wires its vector-Jacobian
products by hand and `grad_check` guards the wiring.

Randomness uses numpy's default PCG64 generator; pass `np.random.default_rng(seed)`
wherever an `rng` argument appears.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np


@dataclasses.dataclass
class Mlp:
    """Feed-forward network: ReLU hidden layers, tanh or identity output.

    The ReLU subgradient at 0 is taken as 0.
    """

    sizes: tuple
    weights: list  # weights[i]: (sizes[i], sizes[i+1])
    biases: list  # biases[i]: (sizes[i+1],)
    output_activation: str  # 'tanh' or 'identity'

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def params(self) -> list:
        """Flat list of parameter arrays (weights then bias, per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def num_params(self) -> int:
        return sum(p.size for p in self.params())


def mlp_init(sizes, output_activation: str = "tanh", rng=None) -> Mlp:
    """Initialize weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError("need >= 2 positive layer sizes")
    if output_activation not in ("tanh", "identity"):
        raise ValueError(f"unknown output activation {output_activation!r}")
    if rng is None:
        rng = np.random.default_rng()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, output_activation)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a batch of rows."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input width {x.shape[1]} != {net.in_dim}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        elif net.output_activation == "tanh":
            h = np.tanh(h)
    return h


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray):
    """Gradients of <upstream, forward(net, x)> w.r.t. parameters and input.

    Returns (param_grads, input_grads) where param_grads matches
    `net.params()` ordering.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input width {x.shape[1]} != {net.in_dim}")
    if upstream.shape != (x.shape[0], net.out_dim):
        raise ValueError("upstream shape mismatch")

    # forward pass, keeping post-activation values per layer
    acts = [x]
    h = x
    last = len(net.weights) - 1
    pre_out = None
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < last:
            h = np.maximum(z, 0.0)
        else:
            pre_out = z
            h = np.tanh(z) if net.output_activation == "tanh" else z
        acts.append(h)

    if net.output_activation == "tanh":
        delta = upstream * (1.0 - np.tanh(pre_out) ** 2)
    else:
        delta = upstream
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for i in range(last, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
        if i > 0:
            delta = delta * (acts[i] > 0.0)
    param_grads = []
    for gw, gb in zip(grads_w, grads_b):
        param_grads.append(gw)
        param_grads.append(gb)
    return param_grads, delta


@dataclasses.dataclass
class OptimizerState:
    """Rectified adaptive-moment optimizer state over a list of parameter arrays.

    Uses the variance-rectification schedule: while the rectification term
    is undefined (early steps, approximated length < 5) the update falls
    back to bias-corrected momentum only.
    """

    m: list
    v: list
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def opt_init(params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> OptimizerState:
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    return OptimizerState(m, v, 0, lr, beta1, beta2, eps)


def opt_step(state: OptimizerState, params: list, grads: list) -> None:
    """Update `params` in place from `grads` (same structure as `params`)."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter / gradient structure mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError("parameter / gradient shape mismatch")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b2t = b2**t
    rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)
    if rho_t > 4.0:
        rect = math.sqrt(
            (rho_t - 4.0)
            * (rho_t - 2.0)
            * rho_inf
            / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
        )
    else:
        rect = None
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1**t)
        if rect is None:
            p -= state.lr * m_hat
        else:
            v_hat = np.sqrt(state.v[i] / (1.0 - b2t))
            p -= state.lr * rect * m_hat / (v_hat + state.eps)


@dataclasses.dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    passed: bool


def flatten(params: list) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def assign_flat(params: list, vec: np.ndarray) -> None:
    """Write a flat vector back into the parameter arrays, in place."""
    off = 0
    for p in params:
        p[...] = vec[off : off + p.size].reshape(p.shape)
        off += p.size
    if off != vec.size:
        raise ValueError("flat vector size mismatch")


def grad_check(params: list, loss_and_grad, tolerance=1e-4, h=1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `loss_and_grad()` must evaluate the loss at the current parameter values
    and return (loss, grads) with grads matching `params`. The parameters
    are restored before returning.
    """
    _, grads = loss_and_grad()
    analytic = flatten(grads)
    base = flatten(params).copy()
    numeric = np.empty_like(analytic)
    try:
        for i in range(base.size):
            vec = base.copy()
            vec[i] = base[i] + h
            assign_flat(params, vec)
            up, _ = loss_and_grad()
            vec[i] = base[i] - h
            assign_flat(params, vec)
            down, _ = loss_and_grad()
            numeric[i] = (up - down) / (2.0 * h)
    finally:
        assign_flat(params, base)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    max_rel = float(np.max(np.abs(analytic - numeric) / denom)) if base.size else 0.0
    return GradCheckReport(max_rel, tolerance, max_rel <= tolerance)
