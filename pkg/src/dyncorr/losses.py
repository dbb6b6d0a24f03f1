"""The four training loss terms and their weighted sum.

Every loss returns a scalar value plus gradients as a dict mapping network
name to a parameter-gradient list (matching ``Mlp.params()`` ordering).
Batches are expected in normalized coordinates.

Gaussian input noise (the regularizer applied to decoder and dynamics-net
inputs during training) is treated as a constant with respect to gradients:
no gradient flows through the noise sample itself, only through the noisy
input into the upstream encoder.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from . import kernels
from .model import CorrespondenceModel, add_scaled, zero_grads
from .nets import Mlp, backward, forward


@dataclasses.dataclass(frozen=True)
class LossWeights:
    ae: float = 1.0
    nn: float = 1.0
    fd: float = 1e-3
    pv: float = 1e-3

    def __post_init__(self):
        vals = (self.ae, self.nn, self.fd, self.pv)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be >= 0")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclasses.dataclass(frozen=True)
class LossBreakdown:
    ae: float
    nn: float
    fd: float
    pv: float
    total: float


def split_pose_velocity(z: np.ndarray):
    """Split latent rows into (pose, velocity) halves."""
    if z.shape[-1] % 2 != 0:
        raise ValueError("latent dimension must be even")
    k = z.shape[-1] // 2
    return z[..., :k], z[..., k:]


def _noise_like(shape, sigma, rng):
    if sigma == 0.0 or rng is None:
        return np.zeros(shape)
    return sigma * rng.standard_normal(shape)


def _ae_side(enc: Mlp, dec: Mlp, states: np.ndarray, noise: np.ndarray):
    n = states.shape[0]
    z = forward(enc, states)
    z_in = z + noise
    recon = forward(dec, z_in)
    err = recon - states
    value = float((err**2).sum() / n)
    dec_grads, z_cot = backward(dec, z_in, 2.0 * err / n)
    enc_grads, _ = backward(enc, states, z_cot)
    return value, enc_grads, dec_grads


def loss_ae(
    enc_a, dec_a, enc_b, dec_b, batch_a, batch_b, sigma=0.0, rng=None
):
    """Reconstruction loss: mean squared error of each autoencoder, summed.

    `batch_a` / `batch_b` are arrays of normalized states. With sigma > 0,
    Gaussian noise is added to the latents fed to the decoders.
    """
    batch_a = np.atleast_2d(batch_a)
    batch_b = np.atleast_2d(batch_b)
    if batch_a.shape[0] == 0 or batch_b.shape[0] == 0:
        raise ValueError("empty batch")
    noise_a = _noise_like((batch_a.shape[0], enc_a.out_dim), sigma, rng)
    noise_b = _noise_like((batch_b.shape[0], enc_b.out_dim), sigma, rng)
    val_a, ea_g, da_g = _ae_side(enc_a, dec_a, batch_a, noise_a)
    val_b, eb_g, db_g = _ae_side(enc_b, dec_b, batch_b, noise_b)
    grads = {"enc_a": ea_g, "dec_a": da_g, "enc_b": eb_g, "dec_b": db_g}
    return val_a + val_b, grads


def _nn_core(za: np.ndarray, zb: np.ndarray):
    """Symmetric nearest-neighbor loss on two latent batches.

    Returns (value, cotangent on za, cotangent on zb). Gradients flow to
    both endpoints of each matched pair; the argmin selection is treated as
    locally constant.
    """
    na, nb = za.shape[0], zb.shape[0]
    idx_ab, min_ab, idx_ba, min_ba = kernels.nearest_neighbor_match(za, zb)
    value = float(min_ab.sum() / na + min_ba.sum() / nb)
    cot_a = np.zeros_like(za)
    cot_b = np.zeros_like(zb)
    diff = za - zb[idx_ab]
    cot_a += 2.0 * diff / na
    np.add.at(cot_b, idx_ab, -2.0 * diff / na)
    diff = zb - za[idx_ba]
    cot_b += 2.0 * diff / nb
    np.add.at(cot_a, idx_ba, -2.0 * diff / nb)
    return value, cot_a, cot_b


def loss_nn(enc_a: Mlp, enc_b: Mlp, batch_a, batch_b):
    """Symmetric nearest-neighbor loss fusing the two latent distributions."""
    batch_a = np.atleast_2d(batch_a)
    batch_b = np.atleast_2d(batch_b)
    if batch_a.shape[0] == 0 or batch_b.shape[0] == 0:
        raise ValueError("empty batch")
    za = forward(enc_a, batch_a)
    zb = forward(enc_b, batch_b)
    value, cot_a, cot_b = _nn_core(za, zb)
    ea_g, _ = backward(enc_a, batch_a, cot_a)
    eb_g, _ = backward(enc_b, batch_b, cot_b)
    return value, {"enc_a": ea_g, "enc_b": eb_g}


def loss_fd(enc: Mlp, dyn: Mlp, s_t, s_next, sigma=0.0, rng=None):
    """Latent forward-dynamics consistency for one system's transition batch.

    Penalizes || (z_t + dyn(z_t + noise)) - z_next ||^2 with z = enc(s).
    Gradient keys are 'enc' and 'dyn'.
    """
    s_t = np.atleast_2d(s_t)
    s_next = np.atleast_2d(s_next)
    if s_t.shape != s_next.shape:
        raise ValueError("transition batch shape mismatch")
    n = s_t.shape[0]
    z_t = forward(enc, s_t)
    z_next = forward(enc, s_next)
    noise = _noise_like(z_t.shape, sigma, rng)
    dyn_in = z_t + noise
    disp = forward(dyn, dyn_in)
    err = z_t + disp - z_next
    value = float((err**2).sum() / n)
    up = 2.0 * err / n
    dyn_grads, dyn_in_cot = backward(dyn, dyn_in, up)
    enc_grads_t, _ = backward(enc, s_t, up + dyn_in_cot)
    enc_grads_n, _ = backward(enc, s_next, -up)
    add_scaled(enc_grads_t, enc_grads_n, 1.0)
    return value, {"enc": enc_grads_t, "dyn": dyn_grads}


def loss_pv(enc: Mlp, s_t, s_next):
    """Latent pose-velocity consistency for one system's transition batch.

    With the latent split z = (pose, velocity), penalizes
    || (pose_t + velocity_t) - pose_{t+1} ||^2. Gradient key is 'enc'.
    """
    s_t = np.atleast_2d(s_t)
    s_next = np.atleast_2d(s_next)
    if s_t.shape != s_next.shape:
        raise ValueError("transition batch shape mismatch")
    n = s_t.shape[0]
    z_t = forward(enc, s_t)
    z_next = forward(enc, s_next)
    pose_t, vel_t = split_pose_velocity(z_t)
    pose_n, _ = split_pose_velocity(z_next)
    err = pose_t + vel_t - pose_n
    value = float((err**2).sum() / n)
    up = 2.0 * err / n
    cot_t = np.concatenate([up, up], axis=1)
    cot_n = np.concatenate([-up, np.zeros_like(up)], axis=1)
    enc_grads, _ = backward(enc, s_t, cot_t)
    enc_grads_n, _ = backward(enc, s_next, cot_n)
    add_scaled(enc_grads, enc_grads_n, 1.0)
    return value, {"enc": enc_grads}


def _total_loss_side(enc, dec, dyn, s_t, s_next, weights, noise_dec, noise_dyn):
    """All per-system terms for one batch, sharing the encoder passes.

    Returns (ae, fd, pv, enc grads, dec grads, dyn grads); encoder gradients
    already carry the loss weights, plus the weighted nearest-neighbor
    cotangents handed back via the returned latent hooks.
    """
    n = s_t.shape[0]
    z_t = forward(enc, s_t)
    z_next = forward(enc, s_next)

    # reconstruction
    dec_in = z_t + noise_dec
    recon = forward(dec, dec_in)
    ae_err = recon - s_t
    ae_val = float((ae_err**2).sum() / n)
    dec_grads, z_cot_ae = backward(dec, dec_in, 2.0 * ae_err / n)

    # latent forward dynamics
    dyn_in = z_t + noise_dyn
    disp = forward(dyn, dyn_in)
    fd_err = z_t + disp - z_next
    fd_val = float((fd_err**2).sum() / n)
    fd_up = 2.0 * fd_err / n
    dyn_grads, dyn_in_cot = backward(dyn, dyn_in, fd_up)

    # pose-velocity consistency
    pose_t, vel_t = split_pose_velocity(z_t)
    pose_n, _ = split_pose_velocity(z_next)
    pv_err = pose_t + vel_t - pose_n
    pv_val = float((pv_err**2).sum() / n)
    pv_up = 2.0 * pv_err / n

    cot_t = weights.ae * z_cot_ae + weights.fd * (fd_up + dyn_in_cot)
    cot_t += weights.pv * np.concatenate([pv_up, pv_up], axis=1)
    cot_next = -weights.fd * fd_up
    half = pv_up.shape[1]
    cot_next[:, :half] -= weights.pv * pv_up
    return ae_val, fd_val, pv_val, dec_grads, dyn_grads, z_t, z_next, cot_t, cot_next


def total_loss(
    model: CorrespondenceModel,
    batch_a,
    batch_b,
    weights: LossWeights,
    sigma: float = 0.0,
    rng=None,
):
    """Weighted sum of the four losses over one sampled batch per system.

    `batch_a` / `batch_b` are (s_t, s_next) tuples of normalized transition
    arrays; the s_t side doubles as the state batch for the reconstruction
    and nearest-neighbor terms. Returns (LossBreakdown, grads) with grads
    keyed by the model's network names. Encoder passes are shared across
    the four terms; gradients are identical to summing the standalone loss
    functions with these weights.
    """
    a_t, a_next = (np.atleast_2d(x) for x in batch_a)
    b_t, b_next = (np.atleast_2d(x) for x in batch_b)
    ld = model.latent_dim
    noise_dec_a = _noise_like((a_t.shape[0], ld), sigma, rng)
    noise_dec_b = _noise_like((b_t.shape[0], ld), sigma, rng)
    noise_dyn_a = _noise_like((a_t.shape[0], ld), sigma, rng)
    noise_dyn_b = _noise_like((b_t.shape[0], ld), sigma, rng)

    (ae_a, fd_a, pv_a, dec_a_g, dyn_g_a,
     za_t, za_next, cot_a_t, cot_a_next) = _total_loss_side(
        model.enc_a, model.dec_a, model.dyn, a_t, a_next, weights,
        noise_dec_a, noise_dyn_a)
    (ae_b, fd_b, pv_b, dec_b_g, dyn_g_b,
     zb_t, zb_next, cot_b_t, cot_b_next) = _total_loss_side(
        model.enc_b, model.dec_b, model.dyn, b_t, b_next, weights,
        noise_dec_b, noise_dyn_b)

    nn_val, nn_cot_a, nn_cot_b = _nn_core(za_t, zb_t)
    if weights.nn != 0.0:
        cot_a_t = cot_a_t + weights.nn * nn_cot_a
        cot_b_t = cot_b_t + weights.nn * nn_cot_b

    enc_a_g, _ = backward(model.enc_a, a_t, cot_a_t)
    enc_a_g_n, _ = backward(model.enc_a, a_next, cot_a_next)
    add_scaled(enc_a_g, enc_a_g_n, 1.0)
    enc_b_g, _ = backward(model.enc_b, b_t, cot_b_t)
    enc_b_g_n, _ = backward(model.enc_b, b_next, cot_b_next)
    add_scaled(enc_b_g, enc_b_g_n, 1.0)

    dyn_grads = zero_grads(model.dyn)
    add_scaled(dyn_grads, dyn_g_a, weights.fd)
    add_scaled(dyn_grads, dyn_g_b, weights.fd)
    dec_a_grads = zero_grads(model.dec_a)
    add_scaled(dec_a_grads, dec_a_g, weights.ae)
    dec_b_grads = zero_grads(model.dec_b)
    add_scaled(dec_b_grads, dec_b_g, weights.ae)

    grads = {
        "enc_a": enc_a_g,
        "dec_a": dec_a_grads,
        "enc_b": enc_b_g,
        "dec_b": dec_b_grads,
        "dyn": dyn_grads,
    }
    ae_val = ae_a + ae_b
    fd_val = fd_a + fd_b
    pv_val = pv_a + pv_b
    total = (
        weights.ae * ae_val
        + weights.nn * nn_val
        + weights.fd * fd_val
        + weights.pv * pv_val
    )
    breakdown = LossBreakdown(ae_val, nn_val, fd_val, pv_val, total)
    return breakdown, grads
