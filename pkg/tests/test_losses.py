import dataclasses

import numpy as np
import pytest

from dyncorr import losses, nets, trainer
from dyncorr.losses import LossWeights
from dyncorr.model import NET_NAMES


def tiny_model(dim_a=2, dim_b=3, k=1, hidden=(6, 5), seed=0):
    rng = np.random.default_rng(seed)
    cfg = trainer.TrainConfig(hidden=hidden, latent_k=k)
    return trainer.init_model(dim_a, dim_b, cfg, rng)


def random_batch(dim, n=7, seed=1):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.9, 0.9, size=(n, dim))


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.0, 0.0, 0.0)


def test_loss_ae_identity_autoencoder_zero():
    # a linear identity encoder/decoder pair reconstructs exactly
    enc = nets.mlp_init((2, 2), "identity", np.random.default_rng(0))
    dec = nets.mlp_init((2, 2), "identity", np.random.default_rng(0))
    enc.weights[0][...] = np.eye(2)
    dec.weights[0][...] = np.eye(2)
    batch = random_batch(2)
    value, _ = losses.loss_ae(enc, dec, enc, dec, batch, batch)
    assert value == pytest.approx(0.0, abs=1e-24)


def test_loss_ae_constant_decoder_closed_form():
    model = tiny_model()
    # zero out decoders' weights: output is tanh(bias), a constant c
    for dec in (model.dec_a, model.dec_b):
        for w in dec.weights:
            w[...] = 0.0
        dec.biases[-1][...] = np.linspace(0.3, -0.2, dec.biases[-1].size)
    s_a = np.array([[0.1, 0.5]])
    s_b = np.array([[0.0, 0.2, -0.4]])
    c_a = np.tanh(model.dec_a.biases[-1])
    c_b = np.tanh(model.dec_b.biases[-1])
    expected = ((c_a - s_a) ** 2).sum() + ((c_b - s_b) ** 2).sum()
    value, _ = losses.loss_ae(
        model.enc_a, model.dec_a, model.enc_b, model.dec_b, s_a, s_b
    )
    assert value == pytest.approx(expected, rel=1e-12)


def test_loss_nn_identical_batches_zero():
    model = tiny_model(dim_a=2, dim_b=2, seed=3)
    model.enc_b = model.enc_a
    batch = random_batch(2)
    value, _ = losses.loss_nn(model.enc_a, model.enc_b, batch, batch)
    assert value == 0.0


def test_nn_core_single_pair():
    value, ca, cb = losses._nn_core(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert value == pytest.approx(2.0)
    np.testing.assert_allclose(ca, [[-4.0, 0.0]])
    np.testing.assert_allclose(cb, [[4.0, 0.0]])


def test_nn_core_hand_enumeration():
    a = np.array([[0.0, 0.0], [2.0, 0.0]])
    b = np.array([[1.0, 0.0]])
    value, _, _ = losses._nn_core(a, b)
    assert value == pytest.approx(2.0)  # mean_A min = 1, B-side min = 1


def test_nn_core_symmetry_and_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(8, 3))
        va, _, _ = losses._nn_core(a, b)
        vb, _, _ = losses._nn_core(b, a)
        assert va == vb
        assert va >= 0.0


def test_loss_fd_trivial_cases():
    model = tiny_model(dim_a=2, dim_b=2)
    for w in model.dyn.weights:
        w[...] = 0.0
    for b in model.dyn.biases:
        b[...] = 0.0
    batch = random_batch(2)
    # encoder maps both states to the same point -> zero loss
    value, _ = losses.loss_fd(model.enc_a, model.dyn, batch, batch)
    assert value == pytest.approx(0.0, abs=1e-24)


def test_fd_closed_form_displacement():
    # identity encoder, zero dynamics net: loss is ||s_t - s_next||^2
    enc = nets.mlp_init((2, 2), "identity", np.random.default_rng(0))
    enc.weights[0][...] = np.eye(2)
    dyn = nets.mlp_init((2, 2), "identity", np.random.default_rng(0))
    dyn.weights[0][...] = 0.0
    s_t = np.array([[0.0, 0.0]])
    s_next = np.array([[1.0, 0.0]])
    value, _ = losses.loss_fd(enc, dyn, s_t, s_next)
    assert value == pytest.approx(1.0)


def test_loss_pv_trivial_and_closed_form():
    enc = nets.mlp_init((2, 2), "identity", np.random.default_rng(0))
    enc.weights[0][...] = np.eye(2)
    # pose advances exactly by velocity -> zero
    s_t = np.array([[0.2, 0.3]])
    s_next = np.array([[0.5, 0.1]])
    value, _ = losses.loss_pv(enc, s_t, s_next)
    assert value == pytest.approx(0.0, abs=1e-24)
    # pose stays put despite unit velocity -> 1
    s_t = np.array([[0.0, 1.0]])
    s_next = np.array([[0.0, 0.0]])
    value, _ = losses.loss_pv(enc, s_t, s_next)
    assert value == pytest.approx(1.0)


def test_loss_pv_rejects_odd_latent():
    with pytest.raises(ValueError):
        losses.split_pose_velocity(np.zeros((2, 3)))


def _total_closure(model, batch_a, batch_b, weights, sigma, noise_seed=42):
    def loss_and_grad():
        bd, grads = losses.total_loss(
            model, batch_a, batch_b, weights, sigma,
            np.random.default_rng(noise_seed),
        )
        flat = []
        for name in NET_NAMES:
            flat.extend(grads[name])
        return bd.total, flat

    return loss_and_grad


@pytest.mark.parametrize(
    "weights",
    [
        LossWeights(1.0, 0.0, 0.0, 0.0),
        LossWeights(0.0, 1.0, 0.0, 0.0),
        LossWeights(0.0, 0.0, 1.0, 0.0),
        LossWeights(0.0, 0.0, 0.0, 1.0),
        LossWeights(1.0, 0.7, 0.3, 0.2),
    ],
)
def test_total_loss_gradients_match_finite_differences(weights):
    model = tiny_model(dim_a=2, dim_b=3, hidden=(6,), seed=11)
    batch_a = ( random_batch(2, 5, 1), random_batch(2, 5, 2) )
    batch_b = ( random_batch(3, 6, 3), random_batch(3, 6, 4) )
    closure = _total_closure(model, batch_a, batch_b, weights, sigma=0.1)
    report = nets.grad_check(model.params(), closure, tolerance=1e-4)
    assert report.passed, (weights, report)


def test_total_loss_breakdown_identity():
    model = tiny_model(seed=5)
    weights = LossWeights(0.9, 0.4, 0.05, 0.02)
    bd, _ = losses.total_loss(
        model,
        (random_batch(2, 6, 1), random_batch(2, 6, 2)),
        (random_batch(3, 6, 3), random_batch(3, 6, 4)),
        weights,
    )
    recombined = (
        weights.ae * bd.ae + weights.nn * bd.nn + weights.fd * bd.fd + weights.pv * bd.pv
    )
    assert abs(bd.total - recombined) < 1e-12


def test_total_loss_only_ae_weight():
    model = tiny_model(seed=6)
    bd, _ = losses.total_loss(
        model,
        (random_batch(2, 4, 1), random_batch(2, 4, 2)),
        (random_batch(3, 4, 3), random_batch(3, 4, 4)),
        LossWeights(1.0, 0.0, 0.0, 0.0),
    )
    assert bd.total == bd.ae


def test_total_loss_noise_deterministic_from_seed():
    model = tiny_model(seed=7)
    batches = (
        (random_batch(2, 4, 1), random_batch(2, 4, 2)),
        (random_batch(3, 4, 3), random_batch(3, 4, 4)),
    )
    w = LossWeights()
    bd1, _ = losses.total_loss(model, *batches, w, 0.2, np.random.default_rng(9))
    bd2, _ = losses.total_loss(model, *batches, w, 0.2, np.random.default_rng(9))
    assert bd1 == bd2


def test_weight_scaling_scales_gradient_contribution_exactly():
    model = tiny_model(seed=8)
    batches = (
        (random_batch(2, 4, 1), random_batch(2, 4, 2)),
        (random_batch(3, 4, 3), random_batch(3, 4, 4)),
    )
    base = LossWeights(0.0, 1.0, 0.0, 0.0)
    scaled = LossWeights(0.0, 4.0, 0.0, 0.0)  # power of two: exact scaling
    _, g1 = losses.total_loss(model, *batches, base)
    _, g4 = losses.total_loss(model, *batches, scaled)
    for p1, p4 in zip(g1["enc_a"], g4["enc_a"]):
        np.testing.assert_array_equal(4.0 * p1, p4)


def test_all_losses_nonnegative():
    rng = np.random.default_rng(10)
    for seed in range(5):
        model = tiny_model(seed=seed)
        bd, _ = losses.total_loss(
            model,
            (random_batch(2, 5, seed), random_batch(2, 5, seed + 50)),
            (random_batch(3, 5, seed + 100), random_batch(3, 5, seed + 150)),
            LossWeights(),
            0.1,
            rng,
        )
        assert bd.ae >= 0 and bd.nn >= 0 and bd.fd >= 0 and bd.pv >= 0


def test_total_loss_matches_standalone_losses():
    model = tiny_model(seed=12)
    a_t, a_n = random_batch(2, 6, 1), random_batch(2, 6, 2)
    b_t, b_n = random_batch(3, 6, 3), random_batch(3, 6, 4)
    w = LossWeights(0.5, 0.25, 2.0, 0.125)
    bd, grads = losses.total_loss(model, (a_t, a_n), (b_t, b_n), w, sigma=0.0)
    ae, _ = losses.loss_ae(model.enc_a, model.dec_a, model.enc_b, model.dec_b, a_t, b_t)
    nn, _ = losses.loss_nn(model.enc_a, model.enc_b, a_t, b_t)
    fd_a, _ = losses.loss_fd(model.enc_a, model.dyn, a_t, a_n)
    fd_b, _ = losses.loss_fd(model.enc_b, model.dyn, b_t, b_n)
    pv_a, _ = losses.loss_pv(model.enc_a, a_t, a_n)
    pv_b, _ = losses.loss_pv(model.enc_b, b_t, b_n)
    assert bd.ae == pytest.approx(ae, rel=1e-12)
    assert bd.nn == pytest.approx(nn, rel=1e-12)
    assert bd.fd == pytest.approx(fd_a + fd_b, rel=1e-12)
    assert bd.pv == pytest.approx(pv_a + pv_b, rel=1e-12)


@pytest.mark.parametrize("loss_name", ["ae", "nn", "fd", "pv"])
def test_individual_loss_gradients_match_finite_differences(loss_name):
    model = tiny_model(dim_a=2, dim_b=3, hidden=(5,), seed=13)
    a = random_batch(2, 5, 1)
    a_next = random_batch(2, 5, 2)
    b = random_batch(3, 5, 3)

    if loss_name == "ae":
        nets_involved = [model.enc_a, model.dec_a, model.enc_b, model.dec_b]
        keys = ["enc_a", "dec_a", "enc_b", "dec_b"]

        def loss_and_grad():
            v, g = losses.loss_ae(
                model.enc_a, model.dec_a, model.enc_b, model.dec_b, a, b,
                sigma=0.1, rng=np.random.default_rng(5),
            )
            return v, [p for k in keys for p in g[k]]

    elif loss_name == "nn":
        nets_involved = [model.enc_a, model.enc_b]

        def loss_and_grad():
            v, g = losses.loss_nn(model.enc_a, model.enc_b, a, b)
            return v, g["enc_a"] + g["enc_b"]

    elif loss_name == "fd":
        nets_involved = [model.enc_a, model.dyn]

        def loss_and_grad():
            v, g = losses.loss_fd(
                model.enc_a, model.dyn, a, a_next,
                sigma=0.1, rng=np.random.default_rng(6),
            )
            return v, g["enc"] + g["dyn"]

    else:
        nets_involved = [model.enc_a]

        def loss_and_grad():
            v, g = losses.loss_pv(model.enc_a, a, a_next)
            return v, g["enc"]

    params = [p for net in nets_involved for p in net.params()]
    report = nets.grad_check(params, loss_and_grad, tolerance=1e-4)
    assert report.passed, (loss_name, report)
