import numpy as np
import pytest

from immse.core_math import GaussianSpec, make_rng, moment_matched_sampler
from immse.estimate import mmse_gaussian, mse_curve, nll_continuous
from immse.nn import (
    MlpDenoiser,
    TrainConfig,
    TrainingError,
    as_denoiser,
    eps_forward,
    grad,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
    train,
)


def randomized(net, seed=0, scale=0.3):
    rng = make_rng(seed, 99)
    net.set_flat(rng.normal(scale=scale, size=net.get_flat().size))
    return net


def batch(d, n=16, seed=1):
    rng = make_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d)), rng.uniform(-3, 3, n), rng.uniform(0.5, 2, n)


class TestForward:
    def test_zero_weights(self):
        net = MlpDenoiser(2, hidden=8, n_layers=2)
        net.set_flat(np.zeros(net.get_flat().size))
        assert np.all(eps_forward(net, np.ones((3, 2)), 2.0) == 0.0)

    def test_deterministic(self):
        net = randomized(MlpDenoiser(2, hidden=8))
        z = make_rng(2).standard_normal((5, 2))
        assert np.array_equal(net(z, 1.5), net(z, 1.5))

    def test_hand_matrix_multiply(self):
        net = MlpDenoiser(1, hidden=2, n_layers=1, n_features=2, freq_range=(1.0, 1.0))
        W0 = np.array([[1.0, -1.0], [0.5, 0.0], [0.0, 2.0]])
        b0 = np.array([0.1, -0.2])
        W1 = np.array([[0.3], [-0.7]])
        b1 = np.array([0.05])
        net.weights = [W0, W1]
        net.biases = [b0, b1]
        z, g = 2.0, 3.0
        a = np.log(g)
        h = np.array([z / 2.0, np.sin(a), np.cos(a)])
        pre = h @ W0 + b0
        act = pre / (1 + np.exp(-pre))
        assert net(np.array([[z]]), g)[0, 0] == pytest.approx(act @ W1[:, 0] + b1[0], abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            MlpDenoiser(2)(np.ones((1, 3)), 1.0)

    def test_odd_features(self):
        with pytest.raises(ValueError):
            MlpDenoiser(1, n_features=5)


class TestAsDenoiser:
    class Fixed:
        def __init__(self, out):
            self.out = out

        def __call__(self, z, g):
            return self.out

    def test_injected_true_noise(self):
        x = np.array([[0.3, -1.0]])
        eps = np.array([[0.5, 0.2]])
        g = 4.0
        d = as_denoiser(self.Fixed(eps))
        assert d(np.sqrt(g) * x + eps, g) == pytest.approx(x, abs=1e-15)

    def test_zero_prediction(self):
        z = np.array([[2.0]])
        assert as_denoiser(self.Fixed(np.zeros((1, 1))))(z, 4.0) == pytest.approx(np.array([[1.0]]))

    def test_error_identity(self):
        net = randomized(MlpDenoiser(3, hidden=8))
        rng = make_rng(4)
        x, eps = rng.standard_normal((50, 3)), rng.standard_normal((50, 3))
        g = 2.7
        z = np.sqrt(g) * x + eps
        lhs = np.sum((eps - net(z, g)) ** 2, axis=1)
        rhs = g * np.sum((x - as_denoiser(net)(z, g)) ** 2, axis=1)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_zero_snr(self):
        with pytest.raises(ValueError):
            as_denoiser(MlpDenoiser(1))(np.ones((1, 1)), 0.0)

    def test_clip(self):
        net = randomized(MlpDenoiser(1, hidden=4))
        out = as_denoiser(net, clip=(-1.0, 1.0))(np.array([[50.0]]), 1.0)
        assert -1.0 <= out[0, 0] <= 1.0


class TestGrad:
    def test_zero_weight_batch(self):
        net = randomized(MlpDenoiser(2, hidden=8))
        x, eps, a, _ = batch(2)
        assert all(np.all(g == 0) for g in grad(net, x, eps, a, np.zeros(len(a))))

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        net = randomized(MlpDenoiser(2, hidden=16, n_layers=2), seed=seed)
        x, eps, a, w = batch(2, seed=seed)
        theta = net.get_flat()
        g = np.concatenate([p.ravel() for p in grad(net, x, eps, a, w)])
        v = make_rng(seed, 7).standard_normal(theta.size)
        h = 1e-5

        def loss_at(t):
            net.set_flat(t)
            return loss_and_grad(net, x, eps, a, w)[0]

        fd = (loss_at(theta + h * v) - loss_at(theta - h * v)) / (2 * h)
        net.set_flat(theta)
        assert abs(fd - g @ v) <= 1e-4 * abs(fd)

    def test_linear_layer_closed_form(self):
        net = randomized(MlpDenoiser(2, n_layers=0, n_features=4))
        x, eps, a, w = batch(2)
        gamma = np.exp(a)
        H = net._inputs(np.sqrt(gamma)[:, None] * x + eps, gamma)
        r = H @ net.weights[0] + net.biases[0] - eps
        gW, gb = grad(net, x, eps, a, w)
        n = len(a)
        assert gW == pytest.approx(2.0 / n * H.T @ (w[:, None] * r), rel=1e-12)
        assert gb == pytest.approx(2.0 / n * (w[:, None] * r).sum(axis=0), rel=1e-12)

    def test_nonfinite_loss(self):
        net = MlpDenoiser(1, hidden=4)
        x, eps, a, w = batch(1)
        w[0] = np.inf
        with pytest.raises(TrainingError):
            loss_and_grad(net, x, eps, a, w)


class TestTrain:
    spec = GaussianSpec.isotropic(1)

    def data(self, n=4000):
        return self.spec.sample(n, make_rng(0, 10))

    def test_zero_steps(self):
        net = randomized(MlpDenoiser(1, hidden=8))
        res = train(net, self.data(), moment_matched_sampler([1.0]), TrainConfig(steps=0))
        assert np.array_equal(res.net.get_flat(), net.get_flat())
        assert res.loss.size == 0

    def test_deterministic(self):
        cfg = TrainConfig(steps=30, batch_size=16, seed=3)
        s = moment_matched_sampler([1.0])
        a = train(MlpDenoiser(1, hidden=8), self.data(), s, cfg)
        b = train(MlpDenoiser(1, hidden=8), self.data(), s, cfg)
        assert np.array_equal(a.net.get_flat(), b.net.get_flat())

    def test_input_not_mutated(self):
        net = MlpDenoiser(1, hidden=8)
        before = net.get_flat().copy()
        train(net, self.data(), moment_matched_sampler([1.0]), TrainConfig(steps=5, batch_size=8))
        assert np.array_equal(net.get_flat(), before)

    def test_divergence_aborts_with_history(self):
        cfg = TrainConfig(steps=50, batch_size=8, divergence_threshold=1e-9)
        with pytest.raises(TrainingError) as info:
            train(MlpDenoiser(1, hidden=8), self.data(), moment_matched_sampler([1.0]), cfg)
        assert len(info.value.history["loss"]) == 1

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train(MlpDenoiser(1), np.zeros((0, 1)), moment_matched_sampler([1.0]), TrainConfig(steps=1))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_gaussian_task(self):
        X = self.data(10000)
        sampler = moment_matched_sampler([1.0])
        res = train(MlpDenoiser(1, hidden=64, n_layers=2), X, sampler, TrainConfig(steps=3000, seed=1))
        assert np.all(np.isfinite(res.loss))
        # running average settles: second-half windows never climb above the midpoint level by > noise
        ma = np.convolve(res.loss, np.ones(100) / 100, mode="valid")
        half = ma[len(ma) // 2 :]
        assert half[-1] <= half[0] + 3 * res.loss[len(res.loss) // 2 :].std() / 10
        Xv = self.spec.sample(10000, make_rng(0, 11))
        est = nll_continuous(as_denoiser(res.net), Xv, self.spec, sampler, n_alpha=200, n_eps=4, seed=2, stratified=True)
        assert abs(est.nats - self.spec.entropy()) < 0.05
        # a trained net cannot beat the Gaussian MMSE
        c = mse_curve(as_denoiser(res.net), Xv, np.linspace(-3, 3, 7), n_eps=4, seed=5)
        se = np.sqrt(c.var_eps / c.counts) / c.gammas
        assert np.all(c.mse_x >= np.array([mmse_gaussian(self.spec, g) for g in c.gammas]) - 3 * se)


def test_checkpoint_roundtrip(tmp_path):
    net = randomized(MlpDenoiser(2, hidden=8, n_layers=2, seed=4))
    path = tmp_path / "net.json"
    save_checkpoint(net, path, TrainConfig(steps=7), extra={"note": "x"})
    back = load_checkpoint(path)
    z = make_rng(0).standard_normal((4, 2))
    assert np.array_equal(back(z, 2.0), net(z, 2.0))


def test_checkpoint_rejects_foreign(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(path)
