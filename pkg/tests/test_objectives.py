import numpy as np
import pytest

from digestsim import data as dt
from digestsim import objectives as obj


def naive_sample_loss(spec, model, sample):
    """Straightforward second implementation used as an oracle."""
    a, b = sample
    w = np.asarray(model).reshape(spec.n_classes, spec.dim)
    z = w @ np.asarray(a)
    p = np.exp(z) / np.exp(z).sum()
    return -np.log(p[int(b)]) + 0.5 * spec.lam * np.sum(np.square(model))


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestSampleLoss:
    def test_zero_model_binary_is_ln2(self):
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=3)
        x = np.zeros(6)
        loss = obj.sample_loss(spec, x, (np.array([1.0, -2.0, 0.5]), 1))
        assert loss == pytest.approx(np.log(2), abs=1e-12)

    def test_zero_model_ten_classes_is_ln10(self):
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=10, dim=4)
        loss = obj.sample_loss(spec, np.zeros(40), (np.ones(4), 7))
        assert loss == pytest.approx(np.log(10), abs=1e-12)

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(3)
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=3, dim=4, lam=0.05)
        for _ in range(30):
            x = rng.normal(size=12)
            a = rng.normal(size=4)
            b = int(rng.integers(3))
            assert obj.sample_loss(spec, x, (a, b)) == pytest.approx(
                naive_sample_loss(spec, x, (a, b)), abs=1e-12)

    def test_dimension_mismatch(self):
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=3)
        with pytest.raises(ValueError):
            obj.sample_loss(spec, np.zeros(5), (np.zeros(3), 0))
        with pytest.raises(ValueError):
            obj.sample_loss(spec, np.zeros(6), (np.zeros(4), 0))


class TestSampleGrad:
    def test_finite_difference(self):
        rng = np.random.default_rng(7)
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=3, dim=4, lam=0.1)
        for _ in range(20):
            x = rng.normal(size=12)
            a = rng.normal(size=4)
            b = int(rng.integers(3))
            g = obj.sample_grad(spec, x, (a, b))
            num = central_diff(lambda y: obj.sample_loss(spec, y, (a, b)), x)
            assert np.abs(g - num).max() < 1e-5

    def test_symmetric_pair_cancels_at_zero(self):
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=3)
        x = np.zeros(6)
        a = np.array([0.3, -1.0, 2.0])
        g0 = obj.sample_grad(spec, x, (a, 0))
        g1 = obj.sample_grad(spec, x, (a, 1))
        assert np.abs(g0 + g1).max() < 1e-15

    def test_zero_features_leave_only_regularizer(self):
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=2, lam=0.4)
        rng = np.random.default_rng(1)
        x = rng.normal(size=4)
        g = obj.sample_grad(spec, x, (np.zeros(2), 1))
        assert np.allclose(g, 0.4 * x)


class TestQuadratic:
    def test_minimizer(self):
        assert obj.quad_loss(1.0) == 0.0
        assert obj.quad_grad(1.0) == 0.0

    def test_upper_branch(self):
        assert obj.quad_loss(3.0) == 4.0
        assert obj.quad_grad(3.0) == 4.0

    def test_lower_branch(self):
        assert obj.quad_loss(-1.0) == 2.0
        assert obj.quad_grad(-1.0) == -2.0

    def test_grad_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        for x in rng.normal(1.0, 3.0, size=50):
            if abs(x - 1.0) < 1e-3:      # kink
                continue
            h = 1e-6
            num = (obj.quad_loss(x + h) - obj.quad_loss(x - h)) / (2 * h)
            assert obj.quad_grad(x) == pytest.approx(num, abs=1e-5)


class TestNoisyQuadGrad:
    def test_sigma_zero_exact(self):
        spec = obj.ObjectiveSpec("noisy_quadratic", zeta=np.zeros(3), sigma=0.0)
        rng = np.random.default_rng(0)
        assert obj.noisy_quad_grad(spec, 1, 2.5, rng) == obj.quad_grad(2.5)

    def test_monte_carlo_mean(self):
        zeta = np.array([2.0, -2.0])
        spec = obj.ObjectiveSpec("noisy_quadratic", zeta=zeta, sigma=3.0)
        rng = np.random.default_rng(11)
        n = 100_000
        draws = np.array([obj.noisy_quad_grad(spec, 0, 0.5, rng) for _ in range(n)])
        expect = obj.quad_grad(0.5) + zeta[0]
        assert abs(draws.mean() - expect) < 3 * 3.0 / np.sqrt(n)

    def test_zero_sum_over_nodes(self):
        zeta = np.array([4.0, -1.0, -3.0])
        spec = obj.ObjectiveSpec("noisy_quadratic", zeta=zeta, sigma=0.0)
        rng = np.random.default_rng(0)
        grads = [obj.noisy_quad_grad(spec, v, 2.0, rng) for v in range(3)]
        assert np.mean(grads) == pytest.approx(float(obj.quad_grad(2.0)))

    def test_zeta_must_sum_to_zero(self):
        with pytest.raises(ValueError):
            obj.ObjectiveSpec("noisy_quadratic", zeta=np.array([1.0, 1.0]))


class TestFullLoss:
    def test_single_sample_equals_sample_loss(self):
        ds = dt.Dataset(np.array([[1.0, 2.0]]), np.array([0]), n_classes=2)
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=2, lam=0.1)
        rng = np.random.default_rng(2)
        x = rng.normal(size=4)
        assert obj.full_loss(spec, x, ds) == pytest.approx(
            obj.sample_loss(spec, x, (ds.features[0], 0)), abs=1e-14)

    def test_weighted_decomposition(self):
        ds = dt.generate_blobs(3, 20, 4, 1.0, 4)
        part = dt.partition_noniid_unbalanced(ds, 4, 0.6, 1)
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=3, dim=4,
                                 lam=1.0 / len(ds))
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = rng.normal(size=12)
            total = obj.full_loss(spec, x, ds)
            parts = sum(
                (len(part.assignment[v]) / len(ds))
                * obj.node_loss(spec, x, ds, part, v)
                for v in range(4))
            assert total == pytest.approx(parts, abs=1e-12)

    def test_quadratic_task_loss_matches_quad_loss(self):
        task = obj.NoisyQuadTask(3, sigma=1.0, x0=2.0)
        assert task.loss(np.array([3.0])) == pytest.approx(4.0)

    def test_convexity_midpoint(self):
        ds = dt.generate_blobs(2, 15, 3, 1.0, 6)
        spec = obj.ObjectiveSpec("softmax_logistic", n_classes=2, dim=3, lam=0.05)
        rng = np.random.default_rng(9)
        for _ in range(25):
            x = rng.normal(size=6)
            y = rng.normal(size=6)
            mid = obj.full_loss(spec, (x + y) / 2, ds)
            assert mid <= (obj.full_loss(spec, x, ds)
                           + obj.full_loss(spec, y, ds)) / 2 + 1e-12


class TestTasks:
    def test_logistic_task_weights(self):
        ds = dt.generate_blobs(2, 7, 2, 1.0, 0)
        part = dt.partition_noniid_unbalanced(ds, 3, 0.5, 1)
        task = obj.LogisticTask(ds, part)
        assert np.allclose(task.weights, np.array([8, 4, 2]) / 14)
        assert task.spec.lam == pytest.approx(1.0 / 14)

    def test_quad_task_batch_shapes(self):
        task = obj.NoisyQuadTask(2, zeta=np.array([1.0, -1.0]), sigma=0.5,
                                 batch=8, x0=3.0)
        x = task.init_model()
        assert x.shape == (8,)
        rng = np.random.default_rng(0)
        g = task.stoch_grad(0, 0, x, rng)
        assert g.shape == (8,)
