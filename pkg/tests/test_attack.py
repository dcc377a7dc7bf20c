import numpy as np
import pytest

from advrecon.attack import (
    AttackConfig,
    LinearModel,
    NetworkModel,
    XSpaceAttackConfig,
    linear_worst_case,
    pga_attack,
    rho_hat,
    xspace_attack,
)
from advrecon.data import DataSource, Dataset
from advrecon.measurement import MeasurementOperator, gen_gaussian_operator
from advrecon.neural import MlpReconstructor
from advrecon.reporting import read_csv_rows
from advrecon.theory import robust_linear_reconstructor

from conftest import assert_grad_close, fd_gradient


@pytest.fixture
def linear_case():
    A = gen_gaussian_operator(6, 10, seed=4)
    B = robust_linear_reconstructor(A, 1.0, 0.2).B
    return A, B


@pytest.fixture
def network_case():
    rng = np.random.default_rng(1)
    A = gen_gaussian_operator(5, 8, seed=2)
    f = MlpReconstructor([8, 16, 8], seed=3)
    X = np.tanh(rng.standard_normal((6, 8)))
    return A, f, X


class TestModels:
    def test_network_input_gradient(self, network_case):
        A, f, X = network_case
        model = NetworkModel(f, A)
        y = X[0] @ A.entries.T
        g = np.random.default_rng(0).standard_normal(8)
        analytic = model.input_gradient(y[None, :], g[None, :])[0]
        assert_grad_close(analytic, fd_gradient(lambda v: float(g @ model.reconstruct(v[None, :])[0]), y))

    def test_linear_input_gradient(self, linear_case):
        A, B = linear_case
        g = np.arange(10.0)
        np.testing.assert_allclose(LinearModel(B).input_gradient(np.zeros((1, 6)), g[None, :])[0], g @ B)


class TestConfig:
    def test_default_step(self):
        assert AttackConfig(epsilon=2.0).effective_step == pytest.approx(0.05)
        assert AttackConfig(epsilon=2.0, step_size=0.3).effective_step == 0.3

    @pytest.mark.parametrize("kw", [dict(epsilon=-1), dict(steps=0), dict(restarts=0), dict(step_size=0.0),
                                    dict(momentum=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AttackConfig(**kw)

    def test_xspace_invalid(self):
        with pytest.raises(ValueError):
            XSpaceAttackConfig(lambda_reg=0.0)


class TestLinearOracle:
    def test_zero_residual_reduces_to_spectral_norm(self):
        A = gen_gaussian_operator(4, 4, seed=0)
        B = np.linalg.inv(A.entries)
        x = np.random.default_rng(0).standard_normal(4)
        _, value = linear_worst_case(B, A, x, 0.5)
        assert value == pytest.approx(0.25 * np.linalg.norm(B, 2) ** 2, rel=1e-10)

    def test_beats_dense_boundary_sampling(self, linear_case, rng):
        A, B = linear_case
        for _ in range(5):
            x = rng.standard_normal(10)
            delta, value = linear_worst_case(B, A, x, 0.7)
            assert np.linalg.norm(delta) == pytest.approx(0.7)
            d = rng.standard_normal((20000, 6))
            d *= 0.7 / np.linalg.norm(d, axis=1, keepdims=True)
            sampled = np.sum(((A.entries @ x + d) @ B.T - x) ** 2, axis=1)
            assert value >= sampled.max() - 1e-10

    def test_two_dimensional_grid(self):
        # compare with a fine sweep of the circle
        B = np.array([[2.0, 0.5], [0.0, 1.0]])
        A = np.eye(2)
        x = np.array([0.3, -1.0])
        _, value = linear_worst_case(B, A, x, 1.0)
        t = np.linspace(0, 2 * np.pi, 200001)
        d = np.stack([np.cos(t), np.sin(t)], axis=1)
        assert value == pytest.approx(np.max(np.sum(((x + d) @ B.T - x) ** 2, axis=1)), rel=1e-9)


class TestPga:
    def test_zero_radius_gives_clean_error(self, network_case):
        A, f, X = network_case
        delta, value = pga_attack(f, A, X[0], AttackConfig(epsilon=0.0))
        assert not delta.any()
        assert value == pytest.approx(np.sum((f.forward(X[0] @ A.entries.T @ A.entries) - X[0]) ** 2))

    def test_matches_linear_oracle(self, linear_case, rng):
        A, B = linear_case
        for i in range(10):
            x = rng.standard_normal(10)
            _, value = pga_attack(B, A, x, AttackConfig(epsilon=0.5, seed=i))
            _, exact = linear_worst_case(B, A, x, 0.5)
            assert value == pytest.approx(exact, rel=1e-2)
            assert value <= exact * (1 + 1e-12)

    @pytest.mark.parametrize("eps", [0.1, 1.0, 5.0])
    def test_feasible(self, network_case, eps):
        A, f, X = network_case
        for i, x in enumerate(X):
            delta, _ = pga_attack(f, A, x, AttackConfig(epsilon=eps, steps=30), sample_id=i)
            assert np.linalg.norm(delta) <= eps + 1e-12

    def test_reported_value_is_error_at_returned_delta(self, network_case):
        A, f, X = network_case
        delta, value = pga_attack(f, A, X[1], AttackConfig(epsilon=1.0, steps=20))
        recon = f.forward((X[1] @ A.entries.T + delta) @ A.entries)
        assert value == pytest.approx(np.sum((recon - X[1]) ** 2))

    def test_more_restarts_never_lower(self, network_case):
        A, f, X = network_case
        for i, x in enumerate(X):
            one = pga_attack(f, A, x, AttackConfig(epsilon=1.0, steps=15, restarts=1), sample_id=i)[1]
            three = pga_attack(f, A, x, AttackConfig(epsilon=1.0, steps=15, restarts=3), sample_id=i)[1]
            assert three >= one

    def test_deterministic(self, network_case):
        A, f, X = network_case
        cfg = AttackConfig(epsilon=1.0, steps=20, restarts=3, seed=9)
        a = pga_attack(f, A, X[0], cfg, sample_id=3)
        b = pga_attack(f, A, X[0], cfg, sample_id=3)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_non_finite_restart_is_dropped(self):
        class Exploding:
            def reconstruct(self, Y):
                out = Y.copy()
                out[np.linalg.norm(Y, axis=1) > 1.5] = np.inf
                return out

            def input_gradient(self, Y, grad_out):
                return grad_out

        A = MeasurementOperator(np.eye(2))
        x = np.array([1.0, 0.0])
        delta, value = pga_attack(Exploding(), A, x, AttackConfig(epsilon=1.0, steps=50))
        assert np.isfinite(value)
        assert np.linalg.norm(x + delta) <= 1.5


class TestRhoHat:
    def test_single_sample(self, network_case):
        A, f, X = network_case
        cfg = AttackConfig(steps=20)
        report = rho_hat(f, A, X[:1], [1.0], cfg)
        assert report.rho_hat[1.0] == pytest.approx(pga_attack(f, A, X[0], cfg.with_epsilon(1.0))[1])

    def test_per_sample_streams_independent_of_batching(self, network_case):
        A, f, X = network_case
        cfg = AttackConfig(steps=20, restarts=2, seed=5)
        report = rho_hat(f, A, X, [0.5], cfg)
        for sid, eps, value in report.per_sample:
            single = pga_attack(f, A, X[sid], cfg.with_epsilon(eps), sample_id=sid)[1]
            assert value == pytest.approx(single, rel=1e-9)

    def test_mean_and_monotone(self, network_case):
        A, f, X = network_case
        report = rho_hat(f, A, X, [2.0, 0.0, 1.0, 0.5], AttackConfig(steps=20))
        assert sorted(report.rho_hat) == [0.0, 0.5, 1.0, 2.0]
        for eps, value in report.rho_hat.items():
            rows = [v for _, e, v in report.per_sample if e == eps]
            assert value == pytest.approx(np.mean(rows))
        by_sample = {}
        for sid, eps, v in report.per_sample:
            by_sample.setdefault(sid, []).append((eps, v))
        for rows in by_sample.values():
            values = [v for _, v in sorted(rows)]
            assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))

    def test_exact_inverse_has_zero_clean_error(self):
        A = MeasurementOperator(np.array([[2.0, 1.0], [0.5, 3.0]]))
        X = np.random.default_rng(0).standard_normal((5, 2))
        report = rho_hat(np.linalg.inv(A.entries), A, X, [0.0], AttackConfig())
        assert report.rho_hat[0.0] < 1e-28

    def test_accepts_dataset(self, network_case):
        A, f, X = network_case
        a = rho_hat(f, A, Dataset(X, DataSource.MNIST), [1.0], AttackConfig(steps=5))
        b = rho_hat(f, A, X, [1.0], AttackConfig(steps=5))
        assert a.rho_hat == b.rho_hat

    def test_empty(self, network_case):
        A, f, _ = network_case
        with pytest.raises(ValueError):
            rho_hat(f, A, np.zeros((0, 8)), [1.0], AttackConfig())

    def test_csv(self, network_case, tmp_path):
        A, f, X = network_case
        report = rho_hat(f, A, X[:2], [0.0, 1.0], AttackConfig(steps=5, seed=2))
        path = report.to_csv(tmp_path / "r.csv", {"seed": 2})
        text = path.read_text()
        assert "# attack=steps=5 step_size=None momentum=0.9 restarts=2 seed=2" in text
        rows = read_csv_rows(path)
        assert rows[0] == ["sample_id", "epsilon", "delta_max"]
        assert rows[5] == ["epsilon", "rho_hat"]
        assert [r[:2] for r in rows[1:5]] == [["0", "0.0"], ["1", "0.0"], ["0", "1.0"], ["1", "1.0"]]


class TestXSpace:
    def test_two_by_two_amplification(self):
        r, eps = 0.01, 0.1
        A = MeasurementOperator(np.diag([1.0, r]))
        B = np.linalg.inv(A.entries)
        x = np.array([0.4, -0.2])
        delta = np.array([0.0, eps])
        x_err = np.linalg.norm(B @ (A.entries @ (x + delta)) - x)
        y_err = np.linalg.norm(B @ (A.entries @ x + delta) - x)
        assert x_err == pytest.approx(eps, rel=1e-12)
        assert y_err / x_err == pytest.approx(1 / r, rel=1e-8)

    def test_large_penalty_pins_perturbation(self, network_case):
        A, f, X = network_case
        res = xspace_attack(f, A, X[0], XSpaceAttackConfig(lambda_reg=1e8, steps=50, step_size=0.1))
        assert np.linalg.norm(res.r) < 1e-6

    def test_returns_measurement_image(self, network_case):
        A, f, X = network_case
        res = xspace_attack(f, A, X[0], XSpaceAttackConfig(lambda_reg=0.5, steps=30))
        np.testing.assert_allclose(res.measurement_perturbation, A.entries @ res.r)
        err = f.forward((X[0] @ A.entries.T + A.entries @ res.r) @ A.entries) - X[0]
        assert res.objective == pytest.approx(0.5 * err @ err - 0.25 * res.r @ res.r)

    def test_ascends(self, network_case):
        A, f, X = network_case
        res = xspace_attack(f, A, X[0], XSpaceAttackConfig(lambda_reg=0.5, steps=100))
        clean = 0.5 * np.sum((f.forward(X[0] @ A.entries.T @ A.entries) - X[0]) ** 2)
        assert res.objective > clean

    def test_measurement_space_attack_dominates(self, rng):
        # the signal-space attack only reaches range(A); the measurement ball contains its image
        A = gen_gaussian_operator(5, 12, seed=8)
        B = robust_linear_reconstructor(A, 1.0, 0.1).B
        for i in range(5):
            x = rng.standard_normal(12)
            res = xspace_attack(B, A, x, XSpaceAttackConfig(lambda_reg=2.0, steps=200, step_size=0.05, seed=i))
            eps = np.linalg.norm(res.measurement_perturbation)
            x_value = np.sum((B @ (A.entries @ x + res.measurement_perturbation) - x) ** 2)
            y_value = pga_attack(B, A, x, AttackConfig(epsilon=eps, seed=i))[1]
            assert y_value >= x_value * (1 - 1e-6)
