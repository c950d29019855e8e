import numpy as np
import pytest

import tomorank as tr
from tomorank.pauli import setting_basis_stack
from tomorank.stats import SingularModelError


class LinearlyReparametrizedChart:
    """theta' -> base chart at A theta', for invariance checks."""

    def __init__(self, base, a_matrix):
        self.base = base
        self.a = np.asarray(a_matrix, dtype=float)
        self.d = base.d
        self.dim = self.a.shape[1]
        self.theta0 = np.linalg.solve(self.a, base.theta0)

    def rho(self, theta):
        return self.base.rho(self.a @ np.asarray(theta, dtype=float))

    def jacobian(self, theta):
        base_jac = self.base.jacobian(self.a @ np.asarray(theta, dtype=float))
        return np.einsum("jk,kuv->juv", self.a.T, base_jac)

    def domain_margin(self, theta):
        return self.base.domain_margin(self.a @ np.asarray(theta, dtype=float))


def _fd_fisher(chart, theta, step=1e-6):
    basis = setting_basis_stack(chart.d.bit_length() - 1)

    def probs_of(t):
        rho = chart.rho(t)
        return np.real(np.sum(basis.conj() * np.matmul(rho, basis), axis=1)).reshape(-1)

    probs = probs_of(theta)
    dprobs = np.array(
        [
            (probs_of(theta + step * e) - probs_of(theta - step * e)) / (2 * step)
            for e in np.eye(chart.dim)
        ]
    )
    return (dprobs / probs) @ dprobs.T


class TestFisherInformation:
    def test_matches_finite_differences_at_center(self):
        chart = tr.CholeskyChart.from_state(tr.DensityMatrix.maximally_mixed(1))
        info = tr.fisher_information(chart)
        fd = _fd_fisher(chart, chart.theta0)
        assert np.max(np.abs(info - fd)) / np.max(np.abs(fd)) < 1e-6

    def test_closed_form_near_boundary(self):
        # pure chart anchored at |0>, evaluated just off the anchor; the
        # z setting contributes a rank-one term 4 t t^T / (r^2 (1 - r^2))
        chart = tr.PureStateChart([1.0, 0.0])
        theta = np.array([1e-3, 1e-3])
        a, b = theta
        r2 = a * a + b * b
        c0 = np.sqrt(1 - r2)
        mx, my = 2 * c0 * a, 2 * c0 * b
        dmx = 2 * np.array([c0 - a * a / c0, -a * b / c0])
        dmy = 2 * np.array([-a * b / c0, c0 - b * b / c0])
        closed = (
            np.outer(dmx, dmx) / (1 - mx**2)
            + np.outer(dmy, dmy) / (1 - my**2)
            + 4 * np.outer(theta, theta) / (r2 * (1 - r2))
        )
        info = tr.fisher_information(chart, theta)
        assert np.max(np.abs(info - closed)) / np.max(np.abs(closed)) < 1e-10

    def test_congruence_under_linear_reparametrization(self):
        base = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=3))
        rng = np.random.default_rng(4)
        a = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        reparam = LinearlyReparametrizedChart(base, a)
        info_base = tr.fisher_information(base)
        info_new = tr.fisher_information(reparam)
        assert np.max(np.abs(info_new - a.T @ info_base @ a)) < 1e-8

    def test_singular_at_boundary_state(self):
        chart = tr.PureStateChart([1.0, 0.0])
        with pytest.raises(SingularModelError):
            tr.fisher_information(chart)  # theta0 = 0 sits on a zero-probability cell


class TestHsMetric:
    def test_pure_chart_at_z_eigenstate(self):
        chart = tr.PureStateChart([1.0, 0.0])
        assert np.allclose(tr.hs_metric(chart), 2 * np.eye(2), atol=1e-12)

    def test_symmetric_psd(self):
        chart = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=5))
        metric = tr.hs_metric(chart)
        assert np.allclose(metric, metric.T)
        assert np.linalg.eigvalsh(metric).min() > -1e-12

    def test_quadratic_form_against_finite_differences(self):
        rng = np.random.default_rng(6)
        vec = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        chart = tr.PureStateChart(vec)
        theta0 = chart.theta0
        metric = tr.hs_metric(chart, theta0)
        for _ in range(10):
            delta = 1e-4 * rng.standard_normal(chart.dim)
            lhs = tr.hs_distance_sq(chart.rho(theta0 + delta), chart.rho(theta0))
            rhs = float(delta @ metric @ delta)
            assert abs(lhs - rhs) / rhs < 1e-3

    def test_fisher_pair_bundle(self):
        chart = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=7))
        pair = tr.FisherPair.compute(chart)
        assert np.allclose(pair.fisher, pair.fisher.T)
        assert np.allclose(pair.metric, pair.metric.T)
        assert np.linalg.eigvalsh(pair.fisher).min() > 0


class TestAsymptoticMse:
    def test_near_boundary_value(self):
        # tr(G I^-1) -> 3/4 on approach to |0>, for every direction
        chart = tr.PureStateChart([1.0, 0.0])
        for theta in (np.array([1e-3, 1e-3]), np.array([1e-3, 0.0]), np.array([0.0, 2e-3])):
            assert tr.asymptotic_mse(chart, 1, theta) == pytest.approx(0.75, rel=2e-2)

    def test_reparametrization_invariance(self):
        base = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=8))
        value = tr.asymptotic_mse(base, 100)
        rng = np.random.default_rng(9)
        for _ in range(3):
            a = rng.standard_normal((3, 3))
            a += 4 * np.eye(3)
            reparam = LinearlyReparametrizedChart(base, a)
            assert tr.asymptotic_mse(reparam, 100) == pytest.approx(value, abs=1e-10)

    def test_scaling_with_n(self):
        chart = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=10))
        assert tr.asymptotic_mse(chart, 200) == pytest.approx(tr.asymptotic_mse(chart, 100) / 2)


class TestQuantumMseBound:
    def test_paper_value(self):
        assert tr.quantum_mse_bound(4, 100) == pytest.approx(3.7037e-3, abs=1e-7)

    def test_single_qubit_single_shot(self):
        assert tr.quantum_mse_bound(1, 1) == pytest.approx(2 / 3)

    def test_monotone_decreasing(self):
        assert tr.quantum_mse_bound(2, 10) > tr.quantum_mse_bound(2, 20)
        assert tr.quantum_mse_bound(2, 10) > tr.quantum_mse_bound(3, 10)

    def test_domain(self):
        with pytest.raises(ValueError):
            tr.quantum_mse_bound(0, 10)


class TestCoarseGrainedFisher:
    def test_dominated_by_full_fisher(self):
        for seed in range(3):
            state = tr.random_state(2, 1, seed=20 + seed)
            evecs = np.linalg.eigh(state.matrix)[1]
            chart = tr.PureStateChart(evecs[:, -1])
            info = tr.fisher_information(chart)
            coarse = tr.coarse_grained_fisher(chart)
            assert np.linalg.eigvalsh(info - coarse).min() > -1e-8

    def test_equals_full_fisher_for_one_qubit(self):
        # one qubit settings are binary, so the parity is the whole dataset
        chart = tr.CholeskyChart.from_state(tr.random_state(1, 2, seed=23))
        info = tr.fisher_information(chart)
        coarse = tr.coarse_grained_fisher(chart)
        assert np.max(np.abs(info - coarse)) < 1e-10

    def test_center_has_unit_variance_weights(self):
        # at the maximally mixed state every parity mean vanishes
        chart = tr.CholeskyChart.from_state(tr.DensityMatrix.maximally_mixed(1))
        coarse = tr.coarse_grained_fisher(chart)
        jac = chart.jacobian(chart.theta0)
        from tomorank.stats import _parity_operator_stack

        ops = _parity_operator_stack(1)
        dm = np.real(np.einsum("suv,jvu->js", ops, jac))
        assert np.max(np.abs(coarse - dm @ dm.T)) < 1e-12


class TestMeasurementKl:
    def test_zero_for_identical_states(self):
        rho = tr.random_state(1, 2, seed=30)
        assert tr.measurement_kl(rho, rho) == pytest.approx(0.0, abs=1e-12)

    def test_pure_vs_mixed_oracle(self):
        # per-setting sums: z contributes ln 2, x and y contribute 0
        rho = tr.DensityMatrix.from_pure([1, 0])
        tau = tr.DensityMatrix.maximally_mixed(1)
        assert tr.measurement_kl(rho, tau) == pytest.approx(np.log(2), abs=1e-12)

    def test_infinite_when_support_exceeds(self):
        rho = tr.DensityMatrix.maximally_mixed(1)
        tau = tr.DensityMatrix.from_pure([1, 0])
        assert tr.measurement_kl(rho, tau) == np.inf

    def test_nonnegative(self):
        a = tr.random_state(2, 2, seed=31)
        b = tr.random_state(2, 3, seed=32)
        assert tr.measurement_kl(a, b) >= 0


class TestPearsonStatistic:
    def test_zero_when_counts_match_expecteds(self):
        counts = {d: np.array([20, 20]) for d in tr.all_settings(1)}
        data = tr.CountsDataset(k=1, counts=counts)
        assert tr.pearson_statistic(data, tr.DensityMatrix.maximally_mixed(1)) == 0.0

    def test_handmade_table(self):
        counts = {"x": np.array([30, 10]), "y": np.array([20, 20]), "z": np.array([25, 15])}
        data = tr.CountsDataset(k=1, counts=counts)
        rho = tr.DensityMatrix.maximally_mixed(1)
        expected = sum((c - 20.0) ** 2 / 20.0 for row in counts.values() for c in row)
        assert tr.pearson_statistic(data, rho) == pytest.approx(expected, abs=1e-12)

    def test_infinite_on_null_expected_cell(self):
        counts = {"x": np.array([5, 5]), "y": np.array([5, 5]), "z": np.array([5, 5])}
        data = tr.CountsDataset(k=1, counts=counts)
        assert tr.pearson_statistic(data, tr.DensityMatrix.from_pure([1, 0])) == np.inf

    def test_zero_expected_zero_count_ignored(self):
        counts = {"x": np.array([5, 5]), "y": np.array([5, 5]), "z": np.array([10, 0])}
        data = tr.CountsDataset(k=1, counts=counts)
        assert np.isfinite(tr.pearson_statistic(data, tr.DensityMatrix.from_pure([1, 0])))

    def test_degrees_of_freedom_formula(self):
        assert tr.pearson_df(4, 10) == 1215 - 219 == 996
        assert tr.pearson_df(1, 1) == 1


class TestChiSquare:
    def test_df2_closed_form(self):
        dist = tr.ChiSquare(2)
        x = np.linspace(0.1, 10, 25)
        assert np.max(np.abs(dist.cdf(x) - (1 - np.exp(-x / 2)))) < 1e-12
        assert dist.quantile(0.95) == pytest.approx(-2 * np.log(0.05), abs=1e-10)

    def test_quantile_cdf_inverse(self):
        for df in (1, 2, 27, 996):
            dist = tr.ChiSquare(df)
            for q in (0.05, 0.5, 0.95):
                assert dist.cdf(dist.quantile(q)) == pytest.approx(q, abs=1e-8)

    def test_df27_quantile_against_monte_carlo(self):
        # independent oracle: empirical quantile of sums of squared normals
        rng = np.random.default_rng(123)
        samples = rng.standard_normal((1_000_000, 27))
        stats = np.sum(samples**2, axis=1)
        mc = np.quantile(stats, 0.95)
        assert tr.ChiSquare(27).quantile(0.95) == pytest.approx(mc, rel=5e-3)

    def test_sampling_deterministic(self):
        dist = tr.ChiSquare(5)
        assert np.array_equal(dist.sample(10, seed=1), dist.sample(10, seed=1))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            tr.ChiSquare(0)
        with pytest.raises(ValueError):
            tr.ChiSquare(3).quantile(1.5)


@pytest.fixture(scope="module")
def two_qubit_truth_and_data():
    truth = tr.draw_significant_state(2, 2, (55,), 0.1)
    data = tr.simulate_dataset(truth, 100, (55, 0))
    return truth, data


class TestPearsonChi2Test:
    def test_decision_rule(self, two_qubit_truth_and_data):
        _, data = two_qubit_truth_and_data
        fit = tr.fit_rank(data, 2, seed=0)
        result = tr.pearson_chi2_test(data, fit, alpha=0.05)
        assert result.method == "asymptotic"
        assert result.df == tr.pearson_df(2, 2)
        assert result.reject == (result.statistic > result.threshold)

    def test_wrong_dataset_rejected(self, two_qubit_truth_and_data):
        _, data = two_qubit_truth_and_data
        other = tr.simulate_dataset(tr.DensityMatrix.maximally_mixed(2), 100, seed=1)
        fit = tr.fit_rank(other, 1, seed=0)
        with pytest.raises(ValueError):
            tr.pearson_chi2_test(data, fit)


class TestBootstrapPearson:
    def test_deterministic(self, two_qubit_truth_and_data):
        _, data = two_qubit_truth_and_data
        a = tr.bootstrap_pearson_test(data, 2, n_boot=20, seed=7)
        b = tr.bootstrap_pearson_test(data, 2, n_boot=20, seed=7)
        assert a.statistic == b.statistic
        assert a.bootstrap_samples == b.bootstrap_samples
        assert a.reject == b.reject

    def test_threshold_is_empirical_quantile(self, two_qubit_truth_and_data):
        _, data = two_qubit_truth_and_data
        result = tr.bootstrap_pearson_test(data, 2, n_boot=40, alpha=0.1, seed=8)
        samples = np.array(result.bootstrap_samples)
        assert result.threshold == pytest.approx(np.quantile(samples, 0.9))
        assert result.reject == (result.statistic > result.threshold)
        assert result.method == "bootstrap"
        assert len(samples) + result.dropped_replicates == 40

    def test_power_against_underfitted_rank(self):
        # rank-3 four-qubit truth tested at rank 1 must be rejected
        truth = tr.draw_significant_state(4, 3, (66,), 0.05)
        rejections = 0
        for rep in range(5):
            data = tr.simulate_dataset(truth, 100, (66, rep))
            result = tr.bootstrap_pearson_test(data, 1, n_boot=30, seed=rep, restarts=3)
            rejections += result.reject
        assert rejections == 5
