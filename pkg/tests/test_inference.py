import numpy as np
import pytest

import tomorank as tr
from tomorank.inference import FitError
from tomorank.states import n_factor_entries


@pytest.fixture(scope="module")
def mixed_qubit_data():
    truth = tr.DensityMatrix(np.array([[0.65, 0.15 + 0.1j], [0.15 - 0.1j, 0.35]], dtype=complex))
    return truth, tr.simulate_dataset(truth, 500, seed=31)


class TestLogLikelihood:
    def test_uniform_probabilities(self):
        data = tr.simulate_dataset(tr.DensityMatrix.maximally_mixed(1), 10, seed=0)
        ll = tr.log_likelihood(tr.DensityMatrix.maximally_mixed(1), data)
        assert ll == pytest.approx(-30 * np.log(2), abs=1e-9)
        assert ll == pytest.approx(-20.794, abs=1e-3)

    def test_zero_probability_cell(self):
        counts = {"x": np.array([5, 5]), "y": np.array([5, 5]), "z": np.array([5, 5])}
        data = tr.CountsDataset(k=1, counts=counts)
        assert tr.log_likelihood(tr.DensityMatrix.from_pure([1, 0]), data) == -np.inf

    def test_zero_count_cells_ignored(self):
        counts = {"x": np.array([5, 5]), "y": np.array([5, 5]), "z": np.array([10, 0])}
        data = tr.CountsDataset(k=1, counts=counts)
        ll = tr.log_likelihood(tr.DensityMatrix.from_pure([1, 0]), data)
        assert ll == pytest.approx(20 * np.log(0.5))

    def test_per_cell_summation_oracle(self, mixed_qubit_data):
        truth, data = mixed_qubit_data
        rho = tr.random_state(1, 2, seed=77)
        expected = 0.0
        for setting in tr.all_settings(1):
            probs = tr.outcome_probabilities(rho, setting)
            for idx in range(2):
                n_cell = data.counts[setting][idx]
                if n_cell > 0:
                    expected += n_cell * np.log(probs[idx])
        assert tr.log_likelihood(rho, data) == pytest.approx(expected, abs=1e-10)

    def test_incomplete_dataset_rejected(self):
        data = tr.CountsDataset(k=1, counts={"z": np.array([5, 5])})
        with pytest.raises(ValueError):
            tr.log_likelihood(tr.DensityMatrix.maximally_mixed(1), data)

    def test_factor_and_dense_paths_agree(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        rng = np.random.default_rng(6)
        factor = tr.TrapezoidalFactor.random(2, 2, rng)
        ll_factor = tr.log_likelihood(factor, data)
        ll_dense = tr.log_likelihood(tr.state_from_factor(factor), data)
        assert ll_factor == pytest.approx(ll_dense, abs=1e-8)


class TestGradient:
    @pytest.mark.parametrize("k,r,seed", [(1, 1, 0), (1, 2, 1), (2, 2, 2), (2, 3, 3)])
    def test_matches_finite_differences(self, k, r, seed):
        truth = tr.random_state(k, min(r, 2**k), seed=seed)
        data = tr.simulate_dataset(truth, 100, seed=seed + 50)
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(2 * n_factor_entries(2**k, r))
        grad = tr.log_likelihood_gradient(tr.TrapezoidalFactor.from_parameters(x, 2**k, r), data)

        def ll_of(vec):
            return tr.log_likelihood(tr.TrapezoidalFactor.from_parameters(vec, 2**k, r), data)

        h = 1e-6
        fd = np.array([(ll_of(x + h * e) - ll_of(x - h * e)) / (2 * h) for e in np.eye(len(x))])
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-6

    def test_stationary_at_exact_mle(self, mixed_qubit_data):
        # for one qubit the interior MLE reproduces the empirical frequencies
        _, data = mixed_qubit_data
        counts = data.count_matrix().astype(float)
        freqs = counts[:, 0] / counts.sum(axis=1)
        bloch = 2 * freqs - 1
        paulis = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
        rho = 0.5 * (np.eye(2) + sum(b * p for b, p in zip(bloch, paulis)))
        factor = tr.TrapezoidalFactor(np.linalg.cholesky(rho).conj().T)
        grad = tr.log_likelihood_gradient(factor, data)
        assert np.linalg.norm(grad) < 1e-6

    def test_scaling_direction_is_flat(self, mixed_qubit_data):
        # likelihood is invariant under T -> cT, so grad . x vanishes
        _, data = mixed_qubit_data
        rng = np.random.default_rng(8)
        x = rng.standard_normal(2 * n_factor_entries(2, 2))
        grad = tr.log_likelihood_gradient(tr.TrapezoidalFactor.from_parameters(x, 2, 2), data)
        assert abs(np.dot(grad, x)) < 1e-8 * np.linalg.norm(grad) * np.linalg.norm(x) + 1e-10

    def test_undefined_at_zero_probability(self):
        counts = {"x": np.array([5, 5]), "y": np.array([5, 5]), "z": np.array([5, 5])}
        data = tr.CountsDataset(k=1, counts=counts)
        factor = tr.TrapezoidalFactor(np.array([[1.0, 0.0]], dtype=complex))
        with pytest.raises(ValueError):
            tr.log_likelihood_gradient(factor, data)


def _bloch_of(state) -> np.ndarray:
    return np.sqrt(2) * tr.pauli_expand(state).vector()[1:]


def _grid_search_bloch_mle(data, resolution=0.005):
    """Dense grid search of the one-qubit likelihood over the Bloch ball."""
    counts = data.count_matrix().astype(float)
    grid = np.arange(-1 + resolution / 2, 1, resolution)
    axis_ll = []
    for axis in range(3):
        n_plus, n_minus = counts[axis]
        axis_ll.append(n_plus * np.log((1 + grid) / 2) + n_minus * np.log((1 - grid) / 2))
    fx, fy, fz = axis_ll
    best_val, best_pt = -np.inf, None
    yy, zz = np.meshgrid(grid, grid, indexing="ij")
    inner = fy[:, None] + fz[None, :]
    for ix, bx in enumerate(grid):
        mask = bx * bx + yy**2 + zz**2 <= 1.0
        if not mask.any():
            continue
        vals = np.where(mask, fx[ix] + inner, -np.inf)
        flat = np.argmax(vals)
        if vals.flat[flat] > best_val:
            best_val = vals.flat[flat]
            iy, iz = np.unravel_index(flat, vals.shape)
            best_pt = np.array([bx, grid[iy], grid[iz]])
    return best_pt, best_val


class TestFitRank:
    def test_consistency_from_pure_two_qubit_state(self):
        truth = tr.DensityMatrix.from_pure([1, 0, 0, 0])
        data = tr.simulate_dataset(truth, 10_000, seed=21)
        fit = tr.fit_rank(data, 1, seed=0)
        assert tr.hs_distance_sq(fit.state, truth) < 5e-3

    def test_rank_out_of_range(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        with pytest.raises(ValueError):
            tr.fit_rank(data, 3)

    def test_nested_monotonicity(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        f1 = tr.fit_rank(data, 1, seed=0)
        f2 = tr.fit_rank(data, 2, seed=0, warm_start=f1)
        assert f2.loglik >= f1.loglik - 1e-6

    def test_loglik_matches_recomputation(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        fit = tr.fit_rank(data, 2, seed=0)
        assert fit.loglik == pytest.approx(tr.log_likelihood(fit.state, data), abs=1e-8)
        assert fit.converged and fit.grad_norm < 1e-6

    def test_row_phase_gauge_leaves_loglik(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        fit = tr.fit_rank(data, 2, seed=0)
        rng = np.random.default_rng(4)
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=2))
        rotated = tr.TrapezoidalFactor(phases[:, None] * fit.factor.matrix)
        assert tr.log_likelihood(rotated, data) == pytest.approx(fit.loglik, abs=1e-8)

    def test_deterministic(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        a = tr.fit_rank(data, 2, seed=3)
        b = tr.fit_rank(data, 2, seed=3)
        assert np.array_equal(a.factor.matrix, b.factor.matrix)
        assert a.loglik == b.loglik

    def test_agrees_with_bloch_grid_oracle(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        fit = tr.fit_rank(data, 2, seed=0)
        grid_pt, _ = _grid_search_bloch_mle(data)
        assert np.max(np.abs(_bloch_of(fit.state) - grid_pt)) <= 0.005 + 1e-9

    def test_rank_deficiency_majority_on_pure_truth(self):
        truth = tr.random_state(1, 1, seed=60)
        deficient = 0
        for rep in range(100):
            data = tr.simulate_dataset(truth, 50, (60, rep))
            fit = tr.fit_rank(data, 2, seed=rep, restarts=3)
            if np.linalg.eigvalsh(fit.state.matrix).min() < 0.02:
                deficient += 1
        assert deficient > 50

    def test_warm_start_wrong_rank_rejected(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            tr.fit_rank(data, 1, warm_start=tr.TrapezoidalFactor.random(2, 2, rng))

    def test_incomplete_dataset_rejected(self):
        data = tr.CountsDataset(k=1, counts={"z": np.array([5, 5])})
        with pytest.raises(ValueError):
            tr.fit_rank(data, 1)


class TestFitFullIterative:
    def test_consistency_maximally_mixed(self):
        data = tr.simulate_dataset(tr.DensityMatrix.maximally_mixed(1), 20_000, seed=14)
        rho = tr.fit_full_iterative(data)
        assert np.max(np.abs(rho.matrix - np.eye(2) / 2)) < 1e-2

    def test_trace_preserved(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        rho = tr.fit_full_iterative(data, max_iter=1)
        assert np.trace(rho.matrix).real == pytest.approx(1.0, abs=1e-12)

    def test_rank_scan_reaches_iterative_value(self, mixed_qubit_data):
        _, data = mixed_qubit_data
        ll_iter = tr.log_likelihood(tr.fit_full_iterative(data), data)
        ll_rank = tr.fit_rank(data, 2, seed=0).loglik
        assert ll_iter <= ll_rank + 1e-4


class TestNaiveEstimate:
    def test_two_qubit_worked_formula(self):
        truth = tr.random_state(2, 2, seed=42)
        data = tr.simulate_dataset(truth, 400, seed=43)
        coeffs = tr.pauli_expand(tr.naive_estimate(data))
        row = data.counts["xz"]
        n = row.sum()
        manual = (row[0] + row[3] - row[1] - row[2]) / (2 * n)
        assert coeffs.coeffs["xz"] == pytest.approx(manual, abs=1e-12)

    def test_uniform_counts_give_maximally_mixed(self):
        counts = {d: np.full(4, 25) for d in tr.all_settings(2)}
        data = tr.CountsDataset(k=2, counts=counts)
        assert np.max(np.abs(tr.naive_estimate(data) - np.eye(4) / 4)) < 1e-12

    def test_monte_carlo_unbiasedness(self):
        truth = tr.random_state(1, 2, seed=50)
        true_coeffs = tr.pauli_expand(truth).vector()
        n_sims, n = 10_000, 30
        sums = np.zeros(4)
        sums_sq = np.zeros(4)
        for rep in range(n_sims):
            data = tr.simulate_dataset(truth, n, (50, rep))
            vec = tr.pauli_expand(tr.naive_estimate(data)).vector()
            sums += vec
            sums_sq += vec**2
        mean = sums / n_sims
        stderr = np.sqrt(np.maximum(sums_sq / n_sims - mean**2, 1e-30) / n_sims)
        bias = np.abs(mean - true_coeffs)
        # the identity word is exact; others within 3 standard errors
        assert bias[0] == 0.0
        assert np.all(bias[1:] < 3 * stderr[1:])

    def test_incomplete_dataset_rejected(self):
        data = tr.CountsDataset(k=1, counts={"z": np.array([5, 5])})
        with pytest.raises(ValueError):
            tr.naive_estimate(data)


class TestFitChart:
    def test_reaches_separable_optimum(self, mixed_qubit_data):
        truth, data = mixed_qubit_data
        chart = tr.CholeskyChart.from_state(truth)
        result = tr.fit_chart(data, chart)
        # compare against the closed-form interior optimum
        counts = data.count_matrix().astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = counts * np.log(counts / counts.sum(axis=1, keepdims=True))
        ll_exact = float(np.sum(np.where(counts > 0, terms, 0.0)))
        assert result.loglik == pytest.approx(ll_exact, abs=1e-6)
