"""Fisher-information asymptotics, error bounds, goodness-of-fit statistics
and the parametric bootstrap.

Conventions: the Fisher matrix I1 is per repetition set, i.e. one shot of
every setting, so the asymptotic mean squared error of an efficient estimator
after n repetitions per setting is tr(G I1^{-1}) / n, with G the
Hilbert-Schmidt metric pulled back to chart coordinates."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import gammainc, gammaincinv

from .inference import FitError, ModelFit, fit_rank, log_likelihood
from .pauli import (
    CountsDataset,
    all_settings,
    probability_matrix,
    setting_basis_stack,
    simulate_dataset,
)
from .selection import model_dim

PROBABILITY_FLOOR = 1e-12


class SingularModelError(ValueError):
    """A cell probability or parity variance vanished where the Fisher
    information needs it positive."""


def _chart_point(chart, theta):
    return np.asarray(chart.theta0 if theta is None else theta, dtype=float)


def _probability_derivatives(chart, theta):
    """P(s|d) flattened over cells and dP/dtheta_j as a (p, cells) matrix."""
    basis = setting_basis_stack(_qubits_of(chart))
    rho = chart.rho(theta)
    probs = np.real(np.sum(basis.conj() * np.matmul(rho, basis), axis=1)).reshape(-1)
    jac = chart.jacobian(theta)
    dprobs = np.real(np.einsum("suc,juv,svc->jsc", basis.conj(), jac, basis))
    return probs, dprobs.reshape(chart.dim, -1)


def _qubits_of(chart) -> int:
    d = chart.d
    k = d.bit_length() - 1
    if 2**k != d:
        raise ValueError(f"chart dimension {d} is not a power of two")
    return k


def fisher_information(chart, theta: Optional[np.ndarray] = None) -> np.ndarray:
    """Classical Fisher matrix of one repetition set,
    I1_jk = sum_{d,s} dP_j dP_k / P.

    Requires every cell probability above 1e-12 (generic-state condition);
    otherwise the model is singular at this point.
    """
    theta = _chart_point(chart, theta)
    probs, dprobs = _probability_derivatives(chart, theta)
    if np.min(probs) <= PROBABILITY_FLOOR:
        raise SingularModelError(
            f"cell probability {np.min(probs):.2e} below {PROBABILITY_FLOOR}; "
            "Fisher information is singular here"
        )
    info = (dprobs / probs) @ dprobs.T
    return (info + info.T) / 2.0


def hs_metric(chart, theta: Optional[np.ndarray] = None) -> np.ndarray:
    """Metric G_jk = tr(drho_j drho_k) turning parameter error into squared
    Hilbert-Schmidt state error."""
    theta = _chart_point(chart, theta)
    jac = chart.jacobian(theta)
    flat = jac.reshape(chart.dim, -1)
    metric = np.real(flat @ flat.conj().T)
    return (metric + metric.T) / 2.0


@dataclass(frozen=True)
class FisherPair:
    """A chart point's Fisher matrix and Hilbert-Schmidt metric."""

    chart: object
    fisher: np.ndarray
    metric: np.ndarray

    @classmethod
    def compute(cls, chart, theta: Optional[np.ndarray] = None) -> "FisherPair":
        return cls(chart, fisher_information(chart, theta), hs_metric(chart, theta))


def asymptotic_mse(chart, n: int, theta: Optional[np.ndarray] = None) -> float:
    """tr(G I1^{-1}) / n, the large-n mean squared error of the MLE."""
    info = fisher_information(chart, theta)
    metric = hs_metric(chart, theta)
    try:
        solved = np.linalg.solve(info, metric)
    except np.linalg.LinAlgError as exc:
        raise SingularModelError("Fisher information is singular") from exc
    return float(np.trace(solved).real) / n


def quantum_mse_bound(k: int, n: int) -> float:
    """Best achievable pure-state MSE over all measurements,
    2 (2^k - 1) / (3^k n)."""
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    return 2.0 * (2**k - 1) / (3**k * n)


@lru_cache(maxsize=8)
def _parity_operator_stack(k: int) -> np.ndarray:
    """Full Pauli products sigma_d1 x ... x sigma_dk for each setting."""
    paulis = {
        "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
        "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
        "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    }
    ops = []
    for setting in all_settings(k):
        op = paulis[setting[0]]
        for ch in setting[1:]:
            op = np.kron(op, paulis[ch])
        ops.append(op)
    stack = np.stack(ops)
    stack.setflags(write=False)
    return stack


def coarse_grained_fisher(chart, theta: Optional[np.ndarray] = None) -> np.ndarray:
    """Fisher matrix of the coarse-grained data keeping only the full parity
    of each setting: sum_d dm_d dm_d^T / (1 - m_d^2) with
    m_d = tr(rho sigma_d1 x ... x sigma_dk)."""
    theta = _chart_point(chart, theta)
    ops = _parity_operator_stack(_qubits_of(chart))
    rho = chart.rho(theta)
    means = np.real(np.einsum("suv,vu->s", ops, rho))
    if np.max(np.abs(means)) >= 1.0 - PROBABILITY_FLOOR:
        raise SingularModelError("a setting parity has unit magnitude; the model is singular")
    jac = chart.jacobian(theta)
    dmeans = np.real(np.einsum("suv,jvu->js", ops, jac))
    info = (dmeans / (1.0 - means**2)) @ dmeans.T
    return (info + info.T) / 2.0


def measurement_kl(rho, tau) -> float:
    """KL divergence between the measurement distributions of two states,
    summed over all settings: sum_{d,s} P_rho log(P_rho / P_tau).

    0 log 0 counts as 0; a tau-null cell with positive rho probability gives
    +inf."""
    p = probability_matrix(rho).reshape(-1)
    q = probability_matrix(tau).reshape(-1)
    if p.shape != q.shape:
        raise ValueError("states act on different numbers of qubits")
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        return float("inf")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def pearson_statistic(data: CountsDataset, rho_hat) -> float:
    """Pearson T = sum (N - E)^2 / E with E(s|d) = n(d) P_rho(s|d).

    Cells with E = N = 0 contribute 0; E = 0 with N > 0 gives +inf."""
    if not data.is_complete:
        raise ValueError("Pearson statistic needs a complete dataset")
    counts = data.count_matrix().astype(float)
    reps = counts.sum(axis=1, keepdims=True)
    expected = reps * probability_matrix(rho_hat)
    if expected.shape != counts.shape:
        raise ValueError("state dimension does not match the dataset")
    null = expected <= 0.0
    if np.any(counts[null] > 0):
        return float("inf")
    active = ~null
    return float(np.sum((counts[active] - expected[active]) ** 2 / expected[active]))


def pearson_df(k: int, rank: int) -> int:
    """Degrees of freedom of the Pearson statistic at a fitted rank model:
    free data cells 3^k (2^k - 1) minus model parameters p(2^k, rank)."""
    return 3**k * (2**k - 1) - model_dim(2**k, rank)


@dataclass(frozen=True)
class ChiSquare:
    """Chi-square distribution with df degrees of freedom."""

    df: int

    def __post_init__(self):
        if self.df < 1:
            raise ValueError(f"df must be >= 1, got {self.df}")

    def cdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        out = np.where(x > 0, gammainc(self.df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def sf(self, x) -> float:
        return 1.0 - self.cdf(x)

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {q}")
        return float(2.0 * gammaincinv(self.df / 2.0, q))

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.chisquare(self.df, size=n)


@dataclass(frozen=True)
class TestResult:
    """Outcome of a level-alpha goodness-of-fit test of a rank hypothesis."""

    statistic: float
    df: int
    p_value: float
    threshold: float
    reject: bool
    method: str
    alpha: float
    asymptotic_p_value: float
    bootstrap_samples: tuple[float, ...] | None = None
    dropped_replicates: int = 0

    @property
    def decision(self) -> str:
        return "reject" if self.reject else "accept"


def pearson_chi2_test(data: CountsDataset, fit: ModelFit, alpha: float = 0.05) -> TestResult:
    """Asymptotic chi-square test of the hypothesis that the state has the
    fit's rank."""
    if fit.data_fingerprint != data.fingerprint():
        raise ValueError("fit was not produced from this dataset")
    stat = pearson_statistic(data, fit.state)
    df = pearson_df(data.k, fit.rank)
    dist = ChiSquare(df)
    threshold = dist.quantile(1.0 - alpha)
    p_value = dist.sf(stat) if np.isfinite(stat) else 0.0
    return TestResult(
        statistic=stat,
        df=df,
        p_value=float(p_value),
        threshold=threshold,
        reject=bool(stat > threshold),
        method="asymptotic",
        alpha=alpha,
        asymptotic_p_value=float(p_value),
    )


def bootstrap_pearson_test(
    data: CountsDataset,
    rank: int,
    n_boot: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    *,
    restarts: int = 5,
    boot_restarts: int = 2,
    max_iter: int = 2000,
    max_drop_fraction: float = 0.2,
) -> TestResult:
    """Parametric bootstrap calibration of the Pearson statistic.

    Fits the rank model, simulates n_boot datasets from the fitted state,
    refits each replicate at the same rank (warm-started from the outer fit),
    computes each replicate's Pearson statistic against its own refit, and
    compares the observed statistic to the empirical (1 - alpha) quantile.
    Replicates whose refit fails are dropped; more than max_drop_fraction of
    them aborts.  The asymptotic chi-square p-value is reported alongside.
    """
    if not data.is_complete:
        raise ValueError("bootstrap needs a complete dataset")
    outer = fit_rank(data, rank, restarts=restarts, max_iter=max_iter, seed=seed)
    observed = pearson_statistic(data, outer.state)
    reps = {d: data.repetitions(d) for d in all_settings(data.k)}

    stats: list[float] = []
    dropped = 0
    for b in range(n_boot):
        replicate = simulate_dataset(outer.factor, reps, seed=(seed, 1, b))
        try:
            refit = fit_rank(
                replicate,
                rank,
                restarts=boot_restarts,
                max_iter=max_iter,
                seed=seed,
                warm_start=outer.factor,
            )
        except FitError:
            dropped += 1
            continue
        stats.append(pearson_statistic(replicate, refit.state))
    if dropped > max_drop_fraction * n_boot:
        raise FitError(f"{dropped}/{n_boot} bootstrap replicates failed to refit")

    samples = np.array(stats)
    threshold = float(np.quantile(samples, 1.0 - alpha))
    p_value = float(np.mean(samples >= observed)) if np.isfinite(observed) else 0.0
    df = pearson_df(data.k, rank)
    asymptotic_p = ChiSquare(df).sf(observed) if np.isfinite(observed) else 0.0
    return TestResult(
        statistic=observed,
        df=df,
        p_value=p_value,
        threshold=threshold,
        reject=bool(observed > threshold),
        method="bootstrap",
        alpha=alpha,
        asymptotic_p_value=float(asymptotic_p),
        bootstrap_samples=tuple(float(s) for s in samples),
        dropped_replicates=dropped,
    )
