"""Likelihood evaluation, analytic gradients, fixed-rank maximum-likelihood
fitting, an iterative full-rank baseline, and linear inversion.

The count log-likelihood (factorial constants dropped) is

    l(rho) = sum_{s,d} N(s|d) log P_rho(s|d),

maximized over states rho = T^* T / tr(T^* T) with T an r x d upper
trapezoid.  The optimizer works on the mean log-likelihood l / N_tot, so
tolerances are per measurement and scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .pauli import (
    CountsDataset,
    pauli_reconstruct,
    pauli_words,
    PauliCoefficients,
    outcome_sign_matrix,
    probability_matrix,
    seed_entropy,
    setting_basis_stack,
)
from .states import DensityMatrix, TrapezoidalFactor, n_factor_entries, state_from_factor

LOG_FLOOR = 1e-12


class FitError(RuntimeError):
    """Raised when no optimization start produced a usable optimum."""


@dataclass(frozen=True)
class ModelFit:
    """Maximum-likelihood fit at a fixed rank."""

    rank: int
    factor: TrapezoidalFactor
    loglik: float
    converged: bool
    iterations: int
    restarts_used: int
    grad_norm: float
    data_fingerprint: str

    @property
    def state(self) -> DensityMatrix:
        return state_from_factor(self.factor)


def _require_complete(data: CountsDataset) -> None:
    if not data.is_complete:
        raise ValueError("dataset is incomplete; fitting and likelihoods need all 3^k settings")


def log_likelihood(state, data: CountsDataset) -> float:
    """sum_{s,d} N(s|d) log P(s|d); cells with N=0 contribute nothing, and a
    positive count on a zero-probability cell gives -inf."""
    _require_complete(data)
    probs = probability_matrix(state)
    counts = data.count_matrix()
    if probs.shape != counts.shape:
        raise ValueError("state dimension does not match the dataset")
    mask = counts > 0
    if np.any(probs[mask] <= 0.0):
        return float("-inf")
    return float(np.sum(counts[mask] * np.log(probs[mask])))


@lru_cache(maxsize=32)
def _trapezoid_indices(d: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.concatenate([np.full(d - i, i) for i in range(r)])
    cols = np.concatenate([np.arange(i, d) for i in range(r)])
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def _factor_matrix(x: np.ndarray, d: int, r: int) -> np.ndarray:
    m = n_factor_entries(d, r)
    rows, cols = _trapezoid_indices(d, r)
    mat = np.zeros((r, d), dtype=complex)
    mat[rows, cols] = x[:m] + 1j * x[m:]
    return mat


def _complex_gradient_to_real(grad_c: np.ndarray, d: int, r: int) -> np.ndarray:
    rows, cols = _trapezoid_indices(d, r)
    entries = grad_c[rows, cols]
    return np.concatenate([2.0 * entries.real, 2.0 * entries.imag])


def log_likelihood_gradient(factor: TrapezoidalFactor, data: CountsDataset) -> np.ndarray:
    """Exact gradient of log_likelihood with respect to the factor's free
    parameters (real parts first, then imaginary parts, row-major trapezoid).

    Raises if a positive count sits on a zero-probability cell, where the
    likelihood is -inf and the gradient undefined.
    """
    _require_complete(data)
    t = factor.matrix
    d, r = factor.d, factor.r
    basis = setting_basis_stack(data.k)
    counts = data.count_matrix().astype(float)
    norm = float(np.sum(np.abs(t) ** 2))
    if norm <= 0.0:
        raise ValueError("factor is identically zero")
    cols = np.matmul(t, basis)
    quad = np.sum(np.abs(cols) ** 2, axis=1)
    if np.any((counts > 0) & (quad <= 0.0)):
        raise ValueError("gradient undefined: positive count on a zero-probability cell")
    weights = np.where(counts > 0, counts / np.where(quad > 0, quad, 1.0), 0.0)
    grad_c = np.einsum("src,sqc->rq", cols * weights[:, None, :], basis.conj())
    grad_c -= (counts.sum() / norm) * t
    return _complex_gradient_to_real(grad_c, d, r)


def _mean_nll_and_grad(x, d, r, basis, counts, n_tot):
    """Clamped mean negative log-likelihood and its gradient.

    Probabilities below LOG_FLOOR are floored inside the log; floored cells
    contribute zero gradient.
    """
    t = _factor_matrix(x, d, r)
    norm = float(np.sum(np.abs(t) ** 2))
    if not np.isfinite(norm) or norm < 1e-100:
        return 1e10, np.zeros_like(x)
    cols = np.matmul(t, basis)
    quad = np.sum(np.abs(cols) ** 2, axis=1)
    probs = quad / norm
    active = (counts > 0) & (probs > LOG_FLOOR)
    floored = (counts > 0) & ~active
    ll = float(np.sum(counts[active] * np.log(probs[active])))
    if np.any(floored):
        ll += float(np.sum(counts[floored])) * np.log(LOG_FLOOR)
    weights = np.where(active, counts / np.where(quad > 0, quad, 1.0), 0.0)
    grad_c = np.einsum("src,sqc->rq", cols * weights[:, None, :], basis.conj())
    grad_c -= (float(counts[active].sum()) / norm) * t
    grad = _complex_gradient_to_real(grad_c, d, r)
    return -ll / n_tot, -grad / n_tot


def _polish(x0, d, r, basis, counts, n_tot, max_iter, grad_tol):
    n_params = len(x0)
    res = minimize(
        _mean_nll_and_grad,
        x0,
        args=(d, r, basis, counts, n_tot),
        method="L-BFGS-B",
        jac=True,
        options={
            "maxiter": max_iter,
            "maxfun": 20 * max_iter,
            "maxcor": 20,
            # stall guard; tight enough that the gradient criterion binds first
            "ftol": 1e-12,
            "gtol": grad_tol / np.sqrt(n_params),
        },
    )
    return res.x, int(res.nit)


def fit_rank(
    data: CountsDataset,
    rank: int,
    *,
    restarts: int = 5,
    max_iter: int = 2000,
    grad_tol: float = 1e-6,
    seed=0,
    warm_start: "ModelFit | TrapezoidalFactor | None" = None,
) -> ModelFit:
    """Best-of-multistart maximum-likelihood fit over rank-`rank` states.

    Starts are `restarts` random trapezoids plus, when `warm_start` (a
    ModelFit or a bare factor) is given, the previous optimum: a rank-(rank-1)
    warm start is embedded with a zero new row and also with a random new row
    of norm 1e-3; a same-rank one is reused directly.  The winner is the start
    with the highest exact log-likelihood (ties broken by start order).
    `grad_tol` applies to the 2-norm of the mean log-likelihood gradient;
    `converged` reports whether the winner met it.
    """
    _require_complete(data)
    d = 2**data.k
    if not 1 <= rank <= d:
        raise ValueError(f"rank must be in [1, {d}], got {rank}")
    basis = setting_basis_stack(data.k)
    counts = data.count_matrix().astype(float)
    n_tot = float(counts.sum())
    entropy = seed_entropy(seed)

    starts: list[np.ndarray] = []
    if warm_start is not None:
        warm_factor = warm_start.factor if isinstance(warm_start, ModelFit) else warm_start
        if warm_factor.r == rank:
            starts.append(warm_factor.to_parameters())
        elif warm_factor.r == rank - 1:
            prev = warm_factor.matrix
            embedded = np.zeros((rank, d), dtype=complex)
            embedded[: rank - 1] = prev
            starts.append(TrapezoidalFactor(embedded).to_parameters())
            rng = np.random.default_rng(np.random.SeedSequence(entropy + [rank, 10_000]))
            width = d - (rank - 1)
            row = rng.standard_normal(width) + 1j * rng.standard_normal(width)
            padded = embedded.copy()
            padded[rank - 1, rank - 1 :] = 1e-3 * row / np.linalg.norm(row)
            starts.append(TrapezoidalFactor(padded).to_parameters())
        else:
            raise ValueError("warm_start rank must equal rank or rank-1")
    for j in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy + [rank, j]))
        starts.append(TrapezoidalFactor.random(d, rank, rng).to_parameters())

    candidates = []
    for idx, x0 in enumerate(starts):
        try:
            x_opt, n_iter = _polish(x0, d, rank, basis, counts, n_tot, max_iter, grad_tol)
        except (np.linalg.LinAlgError, FloatingPointError):
            continue
        factor = TrapezoidalFactor(_factor_matrix(x_opt, d, rank))
        ll = log_likelihood(factor, data)
        if np.isnan(ll):
            continue
        candidates.append((ll, idx, factor, n_iter))
    if not candidates:
        raise FitError(f"all {len(starts)} starts diverged for rank {rank}")

    ll_best, _, factor_best, n_iter_best = max(candidates, key=lambda c: (c[0], -c[1]))
    if np.isfinite(ll_best):
        grad = log_likelihood_gradient(factor_best, data) / n_tot
        grad_norm = float(np.linalg.norm(grad))
    else:
        grad_norm = float("inf")
    return ModelFit(
        rank=rank,
        factor=factor_best,
        loglik=ll_best,
        converged=bool(grad_norm < grad_tol),
        iterations=n_iter_best,
        restarts_used=len(starts),
        grad_norm=grad_norm,
        data_fingerprint=data.fingerprint(),
    )


def fit_full_iterative(data: CountsDataset, max_iter: int = 1000, tol: float = 1e-10) -> DensityMatrix:
    """Full-rank MLE baseline via the fixed-point iteration
    rho <- normalize(R(rho) rho R(rho)) with R = sum (N/P) |e><e|.

    Starts at the maximally mixed state and stops when the log-likelihood
    improves by less than tol or max_iter is reached; always returns the last
    iterate.
    """
    _require_complete(data)
    d = 2**data.k
    basis = setting_basis_stack(data.k)
    counts = data.count_matrix().astype(float)
    rho = np.eye(d, dtype=complex) / d
    ll_old = log_likelihood(DensityMatrix(rho), data)
    for _ in range(max_iter):
        probs = np.real(np.sum(basis.conj() * np.matmul(rho, basis), axis=1))
        weights = counts / np.maximum(probs, LOG_FLOOR)
        r_op = np.einsum("suc,sc,svc->uv", basis, weights, basis.conj())
        nxt = r_op @ rho @ r_op
        nxt = (nxt + nxt.conj().T) / 2.0
        nxt /= np.trace(nxt).real
        rho = nxt
        mask = counts > 0
        probs = np.clip(np.real(np.sum(basis.conj() * np.matmul(rho, basis), axis=1)), 0.0, None)
        ll_new = (
            float("-inf")
            if np.any(probs[mask] <= 0.0)
            else float(np.sum(counts[mask] * np.log(probs[mask])))
        )
        if np.isfinite(ll_new) and np.isfinite(ll_old) and ll_new - ll_old < tol:
            break
        ll_old = ll_new
    return DensityMatrix(rho)


def naive_estimate(data: CountsDataset) -> np.ndarray:
    """Linear-inversion estimate of the state: each Pauli coefficient comes
    from the single setting matching its word, with z filling the identity
    letters.  Unbiased but generally not positive semidefinite."""
    _require_complete(data)
    k = data.k
    scale = 2.0 ** (-k / 2.0)
    signs = outcome_sign_matrix(k)
    coeffs = {}
    for word in pauli_words(k):
        if word == "0" * k:
            coeffs[word] = scale
            continue
        setting = "".join(ch if ch != "0" else "z" for ch in word)
        parity = np.ones(2**k, dtype=np.int64)
        for j, ch in enumerate(word):
            if ch != "0":
                parity = parity * signs[:, j]
        row = data.counts[setting]
        coeffs[word] = scale * float(parity @ row) / float(row.sum())
    return pauli_reconstruct(PauliCoefficients(k=k, coeffs=coeffs))


@dataclass(frozen=True)
class ChartFit:
    """Maximum-likelihood fit of a chart-parametrized family."""

    theta: np.ndarray
    loglik: float
    converged: bool


def fit_chart(
    data: CountsDataset,
    chart,
    theta0: np.ndarray | None = None,
    *,
    max_iter: int = 1000,
    grad_tol: float = 1e-7,
) -> ChartFit:
    """Maximize the count log-likelihood over a chart's parameters.

    Used for constrained submodel fits (for instance likelihood-ratio checks
    against a pinned-coordinate family).  The chart's ball domain is enforced
    with a smooth exterior penalty.
    """
    _require_complete(data)
    basis = setting_basis_stack(data.k)
    counts = data.count_matrix().astype(float)
    n_tot = float(counts.sum())
    x0 = np.asarray(chart.theta0 if theta0 is None else theta0, dtype=float)

    def objective(theta):
        margin = chart.domain_margin(theta)
        if margin <= 1e-10:
            return 10.0 + float(np.dot(theta, theta)), 2.0 * theta
        rho = chart.rho(theta)
        probs = np.clip(np.real(np.sum(basis.conj() * np.matmul(rho, basis), axis=1)), 0.0, None)
        active = (counts > 0) & (probs > LOG_FLOOR)
        floored = (counts > 0) & ~active
        ll = float(np.sum(counts[active] * np.log(probs[active])))
        if np.any(floored):
            ll += float(np.sum(counts[floored])) * np.log(LOG_FLOOR)
        jac = chart.jacobian(theta)
        dprobs = np.real(np.einsum("suc,juv,svc->jsc", basis.conj(), jac, basis))
        ratio = np.where(active, counts / np.where(probs > 0, probs, 1.0), 0.0)
        grad = dprobs.reshape(chart.dim, -1) @ ratio.reshape(-1)
        return -ll / n_tot, -grad / n_tot

    res = minimize(
        objective,
        x0,
        method="L-BFGS-B",
        jac=True,
        options={"maxiter": max_iter, "ftol": 1e-11, "gtol": grad_tol / np.sqrt(len(x0))},
    )
    theta_hat = res.x
    rho_hat = chart.rho(theta_hat)
    ll_hat = log_likelihood(DensityMatrix((rho_hat + rho_hat.conj().T) / 2), data)
    _, grad_at_opt = objective(theta_hat)
    return ChartFit(
        theta=theta_hat,
        loglik=ll_hat,
        converged=bool(np.linalg.norm(grad_at_opt) < grad_tol or res.success),
    )
