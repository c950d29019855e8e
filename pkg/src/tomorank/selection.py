"""Model complexity, information criteria, rank scanning and likelihood
ratios.

The rank-r family of d-dimensional states has intrinsic dimension
p(d, r) = 2dr - r^2 - 1; both criteria penalize -2 l_hat with a multiple of
p, AIC with 2p and BIC with p log(N_tot) where N_tot is the total number of
measurements."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .inference import FitError, ModelFit, fit_rank
from .pauli import CountsDataset


def model_dim(d: int, r: int) -> int:
    """Intrinsic parameter count of rank-r states in dimension d."""
    if not 1 <= r <= d:
        raise ValueError(f"rank must be in [1, {d}], got {r}")
    return 2 * d * r - r * r - 1


def information_criteria(fit: ModelFit, data: CountsDataset) -> tuple[float, float]:
    """(AIC, BIC) of a fitted rank model on the dataset it was fitted to.

    A non-converged fit still yields values but triggers a warning.
    """
    if fit.data_fingerprint != data.fingerprint():
        raise ValueError("fit was not produced from this dataset")
    if not fit.converged:
        warnings.warn(
            f"information criteria computed from a non-converged rank-{fit.rank} fit",
            stacklevel=2,
        )
    p = model_dim(2**data.k, fit.rank)
    n_tot = data.total_count
    aic = -2.0 * fit.loglik + 2.0 * p
    bic = -2.0 * fit.loglik + p * np.log(n_tot)
    return float(aic), float(bic)


@dataclass(frozen=True)
class RankEntry:
    rank: int
    loglik: float
    aic: float
    bic: float
    converged: bool


@dataclass(frozen=True)
class RankScan:
    """Result of fitting ranks 1, 2, ... with early stopping."""

    entries: tuple[RankEntry, ...]
    fits: tuple[ModelFit, ...]
    selected_rank_aic: int
    selected_rank_bic: int
    stop_rank: int
    failed_rank: int | None = None

    def entry(self, rank: int) -> RankEntry:
        for e in self.entries:
            if e.rank == rank:
                return e
        raise KeyError(f"rank {rank} was not fitted")

    def fit(self, rank: int) -> ModelFit:
        for f in self.fits:
            if f.rank == rank:
                return f
        raise KeyError(f"rank {rank} was not fitted")


def scan_ranks(
    data: CountsDataset,
    *,
    stop_after_increases: int = 2,
    max_rank: int | None = None,
    restarts: int = 5,
    max_iter: int = 2000,
    grad_tol: float = 1e-6,
    seed=0,
) -> RankScan:
    """Fit increasing ranks, warm-starting each from the previous optimum.

    Stops early once both criteria have increased for `stop_after_increases`
    consecutive ranks, or at `max_rank` (default: full rank).  Selected ranks
    are the argmin of each criterion over the fitted ranks, ties going to the
    smaller rank.  A rank whose fit fails ends the scan with partial results.
    """
    d = 2**data.k
    top = d if max_rank is None else min(max_rank, d)
    entries: list[RankEntry] = []
    fits: list[ModelFit] = []
    failed_rank = None
    streak = 0
    previous: ModelFit | None = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for rank in range(1, top + 1):
            try:
                fit = fit_rank(
                    data,
                    rank,
                    restarts=restarts,
                    max_iter=max_iter,
                    grad_tol=grad_tol,
                    seed=seed,
                    warm_start=previous,
                )
            except FitError:
                failed_rank = rank
                break
            aic, bic = information_criteria(fit, data)
            entries.append(RankEntry(rank, fit.loglik, aic, bic, fit.converged))
            fits.append(fit)
            previous = fit
            if len(entries) >= 2:
                if entries[-1].aic > entries[-2].aic and entries[-1].bic > entries[-2].bic:
                    streak += 1
                else:
                    streak = 0
                if streak >= stop_after_increases:
                    break
    if not entries:
        raise FitError("rank scan produced no successful fit")
    aics = [e.aic for e in entries]
    bics = [e.bic for e in entries]
    return RankScan(
        entries=tuple(entries),
        fits=tuple(fits),
        selected_rank_aic=entries[int(np.argmin(aics))].rank,
        selected_rank_bic=entries[int(np.argmin(bics))].rank,
        stop_rank=entries[-1].rank,
        failed_rank=failed_rank,
    )


def log_likelihood_ratio(fit_hi: ModelFit, fit_lo: ModelFit) -> float:
    """2 (l_hat_hi - l_hat_lo) for nested rank fits on the same dataset."""
    if fit_hi.data_fingerprint != fit_lo.data_fingerprint:
        raise ValueError("fits come from different datasets")
    if fit_hi.rank <= fit_lo.rank:
        raise ValueError("fit_hi must have the larger rank")
    return 2.0 * (fit_hi.loglik - fit_lo.loglik)
