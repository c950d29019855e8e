"""Pauli measurement model for a register of k qubits.

A measurement setting assigns one Pauli axis (x, y or z) to each qubit; the
measurement projects onto the tensor-product eigenbasis of the chosen Paulis
and produces a string of +/-1 outcomes.  This module builds those bases,
computes outcome probabilities, expands matrices in the normalized Pauli
operator basis, and simulates count datasets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

import numpy as np

from .states import DensityMatrix, TrapezoidalFactor

AXES = "xyz"
OUTCOME_CHARS = "+-"
PAULI_LETTERS = "0xyz"

# Columns are the +1 and -1 eigenvectors of the corresponding Pauli matrix.
# The phase convention is fixed so that simulated data are bit-reproducible:
# e_+-^z = (1,0)/(0,1), e_+-^x = (1,+-1)/sqrt2, e_+-^y = (1,+-i)/sqrt2.
_EIGENBASES = {
    "z": np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex),
    "x": np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0),
    "y": np.array([[1.0, 1.0], [1.0j, -1.0j]], dtype=complex) / np.sqrt(2.0),
}

_PAULI = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

StateLike = Union[DensityMatrix, TrapezoidalFactor, np.ndarray]


def seed_entropy(seed) -> list[int]:
    """Normalize an int or tuple-of-ints seed into a SeedSequence entropy list."""
    if np.isscalar(seed):
        return [int(seed)]
    return [int(s) for s in seed]


def all_settings(k: int) -> list[str]:
    """All 3^k settings as k-letter strings over xyz, in canonical order."""
    if k < 1:
        raise ValueError(f"qubit count must be >= 1, got {k}")
    return ["".join(p) for p in itertools.product(AXES, repeat=k)]


def all_outcomes(k: int) -> list[str]:
    """All 2^k outcomes as k-letter strings over +-, in canonical index order."""
    return ["".join(p) for p in itertools.product(OUTCOME_CHARS, repeat=k)]


def outcome_index(outcome: str) -> int:
    """Canonical index of an outcome string: + -> bit 0, - -> bit 1, leftmost
    qubit most significant."""
    idx = 0
    for ch in outcome:
        if ch not in OUTCOME_CHARS:
            raise ValueError(f"invalid outcome character {ch!r}")
        idx = (idx << 1) | (ch == "-")
    return idx


def validate_setting(setting: str, k: int | None = None) -> None:
    if not setting or any(ch not in AXES for ch in setting):
        raise ValueError(f"invalid setting {setting!r}: expected letters over xyz")
    if k is not None and len(setting) != k:
        raise ValueError(f"setting {setting!r} has length {len(setting)}, expected {k}")


def setting_basis(setting: str) -> np.ndarray:
    """Orthonormal eigenbasis of a setting as a 2^k x 2^k matrix.

    Column s is the basis vector for the outcome with canonical index s.
    """
    validate_setting(setting)
    basis = _EIGENBASES[setting[0]]
    for axis in setting[1:]:
        basis = np.kron(basis, _EIGENBASES[axis])
    return basis


@lru_cache(maxsize=8)
def setting_basis_stack(k: int) -> np.ndarray:
    """All setting bases stacked as a (3^k, 2^k, 2^k) array (read-only)."""
    stack = np.stack([setting_basis(d) for d in all_settings(k)])
    stack.setflags(write=False)
    return stack


@lru_cache(maxsize=8)
def pauli_operator_stack(k: int) -> np.ndarray:
    """Normalized Pauli products 2^(-k/2) * sigma_w stacked over all 4^k words
    w in {0,x,y,z}^k, ordered like pauli_words(k)."""
    scale = 2.0 ** (-k / 2.0)
    ops = []
    for word in pauli_words(k):
        op = _PAULI[word[0]]
        for ch in word[1:]:
            op = np.kron(op, _PAULI[ch])
        ops.append(scale * op)
    stack = np.stack(ops)
    stack.setflags(write=False)
    return stack


def pauli_words(k: int) -> list[str]:
    """All 4^k index words over {0,x,y,z}, identity letter written as 0."""
    return ["".join(p) for p in itertools.product(PAULI_LETTERS, repeat=k)]


@lru_cache(maxsize=8)
def outcome_sign_matrix(k: int) -> np.ndarray:
    """(2^k, k) matrix of per-qubit outcome signs, +1 for bit 0 and -1 for bit 1."""
    signs = np.empty((2**k, k), dtype=np.int64)
    for idx in range(2**k):
        for j in range(k):
            bit = (idx >> (k - 1 - j)) & 1
            signs[idx, j] = 1 - 2 * bit
    signs.setflags(write=False)
    return signs


def _qubit_count_of(state: StateLike) -> int:
    if isinstance(state, TrapezoidalFactor):
        dim = state.d
    elif isinstance(state, DensityMatrix):
        dim = state.dim
    else:
        mat = np.asarray(state)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("state must be a square matrix")
        dim = mat.shape[0]
    k = dim.bit_length() - 1
    if 2**k != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return k


def _factor_columns(T: np.ndarray, setting: str) -> np.ndarray:
    """Apply the setting basis to an r x 2^k factor one qubit at a time.

    Returns T @ B where B has the setting's eigenvectors as columns; cost is
    O(r * 2^k * k) instead of a dense 2^k x 2^k product.
    """
    r = T.shape[0]
    k = len(setting)
    tensor = T.reshape((r,) + (2,) * k)
    for j, axis in enumerate(setting):
        # contract qubit axis j+1 with the single-qubit basis (rows index the
        # computational component, columns the outcome)
        tensor = np.moveaxis(
            np.tensordot(tensor, _EIGENBASES[axis], axes=([j + 1], [0])), -1, j + 1
        )
    return tensor.reshape(r, 2**k)


def outcome_probabilities(state: StateLike, setting: str) -> np.ndarray:
    """Outcome distribution of one setting, indexed canonically.

    Density matrices use the projector form <e_s| rho |e_s>; trapezoidal
    factors use squared column norms of T B_d, which is algebraically the same
    distribution for rho = T^* T / tr(T^* T).
    """
    k = _qubit_count_of(state)
    validate_setting(setting, k)
    if isinstance(state, TrapezoidalFactor):
        cols = _factor_columns(state.matrix, setting)
        weights = np.sum(np.abs(cols) ** 2, axis=0)
        return weights / np.sum(np.abs(state.matrix) ** 2)
    mat = state.matrix if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)
    basis = setting_basis(setting)
    probs = np.real(np.sum(basis.conj() * (mat @ basis), axis=0))
    return np.clip(probs, 0.0, None)


def probability_matrix(state: StateLike) -> np.ndarray:
    """Outcome probabilities for every setting, shape (3^k, 2^k).

    Rows follow the canonical setting order of all_settings(k).
    """
    k = _qubit_count_of(state)
    stack = setting_basis_stack(k)
    if isinstance(state, TrapezoidalFactor):
        cols = np.matmul(state.matrix, stack)
        weights = np.sum(np.abs(cols) ** 2, axis=1)
        return weights / np.sum(np.abs(state.matrix) ** 2)
    mat = state.matrix if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)
    probs = np.real(np.sum(stack.conj() * np.matmul(mat, stack), axis=1))
    return np.clip(probs, 0.0, None)


@dataclass(frozen=True, eq=False)
class CountsDataset:
    """Per-setting, per-outcome measurement counts.

    counts maps each k-letter setting string to a length-2^k integer vector in
    canonical outcome order.  The per-setting repetition count n(d) is the row
    sum.  A dataset is complete when all 3^k settings are present; fitting
    requires completeness.
    """

    k: int
    counts: dict[str, np.ndarray]

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"qubit count must be >= 1, got {self.k}")
        cleaned = {}
        for setting, row in self.counts.items():
            validate_setting(setting, self.k)
            arr = np.asarray(row)
            if arr.shape != (2**self.k,):
                raise ValueError(
                    f"setting {setting!r}: expected {2**self.k} outcome counts, got shape {arr.shape}"
                )
            if np.any(arr < 0) or not np.all(arr == np.floor(arr)):
                raise ValueError(f"setting {setting!r}: counts must be non-negative integers")
            arr = arr.astype(np.int64)
            arr.setflags(write=False)
            cleaned[setting] = arr
        object.__setattr__(self, "counts", cleaned)

    @property
    def is_complete(self) -> bool:
        return len(self.counts) == 3**self.k and all(d in self.counts for d in all_settings(self.k))

    @property
    def total_count(self) -> int:
        return int(sum(int(row.sum()) for row in self.counts.values()))

    def repetitions(self, setting: str) -> int:
        return int(self.counts[setting].sum())

    def count_matrix(self) -> np.ndarray:
        """Counts stacked over the canonical setting order; requires completeness."""
        if not self.is_complete:
            missing = [d for d in all_settings(self.k) if d not in self.counts]
            raise ValueError(f"incomplete dataset: missing settings {missing[:5]}...")
        return np.stack([self.counts[d] for d in all_settings(self.k)])

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(str(self.k).encode())
        for setting in sorted(self.counts):
            h.update(setting.encode())
            h.update(self.counts[setting].tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountsDataset):
            return NotImplemented
        return (
            self.k == other.k
            and self.counts.keys() == other.counts.keys()
            and all(np.array_equal(self.counts[d], other.counts[d]) for d in self.counts)
        )


def _conditional_binomial_multinomial(rng: np.random.Generator, n: int, probs: np.ndarray) -> np.ndarray:
    """Multinomial sample via sequential binomial conditioning."""
    out = np.zeros(len(probs), dtype=np.int64)
    remaining = int(n)
    prob_left = 1.0
    for j in range(len(probs) - 1):
        if remaining == 0:
            return out
        ratio = 1.0 if prob_left <= 0.0 else min(max(probs[j] / prob_left, 0.0), 1.0)
        out[j] = rng.binomial(remaining, ratio)
        remaining -= out[j]
        prob_left -= probs[j]
    out[-1] = remaining
    return out


def simulate_dataset(
    state: StateLike,
    n: int | Mapping[str, int],
    seed,
) -> CountsDataset:
    """Draw one multinomial count vector per setting, independently.

    n is either a single repetition count shared by all settings or a mapping
    setting -> count.  seed is an integer or a tuple of integers; each setting
    uses its own substream derived from (seed, setting index), so results do
    not depend on iteration order.
    """
    k = _qubit_count_of(state)
    settings = all_settings(k)
    if isinstance(n, Mapping):
        reps = {d: int(n[d]) for d in settings}
    else:
        reps = {d: int(n) for d in settings}
    if any(v < 1 for v in reps.values()):
        raise ValueError("repetition counts must be >= 1")
    entropy = seed_entropy(seed)
    probs = probability_matrix(state)
    counts = {}
    for idx, setting in enumerate(settings):
        rng = np.random.default_rng(np.random.SeedSequence(entropy + [idx]))
        counts[setting] = _conditional_binomial_multinomial(rng, reps[setting], probs[idx])
    return CountsDataset(k=k, counts=counts)


@dataclass(frozen=True)
class PauliCoefficients:
    """Expansion coefficients of a selfadjoint matrix in the normalized Pauli
    product basis, keyed by words over {0,x,y,z}."""

    k: int
    coeffs: dict[str, float]

    def vector(self) -> np.ndarray:
        """Coefficients ordered like pauli_words(k)."""
        return np.array([self.coeffs[w] for w in pauli_words(self.k)])


def pauli_expand(matrix: StateLike, tol: float = 1e-10) -> PauliCoefficients:
    """Coefficients tr(sigma_w~ rho) of a selfadjoint matrix; rejects
    non-selfadjoint input beyond tol."""
    mat = matrix.matrix if isinstance(matrix, DensityMatrix) else np.asarray(matrix, dtype=complex)
    k = _qubit_count_of(mat)
    if np.max(np.abs(mat - mat.conj().T)) > tol:
        raise ValueError("matrix is not selfadjoint within tolerance")
    stack = pauli_operator_stack(k)
    values = np.real(np.einsum("auv,vu->a", stack, mat))
    words = pauli_words(k)
    return PauliCoefficients(k=k, coeffs=dict(zip(words, values.tolist())))


def pauli_reconstruct(coeffs: PauliCoefficients) -> np.ndarray:
    """Inverse of pauli_expand: sum_w c_w sigma_w~."""
    stack = pauli_operator_stack(coeffs.k)
    return np.einsum("a,auv->uv", coeffs.vector(), stack)
