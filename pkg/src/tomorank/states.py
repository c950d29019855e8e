"""State representations: density matrices, trapezoidal Cholesky factors,
differentiable charts, random states and distances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

HERMITICITY_TOL = 1e-10
EIGENVALUE_TOL = 1e-10
TRACE_TOL = 1e-10
RANK_TOL = 1e-12


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        return state.matrix
    return np.asarray(state, dtype=complex)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A 2^k x 2^k selfadjoint, positive semidefinite, unit-trace matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        dim = mat.shape[0]
        k = dim.bit_length() - 1
        if dim < 2 or 2**k != dim:
            raise ValueError(f"dimension {dim} is not a power of two >= 2")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not selfadjoint within tolerance")
        if abs(np.trace(mat).real - 1.0) > TRACE_TOL or abs(np.trace(mat).imag) > TRACE_TOL:
            raise ValueError(f"trace must be 1, got {np.trace(mat)}")
        if np.linalg.eigvalsh(mat).min() < -EIGENVALUE_TOL:
            raise ValueError("density matrix has a significantly negative eigenvalue")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def rank(self, tol: float = RANK_TOL) -> int:
        return int(np.sum(self.eigenvalues() > tol))

    @classmethod
    def from_pure(cls, vector) -> "DensityMatrix":
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        vec = vec / np.linalg.norm(vec)
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def maximally_mixed(cls, k: int) -> "DensityMatrix":
        return cls(np.eye(2**k, dtype=complex) / 2**k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.matrix.shape == other.matrix.shape and np.array_equal(self.matrix, other.matrix)


def n_factor_entries(d: int, r: int) -> int:
    """Number of complex entries in the r x d upper trapezoid."""
    return r * d - r * (r - 1) // 2


@dataclass(frozen=True, eq=False)
class TrapezoidalFactor:
    """An r x d upper-trapezoidal complex factor T; the induced state is
    T^* T / tr(T^* T), which has rank at most r."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2:
            raise ValueError("factor must be a 2d array")
        r, d = mat.shape
        if not 1 <= r <= d:
            raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
        for i in range(1, r):
            if np.any(mat[i, :i] != 0):
                raise ValueError("factor must be upper-trapezoidal (zeros below the diagonal)")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def r(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def to_parameters(self) -> np.ndarray:
        """Free entries as a real vector: real parts of the trapezoid in
        row-major order, then imaginary parts in the same order."""
        entries = np.concatenate([self.matrix[i, i:] for i in range(self.r)])
        return np.concatenate([entries.real, entries.imag])

    @classmethod
    def from_parameters(cls, theta: np.ndarray, d: int, r: int) -> "TrapezoidalFactor":
        m = n_factor_entries(d, r)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2 * m,):
            raise ValueError(f"expected parameter vector of length {2 * m}, got {theta.shape}")
        entries = theta[:m] + 1j * theta[m:]
        mat = np.zeros((r, d), dtype=complex)
        pos = 0
        for i in range(r):
            width = d - i
            mat[i, i:] = entries[pos : pos + width]
            pos += width
        return cls(mat)

    @classmethod
    def random(cls, d: int, r: int, rng: np.random.Generator) -> "TrapezoidalFactor":
        """Standard complex Gaussian trapezoid, Frobenius-normalized."""
        mat = np.zeros((r, d), dtype=complex)
        for i in range(r):
            width = d - i
            mat[i, i:] = rng.standard_normal(width) + 1j * rng.standard_normal(width)
        return cls(mat / np.linalg.norm(mat))


def state_from_factor(factor: TrapezoidalFactor) -> DensityMatrix:
    """rho = T^* T / tr(T^* T); raises on a zero factor."""
    gram = factor.matrix.conj().T @ factor.matrix
    norm = np.trace(gram).real
    if norm <= 0.0:
        raise ValueError("factor is identically zero")
    mat = gram / norm
    return DensityMatrix((mat + mat.conj().T) / 2.0)


def random_state(k: int, r: int, seed: int) -> DensityMatrix:
    """A random rank-r state of k qubits: rho = T^* T / tr with T an r x 2^k
    standard complex Gaussian matrix.  r=1 gives a Haar-random pure state."""
    d = 2**k
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= 2^k, got r={r}, k={k}")
    rng = np.random.default_rng(seed)
    t = (rng.standard_normal((r, d)) + 1j * rng.standard_normal((r, d))) / np.sqrt(2.0)
    gram = t.conj().T @ t
    mat = gram / np.trace(gram).real
    return DensityMatrix((mat + mat.conj().T) / 2.0)


def hs_distance_sq(a, b) -> float:
    """Squared Hilbert-Schmidt (norm-two) distance, sum_ij |a_ij - b_ij|^2."""
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise ValueError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    return float(np.sum(np.abs(ma - mb) ** 2))


class PureStateChart:
    """Chart of the pure-state manifold around a reference vector.

    The anchor is the largest-modulus coefficient of the reference state; its
    amplitude is sqrt(1 - |theta|^2) and the remaining coefficients are
    theta_j + i theta_{m+j} with m = 2^k - 1.  The reference state itself sits
    at theta0.  Valid for |theta| < 1.
    """

    def __init__(self, reference_vector):
        vec = np.asarray(reference_vector, dtype=complex).reshape(-1)
        vec = vec / np.linalg.norm(vec)
        self.d = vec.shape[0]
        self.anchor = int(np.argmax(np.abs(vec)))
        # rotate the global phase so the anchor coefficient is real positive
        phase = vec[self.anchor] / abs(vec[self.anchor])
        vec = vec * phase.conj()
        self.others = np.array([i for i in range(self.d) if i != self.anchor])
        self.dim = 2 * (self.d - 1)
        self.theta0 = np.concatenate([vec[self.others].real, vec[self.others].imag])

    def domain_margin(self, theta) -> float:
        """1 - |theta|^2; the chart is valid where this is positive."""
        theta = np.asarray(theta, dtype=float)
        return 1.0 - float(np.dot(theta, theta))

    def state_vector(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        m = self.d - 1
        sq = 1.0 - np.dot(theta, theta)
        if sq <= 0.0:
            raise ValueError("theta outside the chart domain |theta| < 1")
        vec = np.zeros(self.d, dtype=complex)
        vec[self.anchor] = np.sqrt(sq)
        vec[self.others] = theta[:m] + 1j * theta[m:]
        return vec

    def rho(self, theta) -> np.ndarray:
        vec = self.state_vector(theta)
        return np.outer(vec, vec.conj())

    def jacobian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        m = self.d - 1
        vec = self.state_vector(theta)
        amp = vec[self.anchor].real
        jac = np.empty((self.dim, self.d, self.d), dtype=complex)
        for j in range(self.dim):
            dvec = np.zeros(self.d, dtype=complex)
            if j < m:
                dvec[self.others[j]] = 1.0
            else:
                dvec[self.others[j - m]] = 1.0j
            dvec[self.anchor] = -theta[j] / amp
            jac[j] = np.outer(dvec, vec.conj()) + np.outer(vec, dvec.conj())
        return jac


class CholeskyChart:
    """Full-rank chart: rho = T^* T with T upper triangular, positive diagonal
    and T_11 = sqrt(1 - |theta|^2).

    theta stacks the real parts of the off-diagonal entries (row-major), then
    the imaginary parts, then the diagonal entries T_22 .. T_dd, for a total
    of d^2 - 1 coordinates.  Trace one is automatic on |theta| < 1.
    """

    def __init__(self, d: int, theta0: np.ndarray | None = None):
        self.d = d
        self.dim = d * d - 1
        self._off = [(i, j) for i in range(d) for j in range(i + 1, d)]
        self.theta0 = np.zeros(self.dim) if theta0 is None else np.asarray(theta0, dtype=float)

    @classmethod
    def from_state(cls, state) -> "CholeskyChart":
        """Chart anchored at a full-rank state (theta0 read off its Cholesky root)."""
        mat = _as_matrix(state)
        # rho = T^* T with T upper and positive diagonal; T is the adjoint of
        # the standard lower Cholesky root
        t = np.linalg.cholesky(mat).conj().T
        d = mat.shape[0]
        chart = cls(d)
        off = np.array([t[i, j] for (i, j) in chart._off])
        theta0 = np.concatenate([off.real, off.imag, np.real(np.diag(t)[1:])])
        chart.theta0 = theta0
        return chart

    def domain_margin(self, theta) -> float:
        """1 - |theta|^2; the chart is valid where this is positive."""
        theta = np.asarray(theta, dtype=float)
        return 1.0 - float(np.dot(theta, theta))

    def _factor(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        sq = 1.0 - np.dot(theta, theta)
        if sq <= 0.0:
            raise ValueError("theta outside the chart domain |theta| < 1")
        n_off = len(self._off)
        t = np.zeros((self.d, self.d), dtype=complex)
        for idx, (i, j) in enumerate(self._off):
            t[i, j] = theta[idx] + 1j * theta[n_off + idx]
        t[np.arange(1, self.d), np.arange(1, self.d)] = theta[2 * n_off :]
        t[0, 0] = np.sqrt(sq)
        return t

    def rho(self, theta) -> np.ndarray:
        t = self._factor(theta)
        return t.conj().T @ t

    def jacobian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        t = self._factor(theta)
        t11 = t[0, 0].real
        n_off = len(self._off)
        jac = np.empty((self.dim, self.d, self.d), dtype=complex)
        for coord in range(self.dim):
            dt = np.zeros((self.d, self.d), dtype=complex)
            if coord < n_off:
                i, j = self._off[coord]
                dt[i, j] = 1.0
            elif coord < 2 * n_off:
                i, j = self._off[coord - n_off]
                dt[i, j] = 1.0j
            else:
                i = coord - 2 * n_off + 1
                dt[i, i] = 1.0
            dt[0, 0] = -theta[coord] / t11
            jac[coord] = dt.conj().T @ t + t.conj().T @ dt
        return jac


class PinnedChart:
    """A chart with some coordinates frozen at fixed values; the remaining
    coordinates form the reduced parameter vector."""

    def __init__(self, base, pinned_indices, pinned_values):
        self.base = base
        self.d = base.d
        self.pinned_indices = np.asarray(pinned_indices, dtype=int)
        self.pinned_values = np.asarray(pinned_values, dtype=float)
        self.free_indices = np.array(
            [i for i in range(base.dim) if i not in set(self.pinned_indices.tolist())]
        )
        self.dim = len(self.free_indices)
        self.theta0 = np.asarray(base.theta0, dtype=float)[self.free_indices]

    def _full(self, theta) -> np.ndarray:
        full = np.empty(self.base.dim)
        full[self.free_indices] = np.asarray(theta, dtype=float)
        full[self.pinned_indices] = self.pinned_values
        return full

    def domain_margin(self, theta) -> float:
        return self.base.domain_margin(self._full(theta))

    def rho(self, theta) -> np.ndarray:
        return self.base.rho(self._full(theta))

    def jacobian(self, theta) -> np.ndarray:
        return self.base.jacobian(self._full(theta))[self.free_indices]


Chart = Union[PureStateChart, CholeskyChart, PinnedChart]
