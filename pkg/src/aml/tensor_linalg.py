"""Labeled tensor-product linear algebra.

Operators carry an ordered tuple of named factors, so that partial traces and
tensor products can be written in terms of subsystem names (``"R"``, ``"S"``,
``"E"``) instead of axis bookkeeping. Matrices are row-major in the factor
order: the first factor is the most significant index.

Vectorization follows the column-stacking convention,
``vec(A X B) = (B^T kron A) vec(X)``.

All logarithms are base 2.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import LabelError, NotHermitianError, ShapeError

HERMITICITY_TOL = 1e-9
PSD_TOL = 1e-9
EIG_CLIP = 1e-12

#: Returned by :func:`relative_entropy` when the support condition fails.
INFINITE = math.inf


@dataclass(frozen=True)
class SubsystemLabel:
    name: str
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ShapeError(f"subsystem {self.name!r} has dimension {self.dim} < 1")
        object.__setattr__(self, "dim", int(self.dim))


FactorLike = Union[SubsystemLabel, tuple]


def _as_factors(factors: Iterable[FactorLike]) -> tuple[SubsystemLabel, ...]:
    out = tuple(f if isinstance(f, SubsystemLabel) else SubsystemLabel(*f) for f in factors)
    names = [f.name for f in out]
    if len(set(names)) != len(names):
        raise LabelError(f"duplicate subsystem labels in {names}")
    return out


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    """A square complex matrix over an ordered list of labeled tensor factors."""

    factors: tuple[SubsystemLabel, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        factors = _as_factors(self.factors)
        mat = np.array(self.matrix, dtype=complex)
        side = math.prod(f.dim for f in factors)
        if mat.shape != (side, side):
            raise ShapeError(f"matrix shape {mat.shape} does not match factors "
                             f"{[(f.name, f.dim) for f in factors]}")
        mat.setflags(write=False)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "matrix", mat)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def dag(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.matrix.conj().T)

    def with_matrix(self, matrix) -> "LabeledOperator":
        """Same factors, new entries (always returns a plain LabeledOperator)."""
        return LabeledOperator(self.factors, matrix)

    def __repr__(self):
        dims = ", ".join(f"{f.name}={f.dim}" for f in self.factors)
        return f"{type(self).__name__}({dims})"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def operator(matrix, factors: Sequence[FactorLike] | None = None) -> LabeledOperator:
    """Wrap ``matrix`` as a LabeledOperator.

    Without ``factors`` a single factor named ``"X"`` is used. Existing
    LabeledOperators pass through unchanged.
    """
    if isinstance(matrix, LabeledOperator):
        return matrix
    matrix = np.asarray(matrix, dtype=complex)
    if factors is None:
        factors = [("X", matrix.shape[0])]
    return LabeledOperator(factors, matrix)


def _mat(x) -> np.ndarray:
    return x.matrix if isinstance(x, LabeledOperator) else np.asarray(x, dtype=complex)


def _same_kind(template, factors, matrix):
    # density in, density out for structure-preserving operations
    from .states import DensityOperator

    if isinstance(template, DensityOperator):
        return DensityOperator(factors, matrix)
    return LabeledOperator(factors, matrix)


def tensor(a: LabeledOperator, b: LabeledOperator, *more: LabeledOperator) -> LabeledOperator:
    """Kronecker product with concatenated factor lists."""
    if more:
        return tensor(tensor(a, b), *more)
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise LabelError(f"labels {sorted(clash)} appear on both operands")
    from .states import DensityOperator

    mat = np.kron(a.matrix, b.matrix)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(a.factors + b.factors, mat)
    return LabeledOperator(a.factors + b.factors, mat)


def _check_labels(x: LabeledOperator, names: Iterable[str]) -> list[str]:
    names = list(names)
    unknown = [n for n in names if n not in x.labels]
    if unknown:
        raise LabelError(f"unknown labels {unknown}; operator has {list(x.labels)}")
    return names


def partial_trace(x: LabeledOperator, traced: Iterable[str] | str) -> LabeledOperator:
    """Trace out the named factors. Remaining factors keep their order."""
    if isinstance(traced, str):
        traced = [traced]
    traced = set(_check_labels(x, traced))
    n = len(x.factors)
    dims = x.dims
    t = x.matrix.reshape(dims + dims)
    keep = [i for i in range(n) if x.factors[i].name not in traced]
    # einsum subscripts: row axes 0..n-1, column axes n..2n-1, traced pairs share a letter
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    cols = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = [letters[i] for i in keep] + [cols[i] for i in keep]
    res = np.einsum("".join(letters[:n]) + "".join(cols) + "->" + "".join(out), t)
    side = math.prod(dims[i] for i in keep)
    factors = tuple(x.factors[i] for i in keep)
    return _same_kind(x, factors, res.reshape(side, side))


def permute(x: LabeledOperator, order: Sequence[str]) -> LabeledOperator:
    """Reorder the tensor factors of ``x`` to the given label order."""
    order = _check_labels(x, order)
    if sorted(order) != sorted(x.labels):
        raise LabelError(f"permutation {order} does not cover labels {list(x.labels)}")
    n = len(x.factors)
    perm = [x.labels.index(name) for name in order]
    t = x.matrix.reshape(x.dims + x.dims).transpose(perm + [p + n for p in perm])
    factors = tuple(x.factors[p] for p in perm)
    return _same_kind(x, factors, t.reshape(x.dim, x.dim))


def identity(factors: Sequence[FactorLike]) -> LabeledOperator:
    factors = _as_factors(factors)
    return LabeledOperator(factors, np.eye(math.prod(f.dim for f in factors)))


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns


def hermiticity_violation(h) -> float:
    m = _mat(h)
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def _require_hermitian(m: np.ndarray, tol: float) -> None:
    v = hermiticity_violation(m)
    if v > tol:
        raise NotHermitianError(v, tol)


def hermitian_eig(h, tol: float = HERMITICITY_TOL) -> Spectrum:
    """Eigendecomposition of a Hermitian operator, eigenvalues ascending."""
    m = _mat(h)
    _require_hermitian(m, tol)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return Spectrum(w, v)


def min_eigenvalue(h, tol: float = HERMITICITY_TOL) -> float:
    m = _mat(h)
    _require_hermitian(m, tol)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def _entropy_of_eigenvalues(w: np.ndarray, clip: float) -> float:
    p = w[w > clip]
    return float(-np.sum(p * np.log2(p)))


def _as_density(rho):
    from .states import DensityOperator, validate_density

    if isinstance(rho, DensityOperator):
        return rho
    return validate_density(operator(rho))


def von_neumann_entropy(rho, clip: float = EIG_CLIP) -> float:
    """S(rho) = -Tr(rho log2 rho) in bits."""
    rho = _as_density(rho)
    w = np.linalg.eigvalsh(rho.matrix)
    return max(_entropy_of_eigenvalues(w, clip), 0.0)


def relative_entropy(rho, sigma, clip: float = EIG_CLIP) -> float:
    """S(rho||sigma) in bits, or :data:`INFINITE` when supp(rho) is not in supp(sigma).

    Support containment is decided from the eigenvectors of ``sigma`` whose
    eigenvalues are at most ``clip``: if ``rho`` has more than ``clip`` weight
    on that null space, the result is infinite.
    """
    labeled = isinstance(rho, LabeledOperator) and isinstance(sigma, LabeledOperator)
    rho, sigma = _as_density(rho), _as_density(sigma)
    # bare arrays carry no factor structure, so only the total size must agree
    if (rho.dims != sigma.dims) if labeled else (rho.dim != sigma.dim):
        raise ShapeError(f"dimension mismatch: {rho.dims} vs {sigma.dims}")
    wr = np.linalg.eigvalsh(rho.matrix)
    ws, vs = np.linalg.eigh(sigma.matrix)
    # diagonal of rho in sigma's eigenbasis
    weights = np.real(np.einsum("ij,ik,kj->j", vs.conj(), rho.matrix, vs))
    null = ws <= clip
    if weights[null].sum() > clip:
        return INFINITE
    cross = float(np.sum(weights[~null] * np.log2(ws[~null])))
    value = -_entropy_of_eigenvalues(wr, clip) - cross
    return max(value, 0.0) if value > -PSD_TOL else value


def trace_norm(x) -> float:
    m = _mat(x)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of rho - sigma."""
    a, b = _mat(rho), _mat(sigma)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return 0.5 * trace_norm(a - b)


def haar_unitary(dim: int, seed=None, factors: Sequence[FactorLike] | None = None) -> LabeledOperator:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if dim < 1:
        raise ShapeError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return operator(q, factors if factors is not None else [("X", dim)])


def unitarity_violation(u) -> float:
    """Return max|U^dag U - I|."""
    m = _mat(u)
    return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max())


def vectorize(x) -> np.ndarray:
    """Column-stacking vectorization."""
    return _mat(x).reshape(-1, order="F")


def devectorize(v, factors: Sequence[FactorLike]) -> LabeledOperator:
    factors = _as_factors(factors)
    side = math.prod(f.dim for f in factors)
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != side * side:
        raise ShapeError(f"vector of length {v.size} cannot hold a {side}x{side} operator")
    return LabeledOperator(factors, v.reshape(side, side, order="F"))


def vectorize_batch(xs: np.ndarray) -> np.ndarray:
    """Rows are vec(x) for a stack of matrices of shape (n, d, d)."""
    xs = np.asarray(xs)
    n = xs.shape[0]
    return xs.transpose(0, 2, 1).reshape(n, -1)


def devectorize_batch(vs: np.ndarray, side: int) -> np.ndarray:
    return vs.reshape(-1, side, side).transpose(0, 2, 1)


def matrix_unit(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def superoperator_from_function(fn, d_in: int, d_out: int) -> np.ndarray:
    """Matrix S with vec(fn(X)) = S vec(X), built from the matrix units."""
    S = np.zeros((d_out * d_out, d_in * d_in), dtype=complex)
    for j in range(d_in):
        for i in range(d_in):
            S[:, i + d_in * j] = _mat(fn(matrix_unit(d_in, i, j))).reshape(-1, order="F")
    return S


@lru_cache(maxsize=None)
def partial_trace_superoperator(d_keep: int, d_traced: int) -> np.ndarray:
    """Matrix of X -> Tr_2(X) on C^d_keep (x) C^d_traced, column stacking."""

    def fn(x):
        return np.einsum("ajbj->ab", x.reshape(d_keep, d_traced, d_keep, d_traced))

    S = superoperator_from_function(fn, d_keep * d_traced, d_keep)
    S.setflags(write=False)
    return S


def conjugation_superoperator(u) -> np.ndarray:
    """Matrix of X -> U X U^dag, i.e. conj(U) kron U."""
    u = _mat(u)
    return np.kron(u.conj(), u)
