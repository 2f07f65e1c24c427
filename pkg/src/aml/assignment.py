"""Assignment maps Lambda_S : L(H_S) -> L(H_S (x) H_E) built from state-set data.

An assignment map is stored as its superoperator matrix in the column-stacking
convention, a ``(d_S d_E)^2 x d_S^2`` complex array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import RankDeficiencyError, ShapeError, SpanError, UnitarityError
from .states import (DensityOperator, MarkovStructure, random_density, sample_states,
                     validate_density)
from .tensor_linalg import (HERMITICITY_TOL, PSD_TOL, FactorLike, LabeledOperator,
                            _as_factors, _mat, conjugation_superoperator, devectorize,
                            devectorize_batch, hermiticity_violation, operator,
                            partial_trace, partial_trace_superoperator,
                            superoperator_from_function, unitarity_violation, vectorize,
                            vectorize_batch)

RANK_THRESHOLD = 1e-10
CONSISTENCY_TOL = 1e-9


def _svd_rank(a: np.ndarray, threshold: float) -> int:
    if a.size == 0:
        return 0
    return int(np.sum(np.linalg.svd(a, compute_uv=False) > threshold))


def independence_rank(ops: Sequence, threshold: float = RANK_THRESHOLD) -> int:
    """Rank of the Gram matrix of the vectorized operators."""
    if len(ops) == 0:
        raise ValueError("need at least one operator")
    mats = [_mat(o) for o in ops]
    if any(m.shape != mats[0].shape for m in mats):
        raise ShapeError("operators differ in shape")
    vecs = np.array([m.reshape(-1, order="F") for m in mats])
    gram = vecs.conj() @ vecs.T
    return _svd_rank(gram, threshold)


def first_dependent_index(ops: Sequence, threshold: float = RANK_THRESHOLD) -> int | None:
    """Index of the first operator lying in the span of its predecessors."""
    for k in range(1, len(ops) + 1):
        if independence_rank(ops[:k], threshold) < k:
            return k - 1
    return None


@dataclass(frozen=True, eq=False)
class OperatorSubspace:
    """Subspace of L(H) stored as an orthonormal set of vectorized operators (rows)."""

    factors: tuple
    basis: np.ndarray

    def __post_init__(self):
        factors = _as_factors(self.factors)
        basis = np.asarray(self.basis, dtype=complex).reshape(-1, int(np.prod([f.dim for f in factors])) ** 2)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def span(cls, ops: Sequence, factors: Sequence[FactorLike] | None = None,
             threshold: float = RANK_THRESHOLD) -> "OperatorSubspace":
        ops = [operator(o) for o in ops]
        if factors is None:
            factors = ops[0].factors
        vecs = np.array([vectorize(o) for o in ops])
        _, s, vh = np.linalg.svd(vecs, full_matrices=False)
        k = int(np.sum(s > threshold))
        return cls(factors, vh[:k])

    def operators(self) -> list[LabeledOperator]:
        return [devectorize(b, self.factors) for b in self.basis]

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis.conj()

    def residual(self, x) -> float:
        v = vectorize(x)
        return float(np.linalg.norm(v - self.projector() @ v))

    def gram(self) -> np.ndarray:
        return self.basis.conj() @ self.basis.T


def _pair_dims(rho_S, rho_SE) -> tuple[int, int]:
    d_S = _mat(rho_S).shape[0]
    D = _mat(rho_SE).shape[0]
    if D % d_S:
        raise ShapeError(f"joint dimension {D} is not a multiple of system dimension {d_S}")
    return d_S, D // d_S


def _relabel_density(x, factors) -> DensityOperator:
    m = _mat(x)
    if isinstance(x, DensityOperator):
        return DensityOperator(factors, m)
    return validate_density(LabeledOperator(factors, m))


def _system_op(x, d_S: int) -> DensityOperator:
    return _relabel_density(x, [("S", d_S)])


def _joint_op(x, d_S: int, d_E: int) -> DensityOperator:
    return _relabel_density(x, [("S", d_S), ("E", d_E)])


@dataclass(frozen=True, eq=False)
class AssignmentBasis:
    """Pairs (rho_S^(i), rho_SE^(i)), i <= m, plus extension pairs i = m+1..d_S^2.

    The pairs must be marginally consistent; extension pairs need not be. All
    system operators together must be linearly independent.
    """

    pairs: tuple
    extension: tuple = ()
    d_S: int = field(init=False)
    d_E: int = field(init=False)

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("assignment basis needs at least one pair")
        d_S, d_E = _pair_dims(*self.pairs[0])
        pairs = tuple((_system_op(s, d_S), _joint_op(j, d_S, d_E)) for s, j in self.pairs)
        ext = tuple((_system_op(s, d_S), _joint_op(j, d_S, d_E)) for s, j in self.extension)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "extension", ext)
        object.__setattr__(self, "d_S", d_S)
        object.__setattr__(self, "d_E", d_E)
        if len(pairs) + len(ext) > d_S * d_S:
            raise RankDeficiencyError(d_S * d_S, f"at most {d_S * d_S} basis elements allowed, got {len(pairs) + len(ext)}")
        for i, (s, j) in enumerate(pairs):
            dev = np.abs(partial_trace(j, "E").matrix - s.matrix).max()
            if dev > CONSISTENCY_TOL:
                raise ValueError(f"pair {i}: Tr_E(rho_SE) differs from rho_S by {dev:.3e}")
        bad = first_dependent_index(self.system_states())
        if bad is not None:
            raise RankDeficiencyError(bad)

    @property
    def m(self) -> int:
        return len(self.pairs)

    @property
    def complete(self) -> bool:
        return self.m + len(self.extension) == self.d_S ** 2

    def all_pairs(self) -> tuple:
        return self.pairs + self.extension

    def system_states(self) -> list[DensityOperator]:
        return [s for s, _ in self.all_pairs()]

    def joint_states(self) -> list[DensityOperator]:
        return [j for _, j in self.all_pairs()]

    @classmethod
    def with_canonical_extension(cls, pairs: Sequence, seed: int = 0) -> "AssignmentBasis":
        """Complete ``pairs`` with rho_S^(i) (x) I_E/d_E for seeded random full-rank rho_S^(i)."""
        pairs = tuple(pairs)
        d_S, d_E = _pair_dims(*pairs[0])
        return cls(pairs, canonical_extension([p[0] for p in pairs], d_S, d_E, seed))


def canonical_extension(system_states: Sequence, d_S: int, d_E: int, seed: int = 0) -> tuple:
    """Extension pairs completing ``system_states`` to a basis of L(H_S)."""
    rng = np.random.default_rng(seed)
    current = [_mat(s) for s in system_states]
    out = []
    while len(current) < d_S * d_S:
        cand = random_density(d_S, seed=rng).matrix
        if independence_rank(current + [cand]) == len(current) + 1:
            current.append(cand)
            out.append((DensityOperator([("S", d_S)], cand),
                        DensityOperator([("S", d_S), ("E", d_E)], np.kron(cand, np.eye(d_E) / d_E))))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class AssignmentMap:
    """Linear map L(H_S) -> L(H_S (x) H_E) given by its superoperator matrix.

    ``domain`` is None when the map is defined on all of L(H_S); otherwise it
    is the subspace V_S on which it was specified.
    """

    d_S: int
    d_E: int
    matrix: np.ndarray
    basis: AssignmentBasis | None = None
    domain: OperatorSubspace | None = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        D = self.d_S * self.d_E
        if mat.shape != (D * D, self.d_S ** 2):
            raise ShapeError(f"superoperator shape {mat.shape} != {(D * D, self.d_S ** 2)}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def output_factors(self):
        return (("S", self.d_S), ("E", self.d_E))

    def apply(self, x) -> LabeledOperator:
        return apply_assignment(self, x)

    def __call__(self, x) -> LabeledOperator:
        return apply_assignment(self, x)


def build_assignment(basis: AssignmentBasis) -> AssignmentMap:
    """Solve Lambda(rho_S^(i)) = rho_SE^(i) for the superoperator matrix."""
    B = np.array([vectorize(s) for s in basis.system_states()]).T
    T = np.array([vectorize(j) for j in basis.joint_states()]).T
    u, s, vh = np.linalg.svd(B, full_matrices=False)
    if np.any(s <= RANK_THRESHOLD):
        raise RankDeficiencyError(first_dependent_index(basis.system_states()) or 0)
    pinv = (vh.conj().T / s) @ u.conj().T
    domain = None if basis.complete else OperatorSubspace.span(basis.system_states(), [("S", basis.d_S)])
    return AssignmentMap(basis.d_S, basis.d_E, T @ pinv, basis, domain)


def apply_assignment(lam: AssignmentMap, x) -> LabeledOperator:
    m = _mat(x)
    if m.shape != (lam.d_S, lam.d_S):
        raise ShapeError(f"input shape {m.shape} != ({lam.d_S}, {lam.d_S})")
    if lam.domain is not None:
        res = lam.domain.residual(m)
        if res > CONSISTENCY_TOL * max(1.0, np.linalg.norm(m)):
            raise SpanError(res)
    return devectorize(lam.matrix @ vectorize(m), lam.output_factors)


class ConsistencyReport(NamedTuple):
    consistent_on_domain: bool
    max_deviation_on_domain: float
    consistent_everywhere: bool
    max_deviation_everywhere: float


def _consistency_deviation(lam: AssignmentMap, xs) -> float:
    pt = partial_trace_superoperator(lam.d_S, lam.d_E)
    dev = 0.0
    for x in xs:
        v = vectorize(x)
        dev = max(dev, float(np.linalg.norm(pt @ (lam.matrix @ v) - v)))
    return dev


def consistency_check(lam: AssignmentMap, vs_basis: Sequence | None = None,
                      tol: float = CONSISTENCY_TOL) -> ConsistencyReport:
    """Check Tr_E(Lambda(x)) = x on V_S and on all of L(H_S).

    Deviations are Hilbert-Schmidt norms. ``vs_basis`` defaults to the system
    states of the map's own basis (i <= m).
    """
    if vs_basis is None:
        vs_basis = [s for s, _ in lam.basis.pairs] if lam.basis is not None else []
    d = lam.d_S
    on_vs = _consistency_deviation(lam, vs_basis)
    units = [np.eye(d)[:, [i]] @ np.eye(d)[[j], :] for i in range(d) for j in range(d)]
    full = _consistency_deviation(lam, units)
    return ConsistencyReport(on_vs <= tol, on_vs, full <= tol, full)


def choi_of_assignment(lam: AssignmentMap) -> LabeledOperator:
    """Omega_RSE = (id_R (x) Lambda)(|xi><xi|), unit trace for trace-preserving maps."""
    d, D = lam.d_S, lam.d_S * lam.d_E
    omega = np.zeros((d * D, d * D), dtype=complex)
    for j in range(d):
        for i in range(d):
            block = lam.matrix[:, i + d * j].reshape(D, D, order="F")
            omega[i * D:(i + 1) * D, j * D:(j + 1) * D] = block / d
    return LabeledOperator([("R", d), ("S", d), ("E", lam.d_E)], omega)


class CPResult(NamedTuple):
    cp: bool
    min_eigenvalue: float


def _choi_min_eig(choi: np.ndarray) -> tuple[float, float]:
    herm = hermiticity_violation(choi)
    return float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0]), herm


def is_cp(lam: AssignmentMap, tol: float = PSD_TOL) -> CPResult:
    lo, herm = _choi_min_eig(choi_of_assignment(lam).matrix)
    return CPResult(bool(lo >= -tol and herm <= HERMITICITY_TOL), lo)


@dataclass(frozen=True, eq=False)
class Witness:
    """An input state whose image has a negative eigenvalue."""

    state: np.ndarray
    eigenvalue: float
    index: int


def find_negative_image(matrix: np.ndarray, states: np.ndarray, d_out: int) -> tuple[int, float]:
    """Index and value of the most negative output eigenvalue over a batch of inputs."""
    outs = devectorize_batch(vectorize_batch(states) @ matrix.T, d_out)
    outs = 0.5 * (outs + outs.conj().transpose(0, 2, 1))
    lows = np.linalg.eigvalsh(outs)[:, 0]
    k = int(np.argmin(lows))
    return k, float(lows[k])


def positivity_falsifier(lam: AssignmentMap, samples: int = 1000, seed: int = 0,
                         tol: float = PSD_TOL, domain: Sequence | None = None) -> Witness | None:
    """Search random inputs for a non-PSD image.

    Returns the most violating sampled state, or None. None only means that no
    witness was found among ``samples`` draws.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    states = sample_states(rng, lam.d_S, samples, domain)
    k, low = find_negative_image(lam.matrix, states, lam.d_S * lam.d_E)
    if low < -tol:
        return Witness(states[k], low, k)
    return None


@dataclass(frozen=True, eq=False)
class MapClassification:
    verdict: str  # "cp" | "positive_no_cp_found" | "hermitian_nonpositive"
    choi_min_eig: float
    witness: Witness | None
    samples: int
    seed: int


def classify_assignment(lam: AssignmentMap, samples: int = 2000, seed: int = 0,
                        tol: float = PSD_TOL) -> MapClassification:
    cp, lo = is_cp(lam, tol)
    witness = None if cp else positivity_falsifier(lam, samples, seed, tol)
    if cp:
        verdict = "cp"
    elif witness is None:
        verdict = "positive_no_cp_found"
    else:
        verdict = "hermitian_nonpositive"
    return MapClassification(verdict, lo, witness, samples, seed)


def cp_assignment_from_structure(structure: MarkovStructure, right_states: Sequence) -> AssignmentMap:
    """The block map (+)_k id_{sL_k} (x) Lambda_{sR_k} with replacement channels onto sigma_{sR_k E}.

    Each input is first projected onto the blocks; coherences between blocks
    are discarded.
    """
    if len(right_states) != len(structure.blocks):
        raise ShapeError(f"{len(right_states)} right states for {len(structure.blocks)} blocks")
    if not structure.saturating:
        raise ShapeError("blocks must exhaust H_S for a trace-preserving assignment map")
    rights = [_mat(r) for r in right_states]
    d_E = None
    for (a, b), r in zip(structure.blocks, rights):
        if r.shape[0] % b:
            raise ShapeError(f"right state of side {r.shape[0]} incompatible with dim sR = {b}")
        if d_E is None:
            d_E = r.shape[0] // b
        if r.shape[0] // b != d_E:
            raise ShapeError("right states disagree on the environment dimension")
    d_S = structure.d_S
    isos = structure.isometries()

    def fn(x):
        out = np.zeros((d_S * d_E,) * 2, dtype=complex)
        for (a, b), J, sigma in zip(structure.blocks, isos, rights):
            xk = (J.conj().T @ x @ J).reshape(a, b, a, b)
            left = np.einsum("ibjb->ij", xk)
            K = np.kron(J, np.eye(d_E))
            out += K @ np.kron(left, sigma) @ K.conj().T
        return out

    return AssignmentMap(d_S, d_E, superoperator_from_function(fn, d_S, d_S * d_E))


def max_pair_deviation(lam: AssignmentMap, pairs: Sequence) -> float:
    """max_i ||Lambda(rho_S^(i)) - rho_SE^(i)||_HS."""
    return max(float(np.linalg.norm(lam.matrix @ vectorize(s) - vectorize(j))) for s, j in pairs)


def kernel_component(V: OperatorSubspace, d_S: int | None = None,
                     threshold: float = RANK_THRESHOLD) -> tuple[OperatorSubspace, OperatorSubspace]:
    """Split V into V_hat (+) V_0 with V_0 = V cap ker Tr_E.

    ``V`` lives on S (x) E; the last factor is traced. V_hat is the orthogonal
    complement of V_0 inside V.
    """
    dims = [f.dim for f in V.factors]
    if d_S is None:
        d_S = int(np.prod(dims[:-1]))
    d_E = int(np.prod(dims)) // d_S
    A = partial_trace_superoperator(d_S, d_E) @ V.basis.T
    if V.dim == 0:
        return V, V
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > threshold))
    coeffs = vh.conj()  # rows: coefficient vectors, first r span the row space
    hat = coeffs[:r] @ V.basis
    zero = coeffs[r:] @ V.basis
    return OperatorSubspace(V.factors, hat), OperatorSubspace(V.factors, zero)


class UConsistency(NamedTuple):
    consistent: bool
    violation: float


def u_consistency_check(U, V0: OperatorSubspace, tol: float = CONSISTENCY_TOL,
                        d_S: int | None = None) -> UConsistency:
    """Is Tr_E(U W U^dag) = 0 for every basis element W of V_0?"""
    u = _mat(U)
    uv = unitarity_violation(u)
    if uv > 1e-10:
        raise UnitarityError(uv, 1e-10)
    dims = [f.dim for f in V0.factors]
    if d_S is None:
        d_S = int(np.prod(dims[:-1]))
    d_E = int(np.prod(dims)) // d_S
    if V0.dim == 0:
        return UConsistency(True, 0.0)
    out = partial_trace_superoperator(d_S, d_E) @ (conjugation_superoperator(u) @ V0.basis.T)
    viol = float(np.linalg.norm(out, axis=0).max())
    return UConsistency(viol <= tol, viol)
