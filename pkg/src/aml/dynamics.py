"""Reference states, Markovianity of the reference state, reduced dynamics and witness search."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .assignment import (AssignmentBasis, AssignmentMap, OperatorSubspace, Witness,
                         find_negative_image, u_consistency_check)
from .errors import NotHermitianError, ShapeError, UnitarityError
from .states import (MARKOV_TOL, DensityOperator, conditional_mutual_information,
                     cq_state, sample_states, validate_density)
from .tensor_linalg import (EIG_CLIP, HERMITICITY_TOL, PSD_TOL, LabeledOperator, _mat,
                            conjugation_superoperator, haar_unitary,
                            hermiticity_violation, partial_trace,
                            partial_trace_superoperator, relative_entropy,
                            superoperator_from_function, tensor, trace_distance,
                            unitarity_violation, vectorize)


@dataclass(frozen=True, eq=False)
class ReferenceState:
    omega_RS: DensityOperator
    omega_RSE: DensityOperator
    m: int

    def block(self, l: int, part: str = "SE") -> np.ndarray:
        """The l-th member, rho_S^(l) (part="S") or rho_SE^(l) (part="SE")."""
        a = np.zeros((self.m, self.m))
        a[l, l] = self.m
        return steered_set(self, a, part).matrix


def build_reference(basis) -> ReferenceState:
    """omega_RS = sum_l |l><l|/m (x) rho_S^(l) and omega_RSE likewise with rho_SE^(l).

    Accepts an AssignmentBasis (only its first m pairs are used) or a sequence
    of (rho_S, rho_SE) pairs.
    """
    pairs = basis.pairs if isinstance(basis, AssignmentBasis) else tuple(basis)
    if not pairs:
        raise ValueError("reference state needs at least one pair")
    if not isinstance(basis, AssignmentBasis):
        basis = AssignmentBasis(pairs)
        pairs = basis.pairs
    m = len(pairs)
    probs = np.full(m, 1.0 / m)
    omega_RS = cq_state(probs, [s for s, _ in pairs])
    omega_RSE = cq_state(probs, [j for _, j in pairs])
    return ReferenceState(omega_RS, omega_RSE, m)


def steered_set(omega: ReferenceState, A_R, part: str = "SE") -> LabeledOperator:
    """Tr_R[(A_R (x) I) omega] for omega = omega_RS (part="S") or omega_RSE (part="SE")."""
    a = _mat(A_R)
    if a.shape != (omega.m, omega.m):
        raise ShapeError(f"A_R has shape {a.shape}, expected {(omega.m, omega.m)}")
    state = {"S": omega.omega_RS, "SE": omega.omega_RSE}[part]
    rest = state.factors[1:]
    D = state.dim // omega.m
    t = state.matrix.reshape(omega.m, D, omega.m, D)
    return LabeledOperator(rest, np.einsum("ab,bxay->xy", a, t))


class MarkovianityReport(NamedTuple):
    gap: float
    markov: bool
    lhs: float  # S(omega_RSE || I/m (x) omega_SE), direct
    rhs: float  # S(omega_RS || I/m (x) omega_S), direct
    lhs_blocks: float  # (1/m) sum_l S(rho_SE^(l) || omega_SE)
    rhs_blocks: float  # (1/m) sum_l S(rho_S^(l) || omega_S)


def markovianity_report(omega: ReferenceState, tol: float = MARKOV_TOL) -> MarkovianityReport:
    m = omega.m
    gap = conditional_mutual_information(omega.omega_RSE)
    omega_SE = partial_trace(omega.omega_RSE, "R")
    omega_S = partial_trace(omega.omega_RS, "R")
    flat_R = DensityOperator([("R", m)], np.eye(m) / m)
    lhs = relative_entropy(omega.omega_RSE, tensor(flat_R, omega_SE))
    rhs = relative_entropy(omega.omega_RS, tensor(flat_R, omega_S))
    lhs_blocks = sum(relative_entropy(DensityOperator(omega_SE.factors, omega.block(l, "SE")), omega_SE)
                     for l in range(m)) / m
    rhs_blocks = sum(relative_entropy(DensityOperator(omega_S.factors, omega.block(l, "S")), omega_S)
                     for l in range(m)) / m
    return MarkovianityReport(gap, gap <= tol, lhs, rhs, lhs_blocks, rhs_blocks)


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Linear map L(C^in_dim) -> L(C^out_dim), column-stacking matrix."""

    in_dim: int
    out_dim: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.out_dim ** 2, self.in_dim ** 2):
            raise ShapeError(f"superoperator shape {mat.shape} incompatible with dims "
                             f"{self.in_dim} -> {self.out_dim}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def apply(self, x) -> np.ndarray:
        x = _mat(x)
        return (self.matrix @ x.reshape(-1, order="F")).reshape(self.out_dim, self.out_dim, order="F")

    __call__ = apply

    def choi(self, normalized: bool = True) -> np.ndarray:
        """sum_ij |i><j| (x) E(|i><j|), divided by in_dim when normalized."""
        d, D = self.in_dim, self.out_dim
        c = self.matrix.reshape(D, D, d, d, order="F").transpose(2, 0, 3, 1).reshape(d * D, d * D)
        return c / d if normalized else c

    def trace_preservation_error(self) -> float:
        row = np.eye(self.out_dim).reshape(-1, order="F") @ self.matrix
        return float(np.abs(row - np.eye(self.in_dim).reshape(-1, order="F")).max())

    def hermiticity_preservation_error(self) -> float:
        return hermiticity_violation(self.choi(normalized=False))

    def compose(self, other: "SuperOperator") -> "SuperOperator":
        """self after other."""
        return SuperOperator(other.in_dim, self.out_dim, self.matrix @ other.matrix)


def superoperator(fn, d_in: int, d_out: int | None = None) -> SuperOperator:
    d_out = d_in if d_out is None else d_out
    return SuperOperator(d_in, d_out, superoperator_from_function(fn, d_in, d_out))


def kraus_superoperator(kraus: Sequence) -> SuperOperator:
    ks = [_mat(k) for k in kraus]
    mat = sum(np.kron(k.conj(), k) for k in ks)
    return SuperOperator(ks[0].shape[1], ks[0].shape[0], mat)


def identity_channel(d: int) -> SuperOperator:
    return SuperOperator(d, d, np.eye(d * d))


def transpose_map(d: int) -> SuperOperator:
    return superoperator(lambda x: x.T, d)


def random_cp_superoperator(d: int, seed=None, n_kraus: int | None = None,
                            d_out: int | None = None) -> SuperOperator:
    """Random channel from a Haar isometry (Stinespring dilation)."""
    d_out = d if d_out is None else d_out
    n_kraus = d * d_out if n_kraus is None else n_kraus
    u = haar_unitary(d_out * n_kraus, seed).matrix
    iso = u[:, :d]
    kraus = [iso[k * d_out:(k + 1) * d_out, :] for k in range(n_kraus)]
    return kraus_superoperator(kraus)


def _require_unitary(U) -> np.ndarray:
    u = _mat(U)
    v = unitarity_violation(u)
    if v > 1e-10:
        raise UnitarityError(v, 1e-10)
    return u


def reduced_dynamics(lam: AssignmentMap, U) -> SuperOperator:
    """E_S = Tr_E o Ad_U o Lambda_S."""
    u = _require_unitary(U)
    if u.shape[0] != lam.d_S * lam.d_E:
        raise ShapeError(f"unitary of side {u.shape[0]} on S(x)E of dim {lam.d_S * lam.d_E}")
    mat = partial_trace_superoperator(lam.d_S, lam.d_E) @ conjugation_superoperator(u) @ lam.matrix
    return SuperOperator(lam.d_S, lam.d_S, mat)


def evolve_reduced(U, rho_SE, d_S: int) -> np.ndarray:
    """Tr_E(U rho_SE U^dag) for a joint operator, bypassing any assignment map."""
    u, r = _require_unitary(U), _mat(rho_SE)
    d_E = r.shape[0] // d_S
    out = u @ r @ u.conj().T
    return np.einsum("ajbj->ab", out.reshape(d_S, d_E, d_S, d_E))


@dataclass(frozen=True, eq=False)
class DynamicsVerdict:
    cp: bool
    choi_min_eig: float
    witness: Witness | None  # None means no witness among `samples` draws
    samples: int
    hermitian: bool
    trace_preserving: bool

    @property
    def positive_on_domain(self) -> str:
        return "no_witness" if self.witness is None else "witness"


def classify_dynamics(E: SuperOperator, domain: Sequence | None = None, samples: int = 1000,
                      seed: int = 0, tol: float = PSD_TOL) -> DynamicsVerdict:
    """CP via the Choi spectrum, positivity by sampling ``domain`` (None = all of D(H))."""
    choi = E.choi()
    herm = hermiticity_violation(choi) <= HERMITICITY_TOL
    lo = float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0])
    cp = herm and lo >= -tol
    witness = None
    if not cp:
        rng = np.random.default_rng(seed)
        states = sample_states(rng, E.in_dim, samples, domain)
        k, low = find_negative_image(E.matrix, states, E.out_dim)
        if low < -tol:
            witness = Witness(states[k], low, k)
    return DynamicsVerdict(cp, lo, witness, samples, herm, E.trace_preservation_error() <= 1e-10)


class Contraction(NamedTuple):
    before: float
    after: float
    contracted: bool


def contraction_probe(E: SuperOperator, pairs: Sequence, which: str = "trace_distance",
                      tol: float = 1e-9) -> list[Contraction]:
    """Compare D(rho, sigma) with D(E rho, E sigma) for each pair.

    For relative entropy, images that are not valid states give ``after = nan``
    and count as not contracted.
    """
    if which not in ("trace_distance", "relative_entropy"):
        raise ValueError(f"unknown distance {which!r}")
    out = []
    for rho, sigma in pairs:
        a, b = _mat(rho), _mat(sigma)
        ea, eb = E.apply(a), E.apply(b)
        if which == "trace_distance":
            before, after = trace_distance(a, b), trace_distance(ea, eb)
        else:
            before = relative_entropy(a, b)
            try:
                after = relative_entropy(validate_density(ea), validate_density(eb))
            except ValueError:
                out.append(Contraction(before, math.nan, False))
                continue
        contracted = after <= before + tol if math.isfinite(after) else before == math.inf
        out.append(Contraction(before, after, contracted))
    return out


@dataclass(frozen=True, eq=False)
class SearchWitness:
    unitary: np.ndarray
    state: np.ndarray
    eigenvalue: float
    trial: int


@dataclass(frozen=True, eq=False)
class SearchOutcome:
    witness: SearchWitness | None
    best_eigenvalue: float
    best_trial: int
    trials: int
    accepted: int
    rejected: int
    seed: int


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("AML_THREADS", "1") or 1)
    return max(1, threads)


def sample_unitary(rng: np.random.Generator, d_S: int, d_E: int, local: bool = False) -> np.ndarray:
    if local:
        return np.kron(haar_unitary(d_S, rng).matrix, haar_unitary(d_E, rng).matrix)
    return haar_unitary(d_S * d_E, rng).matrix


def counterexample_search(lam: AssignmentMap, trials: int = 200, seed: int = 0,
                          domain="vs", samples_per_trial: int = 64, tol: float = PSD_TOL,
                          V0: OperatorSubspace | None = None, unitary_sampler: str = "haar",
                          threads: int | None = None) -> SearchOutcome:
    """Random search for a joint unitary making the reduced dynamics non-positive.

    Each trial draws U from its own stream ``default_rng([seed, trial])``. With
    ``unitary_sampler="mixed"`` odd trials draw local unitaries U_S (x) U_E
    (which always preserve V_0) and even trials global Haar unitaries. When
    ``V0`` is nonzero, unitaries failing the U-consistency check are rejected
    and counted. ``domain`` is "vs" (span of the map's basis states), "full",
    or an explicit list of spanning states.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if unitary_sampler not in ("haar", "mixed"):
        raise ValueError(f"unknown unitary sampler {unitary_sampler!r}")
    if isinstance(domain, str):
        if domain == "vs":
            basis = [s.matrix for s, _ in lam.basis.pairs] if lam.basis is not None else None
        elif domain == "full":
            basis = None
        else:
            raise ValueError(f"unknown domain {domain!r}")
    else:
        basis = domain
    pt = partial_trace_superoperator(lam.d_S, lam.d_E)
    check_v0 = V0 is not None and V0.dim > 0

    def trial(t: int):
        rng = np.random.default_rng([seed, t])
        u = sample_unitary(rng, lam.d_S, lam.d_E, local=(unitary_sampler == "mixed" and t % 2 == 1))
        if check_v0 and not u_consistency_check(u, V0, d_S=lam.d_S).consistent:
            return None
        E = pt @ conjugation_superoperator(u) @ lam.matrix
        states = sample_states(rng, lam.d_S, samples_per_trial, basis)
        k, low = find_negative_image(E, states, lam.d_S)
        return u, states[k], low

    n = _thread_count(threads)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(trial, range(trials)))
    else:
        results = [trial(t) for t in range(trials)]

    best, best_t, accepted = math.inf, -1, 0
    for t, r in enumerate(results):
        if r is None:
            continue
        accepted += 1
        if r[2] < best:
            best, best_t = r[2], t
    witness = None
    if best_t >= 0 and best < -tol:
        u, state, low = results[best_t]
        witness = SearchWitness(u, state, low, best_t)
    return SearchOutcome(witness, best, best_t, trials, accepted, trials - accepted, seed)


def operator_sum_decomposition(E: SuperOperator, clip: float = EIG_CLIP) -> list[tuple[float, np.ndarray]]:
    """Terms (e_i, K_i) with E(x) = sum_i e_i K_i x K_i^dag, from the Choi eigendecomposition.

    The e_i are the eigenvalues of the unnormalized Choi matrix; the map is CP
    iff none is negative. Terms with |e_i| <= clip are dropped.
    """
    c = E.choi(normalized=False)
    v = hermiticity_violation(c)
    if v > HERMITICITY_TOL:
        raise NotHermitianError(v, HERMITICITY_TOL)
    w, vecs = np.linalg.eigh(0.5 * (c + c.conj().T))
    terms = []
    for e, vec in zip(w, vecs.T):
        if abs(e) > clip:
            terms.append((float(e), vec.reshape(E.in_dim, E.out_dim).T.copy()))
    return terms


def apply_operator_sum(terms, x) -> np.ndarray:
    x = _mat(x)
    return sum(e * k @ x @ k.conj().T for e, k in terms)
