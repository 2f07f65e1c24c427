"""Density operators, state families and tripartite entropy diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (HermiticityViolation, PositivityViolation, ShapeError,
                     TraceViolation)
from .tensor_linalg import (EIG_CLIP, PSD_TOL, FactorLike, LabeledOperator,
                            _as_factors, hermiticity_violation, operator,
                            partial_trace, von_neumann_entropy)

#: Default CMI threshold (bits) for declaring a state Markov.
MARKOV_TOL = 1e-7


class DensityOperator(LabeledOperator):
    """LabeledOperator known to be Hermitian, PSD and of unit trace.

    Construct through :func:`validate_density`; the bare constructor does not
    check anything and is used internally for operations that preserve the
    invariants (partial trace, tensor product, permutation).
    """


def validate_density(x, tol: float = PSD_TOL) -> DensityOperator:
    """Check the density-operator invariants and wrap ``x``.

    Raises HermiticityViolation, PositivityViolation or TraceViolation with
    the offending value attached.
    """
    x = operator(x)
    m = x.matrix
    herm = hermiticity_violation(m)
    if herm > tol:
        raise HermiticityViolation(herm, tol)
    m = 0.5 * (m + m.conj().T)
    lam = float(np.linalg.eigvalsh(m)[0])
    if lam < -tol:
        raise PositivityViolation(lam, tol)
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol:
        raise TraceViolation(tr, tol)
    return DensityOperator(x.factors, m)


def _rng(seed):
    return np.random.default_rng(seed)


def random_density(dim: int, rank: int | None = None, seed=None,
                   factors: Sequence[FactorLike] | None = None) -> DensityOperator:
    """Random state G G^dag / Tr with G a dim x rank Ginibre matrix."""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    rng = _rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    factors = factors if factors is not None else [("X", dim)]
    return DensityOperator(_as_factors(factors), 0.5 * (rho + rho.conj().T))


def haar_pure_state(dim: int, seed=None, factors: Sequence[FactorLike] | None = None) -> DensityOperator:
    rng = _rng(seed)
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    factors = factors if factors is not None else [("X", dim)]
    return DensityOperator(_as_factors(factors), np.outer(psi, psi.conj()))


def pure_state(psi, factors: Sequence[FactorLike] | None = None) -> DensityOperator:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    factors = factors if factors is not None else [("X", psi.size)]
    return DensityOperator(_as_factors(factors), np.outer(psi, psi.conj()))


def maximally_mixed(factors: Sequence[FactorLike]) -> DensityOperator:
    factors = _as_factors(factors)
    d = int(np.prod([f.dim for f in factors]))
    return DensityOperator(factors, np.eye(d) / d)


def maximally_entangled(d: int, labels: tuple[str, str] = ("R", "S")) -> DensityOperator:
    """|xi><xi| with |xi> = sum_l |l>|l> / sqrt(d)."""
    if d < 1:
        raise ShapeError("d must be >= 1")
    psi = np.eye(d).reshape(-1) / np.sqrt(d)
    return pure_state(psi, [(labels[0], d), (labels[1], d)])


def cq_state(probs: Sequence[float], payload_states: Sequence, pointer: str = "R",
             tol: float = PSD_TOL) -> DensityOperator:
    """Classical-quantum state sum_l p_l |l><l| (x) rho_l with an orthonormal pointer."""
    probs = np.asarray(probs, dtype=float)
    if len(probs) != len(payload_states) or len(probs) == 0:
        raise ShapeError(f"{len(probs)} probabilities for {len(payload_states)} payload states")
    if np.any(probs < -tol) or abs(probs.sum() - 1.0) > tol:
        raise ValueError(f"probabilities {probs.tolist()} are not a distribution")
    payloads = [operator(p) for p in payload_states]
    factors = payloads[0].factors
    if any(p.factors != factors for p in payloads):
        raise ShapeError("payload states must share factors")
    m = len(probs)
    d = payloads[0].dim
    out = np.zeros((m * d, m * d), dtype=complex)
    for l, (p, rho) in enumerate(zip(probs, payloads)):
        out[l * d:(l + 1) * d, l * d:(l + 1) * d] = p * rho.matrix
    return DensityOperator(_as_factors([(pointer, m)]) + factors, out)


@dataclass(frozen=True, eq=False)
class MarkovStructure:
    """Decomposition H_S = (+)_k H_{sL_k} (x) H_{sR_k}.

    ``blocks`` holds (dim sL_k, dim sR_k). ``embedding`` is a d_S x sum_k(dL*dR)
    isometry whose consecutive column groups span the blocks; ``None`` lays
    the blocks out along the computational basis.
    """

    blocks: tuple[tuple[int, int], ...]
    embedding: np.ndarray | None = None
    d_S: int | None = None

    def __post_init__(self):
        blocks = tuple((int(a), int(b)) for a, b in self.blocks)
        if not blocks or any(a < 1 or b < 1 for a, b in blocks):
            raise ShapeError(f"invalid block dims {blocks}")
        total = sum(a * b for a, b in blocks)
        if self.embedding is None:
            d_S = total if self.d_S is None else int(self.d_S)
            emb = np.eye(d_S, total, dtype=complex)
        else:
            emb = np.asarray(self.embedding, dtype=complex)
            d_S = emb.shape[0]
        if emb.shape != (d_S, total) or total > d_S:
            raise ShapeError(f"embedding shape {emb.shape} incompatible with blocks {blocks} and d_S={d_S}")
        if np.abs(emb.conj().T @ emb - np.eye(total)).max() > 1e-10:
            raise ShapeError("embedding columns are not orthonormal")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "d_S", d_S)

    @property
    def saturating(self) -> bool:
        return sum(a * b for a, b in self.blocks) == self.d_S

    def isometries(self) -> list[np.ndarray]:
        """Per-block isometries J_k : H_sL (x) H_sR -> H_S."""
        out, start = [], 0
        for a, b in self.blocks:
            out.append(self.embedding[:, start:start + a * b])
            start += a * b
        return out


@dataclass(frozen=True)
class MarkovBlocks:
    weights: tuple[float, ...]
    left_states: tuple  # sigma_{R sL_k}, factor order (R, sL)
    right_states: tuple  # sigma_{sR_k E}, factor order (sR, E)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError(f"weights {w.tolist()} are not a probability distribution")
        if not len(w) == len(self.left_states) == len(self.right_states):
            raise ShapeError("weights, left_states and right_states must have equal length")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "left_states", tuple(operator(s) for s in self.left_states))
        object.__setattr__(self, "right_states", tuple(operator(s) for s in self.right_states))


def markov_state(structure: MarkovStructure, blocks: MarkovBlocks,
                 labels: tuple[str, str, str] = ("R", "S", "E")) -> DensityOperator:
    """sigma_RSE = (+)_k lambda_k sigma_{R sL_k} (x) sigma_{sR_k E} on R (x) S (x) E."""
    n = len(structure.blocks)
    if len(blocks.weights) != n:
        raise ShapeError(f"{len(blocks.weights)} block states for {n} structure blocks")
    d_R = d_E = None
    for (a, b), left, right in zip(structure.blocks, blocks.left_states, blocks.right_states):
        if left.dim % a or right.dim % b:
            raise ShapeError(f"block ({a},{b}) incompatible with state dims {left.dim}, {right.dim}")
        dr, de = left.dim // a, right.dim // b
        if d_R is None:
            d_R, d_E = dr, de
        if (dr, de) != (d_R, d_E):
            raise ShapeError("all blocks must share the dimensions of R and E")
    d_S = structure.d_S
    out = np.zeros((d_R * d_S * d_E,) * 2, dtype=complex)
    for lam, J, left, right in zip(blocks.weights, structure.isometries(),
                                   blocks.left_states, blocks.right_states):
        K = np.kron(np.kron(np.eye(d_R), J), np.eye(d_E))
        out += lam * K @ np.kron(left.matrix, right.matrix) @ K.conj().T
    return validate_density(LabeledOperator([(labels[0], d_R), (labels[1], d_S), (labels[2], d_E)], out))


def _tripartite_labels(sigma) -> tuple[str, str, str]:
    sigma = operator(sigma)
    if len(sigma.factors) != 3:
        raise ShapeError(f"expected a tripartite operator, got factors {list(sigma.labels)}")
    return sigma.labels


def conditional_mutual_information(sigma_RSE) -> float:
    """I(R:E|S) = S(RS) + S(SE) - S(RSE) - S(S), in bits.

    Factors are read positionally as (R, S, E).
    """
    r, s, e = _tripartite_labels(sigma_RSE)
    if not isinstance(sigma_RSE, DensityOperator):
        sigma_RSE = validate_density(sigma_RSE)
    s_rs = von_neumann_entropy(partial_trace(sigma_RSE, e))
    s_se = von_neumann_entropy(partial_trace(sigma_RSE, r))
    s_s = von_neumann_entropy(partial_trace(sigma_RSE, [r, e]))
    return s_rs + s_se - von_neumann_entropy(sigma_RSE) - s_s


class MarkovDecision(NamedTuple):
    markov: bool
    gap: float


def is_markov(sigma_RSE, tol: float = MARKOV_TOL) -> MarkovDecision:
    gap = conditional_mutual_information(sigma_RSE)
    return MarkovDecision(gap <= tol, gap)


def ghz_state(labels: tuple[str, str, str] = ("R", "S", "E")) -> DensityOperator:
    psi = np.zeros(8)
    psi[0] = psi[7] = 1
    return pure_state(psi, [(l, 2) for l in labels])


def sample_states(rng: np.random.Generator, dim: int, n: int, domain=None) -> np.ndarray:
    """Draw ``n`` density matrices of side ``dim`` as an (n, dim, dim) array.

    With ``domain=None`` half are Haar pure states and half are mixed states of
    random rank. Otherwise ``domain`` is a list of density matrices spanning a
    subspace V_S, and the samples lie in D(H) intersected with V_S: half on the
    boundary (pushed from the barycenter along a random affine direction until
    the smallest eigenvalue hits zero), a quarter strictly inside along such
    rays, and a quarter convex mixtures of the spanning states.
    """
    if domain is None:
        n_pure = (n + 1) // 2
        psi = rng.standard_normal((n_pure, dim)) + 1j * rng.standard_normal((n_pure, dim))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        pure = np.einsum("ni,nj->nij", psi, psi.conj())
        mixed = np.empty((n - n_pure, dim, dim), dtype=complex)
        for k in range(n - n_pure):
            r = int(rng.integers(1, dim + 1))
            g = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
            rho = g @ g.conj().T
            mixed[k] = rho / np.trace(rho).real
        return np.concatenate([pure, mixed])

    basis = np.asarray([np.asarray(operator(b).matrix) for b in domain])
    m = len(basis)
    center = basis.mean(axis=0)
    if m == 1:
        return np.repeat(center[None], n, axis=0)
    n_edge = (n + 1) // 2
    n_ray = (n - n_edge + 1) // 2
    n_mix = n - n_edge - n_ray
    k = n_edge + n_ray
    # random traceless Hermitian directions inside the affine hull of the basis
    coeff = rng.standard_normal((k, m))
    coeff -= coeff.mean(axis=1, keepdims=True)
    dirs = np.einsum("km,mij->kij", coeff, basis)
    # every basis state is supported inside supp(center), so restrict there
    w, v = np.linalg.eigh(center)
    keep = w > EIG_CLIP
    vk = v[:, keep]
    whiten = vk / np.sqrt(w[keep])
    m_dirs = np.einsum("ai,kab,bj->kij", whiten.conj(), dirs, whiten)
    lo = np.linalg.eigvalsh(0.5 * (m_dirs + m_dirs.conj().transpose(0, 2, 1)))[:, 0]
    t_max = np.where(lo < -1e-14, -1.0 / np.minimum(lo, -1e-14), 0.0)
    t = t_max.copy()
    t[n_edge:] *= rng.uniform(0, 1, size=n_ray)
    pts = center[None] + t[:, None, None] * dirs
    pts = 0.5 * (pts + pts.conj().transpose(0, 2, 1))
    mix_w = rng.dirichlet(np.ones(m), size=n_mix)
    mixes = np.einsum("km,mij->kij", mix_w, basis)
    return np.concatenate([pts, mixes])


__all__ = [
    "DensityOperator", "validate_density", "random_density", "haar_pure_state", "pure_state",
    "maximally_mixed", "maximally_entangled", "cq_state", "MarkovStructure", "MarkovBlocks",
    "markov_state", "conditional_mutual_information", "MarkovDecision", "is_markov", "ghz_state",
    "sample_states", "MARKOV_TOL", "EIG_CLIP",
]
