import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aml import errors
from aml.assignment import (AssignmentBasis, OperatorSubspace, apply_assignment, build_assignment,
                            canonical_extension, choi_of_assignment, classify_assignment,
                            consistency_check, cp_assignment_from_structure, first_dependent_index,
                            independence_rank, is_cp, kernel_component, max_pair_deviation,
                            positivity_falsifier, u_consistency_check)
from aml.states import MarkovStructure, maximally_entangled, random_density
from aml.tensor_linalg import haar_unitary, operator, partial_trace, vectorize

from conftest import ginibre, random_markov_instance

I2 = np.eye(2)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0])
P0, P1 = np.diag([1.0, 0]), np.diag([0, 1.0])
SWAP = np.eye(4)[[0, 2, 1, 3]]


def pauli_states():
    return [(I2 + SX) / 2, (I2 - SX) / 2, (I2 + SZ) / 2, (I2 + SY) / 2]


def pechukas_map(sigma):
    return build_assignment(AssignmentBasis(tuple((s, np.kron(s, sigma)) for s in pauli_states())))


def transposed_map(sigma):
    # Lambda(rho) = rho^T (x) sigma_E: positive, not CP; only the sigma_y state breaks consistency
    pairs = [(s, np.kron(s.T, sigma)) for s in pauli_states()]
    return build_assignment(AssignmentBasis(tuple(pairs[:3]), extension=(pairs[3],)))


def entangled_map():
    bell = maximally_entangled(2, ("S", "E")).matrix
    prod = np.kron(P0, P0)
    return build_assignment(AssignmentBasis.with_canonical_extension([(I2 / 2, bell), (P0, prod)]))


def test_independence_rank_examples():
    assert independence_rank([P0, P1]) == 2
    rho = random_density(3, seed=1).matrix
    assert independence_rank([rho, rho]) == 1
    assert independence_rank([(I2 + SX) / 2, (I2 - SX) / 2, (I2 + SZ) / 2, (I2 - SZ) / 2, (I2 + SY) / 2]) == 4
    assert first_dependent_index([P0, P1, I2 / 2]) == 2
    assert first_dependent_index([P0, P1]) is None


def test_basis_rejects_dependent_system_states():
    with pytest.raises(errors.RankDeficiencyError) as exc:
        AssignmentBasis(((P0, np.kron(P0, P0)), (P1, np.kron(P1, P0)), (I2 / 2, np.kron(I2 / 2, P0))))
    assert exc.value.index == 2


def test_basis_rejects_inconsistent_pair():
    with pytest.raises(ValueError):
        AssignmentBasis(((P0, np.kron(P1, P0)),))


def test_basis_rejects_too_many():
    states = pauli_states() + [(I2 - SZ) / 2]
    with pytest.raises(errors.RankDeficiencyError):
        AssignmentBasis(tuple((s, np.kron(s, P0)) for s in states))


def test_pechukas_map_is_product(rng):
    sigma = random_density(3, seed=rng).matrix
    lam = pechukas_map(sigma)
    for _ in range(5):
        rho = random_density(2, seed=rng).matrix
        assert np.abs(lam(rho).matrix - np.kron(rho, sigma)).max() < 1e-9
    assert np.abs(apply_assignment(lam, np.zeros((2, 2))).matrix).max() == 0


def test_identity_map_with_trivial_environment():
    lam = build_assignment(AssignmentBasis(tuple((s, s) for s in pauli_states())))
    assert lam.d_E == 1
    assert np.abs(lam.matrix - np.eye(4)).max() < 1e-12


def test_cq_basis_without_kernel(rng):
    s1, s2 = random_density(2, seed=rng).matrix, random_density(2, seed=rng).matrix
    lam = build_assignment(AssignmentBasis.with_canonical_extension([(P0, np.kron(P0, s1)), (P1, np.kron(P1, s2))]))
    assert np.abs(lam(P1).matrix - np.kron(P1, s2)).max() < 1e-9
    assert np.abs(lam(P0).matrix - np.kron(P0, s1)).max() < 1e-9


def test_incomplete_basis_span_error(rng):
    s1 = random_density(2, seed=rng).matrix
    lam = build_assignment(AssignmentBasis(((P0, np.kron(P0, s1)), (P1, np.kron(P1, s1)))))
    assert lam.domain is not None and lam.domain.dim == 2
    assert np.abs(lam(I2 / 2).matrix - np.kron(I2 / 2, s1)).max() < 1e-12
    with pytest.raises(errors.SpanError):
        lam((I2 + SX) / 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_assignment_trace_and_hermiticity_preserving(seed, d_E):
    rng = np.random.default_rng(seed)
    sys_states = [random_density(2, seed=rng).matrix for _ in range(2)]
    pairs = []
    for s in sys_states:
        # arbitrary joint state with the right marginal: correlated perturbation of s (x) sigma
        j = np.kron(s, random_density(d_E, seed=rng).matrix)
        pairs.append((s, j))
    lam = build_assignment(AssignmentBasis.with_canonical_extension(pairs, seed=seed % 1000))
    for _ in range(5):
        x = ginibre(rng, 2)
        h = x + x.conj().T
        out = lam(x).matrix
        assert abs(np.trace(out) - np.trace(x)) < 1e-10
        hout = lam(h).matrix
        assert np.abs(hout - hout.conj().T).max() < 1e-10


def test_consistency_examples(rng):
    sigma = random_density(2, seed=rng).matrix
    rep = consistency_check(pechukas_map(sigma))
    assert rep.consistent_on_domain and rep.consistent_everywhere
    lam = entangled_map()
    assert consistency_check(lam).consistent_on_domain
    block = cp_assignment_from_structure(MarkovStructure([(1, 1), (1, 1)]), [sigma, I2 / 2])
    rep = consistency_check(block, [P0, P1])
    assert rep.consistent_on_domain
    assert not rep.consistent_everywhere
    assert abs(rep.max_deviation_everywhere - 1) < 1e-12


def test_choi_examples(rng):
    sigma = random_density(2, seed=rng).matrix
    omega = choi_of_assignment(pechukas_map(sigma))
    assert omega.labels == ("R", "S", "E")
    xi = maximally_entangled(2).matrix
    assert np.abs(omega.matrix - np.kron(xi, sigma)).max() < 1e-12
    assert np.linalg.eigvalsh(omega.matrix)[0] >= -1e-12
    ident = build_assignment(AssignmentBasis(tuple((s, s) for s in pauli_states())))
    assert np.abs(choi_of_assignment(ident).matrix - xi).max() < 1e-12
    assert np.linalg.eigvalsh(choi_of_assignment(transposed_map(sigma)).matrix)[0] < -0.1


def test_is_cp_examples(rng):
    sigma = random_density(2, seed=rng).matrix
    assert is_cp(pechukas_map(sigma)).cp
    res = is_cp(transposed_map(sigma))
    assert not res.cp and res.min_eigenvalue < 0
    block = cp_assignment_from_structure(MarkovStructure([(1, 1), (1, 1)]), [sigma, I2 / 2])
    assert is_cp(block).cp


def test_falsifier_examples(rng):
    sigma = random_density(2, seed=rng).matrix
    for n in (10, 1000):
        assert positivity_falsifier(pechukas_map(sigma), samples=n, seed=3) is None
    t = transposed_map(sigma)
    assert not is_cp(t).cp
    assert positivity_falsifier(t, samples=1000, seed=0) is None
    lam = entangled_map()
    assert is_cp(lam).min_eigenvalue < -0.1
    w = positivity_falsifier(lam, samples=2000, seed=0)
    assert w is not None and w.eigenvalue < -1e-9
    assert np.linalg.eigvalsh(lam(w.state).matrix)[0] == pytest.approx(w.eigenvalue, abs=1e-12)


def test_classify_assignment(rng):
    sigma = random_density(2, seed=rng).matrix
    assert classify_assignment(pechukas_map(sigma)).verdict == "cp"
    assert classify_assignment(transposed_map(sigma), samples=500).verdict == "positive_no_cp_found"
    assert classify_assignment(entangled_map()).verdict == "hermitian_nonpositive"


def test_structure_map_examples(rng):
    sigma = random_density(3, seed=rng).matrix
    lam = cp_assignment_from_structure(MarkovStructure([(2, 1)]), [sigma])
    assert np.abs(lam.matrix - pechukas_map(sigma).matrix).max() < 1e-12
    s1, s2 = random_density(2, seed=rng).matrix, random_density(2, seed=rng).matrix
    cq = cp_assignment_from_structure(MarkovStructure([(1, 1), (1, 1)]), [s1, s2])
    assert np.abs(cq(P0).matrix - np.kron(P0, s1)).max() < 1e-15
    assert np.abs(cq(P1).matrix - np.kron(P1, s2)).max() < 1e-15
    assert np.abs(cq(np.outer(I2[0], I2[1])).matrix).max() == 0
    assert max_pair_deviation(cq, [(P0, np.kron(P0, s1)), (P1, np.kron(P1, s2))]) < 1e-15


def test_structure_map_requires_saturating():
    with pytest.raises(errors.ShapeError):
        cp_assignment_from_structure(MarkovStructure([(1, 1)], d_S=2), [I2 / 2])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_structure_maps_are_cp(seed):
    rng = np.random.default_rng(seed)
    structure, blocks = random_markov_instance(rng)
    if not structure.saturating:
        structure = MarkovStructure(structure.blocks, d_S=sum(a * b for a, b in structure.blocks))
    lam = cp_assignment_from_structure(structure, blocks.right_states)
    res = is_cp(lam)
    assert res.cp and res.min_eigenvalue >= -1e-10
    assert positivity_falsifier(lam, samples=200, seed=seed % 1000) is None


def test_kernel_component_examples(rng):
    f = [("S", 2), ("E", 2)]
    s1, s2 = random_density(2, seed=rng).matrix, random_density(2, seed=rng).matrix
    V = OperatorSubspace.span([np.kron(P0, s1), np.kron(P1, s2)], f)
    hat, zero = kernel_component(V)
    assert (hat.dim, zero.dim) == (2, 0)

    rho = random_density(2, seed=rng).matrix
    V = OperatorSubspace.span([np.kron(rho, s1), np.kron(rho, s2)], f)
    hat, zero = kernel_component(V)
    assert (hat.dim, zero.dim) == (1, 1)
    w = zero.basis[0]
    target = vectorize(np.kron(rho, s1 - s2))
    target /= np.linalg.norm(target)
    assert abs(abs(np.vdot(target, w)) - 1) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 8), st.sampled_from([2, 3]))
def test_kernel_component_dimensions(seed, k, M, d_E):
    rng = np.random.default_rng(seed)
    d_S = 2
    margs = [ginibre(rng, d_S) for _ in range(k)]
    ops = []
    for _ in range(M):
        x = ginibre(rng, d_S * d_E)
        tr_x = np.einsum("ajbj->ab", x.reshape(d_S, d_E, d_S, d_E))
        target = sum(c * m for c, m in zip(rng.normal(size=k), margs))
        ops.append(x - np.kron(tr_x - target, np.eye(d_E) / d_E))
    V = OperatorSubspace.span(ops, [("S", d_S), ("E", d_E)])
    hat, zero = kernel_component(V)
    m = independence_rank([np.einsum("ajbj->ab", o.reshape(d_S, d_E, d_S, d_E)) for o in ops])
    assert hat.dim + zero.dim == V.dim
    assert zero.dim == V.dim - m
    # V_hat (+) V_0 reproduces V, and V_0 really is traceless on E
    both = OperatorSubspace(V.factors, np.vstack([hat.basis, zero.basis]))
    for o in ops:
        assert both.residual(o) < 1e-10 * max(1, np.linalg.norm(o))
    for w in zero.operators():
        assert np.abs(partial_trace(w, "E").matrix).max() < 1e-10
    if hat.dim and zero.dim:
        assert np.abs(hat.basis.conj() @ zero.basis.T).max() < 1e-10


def test_u_consistency_examples(rng):
    f = [("S", 2), ("E", 2)]
    rho = np.diag([0.8, 0.2])
    s1, s2 = np.diag([0.5, 0.5]), np.diag([0.2, 0.8])
    _, V0 = kernel_component(OperatorSubspace.span([np.kron(rho, s1), np.kron(rho, s2)], f))
    for _ in range(10):
        ue = haar_unitary(2, rng).matrix
        assert u_consistency_check(np.kron(I2, ue), V0).consistent
    res = u_consistency_check(SWAP, V0)
    assert not res.consistent
    # V_0 basis element is normalized: W = rho (x) D / ||rho (x) D||, so Tr_E(SWAP W SWAP) = D / (||rho|| ||D||)
    assert abs(res.violation - 1 / np.linalg.norm(rho)) < 1e-12
    empty = OperatorSubspace(f, np.zeros((0, 16)))
    for _ in range(100):
        assert u_consistency_check(haar_unitary(4, rng), empty).consistent


def test_u_consistency_rejects_non_unitary():
    empty = OperatorSubspace([("S", 2), ("E", 2)], np.zeros((0, 16)))
    with pytest.raises(errors.UnitarityError):
        u_consistency_check(2 * np.eye(4), empty)


def test_canonical_extension_is_deterministic():
    a = canonical_extension([P0], 2, 3, seed=4)
    b = canonical_extension([P0], 2, 3, seed=4)
    assert len(a) == 3
    for (sa, ja), (sb, jb) in zip(a, b):
        assert np.array_equal(sa.matrix, sb.matrix) and np.array_equal(ja.matrix, jb.matrix)
        assert np.abs(ja.matrix - np.kron(sa.matrix, np.eye(3) / 3)).max() < 1e-15
