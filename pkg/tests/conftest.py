import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def ginibre(rng, d, k=None):
    k = d if k is None else k
    return rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))


def random_hermitian(rng, d):
    g = ginibre(rng, d)
    return (g + g.conj().T) / 2


def random_markov_instance(rng, max_d_S=4):
    """Random block structure on d_S <= max_d_S with random block states."""
    from aml.states import MarkovBlocks, MarkovStructure, random_density

    d_S = int(rng.integers(2, max_d_S + 1))
    blocks, left = [], d_S
    while left > 0:
        size = int(rng.integers(1, left + 1))
        divisors = [a for a in range(1, size + 1) if size % a == 0]
        a = int(rng.choice(divisors))
        blocks.append((a, size // a))
        left -= size
    saturating = rng.random() < 0.7 or len(blocks) == 1
    if not saturating:
        blocks = blocks[:-1]
    structure = MarkovStructure(blocks, d_S=d_S)
    if rng.random() < 0.5:
        # random isometric embedding instead of the computational layout
        q, _ = np.linalg.qr(ginibre(rng, d_S))
        structure = MarkovStructure(blocks, embedding=q[:, :sum(a * b for a, b in blocks)])
    d_R, d_E = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(len(blocks)))
    lefts = [random_density(d_R * a, rank=int(rng.integers(1, d_R * a + 1)), seed=rng) for a, _ in blocks]
    rights = [random_density(b * d_E, rank=int(rng.integers(1, b * d_E + 1)), seed=rng) for _, b in blocks]
    return structure, MarkovBlocks(weights, lefts, rights)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
