import math

import numpy as np
import pytest

from kamkit.algebra import (
    I2,
    J2,
    NormalFormMatrix,
    SeqVector,
    WeightParams,
    WeightedMatrix,
    b_norm,
    check_normal_form,
    involution,
    matrix_norm,
    operator_norm,
    pi_project,
    seq_norm,
    spectral_norm_2x2,
    to_complex,
    weight,
)
from kamkit.lattice import ball_points, build_partition


def random_matrix(rng, sites, density=0.3, truncation=8.0):
    A = WeightedMatrix(truncation=truncation)
    for a in sites:
        for b in sites:
            if rng.random() < density:
                A.set(a, b, rng.standard_normal((2, 2))
                      + 1j * rng.standard_normal((2, 2)))
    return A


def test_seq_norm_examples():
    w = WeightParams(gamma1=0.0, gamma2=1.0)
    assert seq_norm(SeqVector(), w) == 0.0
    z = SeqVector()
    z.set((2, 0), (1.0, 0.0))
    assert seq_norm(z, w) == pytest.approx(2.0)
    # flat weights: plain l2 of the stacked entries
    w0 = WeightParams(gamma1=0.0, gamma2=0.0)
    z2 = SeqVector()
    z2.set((1, 1), (3.0, 4.0))
    assert seq_norm(z2, w0) == pytest.approx(5.0)


def test_weight_examples():
    w0 = WeightParams(0.0, 0.0, 0.0)
    assert weight((2, 1), (2, 1), w0) == pytest.approx(1.0)
    w1 = WeightParams(0.5, 2.0, 1.0)
    assert weight((1, 0), (-1, 0), w1) == pytest.approx(1.0)
    w2 = WeightParams(1.0, 2.0, 1.0)
    assert weight((3, 0), (0, 0), w2) == pytest.approx(math.exp(3) * 9.0)


def test_matrix_norm_examples():
    w = WeightParams(0.0, 0.0, 0.0)
    assert matrix_norm(WeightedMatrix(), w) == 0.0
    A = WeightedMatrix()
    for a in ball_points(3, 2):
        A.set(a, a, I2)
    assert matrix_norm(A, w) == pytest.approx(1.0)


def test_matrix_norm_bruteforce():
    rng = np.random.default_rng(1)
    sites = ball_points(2, 2)
    A = random_matrix(rng, sites)
    w = WeightParams(0.3, 1.5, 0.5)
    # independent double loop over the definition
    rows = {a: 0.0 for a in sites}
    cols = {b: 0.0 for b in sites}
    for a in sites:
        for b in sites:
            v = np.linalg.norm(A.get(a, b), 2) * weight(a, b, w)
            rows[a] += v
            cols[b] += v
    expect = max(max(rows.values()), max(cols.values()))
    assert matrix_norm(A, w) == pytest.approx(expect, rel=1e-10)


def test_spectral_norm_2x2():
    rng = np.random.default_rng(2)
    for _ in range(30):
        M = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        assert spectral_norm_2x2(M) == pytest.approx(np.linalg.norm(M, 2))


def test_b_norm_zero_and_diagonal():
    w = WeightParams(0.2, 2.0, 0.5, m_star=1.0)
    assert b_norm(WeightedMatrix(), w) == 0.0
    lam = 1.7
    A = WeightedMatrix()
    sites = ball_points(3, 2)
    for a in sites:
        A.set(a, a, lam * I2)
    shifted = WeightParams(w.gamma1, w.gamma2 - w.m_star, w.kappa, w.m_star)
    wmax = max(weight(a, a, shifted) for a in sites)
    assert b_norm(A, w) == pytest.approx(lam * (1.0 + wmax), rel=1e-8)


def test_b_norm_requires_gamma2_margin():
    with pytest.raises(ValueError):
        b_norm(WeightedMatrix(), WeightParams(0.0, 0.5, 0.0, m_star=1.0))


def test_operator_norm_matches_svd_oracle():
    rng = np.random.default_rng(3)
    sites = ball_points(2, 2)
    A = random_matrix(rng, sites, density=1.0)
    w = WeightParams(0.1, 1.0, 0.0)
    idx = {s: i for i, s in enumerate(sites)}
    ws = [max(1.0, math.sqrt(sum(x * x for x in s)))
          * math.exp(0.1 * math.sqrt(sum(x * x for x in s))) for s in sites]
    n = len(sites)
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    for a in sites:
        for b in sites:
            i, j = idx[a], idx[b]
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = A.get(a, b) * ws[i] / ws[j]
    assert operator_norm(A, w) == pytest.approx(np.linalg.norm(M, 2), abs=1e-8)


def test_operator_bound_on_random_samples():
    rng = np.random.default_rng(4)
    sites = ball_points(3, 2)
    w = WeightParams(0.3, 2.0, 0.5)
    for wt in (WeightParams(0.0, 0.0), WeightParams(0.1, 1.0),
               WeightParams(0.3, 2.0)):
        for _ in range(5):
            A = random_matrix(rng, sites)
            z = SeqVector()
            for s in sites:
                z.set(s, rng.standard_normal(2) + 1j * rng.standard_normal(2))
            lhs = seq_norm(A.apply(z), wt)
            rhs = matrix_norm(A, w) * seq_norm(z, wt)
            assert lhs <= rhs * (1 + 1e-12)


def test_algebra_inequality_random():
    rng = np.random.default_rng(5)
    sites = ball_points(3, 2)
    w = WeightParams(0.4, 1.5, 1.0)
    w0 = WeightParams(0.4, 1.5, 0.0)
    for _ in range(10):
        A = random_matrix(rng, sites)
        B = random_matrix(rng, sites)
        lhs = matrix_norm(B.matmul(A), w)
        rhs = matrix_norm(A, w0) * matrix_norm(B, w)
        assert lhs <= rhs * (1 + 1e-12)


def test_matrix_norm_is_a_norm():
    rng = np.random.default_rng(6)
    sites = ball_points(2, 2)
    w = WeightParams(0.2, 1.0, 0.3)
    for _ in range(10):
        A = random_matrix(rng, sites)
        B = random_matrix(rng, sites)
        assert matrix_norm(A + B, w) <= matrix_norm(A, w) + matrix_norm(B, w) + 1e-12
        c = rng.standard_normal()
        assert matrix_norm(A.scale(c), w) == pytest.approx(abs(c) * matrix_norm(A, w))


def test_pi_project():
    assert np.allclose(pi_project(I2), I2)
    assert np.allclose(pi_project(J2), J2)
    assert np.allclose(pi_project(np.diag([1.0, -1.0])), 0.0)
    # idempotent and HS self-adjoint
    rng = np.random.default_rng(7)
    for _ in range(10):
        M = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        N = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        P = pi_project(M)
        assert np.allclose(pi_project(P), P)
        lhs = np.trace(pi_project(M).conj().T @ N)
        rhs = np.trace(M.conj().T @ pi_project(N))
        assert lhs == pytest.approx(rhs)


def test_involution_is_an_involution():
    rng = np.random.default_rng(8)
    z = SeqVector()
    for s in ball_points(2, 2):
        z.set(s, rng.standard_normal(2) + 1j * rng.standard_normal(2))
    zz = involution(involution(z, [(0, 1)]), [(0, 1)])
    for s in z.entries:
        assert np.allclose(zz.get(s), z.get(s))


def test_to_complex():
    A1 = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert np.allclose(to_complex(A1, np.zeros((2, 2))), A1)
    A2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Q = to_complex(np.zeros((2, 2)), A2)
    assert np.allclose(Q.real, 0.0)
    assert np.allclose(Q, Q.conj().T)
    rng = np.random.default_rng(9)
    S = rng.standard_normal((4, 4))
    A1 = S + S.T
    K = rng.standard_normal((4, 4))
    A2 = K - K.T
    Q = to_complex(A1, A2)
    assert np.abs(Q - Q.conj().T).max() < 1e-12
    with pytest.raises(ValueError):
        to_complex(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))


def test_normal_form_roundtrip_and_check():
    p = build_partition(2, 4, 2, finite_set=[(0, 1)])
    nf = NormalFormMatrix(partition=p)
    rng = np.random.default_rng(10)
    for ci, cl in enumerate(p.classes):
        if ci == p.finite_index:
            continue
        n = len(cl)
        M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        nf.set_block(ci, (M + M.conj().T) / 2)
    H = rng.standard_normal((2, 2))
    nf.hyperbolic_block = H + H.T
    A = nf.to_real_matrix()
    assert check_normal_form(A, p) == []
    # one off-block entry is reported
    a = p.classes[p.core_index][0]
    cls = [cl for i, cl in enumerate(p.classes)
           if i not in (p.core_index, p.finite_index) and cl]
    b = cls[0][0]
    A.set(a, b, I2)
    bad = check_normal_form(A, p)
    assert any(rec[:2] == (a, b) and rec[2] in ("block", "symmetric")
               for rec in bad)


def test_set_block_rejects_non_hermitian():
    p = build_partition(2, 3, 2)
    nf = NormalFormMatrix(partition=p)
    with pytest.raises(ValueError):
        nf.set_block(p.core_index, np.array([[0.0, 1.0], [0.0, 0.0]]))
