"""Weighted sequence space, block-matrix norm stack, and normal-form
matrix structure.

Vectors over the truncated lattice carry a 2-component entry per site; in
complex coordinates the components are (xi_s, eta_s), related to the real
pair (p_s, q_s) by xi = (p + iq)/sqrt(2), eta = (p - iq)/sqrt(2) on the
infinite part of the lattice.  The finite hyperbolic node set keeps real
coordinates throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import BlockPartition, norm_sq, pseudo_dist

I2 = np.eye(2)
J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class WeightParams:
    """Weights for the sequence space and the matrix decay norms."""
    gamma1: float = 0.0
    gamma2: float = 1.0
    kappa: float = 0.0
    m_star: float = 1.0

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.kappa, self.m_star) < 0:
            raise ValueError("weight parameters must be nonnegative")


def bracket(a) -> float:
    """<a> = max(1, |a|)."""
    return max(1.0, math.sqrt(norm_sq(a)))


def weight(a, b, w: WeightParams) -> float:
    """Decay weight e^{g1 [a-b]} max([a-b],1)^{g2} min(<a>,<b>)^kappa."""
    pd = pseudo_dist(a, b)
    return (math.exp(w.gamma1 * pd) * max(pd, 1.0) ** w.gamma2
            * min(bracket(a), bracket(b)) ** w.kappa)


@dataclass
class SeqVector:
    """Finitely supported map site -> 2-component complex entry."""
    entries: dict = field(default_factory=dict)

    def get(self, s) -> np.ndarray:
        return self.entries.get(tuple(s), np.zeros(2, dtype=complex))

    def set(self, s, val):
        v = np.asarray(val, dtype=complex).reshape(2)
        if np.any(v != 0):
            self.entries[tuple(s)] = v
        else:
            self.entries.pop(tuple(s), None)

    def copy(self) -> "SeqVector":
        return SeqVector({s: v.copy() for s, v in self.entries.items()})


def seq_norm(z: SeqVector, w: WeightParams) -> float:
    """Weighted l2 norm: sum over sites of |z_s|^2 <s>^{2g2} e^{2g1|s|}."""
    total = 0.0
    for s, v in z.entries.items():
        ns = math.sqrt(norm_sq(s))
        total += float(np.vdot(v, v).real) * bracket(s) ** (2 * w.gamma2) \
            * math.exp(2 * w.gamma1 * ns)
    return math.sqrt(total)


def involution(z: SeqVector, finite_set=()) -> SeqVector:
    """Reality involution: (xi, eta) -> (conj(eta), conj(xi)) on the infinite
    part; complex conjugation on the finite hyperbolic sites."""
    fset = set(tuple(p) for p in finite_set)
    out = SeqVector()
    for s, v in z.entries.items():
        if s in fset:
            out.set(s, np.conj(v))
        else:
            out.set(s, np.array([np.conj(v[1]), np.conj(v[0])]))
    return out


def spectral_norm_2x2(M) -> float:
    """Operator norm of a 2x2 complex matrix via closed-form singular values."""
    M = np.asarray(M, dtype=complex)
    G = M.conj().T @ M
    t = G[0, 0].real + G[1, 1].real
    det = (G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]).real
    disc = max(t * t - 4 * det, 0.0)
    return math.sqrt(max((t + math.sqrt(disc)) / 2, 0.0))


@dataclass
class WeightedMatrix:
    """Sparse block matrix over the truncated lattice; absent blocks are 0."""
    blocks: dict = field(default_factory=dict)  # (a, b) -> 2x2 complex
    truncation: float = math.inf

    def get(self, a, b) -> np.ndarray:
        return self.blocks.get((tuple(a), tuple(b)),
                               np.zeros((2, 2), dtype=complex))

    def set(self, a, b, M):
        M = np.asarray(M, dtype=complex).reshape(2, 2)
        key = (tuple(a), tuple(b))
        if np.any(M != 0):
            self.blocks[key] = M
        else:
            self.blocks.pop(key, None)

    def add(self, a, b, M):
        self.set(a, b, self.get(a, b) + np.asarray(M, dtype=complex))

    def sites(self) -> list:
        s = set()
        for a, b in self.blocks:
            s.add(a)
            s.add(b)
        return sorted(s)

    def transpose(self) -> "WeightedMatrix":
        out = WeightedMatrix(truncation=self.truncation)
        for (a, b), M in self.blocks.items():
            out.set(b, a, M.T)
        return out

    def conj(self) -> "WeightedMatrix":
        out = WeightedMatrix(truncation=self.truncation)
        for (a, b), M in self.blocks.items():
            out.set(a, b, np.conj(M))
        return out

    def scale(self, c) -> "WeightedMatrix":
        out = WeightedMatrix(truncation=self.truncation)
        for (a, b), M in self.blocks.items():
            out.set(a, b, c * M)
        return out

    def __add__(self, other: "WeightedMatrix") -> "WeightedMatrix":
        out = WeightedMatrix(truncation=self.truncation)
        out.blocks = {k: M.copy() for k, M in self.blocks.items()}
        for (a, b), M in other.blocks.items():
            out.add(a, b, M)
        return out

    def __sub__(self, other: "WeightedMatrix") -> "WeightedMatrix":
        return self + other.scale(-1.0)

    def matmul(self, other: "WeightedMatrix") -> "WeightedMatrix":
        by_row: dict = {}
        for (a, c), M in other.blocks.items():
            by_row.setdefault(a, []).append((c, M))
        out = WeightedMatrix(truncation=self.truncation)
        for (a, b), M in self.blocks.items():
            for c, N in by_row.get(b, ()):
                out.add(a, c, M @ N)
        return out

    def apply(self, z: SeqVector) -> SeqVector:
        out: dict = {}
        for (a, b), M in self.blocks.items():
            v = z.entries.get(b)
            if v is None:
                continue
            out[a] = out.get(a, np.zeros(2, dtype=complex)) + M @ v
        res = SeqVector()
        for a, v in out.items():
            res.set(a, v)
        return res

    def dump_lines(self) -> list[str]:
        lines = []
        for (a, b), M in sorted(self.blocks.items()):
            ent = " ".join(f"{c.real:.12g}{c.imag:+.12g}j" for c in M.ravel())
            astr = ",".join(str(x) for x in a)
            bstr = ",".join(str(x) for x in b)
            lines.append(f"a={astr} b={bstr} entries={ent}")
        return lines


def matrix_norm(A: WeightedMatrix, w: WeightParams) -> float:
    """Decay norm: max over rows/cols of the weighted sum of 2x2 block norms."""
    rows: dict = {}
    cols: dict = {}
    for (a, b), M in A.blocks.items():
        v = spectral_norm_2x2(M) * weight(a, b, w)
        rows[a] = rows.get(a, 0.0) + v
        cols[b] = cols.get(b, 0.0) + v
    rmax = max(rows.values(), default=0.0)
    cmax = max(cols.values(), default=0.0)
    return max(rmax, cmax)


def _site_weight(s, w: WeightParams) -> float:
    return bracket(s) ** w.gamma2 * math.exp(w.gamma1 * math.sqrt(norm_sq(s)))


def operator_norm(A: WeightedMatrix, w: WeightParams, tol=1e-10,
                  max_iter=500) -> float:
    """Operator norm of A on the weighted sequence space.

    Conjugates by the diagonal site weight and takes the largest singular
    value: dense SVD for small supports, power iteration otherwise.
    """
    sts = A.sites()
    if not sts:
        return 0.0
    idx = {s: i for i, s in enumerate(sts)}
    n = len(sts)
    ws = np.array([_site_weight(s, w) for s in sts])
    dense_ok = n <= 600
    if dense_ok:
        M = np.zeros((2 * n, 2 * n), dtype=complex)
        for (a, b), blk in A.blocks.items():
            i, j = idx[a], idx[b]
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = blk * (ws[i] / ws[j])
        return float(np.linalg.norm(M, 2))
    # power iteration on W A W^{-1} (via A^H A)
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    x /= np.linalg.norm(x)
    scaled = {}
    for (a, b), blk in A.blocks.items():
        i, j = idx[a], idx[b]
        scaled[(i, j)] = blk * (ws[i] / ws[j])

    def mv(v, herm=False):
        out = np.zeros_like(v)
        for (i, j), blk in scaled.items():
            if herm:
                out[2 * j:2 * j + 2] += blk.conj().T @ v[2 * i:2 * i + 2]
            else:
                out[2 * i:2 * i + 2] += blk @ v[2 * j:2 * j + 2]
        return out

    prev = 0.0
    for _ in range(max_iter):
        y = mv(mv(x), herm=True)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        est = math.sqrt(ny)
        if abs(est - prev) <= tol * max(est, 1.0):
            return est
        prev = est
    return prev


def b_norm(A: WeightedMatrix, w: WeightParams) -> float:
    """Operator norm on the weighted space plus the decay norm at the weight
    shifted down by the algebra threshold."""
    if w.gamma2 < w.m_star:
        raise ValueError("gamma2 must be >= m_star for the boundary norm")
    shifted = WeightParams(w.gamma1, w.gamma2 - w.m_star, w.kappa, w.m_star)
    return operator_norm(A, w) + matrix_norm(A, shifted)


def pi_project(M) -> np.ndarray:
    """Hilbert-Schmidt orthogonal projection of a 2x2 matrix onto
    span{I, J} (J the rotation by pi/2)."""
    M = np.asarray(M, dtype=complex).reshape(2, 2)
    cI = np.trace(M) / 2.0
    cJ = np.trace(J2.T @ M) / 2.0
    return cI * I2 + cJ * J2


@dataclass
class NormalFormMatrix:
    """Block-diagonal real symmetric matrix: one Pi-invariant block per
    partition class on the infinite part, one unconstrained symmetric block
    on the finite hyperbolic node set.

    Elliptic class blocks are stored in complex coordinates as Hermitian
    matrices Q (site x site); the corresponding real block has 2x2 entries
    q_re*I + q_im*J which are automatically Pi-invariant.  The hyperbolic
    block is a real symmetric (2F x 2F) matrix in real coordinates.
    """
    partition: BlockPartition
    elliptic_blocks: dict = field(default_factory=dict)  # class idx -> Hermitian
    hyperbolic_block: np.ndarray | None = None

    def block_for(self, ci: int) -> np.ndarray:
        cl = self.partition.classes[ci]
        Q = self.elliptic_blocks.get(ci)
        if Q is None:
            return np.zeros((len(cl), len(cl)), dtype=complex)
        return Q

    def set_block(self, ci: int, Q):
        Q = np.asarray(Q, dtype=complex)
        if np.linalg.norm(Q - Q.conj().T) > 1e-10 * max(1.0, np.linalg.norm(Q)):
            raise ValueError("elliptic class block must be Hermitian")
        self.elliptic_blocks[ci] = Q

    def to_real_matrix(self) -> WeightedMatrix:
        """Assemble the real-coordinate block matrix."""
        p = self.partition
        A = WeightedMatrix(truncation=p.radius)
        for ci, Q in self.elliptic_blocks.items():
            if ci == p.finite_index:
                continue
            cl = p.classes[ci]
            for i, a in enumerate(cl):
                for j, b in enumerate(cl):
                    q = Q[i, j]
                    blk = q.real * I2 + q.imag * J2
                    if np.any(blk != 0):
                        A.set(a, b, blk)
        if self.hyperbolic_block is not None and p.finite_index is not None:
            cl = p.classes[p.finite_index]
            H = np.asarray(self.hyperbolic_block, dtype=float)
            for i, a in enumerate(cl):
                for j, b in enumerate(cl):
                    blk = H[2 * i:2 * i + 2, 2 * j:2 * j + 2]
                    if np.any(blk != 0):
                        A.set(a, b, blk)
        return A


def check_normal_form(A: WeightedMatrix, p: BlockPartition,
                      tol: float = 1e-12) -> list:
    """Violations of: (i) real, (ii) symmetric, (iii) block diagonal over the
    partition, (iv) Pi-invariance of each 2x2 entry outside the finite set.

    Returns a list of (a, b, kind) records; empty means normal form.
    """
    bad = []
    fset = set(p.finite_set)
    for (a, b), M in A.blocks.items():
        scale = max(1.0, float(np.abs(M).max()))
        if np.abs(M.imag).max() > tol * scale:
            bad.append((a, b, "real"))
        if np.abs(M - A.get(b, a).T).max() > tol * scale:
            bad.append((a, b, "symmetric"))
        if p.class_of.get(a) != p.class_of.get(b):
            bad.append((a, b, "block"))
        if a not in fset and b not in fset:
            if np.abs(pi_project(M) - M).max() > tol * scale:
                bad.append((a, b, "pi"))
    return bad


def to_complex(A1, A2, H=None):
    """Real quadratic data (A1 symmetric, A2 skew) -> Hermitian Q = A1 + iA2;
    the hyperbolic block is passed through unchanged."""
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    if np.abs(A1 - A1.T).max() > 1e-10 * max(1.0, np.abs(A1).max()):
        raise ValueError("A1 must be symmetric")
    if np.abs(A2 + A2.T).max() > 1e-10 * max(1.0, np.abs(A2).max()):
        raise ValueError("A2 must be skew-symmetric")
    Q = A1 + 1j * A2
    if H is None:
        return Q
    return Q, np.asarray(H, dtype=float)
