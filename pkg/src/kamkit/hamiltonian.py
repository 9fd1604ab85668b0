"""Polynomial Hamiltonians in angle-Fourier form, jets, Poisson brackets,
Lie transforms, and the sampled domain norm.

A Hamiltonian is a finite sum of monomials

    c * e^{i k.theta} * r^m * prod_v zeta_v^{p_v}

where k, m run over n internal angle/action pairs and the zeta variables are
(site, component) pairs over the truncated lattice: components (0, 1) mean
(xi, eta) on elliptic sites and the real symplectic pair on the finite
hyperbolic node set.  Degree counts r twice and each zeta once; the jet is
the part of degree <= 2 with no mixed r*zeta terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import NormalFormMatrix, SeqVector, WeightParams, WeightedMatrix
from .lattice import norm_sq, pseudo_dist

XI, ETA = 0, 1

# (action degree, mode degree) pairs forming the normal-form jet
_JET_DEGREES = ((0, 0), (1, 0), (0, 1), (0, 2))


def _zkey(z: dict) -> tuple:
    return tuple(sorted((v, p) for v, p in z.items() if p))


class Polynomial:
    """Sparse polynomial keyed by (k, m, z) monomial signatures."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = terms if terms is not None else {}

    # -- construction -----------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n)

    @classmethod
    def constant(cls, n: int, c) -> "Polynomial":
        p = cls(n)
        if c != 0:
            p.terms[(((0,) * n), ((0,) * n), ())] = complex(c)
        return p

    def copy(self) -> "Polynomial":
        return Polynomial(self.n, dict(self.terms))

    def add_term(self, c, k=None, m=None, z=()):
        """Accumulate one monomial; z is a dict var->power or a zkey tuple."""
        if c == 0:
            return
        k = tuple(k) if k is not None else (0,) * self.n
        m = tuple(m) if m is not None else (0,) * self.n
        zk = _zkey(z) if isinstance(z, dict) else tuple(z)
        key = (k, m, zk)
        val = self.terms.get(key, 0.0) + complex(c)
        if val == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = val

    # -- ring operations ---------------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = self.copy()
        for key, c in other.terms.items():
            val = out.terms.get(key, 0.0) + c
            if val == 0:
                out.terms.pop(key, None)
            else:
                out.terms[key] = val
        return out

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1.0)

    def scale(self, c) -> "Polynomial":
        if c == 0:
            return Polynomial(self.n)
        return Polynomial(self.n, {key: c * v for key, v in self.terms.items()})

    def mul(self, other: "Polynomial", max_degree: int | None = None,
            tol: float = 0.0) -> "Polynomial":
        out = Polynomial(self.n)
        terms = out.terms
        rhs = [(key, c, 2 * sum(key[1]) + sum(p for _, p in key[2]))
               for key, c in other.terms.items()]
        if max_degree is not None:
            rhs.sort(key=lambda t: t[2])     # enables early exit by degree
        for (k1, m1, z1), c1 in self.terms.items():
            d1 = 2 * sum(m1) + sum(p for _, p in z1)
            for (k2, m2, z2), c2, d2 in rhs:
                if max_degree is not None and d1 + d2 > max_degree:
                    break
                m = tuple(x + y for x, y in zip(m1, m2))
                if z2:
                    zd = dict(z1)
                    for v, p in z2:
                        zd[v] = zd.get(v, 0) + p
                    zk = _zkey(zd)
                else:
                    zk = z1
                key = (tuple(x + y for x, y in zip(k1, k2)), m, zk)
                val = terms.get(key, 0.0) + c1 * c2
                if val == 0:
                    terms.pop(key, None)
                else:
                    terms[key] = val
        if tol:
            out.prune(tol)
        return out

    def _iadd(self, other: "Polynomial", sign: complex = 1.0):
        terms = self.terms
        for key, c in other.terms.items():
            val = terms.get(key, 0.0) + sign * c
            if val == 0:
                terms.pop(key, None)
            else:
                terms[key] = val
        return self

    def prune(self, tol: float):
        if not self.terms:
            return self
        drop = [key for key, c in self.terms.items() if abs(c) <= tol]
        for key in drop:
            del self.terms[key]
        return self

    def prune_split(self, jet_tol: float, rest_tol: float):
        """Prune with a tighter tolerance on normal-form-direction terms."""
        if not self.terms:
            return self
        drop = []
        for key, c in self.terms.items():
            _, m, z = key
            deg = (sum(m), sum(p for _, p in z))
            cut = jet_tol if deg in _JET_DEGREES else rest_tol
            if abs(c) <= cut:
                drop.append(key)
        for key in drop:
            del self.terms[key]
        return self

    def truncate_degree(self, max_degree: int) -> "Polynomial":
        out = Polynomial(self.n)
        for key, c in self.terms.items():
            _, m, z = key
            if 2 * sum(m) + sum(p for _, p in z) <= max_degree:
                out.terms[key] = c
        return out

    def max_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __len__(self):
        return len(self.terms)

    # -- calculus -----------------------------------------------------------
    def diff_r(self, j: int) -> "Polynomial":
        out = Polynomial(self.n)
        for (k, m, z), c in self.terms.items():
            if m[j]:
                mm = list(m)
                mm[j] -= 1
                out.add_term(c * m[j], k, tuple(mm), z)
        return out

    def diff_z(self, var) -> "Polynomial":
        out = Polynomial(self.n)
        for (k, m, z), c in self.terms.items():
            for i, (v, p) in enumerate(z):
                if v == var:
                    zz = list(z)
                    if p == 1:
                        zz.pop(i)
                    else:
                        zz[i] = (v, p - 1)
                    out.add_term(c * p, k, m, tuple(zz))
                    break
        return out

    def z_vars(self) -> list:
        s = set()
        for (_, _, z) in self.terms:
            for v, _ in z:
                s.add(v)
        return sorted(s)

    def sites(self) -> list:
        return sorted({v[0] for v in self.z_vars()})

    def evaluate(self, theta, r, zvals: dict) -> complex:
        theta = np.asarray(theta, dtype=complex)
        r = np.asarray(r, dtype=complex)
        total = 0.0 + 0.0j
        for (k, m, z), c in self.terms.items():
            val = c * np.exp(1j * np.dot(k, theta))
            for j, mj in enumerate(m):
                if mj:
                    val *= r[j] ** mj
            for v, p in z:
                val *= zvals.get(v, 0.0) ** p
            total += val
        return total

    # -- structure -----------------------------------------------------------
    def jet(self) -> "Polynomial":
        """Degree <= 2 part: constant, r-linear, zeta-linear, zeta-quadratic."""
        out = Polynomial(self.n)
        for key, c in self.terms.items():
            _, m, z = key
            sr, sz = sum(m), sum(p for _, p in z)
            if (sr, sz) in _JET_DEGREES:
                out.terms[key] = c
        return out

    def without_jet(self) -> "Polynomial":
        jet_keys = set(self.jet().terms)
        return Polynomial(self.n, {key: c for key, c in self.terms.items()
                                   if key not in jet_keys})

    def reality_defect(self, finite_set=()) -> float:
        """Max mismatch of coefficients under the reality involution.

        Real Hamiltonians satisfy conj(c(k, m, z)) = c(-k, m, z*) where z*
        swaps xi <-> eta on elliptic sites and fixes hyperbolic components.
        """
        fset = set(tuple(p) for p in finite_set)
        worst = 0.0
        for (k, m, z), c in self.terms.items():
            zz = {}
            for (s, comp), p in z:
                cc = comp if s in fset else 1 - comp
                zz[(s, cc)] = p
            mate = (tuple(-x for x in k), m, _zkey(zz))
            worst = max(worst, abs(np.conj(c) - self.terms.get(mate, 0.0)))
        return worst

    def dump_lines(self, tag: str = "") -> list[str]:
        lines = []
        prefix = f"part={tag} " if tag else ""
        for (k, m, z), c in sorted(self.terms.items()):
            zs = ";".join(
                f"{','.join(str(x) for x in v[0])}:{v[1]}:{p}" for v, p in z)
            lines.append(
                f"{prefix}k={','.join(map(str, k))} m={','.join(map(str, m))} "
                f"z={zs} c={c.real:.17g}{c.imag:+.17g}j")
        return lines


def _z_derivative_table(P: Polynomial) -> dict:
    """var -> dP/dvar for every mode variable, in one pass over P."""
    table: dict = {}
    for (k, m, z), c in P.terms.items():
        for i, (v, p) in enumerate(z):
            zz = list(z)
            if p == 1:
                zz.pop(i)
            else:
                zz[i] = (v, p - 1)
            d = table.get(v)
            if d is None:
                d = table[v] = Polynomial(P.n)
            key = (k, m, tuple(zz))
            val = d.terms.get(key, 0.0) + c * p
            if val == 0:
                d.terms.pop(key, None)
            else:
                d.terms[key] = val
    return table


def poisson(F: Polynomial, G: Polynomial, finite_set=(),
            max_degree: int | None = None, tol: float = 0.0) -> Polynomial:
    """Canonical bracket {F, G}.

    Convention: {F,G} = sum_j (dF/dr_j dG/dtheta_j - dF/dtheta_j dG/dr_j)
    plus, per lattice site, i(dF/dxi dG/deta - dF/deta dG/dxi) on elliptic
    sites and (dF/dp dG/dq - dF/dq dG/dp) on hyperbolic ones.
    """
    n = F.n
    fset = set(tuple(p) for p in finite_set)
    out = Polynomial(n)

    def k_scale(P: Polynomial, j: int) -> Polynomial:
        res = Polynomial(n)
        for (k, m, z), c in P.terms.items():
            if k[j]:
                res.terms[(k, m, z)] = 1j * k[j] * c
        return res

    for j in range(n):
        dFr = F.diff_r(j)
        if dFr.terms:
            out._iadd(dFr.mul(k_scale(G, j), max_degree, tol))
        dGr = G.diff_r(j)
        if dGr.terms:
            out._iadd(k_scale(F, j).mul(dGr, max_degree, tol), sign=-1.0)

    dF = _z_derivative_table(F)
    dG = _z_derivative_table(G)
    sites = {v[0] for v in dF} & {v[0] for v in dG}
    empty = Polynomial(n)
    for s in sorted(sites):
        dF0, dF1 = dF.get((s, 0), empty), dF.get((s, 1), empty)
        dG0, dG1 = dG.get((s, 0), empty), dG.get((s, 1), empty)
        unit = 1.0 if s in fset else 1j
        if dF0.terms and dG1.terms:
            out._iadd(dF0.mul(dG1, max_degree, tol), sign=unit)
        if dF1.terms and dG0.terms:
            out._iadd(dF1.mul(dG0, max_degree, tol), sign=-unit)
    if tol:
        out.prune(tol)
    return out


def lie_transform(F: Polynomial, S: Polynomial, finite_set=(),
                  max_degree: int = 4, tol: float = 1e-18,
                  max_order: int = 16,
                  rest_tol: float | None = None) -> Polynomial:
    """F composed with the time-one flow of S: sum_m ad_S^m(F)/m!.

    ``rest_tol``, when given, prunes terms outside the normal-form jet
    directions at a looser threshold: those terms only influence later jets
    through further brackets, so they tolerate a coarser cut.
    """
    out = F.truncate_degree(max_degree)
    term = out
    for m in range(1, max_order + 1):
        term = poisson(term, S, finite_set, max_degree, tol).scale(1.0 / m)
        if rest_tol is not None:
            term.prune_split(tol, rest_tol)
        if not term.terms or term.max_coeff() < tol:
            break
        out = out + term
    if rest_tol is not None:
        return out.prune_split(tol, rest_tol)
    return out.prune(tol)


# -- jets as structured tables ------------------------------------------------

@dataclass
class HamiltonianJet:
    """Fourier-in-angle tables of the degree <= 2 part of a Hamiltonian."""
    n: int
    f_theta: dict = field(default_factory=dict)      # k -> complex
    f_r: dict = field(default_factory=dict)          # k -> complex n-vector
    f_zeta: dict = field(default_factory=dict)       # k -> SeqVector
    f_zetazeta: dict = field(default_factory=dict)   # k -> WeightedMatrix

    @classmethod
    def from_polynomial(cls, poly: Polynomial) -> "HamiltonianJet":
        jet = cls(n=poly.n)
        for (k, m, z), c in poly.jet().terms.items():
            sr, sz = sum(m), sum(p for _, p in z)
            if sr == 0 and sz == 0:
                jet.f_theta[k] = jet.f_theta.get(k, 0.0) + c
            elif sr == 1:
                vec = jet.f_r.setdefault(k, np.zeros(poly.n, dtype=complex))
                vec[m.index(1)] += c
            elif sz == 1:
                sv = jet.f_zeta.setdefault(k, SeqVector())
                (s, comp), _ = z[0]
                v = sv.get(s).copy()
                v[comp] += c
                sv.set(s, v)
            else:
                M = jet.f_zetazeta.setdefault(k, WeightedMatrix())
                if len(z) == 1:
                    (s, comp), _ = z[0]
                    blk = np.zeros((2, 2), dtype=complex)
                    blk[comp, comp] = 2 * c
                    M.add(s, s, blk)
                else:
                    (s1, c1), _ = z[0]
                    (s2, c2), _ = z[1]
                    b1 = np.zeros((2, 2), dtype=complex)
                    b1[c1, c2] = c
                    M.add(s1, s2, b1)
                    b2 = np.zeros((2, 2), dtype=complex)
                    b2[c2, c1] = c
                    M.add(s2, s1, b2)
        return jet

    def to_polynomial(self) -> Polynomial:
        poly = Polynomial(self.n)
        for k, c in self.f_theta.items():
            poly.add_term(c, k=k)
        for k, vec in self.f_r.items():
            for j, c in enumerate(vec):
                if c != 0:
                    m = [0] * self.n
                    m[j] = 1
                    poly.add_term(c, k=k, m=m)
        for k, sv in self.f_zeta.items():
            for s, v in sv.entries.items():
                for comp in (0, 1):
                    if v[comp] != 0:
                        poly.add_term(v[comp], k=k, z={(s, comp): 1})
        for k, M in self.f_zetazeta.items():
            # the stored matrix is symmetric over (site, comp); each
            # off-diagonal monomial appears at two storage positions, so
            # adding val/2 everywhere reconstructs the 1/2 <M z, z> form
            for (a, b), blk in M.blocks.items():
                for c1 in (0, 1):
                    for c2 in (0, 1):
                        val = blk[c1, c2]
                        if val == 0:
                            continue
                        if (a, c1) == (b, c2):
                            poly.add_term(val / 2, k=k, z={(a, c1): 2})
                        else:
                            poly.add_term(val / 2, k=k,
                                          z={(a, c1): 1, (b, c2): 1})
        return poly

    def dump_lines(self) -> list[str]:
        return self.to_polynomial().dump_lines(tag="jet")


def jet_extract(poly: Polynomial) -> HamiltonianJet:
    return HamiltonianJet.from_polynomial(poly)


# -- normal-form Hamiltonians --------------------------------------------------

@dataclass
class NormalFormHamiltonian:
    """h = const + omega.r + sum of Hermitian class forms + hyperbolic form.

    The elliptic quadratic part is stored per partition class as a Hermitian
    matrix Q with h_cl = sum_{a,b} Q_ab xi_a eta_b; the hyperbolic part is
    1/2 <w, H w> over the real components of the finite node set.
    """
    omega: np.ndarray
    nf: NormalFormMatrix
    const: float = 0.0
    rho_star: np.ndarray | None = None
    omega_fn: object = None       # rho -> n-vector (model closed form)
    lambda_fn: object = None      # (site, rho) -> real (model closed form)

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def partition(self):
        return self.nf.partition

    @property
    def finite_set(self):
        return self.nf.partition.finite_set

    def class_Q(self, ci: int) -> np.ndarray:
        return self.nf.block_for(ci)

    def to_polynomial(self) -> Polynomial:
        p = self.partition
        poly = Polynomial(len(self.omega))
        if self.const:
            poly.add_term(self.const)
        for j, wj in enumerate(self.omega):
            if wj != 0:
                m = [0] * len(self.omega)
                m[j] = 1
                poly.add_term(wj, m=m)
        for ci, Q in self.nf.elliptic_blocks.items():
            if ci == p.finite_index:
                continue
            cl = p.classes[ci]
            for i, a in enumerate(cl):
                for j, b in enumerate(cl):
                    if Q[i, j] != 0:
                        poly.add_term(Q[i, j], z={(a, XI): 1, (b, ETA): 1}
                                      if (a, XI) != (b, ETA) else {(a, XI): 2})
        if self.nf.hyperbolic_block is not None and p.finite_index is not None:
            cl = p.classes[p.finite_index]
            H = self.nf.hyperbolic_block
            comps = [(s, c) for s in cl for c in (0, 1)]
            for i, v1 in enumerate(comps):
                for j, v2 in enumerate(comps):
                    if H[i, j] != 0:
                        if i == j:
                            poly.add_term(H[i, i] / 2, z={v1: 2})
                        elif i < j:
                            poly.add_term(H[i, j], z={v1: 1, v2: 1})
        return poly

    def elliptic_eigs(self, ci: int) -> tuple[np.ndarray, np.ndarray]:
        """(eigenvalues, eigenvectors) of the Hermitian class block."""
        Q = self.class_Q(ci)
        return np.linalg.eigh(Q)


# -- sampled domain norm -------------------------------------------------------

@dataclass(frozen=True)
class ClassNormParams:
    """Sampling controls for the analytic-domain norm."""
    sigma: float = 0.3
    mu: float = 0.25
    s_star: int = 0
    n_theta: int = 8
    n_dirs: int = 3
    radial_levels: int = 2
    seed: int = 2024

    def __post_init__(self):
        if not (0 < self.sigma <= 1 and 0 < self.mu <= 1):
            raise ValueError("sigma and mu must lie in (0, 1]")


def _poly_arrays(poly: Polynomial, var_index: dict):
    from scipy import sparse
    N = len(poly.terms)
    n = poly.n
    K = np.zeros((N, n))
    M = np.zeros((N, n))
    C = np.zeros(N, dtype=complex)
    rows, cols, pows = [], [], []
    for i, ((k, m, z), c) in enumerate(poly.terms.items()):
        K[i] = k
        M[i] = m
        C[i] = c
        for v, p in z:
            rows.append(i)
            cols.append(var_index[v])
            pows.append(p)
    Z = sparse.csr_matrix(
        (np.array(pows, dtype=float), (np.array(rows), np.array(cols)))
        if rows else ((), ((), ())), shape=(N, len(var_index)))
    return C, K, M, Z


def _site_geometry(sites: list):
    """Pairwise pseudo-distances and site brackets, shared by norm weights."""
    X = np.array(sites, dtype=float)
    br = np.maximum(np.sqrt((X * X).sum(axis=1)), 1.0)
    d2m = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    d2p = ((X[:, None, :] + X[None, :, :]) ** 2).sum(axis=2)
    pd = np.sqrt(np.minimum(d2m, d2p))
    return pd, br


def _weighted_block_norm(B: np.ndarray, pd, br, w: WeightParams) -> float:
    """Row/col weighted sums of 2x2-block spectral norms (vectorized)."""
    G = np.einsum("abki,abkj->abij", B.conj(), B)
    t = (G[..., 0, 0] + G[..., 1, 1]).real
    det = (G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]).real
    disc = np.clip(t * t - 4 * det, 0.0, None)
    bn = np.sqrt(np.clip((t + np.sqrt(disc)) / 2, 0.0, None))
    wt = (np.exp(w.gamma1 * pd) * np.maximum(pd, 1.0) ** w.gamma2
          * np.minimum(br[:, None], br[None, :]) ** w.kappa)
    wb = bn * wt
    if wb.size == 0:
        return 0.0
    return max(wb.sum(axis=1).max(), wb.sum(axis=0).max())


def _halving_grid(top: float, floor: float) -> list[float]:
    vals = []
    v = top
    while v >= floor and len(vals) < 12:
        vals.append(v)
        v /= 2.0
    return vals or [top]


def class_norm(poly: Polynomial, p: ClassNormParams, w: WeightParams) -> float:
    """Sampled sup of max(|f|, mu*grad-norm, mu^2*hessian-norm).

    The sup runs over a deterministic sample of the analytic domain:
    complex angles with |Im theta| on a halving grid below sigma, actions
    |r| on a halving grid below mu^2, and seeded mode directions scaled to
    weighted norm <= mu, at weights gamma' in {0, gamma/2, gamma}.  The
    halving grids share a fixed floor, so doubling sigma or mu (or refining
    the grids) enlarges the sample set and never decreases the value.
    """
    if not poly.terms:
        return 0.0
    from scipy import sparse as _sparse
    n = poly.n
    rng = np.random.default_rng(p.seed)
    zvars = poly.z_vars()
    V = len(zvars)
    vi = {v: i for i, v in enumerate(zvars)}
    C, K, M, Z = _poly_arrays(poly, vi)
    zdeg = np.asarray(Z.sum(axis=1)).ravel() if V else np.zeros(len(C))
    has_quad = bool(np.any(zdeg >= 2))

    # angle samples along a fixed direction; nested under n_theta doubling
    direction = np.array([1.0 + 0.61803398875 * j for j in range(n)])
    imag_levels = [0.0]
    for v in _halving_grid(p.sigma, 0.05):
        imag_levels += [v, -v]
    thetas = [np.zeros(0)] if n == 0 else [
        2 * math.pi * i / p.n_theta * direction + 1j * im * np.ones(n)
        for i in range(p.n_theta) for im in imag_levels]

    # seeded mode directions of weighted norm 1, scaled by the radial grid
    site_norm = np.array([math.sqrt(norm_sq(v[0])) for v in zvars])
    site_br = np.maximum(site_norm, 1.0)
    dirs = []
    for _ in range(p.n_dirs):
        raw = rng.standard_normal(V) + 1j * rng.standard_normal(V)
        sw = site_br ** w.gamma2 * np.exp(w.gamma1 * site_norm)
        nrm = math.sqrt(float(np.sum(np.abs(raw * sw) ** 2)))
        if nrm > 0:
            dirs.append(raw / nrm)
    radii = _halving_grid(p.mu, 0.02)[:max(p.radial_levels, 1) + 2]
    r_vals = _halving_grid(p.mu ** 2, 4e-4)[:3]

    gammas = [WeightParams(0.0, 0.0, w.kappa, w.m_star),
              WeightParams(w.gamma1 / 2, w.gamma2 / 2, w.kappa, w.m_star),
              w]
    grad_w = [site_br ** gp.gamma2 * np.exp(gp.gamma1 * site_norm)
              for gp in gammas]

    # padded site/block layout for vectorized hessian norms
    sites = sorted({v[0] for v in zvars})
    si = {s: i for i, s in enumerate(sites)}
    pad = np.array([2 * si[v[0]] + v[1] for v in zvars], dtype=int)
    pd, br = _site_geometry(sites) if sites else (np.zeros((0, 0)),
                                                  np.zeros(0))
    best = 0.0
    for th in thetas:
        phase = np.exp(1j * (K @ th)) * C
        first = True
        for dvec in (dirs or [np.zeros(0)]):
            for rad in radii:
                zv = rad * dvec
                logz = np.log(zv) if V else None
                zfac = np.exp(Z @ logz) if V else 1.0
                for rmag in r_vals:
                    rfac = np.exp(M @ np.log(np.full(n, rmag))) if n else 1.0
                    tv = phase * rfac * zfac
                    best = max(best, abs(tv.sum()))
                    if V:
                        grad = np.asarray(Z.T @ tv).ravel() / zv
                        ag2 = np.abs(grad) ** 2
                        for gw in grad_w:
                            best = max(best, p.mu
                                       * math.sqrt(float((ag2 * gw * gw).sum())))
                    if has_quad and first:
                        first = False
                        D = _sparse.diags(tv)
                        H = np.asarray((Z.T @ D @ Z).todense(), dtype=complex)
                        H[np.diag_indices(V)] -= np.asarray(Z.T @ tv).ravel()
                        H = H / zv[:, None] / zv[None, :]
                        Hp = np.zeros((2 * len(sites), 2 * len(sites)),
                                      dtype=complex)
                        Hp[np.ix_(pad, pad)] = H
                        B = Hp.reshape(len(sites), 2, len(sites), 2) \
                            .transpose(0, 2, 1, 3)
                        for gp in gammas:
                            best = max(best, p.mu ** 2
                                       * _weighted_block_norm(B, pd, br, gp))
    return best


def hessian_decay_check(M: WeightedMatrix, w: WeightParams,
                        C: float | None = None):
    """Compare hessian blocks against C e^{-g1 [a-b]} <a>^{-kappa} <b>^{-kappa}.

    Returns (minimal C making the bound hold, list of violations for the
    supplied C).
    """
    from .algebra import spectral_norm_2x2
    min_C = 0.0
    violations = []
    for (a, b), blk in M.blocks.items():
        bound_unit = (math.exp(-w.gamma1 * pseudo_dist(a, b))
                      * max(1.0, math.sqrt(norm_sq(a))) ** (-w.kappa)
                      * max(1.0, math.sqrt(norm_sq(b))) ** (-w.kappa))
        nb = spectral_norm_2x2(blk)
        need = nb / bound_unit
        min_C = max(min_C, need)
        if C is not None and nb > C * bound_unit * (1 + 1e-12):
            violations.append((a, b, nb, C * bound_unit))
    return min_C, violations
