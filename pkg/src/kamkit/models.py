"""Three application Hamiltonians as truncated polynomial data: a beam
equation with a convolutive potential, an NLS-type equation with a smoothing
nonlinearity, and the singular beam whose quartic part is reduced by a
partial Birkhoff normal form.

All space integrals are computed exactly as zero-momentum Fourier
convolutions; the field is expanded as
u(x) = (2 pi)^{-d/2} sum_a (xi_a e^{iax} + eta_a e^{-iax}) / sqrt(2 L_a).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import binom as _binom

from .hamiltonian import ETA, XI, NormalFormHamiltonian, Polynomial
from .algebra import NormalFormMatrix
from .lattice import (BlockPartition, ball_points, build_partition,
                      check_admissible, norm_sq)

TWO_PI = 2 * math.pi

_F4_CACHE = {}      # quartic beam integrals are reused across action values


# ---------------------------------------------------------------------------
# Fourier-convolution expansion machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Letter:
    """One exponential summand of a field factor."""
    mom: tuple      # wave vector it contributes to the total momentum
    var: tuple      # (site, component) phase-space variable
    amp: float


def field_letters(sites, lam: dict) -> list:
    """Letters of the real field u: xi_a carries +a, eta_a carries -a."""
    out = []
    for a in sites:
        c = 1.0 / math.sqrt(2.0 * lam[a])
        out.append(Letter(a, (a, XI), c))
        out.append(Letter(tuple(-x for x in a), (a, ETA), c))
    return out


def _perm_count(idx: tuple) -> int:
    c = math.factorial(len(idx))
    for m in Counter(idx).values():
        c //= math.factorial(m)
    return c


def _add_monomial(poly: Polynomial, coeff, letters, k=None):
    z = {}
    for L in letters:
        z[L.var] = z.get(L.var, 0) + 1
    for L in letters:
        coeff *= L.amp
    poly.add_term(coeff, k=k, z=z)


def expand_product(n: int, pools, xwave, d: int, coeff, k=None) -> Polynomial:
    """Integral over the torus of a product of field-factor powers.

    pools: list of (count, letters).  Emits every monomial whose letter
    momenta sum to -xwave, with the multiset permutation count of each pool
    as combinatorial factor and (2 pi)^{d(1 - total/2)} normalization.
    """
    total = sum(c for c, _ in pools)
    pref = coeff * TWO_PI ** (d * (1 - total / 2.0))
    poly = Polynomial(n)
    xwave = tuple(xwave) if xwave else (0,) * d
    pools = [(c, ls) for c, ls in pools if c > 0]
    if not pools:
        poly.add_term(pref, k=k)
        return poly
    *head, (cl, tail) = pools
    lookup = {}
    for idx, L in enumerate(tail):
        lookup.setdefault(L.mom, []).append(idx)
    head_lists = [list(itertools.combinations_with_replacement(
        range(len(ls)), c)) for c, ls in head]

    for choice in itertools.product(*head_lists):
        hmult = 1
        hmom = list(xwave)
        hletters = []
        for (c, ls), idx in zip(head, choice):
            hmult *= _perm_count(idx)
            for i in idx:
                hletters.append(ls[i])
                for t in range(d):
                    hmom[t] += ls[i].mom[t]
        for front in itertools.combinations_with_replacement(
                range(len(tail)), cl - 1):
            need = list(hmom)
            for i in front:
                for t in range(d):
                    need[t] += tail[i].mom[t]
            cands = lookup.get(tuple(-x for x in need), ())
            lo = front[-1] if front else -1
            for last in cands:
                if last < lo:
                    continue
                idxs = front + (last,)
                mult = hmult * _perm_count(idxs)
                _add_monomial(poly, pref * mult,
                              hletters + [tail[i] for i in idxs], k=k)
    return poly


def _half_power_poly(n: int, j: int, e2: int, Ij: float,
                     r_degree: int) -> Polynomial:
    """(I_j + r_j)^(e2/2) as a polynomial in r_j (exact when e2 is even,
    truncated at r_degree otherwise)."""
    out = Polynomial(n)
    half = e2 / 2.0
    tmax = e2 // 2 if e2 % 2 == 0 else r_degree
    for t in range(tmax + 1):
        m = [0] * n
        m[j] = t
        out.add_term(_binom(half, t) * Ij ** (half - t), m=m)
    return out


def action_angle(poly: Polynomial, nodes, actions, r_degree: int = 1,
                 max_degree: int | None = None) -> Polynomial:
    """Substitute xi_a = sqrt(I_a + r_a) e^{i theta_a} on the node sites.

    Square roots are Taylor-expanded in r to r_degree (exact for even total
    powers).  Node-site mode variables disappear; their phases feed the
    angle index k.
    """
    n = poly.n
    node_index = {a: j for j, a in enumerate(nodes)}
    out = Polynomial(n)
    for (k, m, zk), c in poly.terms.items():
        knew = list(k)
        counts = {}          # node j -> [xi power, eta power]
        zrest = []
        for (site, comp), p in zk:
            j = node_index.get(site)
            if j is None:
                zrest.append(((site, comp), p))
            else:
                pc = counts.setdefault(j, [0, 0])
                pc[comp] += p
        base = Polynomial(n)
        base.add_term(c, k=None, m=m, z=tuple(zrest))
        for j, (px, pe) in counts.items():
            knew[j] += px - pe
            base = base.mul(_half_power_poly(n, j, px + pe, actions[j],
                                             r_degree),
                            max_degree=max_degree)
        for (kb, mb, zb), cb in base.terms.items():
            out.add_term(cb, k=tuple(a + b for a, b in zip(kb, knew)),
                         m=mb, z=zb)
    if max_degree is not None:
        out = out.truncate_degree(max_degree)
    return out


# ---------------------------------------------------------------------------
# Beam with convolutive potential
# ---------------------------------------------------------------------------

@dataclass
class BeamModel:
    """Beam equation data: mu_a = |a|^4 + potential(a); the potential takes
    the parameter value rho_a on the node set and a fixed radial tail
    (keyed by |a|^2) elsewhere."""
    d: int
    radius: float
    nodes: tuple
    rho: tuple                       # potential values on the nodes
    actions: tuple
    tail: dict = field(default_factory=dict)
    nonlinearity: tuple = ()         # entries (power, xwave, coeff)
    epsilon: float = 1.0
    delta: float = math.inf
    r_degree: int = 1
    max_degree: int = 6


def _beam_mu(model: BeamModel, a, rho=None) -> float:
    rho = model.rho if rho is None else rho
    if a in model.nodes:
        return norm_sq(a) ** 2 + rho[model.nodes.index(a)]
    return norm_sq(a) ** 2 + model.tail.get(norm_sq(a), 0.0)


def build_beam(model: BeamModel):
    """(normal form h, perturbation f) for the beam Hamiltonian.

    h carries Omega_a = sqrt(|a|^4 + rho_a) on the nodes, Lambda_a =
    sqrt(|mu_a|) elsewhere, and a hyperbolic block over the sites with
    mu_a < 0.  f is the x-integral of the nonlinearity, expanded in
    (r, theta) on the nodes and mode variables elsewhere.
    """
    sites = ball_points(model.radius, model.d)
    mu = {a: _beam_mu(model, a) for a in sites}
    if any(v == 0 for v in mu.values()):
        raise ValueError("degenerate model: mu_a = 0 on the truncation")
    by_sphere = {}
    for a, v in mu.items():
        by_sphere.setdefault(norm_sq(a), set()).add(v)
    vals = [next(iter(s)) for s in by_sphere.values() if len(s) == 1]
    if len(set(vals)) != len(vals):
        raise ValueError("mu coincides on spheres of different radius")
    for a in model.nodes:
        if mu[a] <= 0:
            raise ValueError("node with nonpositive mu cannot carry a torus")
    lam = {a: math.sqrt(abs(v)) for a, v in mu.items()}
    fin = tuple(sorted(a for a in sites if mu[a] < 0 and a not in model.nodes))
    part = build_partition(model.delta, model.radius, model.d,
                           finite_set=fin, exclude=model.nodes)
    nf = NormalFormMatrix(partition=part)
    for ci, cl in enumerate(part.classes):
        if ci == part.finite_index:
            continue
        nf.set_block(ci, np.diag([lam[a] for a in cl]))
    if fin:
        H = np.zeros((2 * len(fin), 2 * len(fin)))
        for i, a in enumerate(fin):
            H[2 * i, 2 * i + 1] = H[2 * i + 1, 2 * i] = lam[a]
        nf.hyperbolic_block = H

    n = len(model.nodes)
    omega = np.array([lam[a] for a in model.nodes])

    def omega_fn(rho):
        return np.array([math.sqrt(norm_sq(a) ** 2 + rho[j])
                         for j, a in enumerate(model.nodes)])

    def lambda_fn(site, rho):
        return math.sqrt(abs(_beam_mu(model, site, rho=tuple(rho))))

    h = NormalFormHamiltonian(omega=omega, nf=nf,
                              rho_star=np.array(model.rho),
                              omega_fn=omega_fn, lambda_fn=lambda_fn)
    letters = field_letters(sites, lam)
    f = Polynomial(n)
    for power, xwave, coeff in model.nonlinearity:
        f = f + expand_product(n, [(power, letters)], xwave, model.d,
                               model.epsilon * coeff)
    f = action_angle(f, model.nodes, model.actions, r_degree=model.r_degree,
                     max_degree=model.max_degree)
    return h, f


# ---------------------------------------------------------------------------
# NLS with smoothing nonlinearity
# ---------------------------------------------------------------------------

@dataclass
class NlsModel:
    """Forced NLS-type data: frequencies are the parameter itself, the
    nonlinearity acts through the smoothing operator |a|^{-2 alpha} (zero
    mode annihilated)."""
    d: int
    radius: float
    mass: float
    alpha: float
    rho: tuple                       # forcing frequencies (the parameter)
    forcing: tuple = ()              # entries (ktheta, p, q, xwave, coeff)
    epsilon: float = 1.0
    delta: float = math.inf
    max_degree: int = 6


def build_nls(model: NlsModel):
    """(normal form h, perturbation f) for the smoothing NLS Hamiltonian.

    h has Omega = rho and Lambda_a = |a|^2 + mass (no hyperbolic part);
    the forcing terms are series in v = smoothing(u) and its conjugate,
    with angle dependence e^{i ktheta.theta}.
    """
    if model.alpha <= 0:
        raise ValueError("smoothing exponent alpha must be positive")
    if model.mass <= 0:
        raise ValueError("mass must be positive")
    sites = ball_points(model.radius, model.d)
    part = build_partition(model.delta, model.radius, model.d)
    nf = NormalFormMatrix(partition=part)
    for ci, cl in enumerate(part.classes):
        nf.set_block(ci, np.diag([norm_sq(a) + model.mass for a in cl]))
    n = len(model.rho)
    h = NormalFormHamiltonian(
        omega=np.array(model.rho, dtype=float), nf=nf,
        rho_star=np.array(model.rho),
        omega_fn=lambda rho: np.asarray(rho, dtype=float),
        lambda_fn=lambda site, rho: norm_sq(site) + model.mass)
    v_letters, vb_letters = [], []
    for a in sites:
        if norm_sq(a) == 0:
            continue
        s = norm_sq(a) ** (-model.alpha)
        v_letters.append(Letter(a, (a, XI), s))
        vb_letters.append(Letter(tuple(-x for x in a), (a, ETA), s))
    f = Polynomial(n)
    for ktheta, p, q, xwave, coeff in model.forcing:
        f = f + expand_product(n, [(p, v_letters), (q, vb_letters)], xwave,
                               model.d, model.epsilon * coeff, k=ktheta)
    return h, f.truncate_degree(model.max_degree)


# ---------------------------------------------------------------------------
# Resonant quartic enumeration and the singular beam
# ---------------------------------------------------------------------------

def _z4_kind(i, j, k, ell, nodes) -> str:
    """Classification by node membership of the monomial sites: the xi
    slots are i, j; the eta slots sit at -k, -ell."""
    mk = tuple(-x for x in k)
    ml = tuple(-x for x in ell)
    xi_in = (i in nodes) + (j in nodes)
    eta_in = (mk in nodes) + (ml in nodes)
    tot = xi_in + eta_in
    if tot == 4:
        return "internal"
    if tot == 3:
        return "three"
    if tot == 2:
        return "P" if xi_in != 1 else "Q"
    if tot == 1:
        return "one"
    return "external"


def enumerate_Z4(R: float, nodes, d: int = 2) -> list:
    """Ordered zero-momentum quadruples (i, j, k, ell) within the truncation
    whose norm multisets match ({|i|,|j|} = {|k|,|ell|}), classified by node
    membership."""
    nodes = tuple(tuple(a) for a in nodes)
    pts = ball_points(R, d)
    arr = np.array(pts, dtype=int)
    nsq = (arr * arr).sum(axis=1)
    index = {tuple(p): t for t, p in enumerate(pts)}
    out = []
    for ii, i in enumerate(pts):
        for jj, j in enumerate(pts):
            s = np.array(i, dtype=int) + np.array(j, dtype=int)
            ls = -s - arr                      # ell for every candidate k
            inside = (ls * ls).sum(axis=1) <= R * R
            nl = (ls * ls).sum(axis=1)
            ni, nj = nsq[ii], nsq[jj]
            match = ((nsq == ni) & (nl == nj)) | ((nsq == nj) & (nl == ni))
            for kk in np.nonzero(inside & match)[0]:
                k = pts[kk]
                ell = tuple(int(x) for x in ls[kk])
                if ell not in index:
                    continue
                out.append((i, j, k, ell, _z4_kind(i, j, k, ell, nodes)))
    return out


@dataclass
class SingularBeamModel:
    """Beam with small-amplitude tori on a strongly admissible node set;
    the quartic integral of u^4 is reduced by a partial Birkhoff step."""
    d: int
    radius: float
    nodes: tuple
    mass: float
    actions: tuple
    nu: float = 1.0
    birkhoff_threshold: float = 1e-6
    quintic: float = 0.0             # coefficient of the u^5 correction
    r_degree: int = 1
    max_degree: int = 6


@dataclass
class SingularNormalForm:
    """Composite effect of the Birkhoff step, action-angle substitution and
    gauge rotation: frequencies, the indefinite block over the hyperbolic
    resonant modes, and the remainder."""
    model: SingularBeamModel
    omega_I: np.ndarray              # internal frequencies Omega(I)
    const: float
    lambda_sites: dict               # site -> Lambda_a(I), a outside L_h
    lambda_f_sites: tuple            # external sites resonant with a node
    lambda_e: tuple                  # elliptic resonant sites
    lambda_h: tuple                  # hyperbolic resonant sites
    H_I: np.ndarray                  # real symmetric block over lambda_h
    C_real: np.ndarray               # full resonant quadratic form
    f_tilde: Polynomial              # remainder (gauged variables)
    a2_floor: float                  # smallest resonant frequency magnitude
    nu: float
    birkhoff_killed: int
    birkhoff_min_divisor: float

    def jet(self) -> Polynomial:
        return self.f_tilde.jet()


def _is_resonant_quartic(zk, nsq_of) -> bool:
    xi_norms, eta_norms = [], []
    for (site, comp), p in zk:
        (xi_norms if comp == XI else eta_norms).extend([nsq_of[site]] * p)
    if len(xi_norms) != 2 or len(eta_norms) != 2:
        return False
    return sorted(xi_norms) == sorted(eta_norms)


def _gauge_k_shift(poly: Polynomial, node_of: dict) -> Polynomial:
    """Rotating frame xi_b -> e^{i theta_j} xi_b on the resonant external
    sites: the phases move into the angle index."""
    out = Polynomial(poly.n)
    for (k, m, zk), c in poly.terms.items():
        knew = list(k)
        for (site, comp), p in zk:
            j = node_of.get(site)
            if j is not None:
                knew[j] += p if comp == XI else -p
        out.add_term(c, k=knew, m=m, z=zk)
    return out


def _gauge_r_shift(poly: Polynomial, node_of: dict, max_degree: int,
                   n: int) -> Polynomial:
    """Compensating action shift r_j -> r_j - sum_{node_of[b]=j}
    xi_b eta_b."""
    shifts = {}
    for site, j in node_of.items():
        sp = shifts.setdefault(j, Polynomial(n))
        sp.add_term(-1.0, z={(site, XI): 1, (site, ETA): 1})
    for j in shifts:
        m = [0] * n
        m[j] = 1
        shifts[j].add_term(1.0, m=m)      # r_j itself
    out = Polynomial(n)
    for (k, m, zk), c in poly.terms.items():
        if not any(m[j] for j in shifts):
            out.add_term(c, k=k, m=m, z=zk)
            continue
        base = Polynomial(n)
        mres = tuple(0 if j in shifts else mj for j, mj in enumerate(m))
        base.add_term(c, k=k, m=mres, z=zk)
        for j, sp in shifts.items():
            for _ in range(m[j]):
                base = base.mul(sp, max_degree=max_degree)
        out = out + base
    return out


def build_singular(model: SingularBeamModel) -> SingularNormalForm:
    """Partial Birkhoff reduction of the quartic beam around the torus I.

    Kills non-resonant quartic monomials (divisors checked against the
    genericity threshold), substitutes action-angle variables on the nodes,
    removes the resonant angle factors by the gauge rotation, collects the
    quadratic form over the resonant external modes and splits it into
    elliptic frequencies and the indefinite hyperbolic block.
    """
    nodes = tuple(tuple(a) for a in model.nodes)
    rep = check_admissible(nodes)
    if not rep.strongly_admissible:
        raise ValueError("node set is not strongly admissible")
    sites = ball_points(model.radius, model.d)
    nsq_of = {a: norm_sq(a) for a in sites}
    lam = {a: math.sqrt(nsq_of[a] ** 2 + model.mass) for a in sites}
    n = len(nodes)
    letters = field_letters(sites, lam)

    key = (model.d, model.radius, model.mass, n)
    if key not in _F4_CACHE:
        _F4_CACHE[key] = expand_product(n, [(4, letters)], None, model.d,
                                        1.0)
    f4 = _F4_CACHE[key]
    killed, min_div = 0, math.inf
    z4 = Polynomial(n)
    frest = Polynomial(n)
    g4 = Polynomial(n)          # all four slots on nodes
    gPQ = Polynomial(n)         # exactly two slots on nodes
    for (k, m, zk), c in f4.terms.items():
        if _is_resonant_quartic(zk, nsq_of):
            z4.add_term(c, k=k, m=m, z=zk)
            nint = sum(p for (site, comp), p in zk if site in nodes)
            if nint == 3:
                raise AssertionError(
                    "resonant quartic with three node slots contradicts "
                    "admissibility: %r" % (zk,))
            target = {4: g4, 2: gPQ}.get(nint, frest)
            target.add_term(c, k=k, m=m, z=zk)
        else:
            div = 0.0
            for (site, comp), p in zk:
                div += (1 if comp == XI else -1) * p * lam[site]
            if abs(div) < model.birkhoff_threshold:
                raise ValueError(
                    "non-generic mass: Birkhoff divisor %.3e at %r"
                    % (div, zk))
            min_div = min(min_div, abs(div))
            killed += 1

    if model.quintic:
        int_letters = [L for L in letters if L.var[0] in nodes]
        ext_letters = [L for L in letters if L.var[0] not in nodes]
        for ni in range(3, 6):
            # jet-relevant slice of the u^5 correction: at least three node
            # slots; fewer-node terms are cubic or higher in the modes.
            # Splitting u^5 = (u_int + u_ext)^5 across disjoint pools needs
            # the binomial factor on top of the per-pool multiset counts.
            frest = frest + expand_product(
                n, [(ni, int_letters), (5 - ni, ext_letters)], None,
                model.d, model.quintic * math.comb(5, ni))

    aa = lambda p: action_angle(p, nodes, model.actions,
                                r_degree=model.r_degree,
                                max_degree=model.max_degree)
    g4_aa = aa(g4)
    zero_k = (0,) * n
    omega_I = np.array([lam[a] for a in nodes], dtype=float)
    const = 0.0
    for (k, m, zk), c in g4_aa.terms.items():
        if zk or k != zero_k:
            raise AssertionError("node-only resonant term with angle or "
                                 "mode dependence")
        deg = sum(m)
        if deg == 0:
            const += c.real
        elif deg == 1:
            omega_I[m.index(1)] += c.real
        else:
            frest.add_term(c, k=k, m=m, z=zk)

    lam_f = tuple(sorted(a for a in sites if a not in nodes
                         and any(nsq_of[a] == nsq_of[b] for b in nodes)))
    node_of = {a: max(j for j, b in enumerate(nodes)
                      if nsq_of[b] == nsq_of[a]) for a in lam_f}

    gPQ_aa = _gauge_k_shift(aa(gPQ), node_of)
    quad = {}                   # (var, var) -> complex coefficient
    for (k, m, zk), c in gPQ_aa.terms.items():
        zdeg = sum(p for _, p in zk)
        if any(m) or zdeg != 2:
            frest.add_term(c, k=k, m=m, z=zk)
            continue
        if k != zero_k:
            raise AssertionError("gauge left an angle factor on a resonant "
                                 "quadratic term: %r" % ((k, zk),))
        if len(zk) == 1:
            (v, p), = zk
            quad[(v, v)] = quad.get((v, v), 0) + 2 * c
        else:
            (v1, _), (v2, _) = zk
            quad[(v1, v2)] = quad.get((v1, v2), 0) + c
            quad[(v2, v1)] = quad.get((v2, v1), 0) + c

    # external diagonal shifts (node-diagonal quartic terms, any sphere)
    lambda_sites = {}
    for a in sites:
        if a in nodes:
            continue
        shift = quad.pop(((a, XI), (a, ETA)), 0.0)
        quad.pop(((a, ETA), (a, XI)), None)
        if a in lam_f:
            # resonant site: keep the shift inside the quadratic form
            if shift:
                quad[((a, XI), (a, ETA))] = shift
                quad[((a, ETA), (a, XI))] = shift
            continue
        lambda_sites[a] = lam[a] + shift.real

    # quadratic form over the resonant external modes, real coordinates
    M = len(lam_f)
    pos = {}
    for i, a in enumerate(lam_f):
        pos[(a, XI)] = 2 * i
        pos[(a, ETA)] = 2 * i + 1
    G = np.zeros((2 * M, 2 * M), dtype=complex)
    for (v1, v2), c in quad.items():
        if v1 in pos and v2 in pos:
            G[pos[v1], pos[v2]] += c
        else:
            raise AssertionError("resonant coupling leaves the resonant "
                                 "external set: %r" % ((v1, v2),))
    for i, a in enumerate(lam_f):
        gap = lam[a] - omega_I[node_of[a]]
        G[2 * i, 2 * i + 1] += gap
        G[2 * i + 1, 2 * i] += gap
    T = np.array([[1.0, 1.0j], [1.0, -1.0j]]) / math.sqrt(2.0)
    Mx = np.kron(np.eye(M), T)
    C = Mx.T @ G @ Mx
    if M and np.abs(C.imag).max() > 1e-10 * max(1.0, np.abs(C).max()):
        raise AssertionError("resonant quadratic form is not real")
    C = (C.real + C.real.T) / 2

    # split into symplectically invariant components
    scale = max(1.0, np.abs(C).max()) if M else 1.0
    adj = [[j for j in range(M) if j != i and
            np.abs(C[2 * i:2 * i + 2, 2 * j:2 * j + 2]).max() > 1e-12 * scale]
           for i in range(M)]
    comp_of = [-1] * M
    comps = []
    for i in range(M):
        if comp_of[i] >= 0:
            continue
        stack, comp = [i], []
        comp_of[i] = len(comps)
        while stack:
            u = stack.pop()
            comp.append(u)
            for vv in adj[u]:
                if comp_of[vv] < 0:
                    comp_of[vv] = len(comps)
                    stack.append(vv)
        comps.append(sorted(comp))
    J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    lambda_e, lambda_h = [], []
    a2_floor = math.inf
    for comp in comps:
        sel = np.array([c2 for i in comp for c2 in (2 * i, 2 * i + 1)])
        Cc = C[np.ix_(sel, sel)]
        Jc = np.kron(np.eye(len(comp)), J2)
        ev = np.linalg.eigvals(Jc @ Cc)
        mags = np.abs(ev)
        if mags.max() > 0:
            a2_floor = min(a2_floor,
                           float(mags[mags > 1e-13 * mags.max()].min()
                                 if (mags > 1e-13 * mags.max()).any()
                                 else 0.0))
        hyper = np.abs(ev.real).max() > 1e-10 * max(1.0, mags.max())
        if hyper:
            lambda_h.extend(lam_f[i] for i in comp)
        else:
            freqs = sorted(ev.imag[ev.imag > 0])
            for i, fr in zip(comp, freqs):
                lambda_sites[lam_f[i]] = float(fr)
            lambda_e.extend(lam_f[i] for i in comp)
    lambda_h = tuple(sorted(lambda_h))
    hsel = np.array([c2 for i in range(M) if lam_f[i] in lambda_h
                     for c2 in (2 * i, 2 * i + 1)], dtype=int)
    H_I = C[np.ix_(hsel, hsel)] if len(hsel) else np.zeros((0, 0))

    f_tilde = _gauge_r_shift(_gauge_k_shift(aa(frest), node_of), node_of,
                             model.max_degree, n)
    return SingularNormalForm(
        model=model, omega_I=omega_I, const=const,
        lambda_sites=lambda_sites, lambda_f_sites=lam_f,
        lambda_e=tuple(sorted(lambda_e)), lambda_h=lambda_h, H_I=H_I,
        C_real=C, f_tilde=f_tilde, a2_floor=a2_floor, nu=model.nu,
        birkhoff_killed=killed, birkhoff_min_divisor=min_div)
