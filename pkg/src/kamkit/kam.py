"""Two-level iteration driver: blocks of inner steps at a fixed resonance
partition and frozen divisors, separated by super steps that fold the
accumulated normal-form corrections, coarsen the partition and shrink the
analyticity domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import J2, NormalFormMatrix, WeightParams
from .divisors import ParameterGrid, excise
from .hamiltonian import (ClassNormParams, ETA, XI, NormalFormHamiltonian,
                          Polynomial, class_norm, lie_transform)
from .homological import DivisorGuard, class_tables, solve_homological
from .lattice import build_partition


@dataclass
class Schedule:
    """Outer-loop knobs: partition growth, domain decay, stop rules."""
    delta0: float = 2.0
    delta_theta: float = 2.0          # Delta_{k+1} = ceil(Delta_k ** theta)
    gamma_decay: float = 0.9
    domain_decay: float = 0.5         # approach to the sigma/2, mu/2 endpoint
    eps_target: float = 1e-12
    max_super: int = 6
    max_inner: int = 25               # cap on K_k
    work_degree: int = 4
    max_picard: int = 3
    prune_tol: float = 1e-18
    rel_prune: float = 1e-10          # cutoff relative to the f scale
    rel_prune_rest: float = 1e-6      # looser cutoff for non-jet terms


@dataclass
class IterationState:
    step: int
    eps: float
    delta: float
    gamma: float
    sigma: float
    mu: float
    K: int
    h: NormalFormHamiltonian
    f: Polynomial
    h_acc: Polynomial                 # normal-form corrections, not yet folded
    grid: ParameterGrid | None = None
    sigma_end: float = 0.0
    mu_end: float = 0.0
    transform_log: list = field(default_factory=list)
    divisor_table: dict = field(default_factory=dict)
    metrics: list = field(default_factory=list)

    def weights(self, base: WeightParams) -> WeightParams:
        return WeightParams(gamma1=self.gamma, gamma2=base.gamma2,
                            kappa=base.kappa, m_star=base.m_star)

    def norm_params(self) -> ClassNormParams:
        return ClassNormParams(sigma=self.sigma, mu=self.mu)


def jet_norm(state: IterationState, base_w: WeightParams) -> float:
    return class_norm(state.f.jet(), state.norm_params(),
                      state.weights(base_w))


def initial_state(h: NormalFormHamiltonian, f: Polynomial,
                  schedule: Schedule, base_w: WeightParams,
                  sigma: float = 0.3, mu: float = 0.25,
                  grid: ParameterGrid | None = None) -> IterationState:
    st = IterationState(step=0, eps=math.inf, delta=schedule.delta0,
                        gamma=base_w.gamma1, sigma=sigma, mu=mu, K=0,
                        h=h, f=f, h_acc=Polynomial.zero(h.n), grid=grid,
                        sigma_end=sigma / 2, mu_end=mu / 2)
    st.eps = jet_norm(st, base_w)
    st.K = inner_count(st.eps, schedule)
    return st


def inner_count(eps: float, schedule: Schedule) -> int:
    if eps <= 0:
        return 1
    return max(1, min(schedule.max_inner, math.ceil(math.log(1.0 / eps))))


def _merge_divisors(table: dict, log: dict):
    """Frozen-divisor bookkeeping: a key recorded twice must agree bitwise."""
    for key, val in log.items():
        old = table.get(key)
        if old is not None and old != val:
            raise RuntimeError(f"divisor drift within a super block at {key}")
        table[key] = val


def _excise_failures(state: IterationState, failures, delta0: float):
    """Shrink the surviving grid around guard failures.

    Each failing divisor is extended off the reference parameter to first
    order through the model frequency map."""
    if state.grid is None or not failures or state.h.omega_fn is None:
        return
    rho_star = np.asarray(state.h.rho_star, dtype=float)
    omega_star = np.asarray(state.h.omega_fn(rho_star), dtype=float)
    fam = []
    for k, classes, channel, val in failures:
        kv = np.array(k, dtype=float)

        def fn(rho, kv=kv, val=val):
            om = np.asarray(state.h.omega_fn(rho), dtype=float)
            return val + kv @ (om - omega_star)
        fam.append(fn)
    bad, state.grid = excise(fam, state.grid, delta0)
    if state.grid.measure() == 0.0:
        raise RuntimeError("empty surviving grid after divisor excision")


def inner_step(state: IterationState, schedule: Schedule,
               base_w: WeightParams, guard_delta0: float,
               tables: dict | None = None) -> IterationState:
    """One homological solve and jet transform at frozen normal form."""
    h = state.h
    guard = DivisorGuard(delta0=guard_delta0)
    if tables is None:
        tables = class_tables(h)
    F = state.h_acc + state.f
    sol = solve_homological(h, F, guard, gamma1=state.gamma,
                            max_picard=schedule.max_picard,
                            work_degree=schedule.work_degree,
                            prune_tol=schedule.prune_tol, tables=tables)
    _merge_divisors(state.divisor_table, sol.divisor_log)
    _excise_failures(state, guard.failures, guard_delta0)
    h_poly = h.to_polynomial()
    ht_poly = sol.h_tilde.to_polynomial(h)
    scale = F.max_coeff()
    cut = max(schedule.prune_tol, schedule.rel_prune * scale)
    cut_rest = max(cut, schedule.rel_prune_rest * scale)
    G = lie_transform(h_poly + F, sol.S, finite_set=h.finite_set,
                      max_degree=schedule.work_degree, tol=cut,
                      rest_tol=cut_rest)
    f_next = G - h_poly - ht_poly
    f_next.prune_split(cut, cut_rest)
    state.f = f_next
    state.h_acc = ht_poly
    state.transform_log.append(sol.S)
    state.step += 1
    state.eps = jet_norm(state, base_w)
    state.metrics.append({
        "step": state.step, "eps": state.eps, "K": state.K,
        "delta": state.delta,
        "gamma": state.gamma, "sigma": state.sigma, "mu": state.mu,
        "skipped": len(sol.skipped_report),
        "guard_failures": len(guard.failures),
        "measure": state.grid.measure() if state.grid else None,
    })
    return state


def _fold_h_acc(h: NormalFormHamiltonian, h_acc: Polynomial,
                delta_next: float) -> NormalFormHamiltonian:
    """Fold corrections into a new normal form on the coarser partition."""
    p_old = h.partition
    n = h.n
    zero = (0,) * n
    const_add = h_acc.terms.get((zero, zero, ()), 0.0)
    chi = np.zeros(n)
    quad = {}
    fin = set(p_old.finite_set)
    fin_comps = [(s, c) for s in p_old.classes[p_old.finite_index]
                 for c in (0, 1)] if p_old.finite_index is not None else []
    fin_pos = {v: i for i, v in enumerate(fin_comps)}
    H_add = np.zeros((len(fin_comps), len(fin_comps)))
    for (k, m, zk), c in h_acc.terms.items():
        if k != zero:
            raise RuntimeError("accumulated correction has angle dependence")
        if sum(m) == 1 and not zk:
            chi[m.index(1)] += c.real
            continue
        if not zk:
            continue
        sites = [v[0] for v, _ in zk]
        if all(s in fin for s in sites):
            if len(zk) == 1:
                (v, pw), = zk
                H_add[fin_pos[v], fin_pos[v]] += 2 * c.real
            else:
                (v1, _), (v2, _) = zk
                H_add[fin_pos[v1], fin_pos[v2]] += c.real
                H_add[fin_pos[v2], fin_pos[v1]] += c.real
            continue
        (v1, p1), *rest = zk
        if rest:
            (v2, p2), = rest
        else:
            v2, p2 = v1, p1
        a = v1[0] if v1[1] == XI else v2[0]
        b = v2[0] if v2[1] == ETA else v1[0]
        quad[(a, b)] = quad.get((a, b), 0.0) + c

    p_new = build_partition(delta_next, p_old.radius, p_old.d,
                            finite_set=p_old.finite_set,
                            core_cutoff=p_old.core_cutoff,
                            exclude=p_old.exclude)
    where_old = {}
    for ci, cl in enumerate(p_old.classes):
        for i, a in enumerate(cl):
            where_old[a] = (ci, i)
    nf = NormalFormMatrix(partition=p_new)
    for ci, cl in enumerate(p_new.classes):
        if ci == p_new.finite_index:
            continue
        Q = np.zeros((len(cl), len(cl)), dtype=complex)
        for i, a in enumerate(cl):
            for j, b in enumerate(cl):
                oa, ia = where_old[a]
                ob, ib = where_old[b]
                if oa == ob:
                    Q[i, j] += h.nf.block_for(oa)[ia, ib]
                Q[i, j] += quad.get((a, b), 0.0)
        nf.set_block(ci, Q)      # Hermitian check = normal-form gate
    if p_new.finite_index is not None:
        H = np.zeros((len(fin_comps), len(fin_comps)))
        if h.nf.hyperbolic_block is not None:
            H += h.nf.hyperbolic_block
        H += H_add
        nf.hyperbolic_block = H
    return NormalFormHamiltonian(
        omega=h.omega + chi, nf=nf, const=h.const + const_add.real,
        rho_star=h.rho_star, omega_fn=h.omega_fn, lambda_fn=h.lambda_fn)


def super_step(state: IterationState, schedule: Schedule,
               base_w: WeightParams) -> IterationState:
    """Fold corrections, coarsen the partition, shrink the domain."""
    delta_next = (state.delta if math.isinf(state.delta)
                  else math.ceil(state.delta ** schedule.delta_theta))
    state.h = _fold_h_acc(state.h, state.h_acc, delta_next)
    state.h_acc = Polynomial.zero(state.h.n)
    state.delta = delta_next
    state.gamma *= schedule.gamma_decay
    state.sigma = state.sigma_end \
        + (state.sigma - state.sigma_end) * schedule.domain_decay
    state.mu = state.mu_end + (state.mu - state.mu_end) * schedule.domain_decay
    state.eps = jet_norm(state, base_w)
    state.K = inner_count(state.eps, schedule)
    return state


@dataclass
class RunReport:
    state: IterationState
    omega_initial: np.ndarray
    omega_final: np.ndarray
    omega_drift: float
    unstable_count: int
    a_inf_max_real: float
    eps_history: list                 # eps at each super-step boundary
    reached_target: bool
    aborted: str | None = None

    def dump_lines(self) -> list[str]:
        lines = [
            f"reached_target={self.reached_target} "
            f"eps_final={self.state.eps:.6g}",
            f"omega_drift={self.omega_drift:.6g}",
            f"unstable_count={self.unstable_count} "
            f"a_inf_max_real={self.a_inf_max_real:.3e}",
            "eps_history=" + " ".join(f"{e:.6g}" for e in self.eps_history),
        ]
        if self.aborted:
            lines.append(f"aborted={self.aborted}")
        return lines


def _spectrum_report(h: NormalFormHamiltonian):
    """Eigenvalue classification of the final quadratic part."""
    unstable = 0
    a_inf_real = 0.0
    Hf = h.nf.hyperbolic_block
    if Hf is not None and Hf.size:
        F = Hf.shape[0] // 2
        J = np.kron(np.eye(F), J2)
        ev = np.linalg.eigvals(J @ Hf)
        tol = 1e-10 * max(1.0, np.abs(ev).max())
        unstable = int((ev.real > 10 * tol).sum())
    p = h.partition
    for ci in range(len(p.classes)):
        if ci == p.finite_index:
            continue
        Q = h.nf.block_for(ci)
        if not Q.size:
            continue
        # real form of the Hermitian block: eigenvalues come in +-i pairs
        m = Q.shape[0]
        R = np.zeros((2 * m, 2 * m))
        for i in range(m):
            for j in range(m):
                R[2 * i:2 * i + 2, 2 * j:2 * j + 2] = \
                    Q[i, j].real * np.eye(2) + Q[i, j].imag * J2
        ev = np.linalg.eigvals(np.kron(np.eye(m), J2) @ R)
        a_inf_real = max(a_inf_real, float(np.abs(ev.real).max()))
    return unstable, a_inf_real


def run(h: NormalFormHamiltonian, f: Polynomial, schedule: Schedule,
        base_w: WeightParams, guard_delta0: float = 1e-8,
        sigma: float = 0.3, mu: float = 0.25,
        grid: ParameterGrid | None = None) -> RunReport:
    """Full two-level iteration; see the step operations for the bookkeeping.

    Stops at the eps target, the super-step budget, or a stage abort
    (reported, never swallowed).
    """
    state = initial_state(h, f, schedule, base_w, sigma=sigma, mu=mu,
                          grid=grid)
    omega0 = np.array(state.h.omega, dtype=float)
    eps_history = [state.eps]
    aborted = None
    try:
        for _ in range(schedule.max_super):
            if state.eps <= schedule.eps_target:
                break
            tables = class_tables(state.h)
            state.divisor_table = {}
            for _ in range(state.K):
                state = inner_step(state, schedule, base_w, guard_delta0,
                                   tables=tables)
                if state.eps <= schedule.eps_target:
                    break
            if state.eps <= schedule.eps_target:
                eps_history.append(state.eps)
                break
            state = super_step(state, schedule, base_w)
            eps_history.append(state.eps)
    except (RuntimeError, ValueError) as exc:
        aborted = str(exc)
    h_final = (_fold_h_acc(state.h, state.h_acc, state.delta)
               if state.h_acc.terms else state.h)
    unstable, a_inf_real = _spectrum_report(h_final)
    omega_final = np.array(h_final.omega, dtype=float)
    return RunReport(
        state=state, omega_initial=omega0, omega_final=omega_final,
        omega_drift=float(np.abs(omega_final - omega0).max()),
        unstable_count=unstable, a_inf_max_real=a_inf_real,
        eps_history=eps_history,
        reached_target=state.eps <= schedule.eps_target, aborted=aborted)


def singular_threshold(eps: float, delta0: float, chi: float, xi: float,
                       constants: dict | None = None):
    """Smallness gate for the singular application.

    Checks chi, xi <= c * delta0^(1 - aleph) and
    eps * log(1/eps)^beta_bar <= eps0 * delta0^(1 + kappa*aleph).
    Returns (ok, margins); margins are bound/value ratios (>= 1 passes).
    """
    c = dict(eps0=1.0, kappa=1.0, beta_bar=1.0, aleph=0.25, c29=1.0)
    if constants:
        c.update(constants)
    if min(eps, delta0) <= 0 or chi < 0 or xi < 0:
        raise ValueError("inputs must be positive")
    gate = c["c29"] * delta0 ** (1.0 - c["aleph"])
    lhs = eps * max(math.log(1.0 / eps), 1e-300) ** c["beta_bar"]
    rhs = c["eps0"] * delta0 ** (1.0 + c["kappa"] * c["aleph"])
    margins = {
        "chi": gate / chi if chi > 0 else math.inf,
        "xi": gate / xi if xi > 0 else math.inf,
        "eps": rhs / lhs,
    }
    ok = all(v >= 1.0 for v in margins.values())
    return ok, margins
