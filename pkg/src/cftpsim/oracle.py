"""Brute-force ground truth on tiny systems.

Enumerates the random-cluster measure and its heat-bath transition
matrix, extracts the spectrum and the exact time scales, computes the
exact coupling-time law through the absorbing chain on ordered
configuration pairs, and machine-checks the coupling-time inequalities,
the stationary-minimum bound, the spectral properties of increasing
observables, and the d=1 relaxation-time bounds.

State-space caps: full enumeration accepts m <= 16 edges, but the dense
transition matrix grows as 4**m (roughly 0.5 GiB at m = 13); keep m at
or below 12 in routine use.  Pair chains accept m <= 8 (3**m ordered
pairs).  Everything here is double precision numpy; none of it is meant
for large graphs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .coupon import coupon_moments
from .fk import FkParams
from .graph import Graph
from .ising import IsingParams, plus_threshold

MAX_ENUM_EDGES = 16
MAX_PAIR_EDGES = 8
EIG_NONNEG_TOL = 1e-10


def component_count_table(g: Graph) -> np.ndarray:
    """k(A) for every configuration bitmask A in 0..2**m - 1."""
    if g.m > MAX_ENUM_EDGES:
        raise ValueError(f"enumeration capped at m <= {MAX_ENUM_EDGES}, got m={g.m}")
    n, m = g.n, g.m
    eu = [int(x) for x in g.edge_u]
    ev = [int(x) for x in g.edge_v]
    out = np.empty(1 << m, dtype=np.int32)
    parent = list(range(n))
    for a in range(1 << m):
        for i in range(n):
            parent[i] = i
        comps = n
        for e in range(m):
            if not (a >> e) & 1:
                continue
            x = eu[e]
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            y = ev[e]
            while parent[y] != y:
                parent[y] = parent[parent[y]]
                y = parent[y]
            if x != y:
                parent[x] = y
                comps -= 1
        out[a] = comps
    return out


@dataclass
class ExactChain:
    """Enumerated heat-bath chain: stationary vector, dense transition
    matrix, spectrum and exact time scales."""

    graph: Graph
    params: FkParams
    k: np.ndarray            # component count per configuration
    phi: np.ndarray          # stationary probabilities
    P: np.ndarray            # dense row-stochastic transition matrix
    eigenvalues: np.ndarray  # descending, eigenvalues[0] == 1
    trel: float
    texp: float
    psi: float               # q**2 / (p (1 - p))
    _sym_vecs: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if self.n_states > 1 else 0.0

    def occupied_observable(self) -> np.ndarray:
        """N(A) = |A| over the enumerated state order."""
        return np.bitwise_count(
            np.arange(self.n_states, dtype=np.uint32)).astype(np.float64)

    def spectral_coefficients(self, gvec: np.ndarray) -> np.ndarray:
        """Components <g, psi_l>_phi in the descending eigenvalue order."""
        return self._sym_vecs.T @ (np.sqrt(self.phi) * gvec)

    def autocovariance(self, gvec: np.ndarray, ts) -> np.ndarray:
        """Exact stationary autocovariance <g, (P**t - Pi) g>_phi."""
        ts = np.atleast_1d(np.asarray(ts))
        c2 = self.spectral_coefficients(gvec)[1:] ** 2
        lam = self.eigenvalues[1:]
        return np.array([float(np.sum(c2 * lam ** t)) for t in ts])

    def autocorrelation(self, gvec: np.ndarray, ts) -> np.ndarray:
        cov = self.autocovariance(gvec, ts)
        var = float(self.autocovariance(gvec, [0])[0])
        return cov / var

    def symmetrized(self) -> np.ndarray:
        s = np.sqrt(self.phi)
        return self.P * s[:, None] / s[None, :]


def enumerate_chain(g: Graph, params: FkParams) -> ExactChain:
    """Enumerate the 2**m configurations, normalize the measure, build
    P = (1/m) sum_e P_e, and diagonalize via the reversible
    symmetrization D^(1/2) P D^(-1/2)."""
    m = g.m
    if m > MAX_ENUM_EDGES:
        raise ValueError(f"enumeration capped at m <= {MAX_ENUM_EDGES}, got m={m}")
    if m < 1:
        raise ValueError("enumeration requires at least one edge")
    k = component_count_table(g)
    nstates = 1 << m
    sizes = np.bitwise_count(np.arange(nstates, dtype=np.uint32)).astype(np.float64)
    p, q, p_tilde = params.p, params.q, params.p_tilde
    weights = (q ** k.astype(np.float64)) * p ** sizes * (1.0 - p) ** (m - sizes)
    phi = weights / weights.sum()

    P = np.zeros((nstates, nstates))
    inv_m = 1.0 / m
    for a in range(nstates):
        for e in range(m):
            bit = 1 << e
            a_dn = a & ~bit
            a_up = a | bit
            thr = p_tilde if k[a_dn] != k[a_up] else p
            P[a, a_up] += thr * inv_m
            P[a, a_dn] += (1.0 - thr) * inv_m

    s = np.sqrt(phi)
    sym = P * s[:, None] / s[None, :]
    lam, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vecs = vecs[:, order]
    # fix the top eigenvector sign so spectral coefficients are reproducible
    if vecs[0, 0] < 0:
        vecs = -vecs
    lam2 = float(lam[1]) if nstates > 1 else 0.0
    trel = 1.0 / (1.0 - lam2)
    texp = -1.0 / math.log(lam2) if lam2 > 0.0 else 0.0
    return ExactChain(graph=g, params=params, k=k, phi=phi, P=P,
                      eigenvalues=lam, trel=trel, texp=texp,
                      psi=q * q / (p * (1.0 - p)), _sym_vecs=vecs)


def second_eigenvalue_power(chain: ExactChain, max_iters: int = 200000,
                            tol: float = 1e-14) -> float:
    """Power iteration on the symmetrized matrix with the top eigenvector
    deflated; independent cross-check of the dense eigensolver."""
    sym = chain.symmetrized()
    v1 = np.sqrt(chain.phi)
    v1 = v1 / np.linalg.norm(v1)
    n = sym.shape[0]
    x = np.cos(np.arange(n) * 0.7) + 0.1  # deterministic, generic start
    x -= (v1 @ x) * v1
    x /= np.linalg.norm(x)
    lam_old = np.inf
    for _ in range(max_iters):
        y = sym @ x
        y -= (v1 @ y) * v1
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        lam = float(x @ (sym @ x))
        if abs(lam - lam_old) < tol:
            return lam
        lam_old = lam
    return lam_old


def exact_d(chain: ExactChain, t_max: int) -> np.ndarray:
    """Worst-case total variation distance d(t) for t = 0..t_max."""
    n = chain.n_states
    M = np.eye(n)
    out = np.empty(t_max + 1)
    for t in range(t_max + 1):
        out[t] = 0.5 * np.abs(M - chain.phi[None, :]).sum(axis=1).max()
        if t < t_max:
            M = M @ chain.P
    return out


def exact_tmix(chain: ExactChain, epsilon: float = 0.25,
               t_cap: int = 10 ** 6) -> int:
    """t_mix = min{t : d(t) <= epsilon}."""
    n = chain.n_states
    M = np.eye(n)
    for t in range(t_cap + 1):
        d = 0.5 * np.abs(M - chain.phi[None, :]).sum(axis=1).max()
        if d <= epsilon:
            return t
        M = M @ chain.P
    raise RuntimeError(f"d(t) did not reach {epsilon} within {t_cap} steps")


@dataclass
class PairChain:
    """Absorbing chain on ordered configuration pairs; its absorption
    time is exactly the coupling time."""

    model: str
    graph: dict
    params: dict
    n_pairs: int
    tail: np.ndarray  # P(T > t) for t = 0..len-1, last entry below tol
    expectation: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _pair_chain_from_transitions(transitions, n_pairs, start, absorbing,
                                 model, graph_desc, params_dict,
                                 tol=1e-12, t_cap=10 ** 6) -> PairChain:
    rows, cols, vals = transitions
    P = scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n_pairs, n_pairs))
    PT = P.T.tocsr()
    v = np.zeros(n_pairs)
    v[start] = 1.0
    absorbing = np.asarray(absorbing)
    tails = []
    e_sum = 0.0
    et1_sum = 0.0
    t = 0
    while True:
        tail = 1.0 - float(v[absorbing].sum())
        tail = max(tail, 0.0)
        tails.append(tail)
        e_sum += tail
        et1_sum += t * tail
        if tail < tol:
            break
        if t >= t_cap:
            raise RuntimeError(f"pair-chain tail did not reach {tol} within {t_cap} steps")
        v = PT @ v
        t += 1
    expectation = e_sum
    variance = 2.0 * et1_sum + expectation - expectation * expectation
    return PairChain(model=model, graph=graph_desc, params=params_dict,
                     n_pairs=n_pairs, tail=np.array(tails),
                     expectation=expectation, variance=variance)


def pair_chain_law(g: Graph, params: FkParams, tol: float = 1e-12,
                   t_cap: int = 10 ** 6) -> PairChain:
    """Exact law of the coupling time of the coupled heat-bath update.

    Pairs (B, T) with B a subset of T are encoded base 3 per edge:
    digit 0 = in neither, 1 = in top only, 2 = in both.  For each edge
    the uniform variate is partitioned by the two thresholds (bottom
    threshold never exceeds the top one), giving at most three outcomes.
    """
    m = g.m
    if m > MAX_PAIR_EDGES:
        raise ValueError(f"pair chain capped at m <= {MAX_PAIR_EDGES}, got m={m}")
    if m < 1:
        raise ValueError("pair chain requires at least one edge")
    k = component_count_table(g)
    p, p_tilde = params.p, params.p_tilde
    pow3 = [3 ** e for e in range(m + 1)]
    n_pairs = pow3[m]
    inv_m = 1.0 / m

    rows, cols, vals = [], [], []
    absorbing = []
    for code in range(n_pairs):
        bmask = 0
        tmask = 0
        c = code
        for e in range(m):
            digit = c % 3
            c //= 3
            if digit == 2:
                bmask |= 1 << e
            if digit >= 1:
                tmask |= 1 << e
        if bmask == tmask:
            absorbing.append(code)
            rows.append(code)
            cols.append(code)
            vals.append(1.0)
            continue
        for e in range(m):
            bit = 1 << e
            tb = p_tilde if k[bmask & ~bit] != k[bmask | bit] else p
            tt = p_tilde if k[tmask & ~bit] != k[tmask | bit] else p
            digit = (code // pow3[e]) % 3
            base = code - digit * pow3[e]
            for new_digit, w in ((2, tb), (1, tt - tb), (0, 1.0 - tt)):
                if w <= 0.0:
                    continue
                rows.append(code)
                cols.append(base + new_digit * pow3[e])
                vals.append(w * inv_m)

    start = (pow3[m] - 1) // 2  # all digits 1: (empty, full)
    return _pair_chain_from_transitions(
        (rows, cols, vals), n_pairs, start, absorbing,
        "fk", g.description(), params.as_dict(), tol=tol, t_cap=t_cap)


def ising_pair_chain_law(g: Graph, params: IsingParams, tol: float = 1e-12,
                         t_cap: int = 10 ** 6) -> PairChain:
    """Exact coupling-time law for the Ising heat-bath coupling; pairs of
    spin configurations ordered pointwise, encoded base 3 per vertex:
    digit 0 = both minus, 1 = top plus only, 2 = both plus."""
    n = g.n
    if n > MAX_PAIR_EDGES:
        raise ValueError(f"pair chain capped at n <= {MAX_PAIR_EDGES}, got n={n}")
    beta = params.beta
    pow3 = [3 ** v for v in range(n + 1)]
    n_pairs = pow3[n]
    inv_n = 1.0 / n

    rows, cols, vals = [], [], []
    absorbing = []
    bspins = np.empty(n, dtype=np.int64)
    tspins = np.empty(n, dtype=np.int64)
    for code in range(n_pairs):
        c = code
        diff = False
        for v in range(n):
            digit = c % 3
            c //= 3
            bspins[v] = 1 if digit == 2 else -1
            tspins[v] = 1 if digit >= 1 else -1
            if digit == 1:
                diff = True
        if not diff:
            absorbing.append(code)
            rows.append(code)
            cols.append(code)
            vals.append(1.0)
            continue
        for v in range(n):
            sb = 0
            st = 0
            for kk in range(g.inc_ptr[v], g.inc_ptr[v + 1]):
                w = int(g.inc_other[kk])
                sb += bspins[w]
                st += tspins[w]
            tb = plus_threshold(beta, sb)
            tt = plus_threshold(beta, st)
            digit = (code // pow3[v]) % 3
            base = code - digit * pow3[v]
            for new_digit, w in ((2, tb), (1, tt - tb), (0, 1.0 - tt)):
                if w <= 0.0:
                    continue
                rows.append(code)
                cols.append(base + new_digit * pow3[v])
                vals.append(w * inv_n)

    start = (pow3[n] - 1) // 2  # all digits 1: (all minus, all plus)
    return _pair_chain_from_transitions(
        (rows, cols, vals), n_pairs, start, absorbing,
        "ising", g.description(), params.as_dict(), tol=tol, t_cap=t_cap)


# ---------------------------------------------------------------------------
# Machine checks
# ---------------------------------------------------------------------------

_REL_SLACK = 1e-9
_ABS_SLACK = 1e-12


@dataclass
class CheckReport:
    check: str
    passed: bool
    worst_margin: float
    location: str

    def to_json(self) -> str:
        return json.dumps({"check": self.check, "passed": self.passed,
                           "worst_margin": self.worst_margin,
                           "location": self.location}, sort_keys=True)


class _MarginTracker:
    def __init__(self, check: str):
        self.check = check
        self.passed = True
        self.worst = math.inf
        self.location = "ok"

    def require(self, lhs: float, rhs: float, location: str):
        """Require lhs <= rhs up to float slack; track the worst margin."""
        margin = rhs - lhs
        if margin < self.worst:
            self.worst = margin
            self.location = location
        if lhs > rhs * (1.0 + _REL_SLACK) + _ABS_SLACK and lhs > rhs + _ABS_SLACK:
            self.passed = False

    def report(self) -> CheckReport:
        worst = self.worst if math.isfinite(self.worst) else 0.0
        return CheckReport(check=self.check, passed=self.passed,
                           worst_margin=worst, location=self.location)


def check_theorem1(chain: ExactChain, pairlaw: PairChain) -> CheckReport:
    """Coupling-time tail, mean and variance inequalities in terms of the
    exact t_exp and t_mix, plus the total-variation sandwich
    d(t) <= P(T > t) <= 2(m+1) d(t)."""
    m = chain.graph.m
    lam2 = chain.lambda2
    psi = chain.psi
    texp = chain.texp
    tmix = exact_tmix(chain)
    tail = pairlaw.tail
    t_max = len(tail) - 1
    d = exact_d(chain, t_max)
    tracker = _MarginTracker("theorem1")

    tail_amp = math.exp((math.log(psi) + 2.0) * m)
    for t in range(t_max + 1):
        decay = lam2 ** t
        tracker.require(0.5 * decay, tail[t], f"tail-lower@t={t}")
        tracker.require(tail[t], tail_amp * decay, f"tail-upper@t={t}")
        tracker.require(d[t], tail[t], f"sandwich-lower@t={t}")
        tracker.require(tail[t], 2.0 * (m + 1) * d[t], f"sandwich-upper@t={t}")

    e_t = pairlaw.expectation
    sd_t = pairlaw.std
    log2_psi = math.log2(psi)
    log2_4m = math.log2(4.0 * m)
    tracker.require((tmix - 1.0) / 4.0, e_t, "mean-lower")
    tracker.require(e_t, 12.0 * log2_4m * tmix, "mean-upper-tmix")
    tracker.require(sd_t, 15.0 * log2_4m * tmix, "std-upper-tmix")
    if lam2 > 0.0:
        # lambda2 = 0 happens only for the one-edge chain, where t_exp
        # degenerates to 0 and the t_exp-route bounds are vacuous
        tracker.require(e_t, 4.0 * (log2_psi + 3.0) * m * texp, "mean-upper-texp")
        tracker.require(sd_t, 5.0 * (log2_psi + 3.0) * m * texp, "std-upper-texp")
    return tracker.report()


def check_lemma1(chain: ExactChain) -> CheckReport:
    """min_A phi(A) >= (p(1-p)/q**2)**m."""
    m = chain.graph.m
    bound = (1.0 / chain.psi) ** m
    tracker = _MarginTracker("lemma1")
    tracker.require(bound, float(chain.phi.min()), "phi-min")
    return tracker.report()


def _is_increasing_on_covers(h: np.ndarray, m: int, slack: float = 1e-11) -> bool:
    """Monotone over all comparable pairs iff monotone over covering pairs."""
    idx = np.arange(h.shape[0])
    for e in range(m):
        bit = 1 << e
        lo = idx[(idx & bit) == 0]
        if np.any(h[lo] > h[lo | bit] + slack):
            return False
    return True


def random_increasing_function(m: int, gen: np.random.Generator) -> np.ndarray:
    """A random strictly increasing function on the subset lattice:
    positive per-edge weights plus a few random upset indicators."""
    nstates = 1 << m
    states = np.arange(nstates, dtype=np.uint64)
    w = gen.uniform(0.05, 1.0, size=m)
    g = np.zeros(nstates)
    for e in range(m):
        g += w[e] * ((states >> np.uint64(e)) & np.uint64(1)).astype(np.float64)
    for _ in range(gen.integers(1, 5)):
        mask = np.uint64(gen.integers(1, nstates))
        c = gen.uniform(0.1, 2.0)
        g += c * ((states & mask) == mask).astype(np.float64)
    return g


def check_appendixA(chain: ExactChain, n_random: int = 100,
                    seed: int = 0) -> CheckReport:
    """Spectral facts for increasing observables: non-negative spectrum
    with a positive second eigenvalue, preservation of monotonicity by
    the transition operator, and convergence of the autocovariance ratio
    cov(N_0, N_t) / lambda2**t to a positive constant."""
    m = chain.graph.m
    tracker = _MarginTracker("appendixA")
    lam = chain.eigenvalues
    tracker.require(-float(lam.min()), EIG_NONNEG_TOL, "eigenvalue-nonneg")
    if chain.n_states > 2:
        tracker.require(1e-12, chain.lambda2, "lambda2-positive")

    gen = np.random.default_rng(seed)
    nvec = chain.occupied_observable()
    functions = [("N", nvec)]
    for i in range(n_random):
        functions.append((f"random-{i}", random_increasing_function(m, gen)))
    for name, gvec in functions:
        h = chain.P @ gvec
        if not _is_increasing_on_covers(h, m):
            tracker.passed = False
            tracker.worst = -1.0
            tracker.location = f"Pg-not-increasing:{name}"
            return tracker.report()

    # autocovariance ratio: spectral form, cross-checked against P**t
    coeffs = chain.spectral_coefficients(nvec)
    c2 = coeffs[1:] ** 2
    lam_rest = lam[1:]
    lam2 = chain.lambda2
    pi_n = float(chain.phi @ nvec)
    mt = chain.P @ nvec
    for t in (1, 2, 3):
        direct = float((nvec - pi_n) * chain.phi @ (mt - pi_n))
        spectral = float(np.sum(c2 * lam_rest ** t))
        tracker.require(abs(direct - spectral), 1e-9, f"cov-spectral-consistency@t={t}")
        mt = chain.P @ mt
    if lam2 > 0.0:
        group = np.abs(lam_rest - lam2) <= 1e-8
        nw2 = float(np.sum(c2[group]))
        tracker.require(1e-12, nw2, "projection-positive")
        ratios = np.where(lam_rest > 0.0, lam_rest / lam2, 0.0)
        sub = ratios[~group]
        if sub.size and sub.max() > 0.0 and nw2 > 0.0:
            t_star = int(min(10 ** 6, math.ceil(
                math.log(1e-9 * nw2 / max(float(np.sum(c2[~group])), 1e-300))
                / math.log(sub.max())))) if sub.max() < 1.0 else 10 ** 6
            t_star = max(t_star, 1)
        else:
            t_star = 1
        ratio = float(np.sum(c2 * ratios ** t_star))
        tracker.require(abs(ratio - nw2), 1e-6 * max(nw2, 1e-12),
                        f"ratio-convergence@t={t_star}")
    return tracker.report()


def check_theorem2iv(L: int, p: float, q: float, c: float = 4.0) -> CheckReport:
    """Relaxation-time bounds on the cycle:
    L (1 - c p_tilde**L) <= t_rel <= q L (1 + c p_tilde**L), with exact
    t_rel from enumeration; for q = 1 the spectrum forces t_rel = L."""
    from .graph import make_torus

    params = FkParams(p=p, q=q)
    chain = enumerate_chain(make_torus(1, L), params)
    tracker = _MarginTracker("theorem2iv")
    pl = params.p_tilde ** L
    tracker.require(L * (1.0 - c * pl), chain.trel, f"trel-lower@L={L}")
    tracker.require(chain.trel, q * L * (1.0 + c * pl), f"trel-upper@L={L}")
    if q == 1.0:
        tracker.require(abs(chain.trel - L), 1e-8, f"trel-exact-q1@L={L}")
    return tracker.report()


def coupon_tail_reference(m: int, t_max: int) -> np.ndarray:
    """Inclusion-exclusion coupon tail, re-exported for oracle tests."""
    from .coupon import coupon_tail

    return coupon_tail(m, t_max)


def pair_chain_q1_matches_coupon(g: Graph, p: float, tol: float = 1e-10) -> bool:
    """At q = 1 the pair-chain absorption law must equal the coupon law."""
    law = pair_chain_law(g, FkParams(p=p, q=1.0))
    ref = coupon_tail_reference(g.m, len(law.tail) - 1)
    if not np.allclose(law.tail, ref, atol=tol, rtol=0.0):
        return False
    exact = coupon_moments(g.m)
    return (abs(law.expectation - exact.mean) < 1e-8 * max(1.0, exact.mean)
            and abs(law.variance - exact.variance) < 1e-6 * max(1.0, exact.variance))
