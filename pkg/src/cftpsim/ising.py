"""Single-spin Ising heat-bath dynamics: the spin update, its monotone
coupling from all-plus / all-minus, coupling times with the vertex-coupon
time, magnetization series off an exact CFTP start, and the closed-form
d=1 relaxation time.

The update resamples one uniformly chosen vertex v: the spin becomes +1
iff u <= exp(beta*S) / (exp(beta*S) + exp(-beta*S)) with S the sum of
neighboring spins.  The threshold is increasing in S, so shared noise
preserves the pointwise spin order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .fk import CouplingCapError, CouplingSample, DEFAULT_STEP_CAP
from .graph import Graph

#: Critical inverse temperature of the square-lattice model, ln(sqrt(1+sqrt(2))).
BETA_C_2D = 0.5 * math.log(1.0 + math.sqrt(2.0))


@dataclass(frozen=True)
class IsingParams:
    """Inverse temperature beta >= 0 (zero-field ferromagnet)."""

    beta: float

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def as_dict(self) -> dict:
        return {"beta": self.beta}


@dataclass
class SpinConfig:
    """Spin assignment in {-1, +1} per vertex."""

    graph: Graph
    spins: np.ndarray  # int8, length n

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=np.int8)
        if self.spins.shape != (self.graph.n,):
            raise ValueError(
                f"spin vector length {self.spins.shape} does not match n={self.graph.n}")
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("spins must be -1 or +1")

    @classmethod
    def all_plus(cls, graph: Graph) -> "SpinConfig":
        return cls(graph, np.ones(graph.n, dtype=np.int8))

    @classmethod
    def all_minus(cls, graph: Graph) -> "SpinConfig":
        return cls(graph, np.full(graph.n, -1, dtype=np.int8))

    def magnetization(self) -> int:
        return int(self.spins.sum(dtype=np.int64))

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.graph, self.spins.copy())


def plus_threshold(beta: float, local_field: int) -> float:
    """P(new spin = +1 | neighbors): exp(bS) / (exp(bS) + exp(-bS))."""
    return 1.0 / (1.0 + math.exp(-2.0 * beta * local_field))


def _threshold_table(g: Graph, beta: float) -> tuple[np.ndarray, int]:
    max_deg = int(g.degrees().max()) if g.n > 1 else 0
    table = np.array([plus_threshold(beta, s)
                      for s in range(-max_deg, max_deg + 1)], dtype=np.float64)
    return table, max_deg


def spin_update(g: Graph, w: SpinConfig, v: int, u: float,
                params: IsingParams) -> SpinConfig:
    """Apply the heat-bath map at vertex v with uniform u; other spins
    are unchanged.  Reference implementation of the kernels' update."""
    if not 0 <= v < g.n:
        raise IndexError(f"vertex index {v} out of range for n={g.n}")
    s = 0
    for k in range(g.inc_ptr[v], g.inc_ptr[v + 1]):
        s += int(w.spins[g.inc_other[k]])
    out = w.copy()
    out.spins[v] = 1 if u <= plus_threshold(params.beta, s) else -1
    return out


def _require_dynamics_graph(g: Graph):
    if g.n < 2 or g.m < 1:
        raise ValueError("Ising dynamics needs a connected graph with n >= 2")


def ising_coupling_time(g: Graph, params: IsingParams, seed: int,
                        step_cap: int = DEFAULT_STEP_CAP,
                        replica: int = 0) -> CouplingSample:
    """Coupled run from (all -1, all +1) until coalescence.

    T is the coupling time, W the vertex-coupon time (W <= T).  Runs with
    beta above the ordering transition can be exponentially slow; the
    step cap turns that into an error instead of a hang.
    """
    _require_dynamics_graph(g)
    table, max_deg = _threshold_table(g, params.beta)
    state0 = np.uint64(rng.stream_state(seed, replica))
    status, t, w, bottom, top, seen, _ = _kernels.ising_coupling_run(
        g.inc_ptr, g.inc_other, table, max_deg, state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no coalescence within step cap {step_cap}",
            partial={"t": int(t), "W": int(w) if w else None,
                     "bottom": bottom, "top": top, "seen": seen})
    return CouplingSample(T=int(t), W=int(w), seed=seed,
                          graph=g.description(), params=params.as_dict(),
                          model="ising")


def ising_trel_1d(L: int, beta: float) -> float:
    """Exact relaxation time of the heat-bath chain on the cycle Z_L:
    L / (1 - tanh(2 beta)).  Finite for every beta >= 0."""
    if L < 3:
        raise ValueError(f"cycle length must be >= 3, got {L}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return L / (1.0 - math.tanh(2.0 * beta))


def cftp_sample(g: Graph, params: IsingParams, seed: int,
                step_cap: int = DEFAULT_STEP_CAP,
                replica: int = 0) -> SpinConfig:
    """Exact sample from the Gibbs measure via CFTP (doubling restarts,
    same backward scheme as the random-cluster sampler)."""
    _require_dynamics_graph(g)
    table, max_deg = _threshold_table(g, params.beta)
    state0 = np.uint64(rng.stream_state(seed, replica))
    status, spins, depth, _total, _state = _kernels.ising_cftp_run(
        g.inc_ptr, g.inc_other, table, max_deg, state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no backward coalescence within depth cap {step_cap}",
            partial={"depth": int(depth)})
    return SpinConfig(g, spins)


def magnetization_series(g: Graph, params: IsingParams, length: int, seed: int,
                         step_cap: int = DEFAULT_STEP_CAP,
                         replica: int = 0) -> np.ndarray:
    """Total magnetization along an exactly stationary run: CFTP start,
    then `length` single-spin updates recording sum(spins) after each."""
    if length < 1:
        raise ValueError(f"series length must be >= 1, got {length}")
    _require_dynamics_graph(g)
    table, max_deg = _threshold_table(g, params.beta)
    state0 = np.uint64(rng.stream_state(seed, replica))
    status, spins, depth, _total, state = _kernels.ising_cftp_run(
        g.inc_ptr, g.inc_other, table, max_deg, state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no backward coalescence within depth cap {step_cap}",
            partial={"depth": int(depth)})
    series, _ = _kernels.ising_series_run(
        g.inc_ptr, g.inc_other, table, max_deg, spins, length, state)
    return series
