"""Random-cluster heat-bath dynamics: the single-edge update, the
monotone coupled evolution from (empty, full), forward coupling times
with the edge-coupon time tracked in the same pass, and the exact CFTP
sampler.

The single-edge update resamples one uniformly chosen edge e: it becomes
occupied iff the uniform variate u satisfies u <= threshold, where the
threshold is p_tilde when e is pivotal to the current configuration and
p otherwise.  Both coupled chains consume the identical (edge, uniform)
pair per step, which preserves the subset order bottom <= top.

Bulk runs go through the compiled kernels; ``apply_update`` and
``coupled_step`` are the plain reference implementations of the same
update, cross-checked against the kernels in the tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .connectivity import EdgeConfig, PivotalityOracle
from .graph import Graph

DEFAULT_STEP_CAP = 10 ** 9


class CouplingCapError(RuntimeError):
    """Raised when a run exceeds its step cap; carries the partial state."""

    def __init__(self, message: str, partial: dict):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FkParams:
    """Random-cluster parameters (p, q) with the derived pivotal-edge
    threshold p_tilde = p / (1 + (q-1)(1-p))."""

    p: float
    q: float
    p_tilde: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.q < 1.0:
            raise ValueError(f"q must be >= 1, got {self.q}")
        object.__setattr__(
            self, "p_tilde", self.p / (1.0 + (self.q - 1.0) * (1.0 - self.p)))

    def as_dict(self) -> dict:
        return {"p": self.p, "q": self.q}


@dataclass(frozen=True)
class NoiseStep:
    """One step of auxiliary noise: an edge index and a uniform on [0,1)."""

    e: int
    u: float


@dataclass
class CouplingState:
    """Ordered pair of configurations evolving under shared noise."""

    bottom: EdgeConfig
    top: EdgeConfig
    t: int
    seen: np.ndarray  # uint8 per edge, set once the edge has been updated

    @classmethod
    def initial(cls, graph: Graph) -> "CouplingState":
        return cls(bottom=EdgeConfig.empty(graph), top=EdgeConfig.full(graph),
                   t=0, seen=np.zeros(graph.m, dtype=np.uint8))

    def coalesced(self) -> bool:
        return bool(np.array_equal(self.bottom.occupied, self.top.occupied))


@dataclass(frozen=True)
class CouplingSample:
    """Result of one coupled run: coupling time T, coupon time W."""

    T: int
    W: int
    seed: int
    graph: dict
    params: dict
    model: str = "fk"

    def to_json(self) -> str:
        rec = {"T": self.T, "W": self.W, "seed": self.seed, "graph": self.graph}
        if self.model == "fk":
            rec.update(self.params)
        else:
            rec["model"] = self.model
            rec.update(self.params)
        return json.dumps(rec, sort_keys=True)


def heat_bath_threshold(params: FkParams, pivotal: bool) -> float:
    """Occupation probability of the updated edge: p_tilde if pivotal, else p."""
    return params.p_tilde if pivotal else params.p


def _mode(graph: Graph, params: FkParams) -> int:
    if params.p_tilde == params.p:  # q == 1
        return _kernels.MODE_SKIP_PIVOTAL
    if graph.is_tree:
        return _kernels.MODE_ALL_PIVOTAL
    return _kernels.MODE_GENERIC


def apply_update(g: Graph, config: EdgeConfig, step: NoiseStep,
                 params: FkParams, oracle: PivotalityOracle | None = None) -> EdgeConfig:
    """Apply the random map f(A, e, u): occupy e iff u <= threshold."""
    if oracle is None:
        oracle = PivotalityOracle(g)
    thr = heat_bath_threshold(params, oracle.is_pivotal(config, step.e))
    out = config.copy()
    out.occupied[step.e] = 1 if step.u <= thr else 0
    return out


def coupled_step(state: CouplingState, step: NoiseStep, params: FkParams,
                 oracle: PivotalityOracle | None = None) -> CouplingState:
    """Advance both chains with the identical noise step."""
    g = state.bottom.graph
    if oracle is None:
        oracle = PivotalityOracle(g)
    bottom = apply_update(g, state.bottom, step, params, oracle)
    top = apply_update(g, state.top, step, params, oracle)
    assert np.all(bottom.occupied <= top.occupied), "monotone sandwich violated"
    seen = state.seen.copy()
    seen[step.e] = 1
    return CouplingState(bottom=bottom, top=top, t=state.t + 1, seen=seen)


def forward_coupling_time(g: Graph, params: FkParams, seed: int,
                          step_cap: int = DEFAULT_STEP_CAP,
                          replica: int = 0) -> CouplingSample:
    """Run the coupled pair from (empty, full) until coalescence.

    T is the first step at which the chains agree; W is the first step at
    which every edge has been updated at least once (W <= T always).
    Deterministic given (graph, params, seed, replica).
    """
    if g.m < 1:
        raise ValueError("coupling requires at least one edge")
    state0 = np.uint64(rng.stream_state(seed, replica))
    status, t, w, bottom, top, seen, _ = _kernels.fk_coupling_run(
        g.inc_ptr, g.inc_edge, g.inc_other, g.edge_u, g.edge_v,
        params.p, params.p_tilde, _mode(g, params), state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no coalescence within step cap {step_cap}",
            partial={"t": int(t), "W": int(w) if w else None,
                     "bottom": bottom, "top": top, "seen": seen})
    return CouplingSample(T=int(t), W=int(w), seed=seed,
                          graph=g.description(), params=params.as_dict())


def cftp_sample(g: Graph, params: FkParams, seed: int,
                step_cap: int = DEFAULT_STEP_CAP,
                replica: int = 0) -> EdgeConfig:
    """Exact stationary sample via coupling from the past.

    Restart depths double (1, 2, 4, ...); stored noise is reused so the
    backward map composition is consistent across restarts.  The
    coalesced configuration at time 0 is an exact draw from the
    random-cluster measure.
    """
    if g.m < 1:
        raise ValueError("sampling requires at least one edge")
    state0 = np.uint64(rng.stream_state(seed, replica))
    status, occ, depth, _total, _state = _kernels.fk_cftp_run(
        g.inc_ptr, g.inc_edge, g.inc_other, g.edge_u, g.edge_v,
        params.p, params.p_tilde, _mode(g, params), state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no backward coalescence within depth cap {step_cap}",
            partial={"depth": int(depth)})
    return EdgeConfig(g, occ)


def stationary_series(g: Graph, params: FkParams, length: int, seed: int,
                      step_cap: int = DEFAULT_STEP_CAP,
                      replica: int = 0) -> np.ndarray:
    """Occupied-edge counts of an exactly stationary run.

    The chain is initialized with a CFTP sample and then advanced for
    `length` single-edge updates, recording the occupied-edge count after
    each one.  The forward updates continue the same noise stream.
    """
    if length < 1:
        raise ValueError(f"series length must be >= 1, got {length}")
    if g.m < 1:
        raise ValueError("sampling requires at least one edge")
    state0 = np.uint64(rng.stream_state(seed, replica))
    mode = _mode(g, params)
    status, occ, depth, _total, state = _kernels.fk_cftp_run(
        g.inc_ptr, g.inc_edge, g.inc_other, g.edge_u, g.edge_v,
        params.p, params.p_tilde, mode, state0, step_cap)
    if status != _kernels.STATUS_OK:
        raise CouplingCapError(
            f"no backward coalescence within depth cap {step_cap}",
            partial={"depth": int(depth)})
    series, _ = _kernels.fk_series_run(
        g.inc_ptr, g.inc_edge, g.inc_other, g.edge_u, g.edge_v,
        params.p, params.p_tilde, mode, occ, length, state)
    return series
