"""Reproducible experiment orchestration: validated JSON configs, seeded
replica fan-out, crash-safe JSONL sample streams, and summary statistics
(moment ratios against the exact coupon moments, optional GEV fits and
Kolmogorov-Smirnov distances).

One experiment = one JSON config document.  Schema (all fields except
`model`, `graph`, `params`, `mode` and `seed` have defaults):

    {
      "model": "fk" | "ising",
      "graph": {"kind": "torus", "d": 2, "L": 32}
               | {"kind": "tree", "shape": "path", "size": 51},
      "params": {"p": 0.25, "q": 2.0} | {"p": "critical", "q": 2.0}
               | {"beta": 0.3},
      "mode": "coupling-time" | "cftp-sample" | "stationary-series"
               | "exact-oracle",
      "n_samples": 1000,
      "seed": 1,
      "step_cap": 1000000000,
      "series_length": 100000,
      "threads": null,
      "out": "runs/exp",
      "statistics": {"bootstrap_reps": 1000, "gev": false, "ks": false,
                      "max_cap_failure_rate": 0.0},
      "autocorr": {"k_grid": [0.25, 0.5, ..., 3.0], "n_series": 100,
                    "series_length": null, "n_coupling_samples": null}
    }

`"p": "critical"` resolves through the embedded critical-point helpers:
p_c(q, d=2) = sqrt(q) / (1 + sqrt(q)), and the tabulated d=3 estimates.

Replica r of a run draws from the stream derived from (seed, r); sample
records are written in replica order regardless of scheduling, and
re-running an experiment with the identical config reproduces the JSONL
byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fk, ising, oracle, stats
from .coupon import coupon_moments, gumbel_cdf
from .fk import CouplingCapError, FkParams
from .graph import Graph, graph_from_description
from .ising import IsingParams

#: d=3 critical-point estimates, by cluster fugacity.
PC_D3 = {1.5: 0.31157497, 1.8: 0.34096070, 2.0: 0.35809124, 2.2: 0.37361401}

_MODES = ("coupling-time", "cftp-sample", "stationary-series", "exact-oracle")
_FSYNC_EVERY = 100


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class CapExhaustionError(RuntimeError):
    """Step-cap failure rate above the configured threshold (exit code 3)."""


def critical_point(q: float, d: int) -> float:
    """Embedded critical-point table: exact for d=2, estimates for d=3."""
    if q < 1.0:
        raise ConfigError(f"q must be >= 1, got {q}")
    if d == 2:
        return math.sqrt(q) / (1.0 + math.sqrt(q))
    if d == 3:
        for qk, pc in PC_D3.items():
            if abs(q - qk) < 1e-12:
                return pc
        raise ConfigError(f"no tabulated d=3 critical point for q={q}")
    raise ConfigError(f"no critical-point helper for d={d}")


@dataclass
class ExperimentConfig:
    model: str
    graph: dict
    params: dict
    mode: str
    seed: int
    n_samples: int = 1000
    step_cap: int = fk.DEFAULT_STEP_CAP
    series_length: int = 100000
    threads: int | None = None
    out: str | None = None
    statistics: dict = field(default_factory=dict)
    autocorr: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"model", "graph", "params", "mode", "seed"} - set(doc)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self):
        if self.model not in ("fk", "ising"):
            raise ConfigError(f"model must be 'fk' or 'ising', got {self.model!r}")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.step_cap < 1:
            raise ConfigError("step_cap must be >= 1")
        if self.series_length < 1:
            raise ConfigError("series_length must be >= 1")
        try:
            self.build_graph()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad graph spec: {exc}") from exc
        self.build_params()  # raises ConfigError on bad parameters
        if self.mode == "exact-oracle" and self.model != "fk":
            raise ConfigError("exact-oracle mode supports the fk model only")

    def build_graph(self) -> Graph:
        return graph_from_description(self.graph)

    def build_params(self):
        if self.model == "fk":
            doc = dict(self.params)
            if set(doc) != {"p", "q"}:
                raise ConfigError(f"fk params need exactly p and q, got {sorted(doc)}")
            q = float(doc["q"])
            p = doc["p"]
            if p == "critical":
                d = self.graph.get("d")
                if d is None:
                    raise ConfigError("'critical' p needs a torus graph")
                p = critical_point(q, int(d))
            try:
                return FkParams(p=float(p), q=q)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        doc = dict(self.params)
        if set(doc) != {"beta"}:
            raise ConfigError(f"ising params need exactly beta, got {sorted(doc)}")
        try:
            return IsingParams(beta=float(doc["beta"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_params_dict(self) -> dict:
        return self.build_params().as_dict()

    def stat_options(self) -> dict:
        opts = {"bootstrap_reps": 1000, "gev": False, "ks": False,
                "max_cap_failure_rate": 0.0, "gev_bootstrap_reps": 200}
        opts.update(self.statistics)
        return opts

    def to_dict(self) -> dict:
        return {
            "model": self.model, "graph": dict(self.graph),
            "params": dict(self.params), "mode": self.mode,
            "seed": self.seed, "n_samples": self.n_samples,
            "step_cap": self.step_cap, "series_length": self.series_length,
            "threads": self.threads, "out": self.out,
            "statistics": dict(self.statistics),
            "autocorr": dict(self.autocorr),
        }


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


class _BatchedWriter:
    """Appends complete JSON lines, fsyncing once per batch so a crash
    leaves a readable prefix of the stream."""

    def __init__(self, path: str, batch: int = _FSYNC_EVERY):
        self.f = open(path, "w")
        self.batch = batch
        self.pending = 0

    def write(self, line: str):
        self.f.write(line + "\n")
        self.pending += 1
        if self.pending >= self.batch:
            self.flush()

    def flush(self):
        self.f.flush()
        os.fsync(self.f.fileno())
        self.pending = 0

    def close(self):
        self.flush()
        self.f.close()


def _run_replicas(worker, n: int, threads: int | None):
    """Map worker over replica indices, preserving replica order."""
    threads = threads or os.cpu_count() or 1
    if threads <= 1:
        return [worker(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n)))


def _coupling_record(config: ExperimentConfig, sample, replica: int) -> dict:
    rec = {"replica": replica, "seed": config.seed, "T": sample.T,
           "W": sample.W, "graph": sample.graph}
    if config.model == "ising":
        rec["model"] = "ising"
    rec.update(sample.params)
    return rec


def _coupling_summary(config: ExperimentConfig, records: list[dict]) -> dict:
    opts = config.stat_options()
    good = [r for r in records if "error" not in r]
    t_vals = np.array([r["T"] for r in good], dtype=np.float64)
    w_vals = np.array([r["W"] for r in good], dtype=np.float64)
    g = config.build_graph()
    n_items = g.n if config.model == "ising" else g.m
    exact = coupon_moments(n_items)
    reps = int(opts["bootstrap_reps"])
    mom_t = stats.estimate_moments(t_vals, bootstrap_reps=reps, seed=config.seed)
    mom_w = stats.estimate_moments(w_vals, bootstrap_reps=reps, seed=config.seed)
    summary = {
        "config": config.to_dict(),
        "params_resolved": config.resolved_params_dict(),
        "n_samples": len(records),
        "n_cap_failures": len(records) - len(good),
        "T": mom_t.as_dict(),
        "W": mom_w.as_dict(),
        "coupon_exact": {"n_items": n_items, "mean": exact.mean,
                         "std": exact.std},
        "ratios": {
            "mean_T_over_coupon": mom_t.mean / exact.mean,
            "se_mean_T_over_coupon": mom_t.se_mean / exact.mean,
            "std_T_over_coupon": mom_t.std / exact.std,
            "se_std_T_over_coupon": mom_t.se_std / exact.std,
        },
    }
    if opts.get("ks") or opts.get("gev"):
        s_vals = stats.standardize(t_vals, mom_t)
        if opts.get("ks"):
            summary["ks_gumbel"] = stats.ks_distance(s_vals, gumbel_cdf)
        if opts.get("gev"):
            fitted = stats.fit_gev(s_vals,
                                   bootstrap_reps=int(opts["gev_bootstrap_reps"]),
                                   seed=config.seed)
            summary["gev"] = fitted.as_dict()
    return summary


def _bits_hex(occ: np.ndarray) -> str:
    return np.packbits(occ, bitorder="little").tobytes().hex()


def _cftp_summary(config: ExperimentConfig, records: list[dict]) -> dict:
    vals = np.array([r["value"] for r in records], dtype=np.float64)
    mom = stats.estimate_moments(
        vals, bootstrap_reps=int(config.stat_options()["bootstrap_reps"]),
        seed=config.seed)
    key = "magnetization" if config.model == "ising" else "n_occupied"
    return {"config": config.to_dict(),
            "params_resolved": config.resolved_params_dict(),
            "n_samples": len(records), "observable": key,
            "value": mom.as_dict()}


def _series_summary(config: ExperimentConfig, records: list[dict]) -> dict:
    means = np.array([float(np.mean(r["values"])) for r in records])
    out = {"config": config.to_dict(),
           "params_resolved": config.resolved_params_dict(),
           "n_series": len(records),
           "series_length": config.series_length,
           "mean_of_series_means": float(means.mean())}
    if len(records) > 1:
        out["se_of_series_means"] = float(means.std(ddof=1) / math.sqrt(len(means)))
    return out


def _oracle_records(config: ExperimentConfig) -> list[dict]:
    g = config.build_graph()
    params = config.build_params()
    chain = oracle.enumerate_chain(g, params)
    reports = [oracle.check_lemma1(chain), oracle.check_appendixA(chain)]
    if g.m <= oracle.MAX_PAIR_EDGES:
        law = oracle.pair_chain_law(g, params)
        reports.append(oracle.check_theorem1(chain, law))
    if config.graph.get("kind") == "torus" and config.graph.get("d") == 1:
        reports.append(oracle.check_theorem2iv(
            int(config.graph["L"]), params.p, params.q))
    return [json.loads(rep.to_json()) for rep in reports]


def run_experiment(config: ExperimentConfig, out: str | None = None,
                   threads: int | None = None) -> dict:
    """Execute the configured experiment.

    Writes <out>.jsonl (one self-contained record per replica, appended
    incrementally) and <out>.summary.json, and returns the summary dict.
    Raises CapExhaustionError when the fraction of step-cap failures
    exceeds the configured threshold (partial results are kept on disk).
    """
    out = out or config.out
    if out is None:
        raise ConfigError("no output path: set 'out' in the config or pass --out")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    threads = threads if threads is not None else config.threads
    g = config.build_graph()
    params = config.build_params()
    opts = config.stat_options()

    if config.mode == "exact-oracle":
        records = _oracle_records(config)
        summary = {"config": config.to_dict(),
                   "params_resolved": config.resolved_params_dict(),
                   "all_passed": all(r["passed"] for r in records),
                   "checks": records}
    elif config.mode == "coupling-time":
        run_one = (ising.ising_coupling_time if config.model == "ising"
                   else fk.forward_coupling_time)

        def worker(r: int) -> dict:
            try:
                sample = run_one(g, params, config.seed,
                                 step_cap=config.step_cap, replica=r)
            except CouplingCapError:
                return {"replica": r, "seed": config.seed,
                        "error": "step_cap", "step_cap": config.step_cap}
            return _coupling_record(config, sample, r)

        records = _run_replicas(worker, config.n_samples, threads)
        summary = _coupling_summary(config, records)
        rate = summary["n_cap_failures"] / max(summary["n_samples"], 1)
        if rate > float(opts["max_cap_failure_rate"]):
            _write_outputs(out, records, summary)
            raise CapExhaustionError(
                f"step-cap failure rate {rate:.3g} above threshold "
                f"{opts['max_cap_failure_rate']}")
    elif config.mode == "cftp-sample":
        if config.model == "ising":
            def worker(r: int) -> dict:
                spins = ising.cftp_sample(g, params, config.seed,
                                          step_cap=config.step_cap, replica=r)
                bits = ((spins.spins + 1) // 2).astype(np.uint8)
                return {"replica": r, "seed": config.seed,
                        "value": spins.magnetization(),
                        "spins_hex": _bits_hex(bits)}
        else:
            def worker(r: int) -> dict:
                cfgr = fk.cftp_sample(g, params, config.seed,
                                      step_cap=config.step_cap, replica=r)
                return {"replica": r, "seed": config.seed,
                        "value": cfgr.n_occupied(),
                        "bits_hex": _bits_hex(cfgr.occupied)}

        records = _run_replicas(worker, config.n_samples, threads)
        summary = _cftp_summary(config, records)
    else:  # stationary-series
        run_series = (ising.magnetization_series if config.model == "ising"
                      else fk.stationary_series)

        def worker(r: int) -> dict:
            series = run_series(g, params, config.series_length, config.seed,
                                step_cap=config.step_cap, replica=r)
            return {"replica": r, "seed": config.seed,
                    "values": [int(x) for x in series]}

        records = _run_replicas(worker, config.n_samples, threads)
        summary = _series_summary(config, records)

    _write_outputs(out, records, summary)
    return summary


def _write_outputs(out: str, records: list[dict], summary: dict):
    writer = _BatchedWriter(out + ".jsonl")
    try:
        for rec in records:
            writer.write(_dump(rec))
    finally:
        writer.close()
    with open(out + ".summary.json", "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")


def read_records(path: str) -> list[dict]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def recompute_summary(config: ExperimentConfig, records: list[dict]) -> dict:
    """Summary from a JSONL record stream; equals the in-run summary
    exactly for the same config (same seeds drive the bootstrap)."""
    if config.mode == "coupling-time":
        return _coupling_summary(config, records)
    if config.mode == "cftp-sample":
        return _cftp_summary(config, records)
    if config.mode == "stationary-series":
        return _series_summary(config, records)
    if config.mode == "exact-oracle":
        return {"config": config.to_dict(),
                "params_resolved": config.resolved_params_dict(),
                "all_passed": all(r["passed"] for r in records),
                "checks": records}
    raise ConfigError(f"cannot recompute summaries for mode {config.mode!r}")


def scaled_autocorr_experiment(config: ExperimentConfig,
                               out: str | None = None,
                               threads: int | None = None) -> dict:
    """Data-collapse experiment: estimate sigma_T from coupling runs, then
    sample the autocorrelation of the occupied-edge count (or the
    magnetization) at lags k * sigma_T over a grid of k.

    Emits (k, lag, rho, se, ln_rho) rows plus a weighted slope of ln rho
    against k; writes <out>.summary.json and <out>.csv when out is set.
    """
    g = config.build_graph()
    params = config.build_params()
    ac = {"k_grid": [0.25 * i for i in range(13)], "n_series": 100,
          "series_length": None, "n_coupling_samples": None}
    ac.update(config.autocorr)
    k_grid = [float(k) for k in ac["k_grid"]]
    n_series = int(ac["n_series"])
    n_coupling = int(ac["n_coupling_samples"] or config.n_samples)

    run_one = (ising.ising_coupling_time if config.model == "ising"
               else fk.forward_coupling_time)

    def coupling_worker(r: int) -> int:
        return run_one(g, params, config.seed, step_cap=config.step_cap,
                       replica=r).T

    t_vals = np.array(_run_replicas(coupling_worker, n_coupling, threads),
                      dtype=np.float64)
    mom = stats.estimate_moments(
        t_vals, bootstrap_reps=int(config.stat_options()["bootstrap_reps"]),
        seed=config.seed)
    sigma_t = mom.std

    max_lag = max(int(math.ceil(max(k_grid) * sigma_t)), 1)
    length = int(ac["series_length"] or 10 * max_lag)
    if length < 10 * max_lag:
        raise ConfigError(
            f"series_length {length} too short for max lag {max_lag}")
    run_series = (ising.magnetization_series if config.model == "ising"
                  else fk.stationary_series)

    def series_worker(j: int) -> np.ndarray:
        # offset replica indices so series streams never collide with the
        # coupling replicas above
        return run_series(g, params, length, config.seed,
                          step_cap=config.step_cap,
                          replica=n_coupling + j).astype(np.float64)

    series = _run_replicas(series_worker, n_series, threads)
    est = stats.autocorrelation(series, max_lag)

    rows = []
    for k in k_grid:
        lag = int(round(k * sigma_t))
        rho = float(est.rho[lag])
        se = float(est.se[lag]) if np.isfinite(est.se[lag]) else None
        row = {"k": k, "lag": lag, "rho": rho, "se": se,
               "ln_rho": math.log(rho) if rho > 0 else None}
        rows.append(row)

    fit_rows = [r for r in rows if r["k"] > 0 and r["rho"] > 0]
    slope = None
    if len(fit_rows) >= 2:
        ks = np.array([r["k"] for r in fit_rows])
        ys = np.array([r["ln_rho"] for r in fit_rows])
        if all(r["se"] for r in fit_rows):
            w = np.array([(r["rho"] / r["se"]) ** 2 for r in fit_rows])
        else:
            w = np.ones_like(ys)
        kbar = (w * ks).sum() / w.sum()
        ybar = (w * ys).sum() / w.sum()
        slope = float((w * (ks - kbar) * (ys - ybar)).sum()
                      / (w * (ks - kbar) ** 2).sum())

    summary = {"config": config.to_dict(),
               "params_resolved": config.resolved_params_dict(),
               "sigma_T": sigma_t, "se_sigma_T": mom.se_std,
               "mean_T": mom.mean, "n_coupling_samples": n_coupling,
               "n_series": n_series, "series_length": length,
               "rows": rows, "slope_ln_rho_vs_k": slope}
    if out or config.out:
        out = out or config.out
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        with open(out + ".summary.json", "w") as f:
            json.dump(summary, f, sort_keys=True, indent=2)
            f.write("\n")
        with open(out + ".csv", "w") as f:
            f.write("k,lag,rho,se,ln_rho\n")
            for r in rows:
                se = "" if r["se"] is None else repr(r["se"])
                ln = "" if r["ln_rho"] is None else repr(r["ln_rho"])
                f.write(f"{r['k']},{r['lag']},{r['rho']!r},{se},{ln}\n")
    return summary
