"""Everything downstream of raw samples: moments with bootstrap errors,
standardization, autocorrelation estimation with exponential-time fits,
GEV maximum likelihood, Kolmogorov-Smirnov distances, and finite-size
scaling fits.

Conventions (fixed so results are comparable across implementations):
sample variance uses the n-1 convention; autocovariances use the biased
1/n normalization standard for MCMC time series; bootstrap standard
errors are the standard deviation of the resampled statistic and are
deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .coupon import EULER_GAMMA, GUMBEL_SLOPE

#: GEV parameters equivalent to the standardized Gumbel law G(x).
GUMBEL_XI = 0.0
GUMBEL_ETA = -EULER_GAMMA * math.sqrt(6.0) / math.pi  # -0.45005320754...
GUMBEL_THETA = math.sqrt(6.0) / math.pi               # 0.77969780123...


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean and standard deviation with bootstrap standard errors."""

    n_samples: int
    mean: float
    std: float
    se_mean: float
    se_std: float

    def as_dict(self) -> dict:
        return {"n_samples": self.n_samples, "mean": self.mean, "std": self.std,
                "se_mean": self.se_mean, "se_std": self.se_std}


def bootstrap_se(samples, stat, reps: int = 1000, seed: int = 0) -> float:
    """Standard error of stat(samples) by resampling with replacement."""
    x = np.asarray(samples, dtype=np.float64)
    gen = np.random.default_rng(seed)
    vals = np.empty(reps)
    n = x.shape[0]
    for r in range(reps):
        vals[r] = stat(x[gen.integers(0, n, n)])
    return float(vals.std(ddof=1))


def estimate_moments(samples, bootstrap_reps: int = 1000,
                     seed: int = 0) -> MomentEstimate:
    """Unbiased mean/std with bootstrap standard errors (deterministic
    given seed)."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    gen = np.random.default_rng(seed)
    means = np.empty(bootstrap_reps)
    stds = np.empty(bootstrap_reps)
    for r in range(bootstrap_reps):
        res = x[gen.integers(0, n, n)]
        means[r] = res.mean()
        stds[r] = res.std(ddof=1)
    return MomentEstimate(n_samples=n, mean=float(x.mean()),
                          std=float(x.std(ddof=1)),
                          se_mean=float(means.std(ddof=1)),
                          se_std=float(stds.std(ddof=1)))


def standardize(samples, moments) -> np.ndarray:
    """Affine map S = (T - mean) / std."""
    if isinstance(moments, MomentEstimate):
        mean, std = moments.mean, moments.std
    else:
        mean, std = moments
    if std == 0.0:
        raise ValueError("cannot standardize with zero standard deviation")
    return (np.asarray(samples, dtype=np.float64) - mean) / std


@dataclass
class TexpFit:
    """Weighted linear fit ln rho(t) = a - t/b over a lag window."""

    a: float
    b: float
    se_b: float
    window: tuple[int, int]
    n_lags: int

    @property
    def texp(self) -> float:
        return self.b


@dataclass
class AutocorrEstimate:
    """Autocorrelation estimates per lag, averaged over runs when several
    series are supplied (per-lag standard errors from across-run scatter)."""

    lags: np.ndarray
    rho: np.ndarray
    se: np.ndarray  # NaN when only one series was supplied
    n_series: int
    texp_fit: TexpFit | None = field(default=None)


def _autocov_fft(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (1/n) autocovariance for lags 0..max_lag."""
    n = x.shape[0]
    xc = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:max_lag + 1]
    return acov / n


def autocorrelation(series, max_lag: int) -> AutocorrEstimate:
    """Standard time-series estimator rho(t) = c(t)/c(0).

    `series` is one 1-D array or a list of independent 1-D series; each
    series must have length >= 10 * max_lag (heuristic guard against
    wildly biased large-lag estimates).
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if isinstance(series, np.ndarray) and series.ndim == 1:
        runs = [series]
    else:
        runs = [np.asarray(s, dtype=np.float64) for s in series]
    for s in runs:
        if s.shape[0] < 10 * max_lag:
            raise ValueError(
                f"series length {s.shape[0]} too short for max_lag={max_lag}"
                " (need at least 10x)")
    rhos = np.empty((len(runs), max_lag + 1))
    for i, s in enumerate(runs):
        acov = _autocov_fft(np.asarray(s, dtype=np.float64), max_lag)
        rhos[i] = acov / acov[0]
    rho = rhos.mean(axis=0)
    if len(runs) > 1:
        se = rhos.std(axis=0, ddof=1) / math.sqrt(len(runs))
    else:
        se = np.full(max_lag + 1, np.nan)
    return AutocorrEstimate(lags=np.arange(max_lag + 1), rho=rho, se=se,
                            n_series=len(runs))


def fit_texp(est: AutocorrEstimate, window: tuple[int, int] | None = None) -> TexpFit:
    """Weighted least squares of ln rho on the lag window; returns b as
    the exponential autocorrelation time.

    Default window: from the first lag with rho < 0.8 (skipping the
    pre-asymptotic regime) to the last lag with rho > 5 se (or the last
    positive rho when no errors are available).
    """
    rho = est.rho
    se = est.se
    have_se = np.all(np.isfinite(se[1:]))
    if window is None:
        below = np.nonzero(rho < 0.8)[0]
        t_min = int(below[0]) if below.size else 1
        t_min = max(t_min, 1)
        if have_se:
            good = np.nonzero(rho > 5.0 * se)[0]
        else:
            good = np.nonzero(rho > 0.0)[0]
        t_max = int(good[-1]) if good.size else t_min
        window = (t_min, t_max)
    t_min, t_max = window
    lags = est.lags
    mask = (lags >= t_min) & (lags <= t_max) & (rho > 0.0)
    if mask.sum() < 3:
        raise ValueError(f"fewer than 3 positive-rho lags in window {window}")
    t = lags[mask].astype(np.float64)
    y = np.log(rho[mask])
    if have_se:
        w = (rho[mask] / se[mask]) ** 2  # var(ln rho) = (se/rho)**2
    else:
        w = np.ones_like(y)
    # y = a + s t, weighted
    sw = w.sum()
    tbar = (w * t).sum() / sw
    ybar = (w * y).sum() / sw
    stt = (w * (t - tbar) ** 2).sum()
    s_hat = (w * (t - tbar) * (y - ybar)).sum() / stt
    a_hat = ybar - s_hat * tbar
    if s_hat >= 0.0:
        raise ValueError("no exponential decay in the fit window")
    if have_se:
        var_s = 1.0 / stt
    else:
        resid = y - (a_hat + s_hat * t)
        dof = max(len(y) - 2, 1)
        var_s = (resid @ resid) / dof / stt
    b = -1.0 / s_hat
    se_b = math.sqrt(var_s) * b * b
    fit = TexpFit(a=a_hat, b=b, se_b=se_b, window=(int(t_min), int(t_max)),
                  n_lags=int(mask.sum()))
    est.texp_fit = fit
    return fit


# ---------------------------------------------------------------------------
# Generalized extreme value fitting
# ---------------------------------------------------------------------------

_XI_GUMBEL_BRANCH = 1e-8


@dataclass(frozen=True)
class GevParams:
    """Shape, location and scale with bootstrap standard errors."""

    xi: float
    eta: float
    theta: float
    se_xi: float = math.nan
    se_eta: float = math.nan
    se_theta: float = math.nan

    def as_dict(self) -> dict:
        return {"xi": self.xi, "eta": self.eta, "theta": self.theta,
                "se_xi": self.se_xi, "se_eta": self.se_eta,
                "se_theta": self.se_theta}


class GevFitError(RuntimeError):
    """Raised on non-convergence; carries the best point found."""

    def __init__(self, message: str, best: tuple[float, float, float]):
        super().__init__(message)
        self.best = best


def gev_cdf(x, xi: float, eta: float, theta: float):
    """GEV distribution function; the xi -> 0 limit is the Gumbel family."""
    x = np.asarray(x, dtype=np.float64)
    z = (x - eta) / theta
    if abs(xi) < _XI_GUMBEL_BRANCH:
        out = np.exp(-np.exp(-z))
    else:
        t = 1.0 + xi * z
        t = np.maximum(t, 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            out = np.exp(-np.where(t > 0.0, t ** (-1.0 / xi), np.inf))
        # outside the support the CDF saturates at 0 (xi>0) or 1 (xi<0)
        out = np.where(t > 0.0, out, 0.0 if xi > 0.0 else 1.0)
    return out if out.ndim else float(out)


def gev_sample(n: int, xi: float, eta: float, theta: float,
               seed: int = 0) -> np.ndarray:
    """Inverse-CDF draws; independent of the likelihood machinery."""
    gen = np.random.default_rng(seed)
    u = gen.uniform(0.0, 1.0, size=n)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    if abs(xi) < _XI_GUMBEL_BRANCH:
        return eta - theta * np.log(-np.log(u))
    return eta + theta * ((-np.log(u)) ** -xi - 1.0) / xi


def _gev_nll(par: np.ndarray, x: np.ndarray) -> float:
    xi, eta, theta = par
    n = x.shape[0]
    if theta <= 0.0:
        return 1e12 * (1.0 - theta)
    z = (x - eta) / theta
    if abs(xi) < _XI_GUMBEL_BRANCH:
        return n * math.log(theta) + float(np.sum(z + np.exp(-z)))
    t = 1.0 + xi * z
    tmin = float(t.min())
    if tmin <= 0.0:
        # support violation: smooth penalty pushing back to feasibility
        return 1e12 * (1.0 - tmin)
    return n * math.log(theta) + float(
        np.sum((1.0 + 1.0 / xi) * np.log(t) + t ** (-1.0 / xi)))


def _fit_gev_point(x: np.ndarray, init: np.ndarray, max_iters: int,
                   gen: np.random.Generator,
                   max_restarts: int = 5) -> tuple[np.ndarray, bool]:
    best = None
    start = init.copy()
    for attempt in range(max_restarts + 1):
        res = scipy.optimize.minimize(
            _gev_nll, start, args=(x,), method="Nelder-Mead",
            options={"maxiter": max_iters, "xatol": 1e-8, "fatol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
        if res.success:
            return res.x, True
        jitter = gen.normal(0.0, [0.05, 0.05, 0.05])
        start = init + jitter
        start[2] = abs(start[2]) + 1e-6
    return best.x, False


def fit_gev(samples, bootstrap_reps: int = 1000, seed: int = 0,
            max_iters: int = 5000) -> GevParams:
    """Maximum-likelihood GEV fit by derivative-free simplex search.

    Initialized at the Gumbel moment estimates (xi = 0,
    theta = std sqrt(6)/pi, eta = mean - gamma theta); the xi -> 0
    likelihood limit is handled by the Gumbel branch.  Bootstrap refits
    (initialized at the point estimate) give the standard errors.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if n < 100:
        raise ValueError(f"GEV fit needs at least 100 samples, got {n}")
    std = x.std(ddof=1)
    if std == 0.0:
        raise ValueError("GEV fit of constant input")
    theta0 = std * math.sqrt(6.0) / math.pi
    init = np.array([0.0, x.mean() - EULER_GAMMA * theta0, theta0])
    gen = np.random.default_rng(seed)
    point, converged = _fit_gev_point(x, init, max_iters, gen)
    if not converged:
        raise GevFitError("GEV likelihood maximization did not converge",
                          best=tuple(point))
    boot = np.empty((bootstrap_reps, 3))
    for r in range(bootstrap_reps):
        res = x[gen.integers(0, n, n)]
        boot[r], _ = _fit_gev_point(res, point, max_iters, gen, max_restarts=2)
    se = boot.std(axis=0, ddof=1)
    return GevParams(xi=float(point[0]), eta=float(point[1]),
                     theta=float(point[2]), se_xi=float(se[0]),
                     se_eta=float(se[1]), se_theta=float(se[2]))


def ks_distance(samples, cdf) -> float:
    """Sup-norm distance between the empirical CDF and `cdf`.

    The supremum is scanned at the sample points and at their left
    limits, so step-function references (e.g. an empirical CDF) are
    handled exactly; for continuous references this is the classical
    Kolmogorov-Smirnov statistic.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    f_right = np.asarray(cdf(x), dtype=np.float64)
    f_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=np.float64)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.abs(hi - f_right).max(), np.abs(lo - f_left).max()))


# ---------------------------------------------------------------------------
# Finite-size scaling fits
# ---------------------------------------------------------------------------


@dataclass
class ScalingFit:
    ansatz: str
    params: dict
    chisq: float
    dof: int
    drop_smallest: dict | None = None

    @property
    def chisq_per_dof(self) -> float:
        return self.chisq / self.dof if self.dof > 0 else math.nan


def _fit_power(L, y, se, fix_b: bool):
    logL = np.log(L)
    pos = y > 0
    z0 = 0.5
    if pos.sum() >= 2:
        z0 = float(np.polyfit(logL[pos], np.log(y[pos]), 1)[0])
    a0 = float(y[-1] / L[-1] ** z0)

    if fix_b:
        def resid(par):
            a, z = par
            return (y - a * L ** z) / se
        sol = scipy.optimize.least_squares(resid, x0=[a0, z0])
        a, z = sol.x
        params = {"a": float(a), "z": float(z), "b": 0.0}
    else:
        def resid(par):
            a, z, b = par
            return (y - (a * L ** z + b)) / se
        sol = scipy.optimize.least_squares(resid, x0=[a0, z0, 0.0])
        a, z, b = sol.x
        params = {"a": float(a), "z": float(z), "b": float(b)}
    chisq = float(np.sum(sol.fun ** 2))
    return params, chisq, len(L) - (2 if fix_b else 3)


def _fit_log(L, y, se, fix_b: bool):
    x = np.log(L)
    w = 1.0 / se ** 2
    if fix_b:
        a = float((w * x * y).sum() / (w * x * x).sum())
        b = 0.0
        dof = len(L) - 1
    else:
        sw = w.sum()
        xb = (w * x).sum() / sw
        yb = (w * y).sum() / sw
        sxx = (w * (x - xb) ** 2).sum()
        a = float((w * (x - xb) * (y - yb)).sum() / sxx)
        b = float(yb - a * xb)
        dof = len(L) - 2
    chisq = float(np.sum(((y - (a * x + b)) / se) ** 2))
    return {"a": a, "b": b}, chisq, dof


def fit_scaling(L_values, y_values, se_values=None) -> dict[str, ScalingFit]:
    """Fit all four finite-size-scaling ansatz variants, a L**z + b and
    a ln(L) + b with b free or fixed to zero, by weighted least squares.

    Returns one ScalingFit per ansatz with its chi-square; each also
    carries the refit obtained after dropping the smallest L (the lower
    cutoff stability probe).  Ansatz selection is left to the caller.
    """
    L = np.asarray(L_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    if se_values is None:
        se = np.ones_like(y)
    else:
        se = np.asarray(se_values, dtype=np.float64)
    if len(np.unique(L)) < 4:
        raise ValueError("need at least 4 distinct L values")
    order = np.argsort(L)
    L, y, se = L[order], y[order], se[order]

    out: dict[str, ScalingFit] = {}
    for name, fitter, fix_b in (("power", _fit_power, False),
                                ("power-zero", _fit_power, True),
                                ("log", _fit_log, False),
                                ("log-zero", _fit_log, True)):
        params, chisq, dof = fitter(L, y, se, fix_b)
        drop = None
        if len(L) >= 5:
            dparams, _, _ = fitter(L[1:], y[1:], se[1:], fix_b)
            drop = dparams
        out[name] = ScalingFit(ansatz=name, params=params, chisq=chisq,
                               dof=dof, drop_smallest=drop)
    return out
