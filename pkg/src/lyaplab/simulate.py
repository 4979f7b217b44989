"""Monte Carlo engines for the diffusion and for the discrete matrix product.

Diffusion
---------
``dX_1 = eps X_2 dt``, ``dX_2 = (eps X_1 + delta X_2) dt + sigma X_2 dB`` with
``delta = sigma^2 (1 - alpha)/2``.  The ratio ``Y = X_2/X_1`` solves

    dY = (eps (1 - Y^2) + delta Y) dt + sigma Y dB,

and ``S = log Y`` (Ito) solves

    dS = (eps (e^{-S} - e^{S}) + delta - sigma^2/2) dt + sigma dB,

while ``d log X_1 = eps Y dt``.  Euler-Maruyama is offered in the three
charts; the S chart keeps ``Y`` positive and is the default.

Matrix product
--------------
``X(n+1) = (I + A(n+1)) X(n)`` with ``A = [[0, eps D], [eps D Z, Z - 1]]``
(``D`` the step ``Delta``).  In terms of ``Y = X_2/X_1``,

    log X_1(n+1) = log X_1(n) + log(1 + eps D Y(n)),
    Y(n+1)       = Z (Y(n) + eps D) / (1 + eps D Y(n)),

so long products never overflow.  ``Y(0) = sign(eps)`` makes the runs at
``+eps`` and ``-eps`` with the same disorder mirror images of each other.

Random streams
--------------
Each task draws from ``Philox`` keyed by ``SeedSequence(seed,
spawn_key=(index, tag))``, so results do not depend on how tasks are
distributed over workers; reductions run in task order.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate as sint
from scipy import stats

from . import exact
from .errors import (BudgetTooSmall, Degenerate, HypothesisViolated, StepTooLarge,
                     ValidationError)
from .exact import ModelParams

__all__ = [
    "DisorderLaw", "LogNormal", "MWPower", "ShiftedCompact", "SimConfig",
    "PathSummary", "InvariantMeasureResult", "HypothesisReport", "stream",
    "resolve_jobs", "sample_disorder", "check_hypotheses", "step_matrix",
    "simulate_diffusion", "integrate_increments", "product_lyapunov",
    "product_invariant_measure", "clt_variance_estimate", "fixed_point_bound",
]

CHUNK = 1 << 16
BATCHES = 32
BURN_FLOOR = 10_000


# ---------------------------------------------------------------------------
# Streams and workers
# ---------------------------------------------------------------------------

def stream(seed: int, index: int, tag: str) -> np.random.Generator:
    """Generator for task ``index`` of purpose ``tag`` under master ``seed``."""
    key = zlib.crc32(tag.encode())
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), key))
    return np.random.Generator(np.random.Philox(ss))


def resolve_jobs(jobs: int | None = None) -> int:
    """Worker count: ``LYAPLAB_JOBS`` if set, else ``jobs``, else 1."""
    env = os.environ.get("LYAPLAB_JOBS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError("LYAPLAB_JOBS must be an integer") from None
        return max(1, n)
    return 1 if jobs is None else max(1, int(jobs))


def _fan_out(fn, tasks, jobs):
    jobs = resolve_jobs(jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------------------
# Disorder laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderLaw:
    """Base class of the step laws ``Z^Delta``; all carry the target
    ``(sigma, alpha)`` of the continuum limit."""
    sigma: float
    alpha: float

    variant = "abstract"

    def __post_init__(self):
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ValidationError("sigma must be positive")
        if not math.isfinite(self.alpha):
            raise ValidationError("alpha must be finite")

    def continuum(self, eps: float) -> ModelParams:
        return ModelParams(self.sigma, self.alpha, eps)

    def check_delta(self, delta: float):
        if not delta > 0:
            raise ValidationError("delta must be positive")

    # subclasses: sample, log_moment, tail_probability
    def moment(self, delta: float, nu: float) -> float:
        """``E[(Z^Delta)^nu]``."""
        return math.exp(self.log_moment(delta, nu))

    def moment_minus_one(self, delta: float, nu: float) -> float:
        """``E[Z^nu] - 1`` without cancellation."""
        return math.expm1(self.log_moment(delta, nu))

    def params(self) -> dict:
        return {"law": self.variant, "sigma": self.sigma, "alpha": self.alpha}


@dataclass(frozen=True)
class LogNormal(DisorderLaw):
    """``Z = exp(sigma sqrt(D) G - alpha sigma^2 D / 2)``."""
    variant = "lognormal"

    def sample(self, delta, rng, size):
        s = self.sigma * math.sqrt(delta)
        return np.exp(s * rng.standard_normal(size) - 0.5 * self.alpha * s * s)

    def log_moment(self, delta, nu):
        return 0.5 * nu * self.sigma ** 2 * delta * (nu - self.alpha)

    def tail_probability(self, delta, c):
        s = self.sigma * math.sqrt(delta)
        mu = -0.5 * self.alpha * s * s
        up = stats.norm.sf((math.log1p(c) - mu) / s)
        down = stats.norm.cdf((math.log1p(-c) - mu) / s) if c < 1 else 0.0
        return float(up + down)


@dataclass(frozen=True)
class MWPower(DisorderLaw):
    """``Z = lambda_1 U^{1/N}``: power density ``N z^{N-1} / lambda_1^N`` on
    ``(0, lambda_1)``.

    If ``n_param`` is not given, ``N = 1/(sigma sqrt(D))`` so that
    ``Var log Z = sigma^2 D``; if ``lambda1`` is not given it is chosen so
    that ``E[Z^alpha] = 1`` (see :func:`lyaplab.mccoywu.mw_lambda1`).
    """
    n_param: float | None = None
    lambda1: float | None = None
    variant = "mwpower"

    def __post_init__(self):
        super().__post_init__()
        if self.n_param is not None and not self.n_param > 0:
            raise ValidationError("N must be positive")
        if self.lambda1 is not None and not self.lambda1 > 0:
            raise ValidationError("lambda_1 must be positive")

    def resolved(self, delta: float) -> tuple[float, float]:
        """``(N, lambda_1)`` at step ``delta``."""
        from .mccoywu import mw_lambda1
        n = self.n_param if self.n_param is not None else 1.0 / (self.sigma * math.sqrt(delta))
        lam = self.lambda1 if self.lambda1 is not None else mw_lambda1(self.alpha, n)
        return n, lam

    def sample(self, delta, rng, size):
        n, lam = self.resolved(delta)
        return lam * np.exp(np.log(rng.random(size)) / n)

    def log_moment(self, delta, nu):
        n, lam = self.resolved(delta)
        if not nu > -n:
            raise ValidationError("moments of order <= -N do not exist")
        return nu * math.log(lam) - math.log1p(nu / n)

    def tail_probability(self, delta, c):
        n, lam = self.resolved(delta)
        up = 0.0 if 1 + c >= lam else 1.0 - ((1 + c) / lam) ** n
        down = ((1 - c) / lam) ** n if c < 1 else 0.0
        return float(up + min(down, 1.0))

    def params(self):
        d = super().params()
        d.update({"n_param": self.n_param, "lambda1": self.lambda1})
        return d


_GL = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class ShiftedCompact(DisorderLaw):
    """``Z = m_D + sqrt(D) T`` with ``m_D = 1 + sigma^2 (1 - alpha) D / 2``
    and ``T`` centred with variance ``sigma^2``: uniform on
    ``[-sqrt(3) sigma, sqrt(3) sigma]`` (``base="uniform"``) or triangular
    on ``[-sqrt(6) sigma, sqrt(6) sigma]`` (``base="triangular"``)."""
    base: str = "uniform"
    variant = "shifted"

    def __post_init__(self):
        super().__post_init__()
        if self.base not in ("uniform", "triangular"):
            raise ValidationError("base must be 'uniform' or 'triangular'")

    @property
    def half_width(self) -> float:
        return (math.sqrt(3.0) if self.base == "uniform" else math.sqrt(6.0)) * self.sigma

    def mean(self, delta):
        return 1.0 + 0.5 * self.sigma ** 2 * (1.0 - self.alpha) * delta

    def check_delta(self, delta):
        super().check_delta(delta)
        if self.mean(delta) - math.sqrt(delta) * self.half_width <= 0:
            raise ValidationError("delta too large: Z would not be positive")

    def sample(self, delta, rng, size):
        self.check_delta(delta)
        if self.base == "uniform":
            t = (2.0 * rng.random(size) - 1.0) * self.half_width
        else:
            t = (rng.random(size) + rng.random(size) - 1.0) * self.half_width
        return self.mean(delta) + math.sqrt(delta) * t

    def _expect(self, delta, g):
        # E g(T) by Gauss-Legendre on each linear piece of the density of T
        t, w = _GL
        h = self.half_width
        if self.base == "uniform":
            return float(np.sum(w * g(h * t)) / 2.0)
        s_neg, s_pos = 0.5 * (t - 1.0), 0.5 * (t + 1.0)
        dens = lambda s: 1.0 - np.abs(s)
        return float(0.5 * np.sum(w * dens(s_neg) * g(h * s_neg))
                     + 0.5 * np.sum(w * dens(s_pos) * g(h * s_pos)))

    def log_moment(self, delta, nu):
        return math.log(self.moment(delta, nu))

    def moment(self, delta, nu):
        self.check_delta(delta)
        m, r = self.mean(delta), math.sqrt(delta)
        if self.base == "uniform":
            a = r * self.half_width
            if nu == -1:
                return math.log((m + a) / (m - a)) / (2 * a)
            return ((m + a) ** (nu + 1) - (m - a) ** (nu + 1)) / ((nu + 1) * 2 * a)
        return self._expect(delta, lambda t: (m + r * t) ** nu)

    def moment_minus_one(self, delta, nu):
        self.check_delta(delta)
        m, r = self.mean(delta), math.sqrt(delta)
        return self._expect(delta, lambda t: np.expm1(nu * np.log1p(m - 1 + r * t)))

    def tail_probability(self, delta, c):
        m, r, h = self.mean(delta), math.sqrt(delta), self.half_width
        # |m - 1 + r T| > c  <=>  T > (c - (m-1))/r  or  T < (-c - (m-1))/r
        hi = (c - (m - 1)) / (r * h)
        lo = (-c - (m - 1)) / (r * h)
        if self.base == "uniform":
            cdf = lambda s: min(1.0, max(0.0, 0.5 * (s + 1)))
        else:
            def cdf(s):
                s = min(1.0, max(-1.0, s))
                return 0.5 * (1 + s) ** 2 if s < 0 else 1 - 0.5 * (1 - s) ** 2
        return float(1.0 - cdf(hi) + cdf(lo))

    def params(self):
        d = super().params()
        d["base"] = self.base
        return d


def sample_disorder(law: DisorderLaw, delta: float, rng: np.random.Generator, size: int | None = None):
    """Exact draws of ``Z^Delta`` (one float if ``size`` is None)."""
    law.check_delta(delta)
    out = law.sample(delta, rng, 1 if size is None else int(size))
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class HypothesisReport:
    deltas: tuple
    drift_rate: tuple          # E[Z-1]/D           -> sigma^2 (1-alpha)/2
    variance_rate: tuple       # E[(Z-1)^2]/D       -> sigma^2
    tail_rate: tuple           # P(|Z-1|>c)/D       -> 0
    inverse_rate: tuple        # (E[1/Z]-1)/D       bounded
    drift_target: float
    variance_target: float
    drift_fit: tuple           # (intercept, slope) of rate vs sqrt(D)
    variance_fit: tuple
    ok: bool
    failures: tuple = ()


def check_hypotheses(law: DisorderLaw, delta_grid, c: float = 0.5, rel_tol: float = 0.1,
                     raise_on_failure: bool = True) -> HypothesisReport:
    """Rates of the scaling hypotheses of the product-to-diffusion limit,
    computed from exact moments (no sampling).

    Each rate is tabulated on ``delta_grid`` and the first two are fitted
    linearly in ``sqrt(Delta)``; the check uses the value at the smallest
    ``Delta``.

    Raises
    ------
    HypothesisViolated
        If the drift or variance rate misses its target by more than
        ``rel_tol`` (relative to ``max(target, sigma^2/2)``), if the tail
        rate exceeds ``rel_tol``, or if the inverse-moment rate is not finite.
    """
    d = np.asarray(delta_grid, dtype=float)
    if d.size < 1 or np.any(d <= 0):
        raise ValidationError("delta_grid must contain positive values")
    if not c > 0:
        raise ValidationError("c must be positive")
    d = np.sort(d)[::-1]
    r1, r2, r3, r4 = [], [], [], []
    for dl in d:
        law.check_delta(float(dl))
        m1 = law.moment_minus_one(dl, 1.0)
        m2 = law.moment_minus_one(dl, 2.0)
        r1.append(m1 / dl)
        r2.append((m2 - 2 * m1) / dl)
        r3.append(law.tail_probability(dl, c) / dl)
        r4.append(law.moment_minus_one(dl, -1.0) / dl)
    t1 = 0.5 * law.sigma ** 2 * (1 - law.alpha)
    t2 = law.sigma ** 2
    sq = np.sqrt(d)
    fit = lambda r: tuple(np.polyfit(sq, r, 1)[::-1]) if d.size >= 2 else (r[0], 0.0)
    scale = max(abs(t1), 0.5 * t2)
    failures = []
    if abs(r1[-1] - t1) > rel_tol * scale:
        failures.append(f"drift rate {r1[-1]:.6g} vs {t1:.6g}")
    if abs(r2[-1] - t2) > rel_tol * t2:
        failures.append(f"variance rate {r2[-1]:.6g} vs {t2:.6g}")
    if r3[-1] > rel_tol:
        failures.append(f"tail rate {r3[-1]:.6g}")
    if not all(math.isfinite(v) for v in r4):
        failures.append("inverse moment rate not finite")
    rep = HypothesisReport(tuple(d), tuple(r1), tuple(r2), tuple(r3), tuple(r4), t1, t2,
                           tuple(float(v) for v in fit(r1)), tuple(float(v) for v in fit(r2)),
                           not failures, tuple(failures))
    if failures and raise_on_failure:
        raise HypothesisViolated("; ".join(failures))
    return rep


# ---------------------------------------------------------------------------
# Configuration and summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Run configuration.  ``n_steps`` counts all steps of one replica,
    burn-in included; the default burn-in is 10% with a floor of 1e4 steps
    (capped at half the run)."""
    delta: float = 1e-3
    dt: float = 1e-3
    n_steps: int = 1_000_000
    burn_in: int | None = None
    replicas: int = 1
    seed: int = 0
    jobs: int | None = None

    def __post_init__(self):
        if not self.delta > 0 or not self.dt > 0:
            raise ValidationError("delta and dt must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2 * BATCHES:
            raise ValidationError(f"n_steps must be an integer >= {2 * BATCHES}")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ValidationError("replicas must be a positive integer")
        if self.burn_in is not None and not 0 <= self.burn_in < self.n_steps - BATCHES:
            raise ValidationError("burn_in must be smaller than n_steps")

    @property
    def burn(self) -> int:
        if self.burn_in is not None:
            return int(self.burn_in)
        n = int(self.n_steps)
        return min(max(n // 10, BURN_FLOOR), n // 2)


@dataclass(frozen=True)
class PathSummary:
    estimate: float
    std_error: float
    ess: float
    extras: dict = field(default_factory=dict)


def _batch_summary(sums, sums2, n_post, scale):
    """Pool batch sums (replicas x batches) into a mean with batch-means
    standard error; ``scale`` converts a per-step mean to the estimate."""
    sums = np.atleast_2d(sums)
    per = n_post / sums.shape[1]
    means = sums / per * scale
    flat = means.ravel()
    est = float(np.mean(flat))
    se = float(np.std(flat, ddof=1) / math.sqrt(flat.size))
    n_total = n_post * sums.shape[0]
    var_step = float(np.sum(sums2)) / n_total - (float(np.sum(sums)) / n_total) ** 2
    var_step = max(var_step, 0.0) * scale * scale
    ess = var_step / se ** 2 if se > 0 else float(n_total)
    return est, se, min(ess, float(n_total))


# ---------------------------------------------------------------------------
# Matrix product
# ---------------------------------------------------------------------------

def step_matrix(z: float, eps: float, delta: float) -> np.ndarray:
    """``I + A^Delta`` for one disorder value ``z``."""
    ed = eps * delta
    return np.array([[1.0, ed], [ed * z, z]])


@numba.njit(cache=True)
def _product_kernel(z, ed, y, offset, burn, n_post, sums, sums2, rec, rec_every):
    nb = sums.size
    for i in range(z.size):
        k = offset + i
        inc = math.log(abs(1.0 + ed * y))
        if k >= burn:
            j = k - burn
            b = j * nb // n_post
            sums[b] += inc
            sums2[b] += inc * inc
            if rec_every > 0 and j % rec_every == 0:
                r = j // rec_every
                if r < rec.size:
                    rec[r] = y
        y = z[i] * (y + ed) / (1.0 + ed * y)
    return y


def _check_product(eps, delta):
    if eps == 0:
        raise ValidationError("eps must be nonzero")
    if (eps * delta) ** 2 >= 1:
        raise Degenerate("eps^2 delta^2 >= 1: I + A is singular or orientation reversing")


def _product_replica(args):
    law, eps, delta, n_steps, burn, seed, index, rec_every = args
    rng = stream(seed, index, "product")
    ed = eps * delta
    n_post = n_steps - burn
    sums = np.zeros(BATCHES)
    sums2 = np.zeros(BATCHES)
    n_rec = (n_post + rec_every - 1) // rec_every if rec_every > 0 else 0
    rec = np.empty(n_rec)
    y = math.copysign(1.0, eps)
    done = 0
    while done < n_steps:
        m = min(CHUNK, n_steps - done)
        z = law.sample(delta, rng, m)
        y = _product_kernel(z, ed, y, done, burn, n_post, sums, sums2, rec, rec_every)
        done += m
    return sums, sums2, rec


def product_lyapunov(law: DisorderLaw, eps: float, delta: float | None = None,
                     config: SimConfig | None = None) -> PathSummary:
    """Lyapunov exponent per step of the product of ``I + A^Delta``.

    ``estimate`` is ``L^Delta`` per step; ``extras["rate"]`` (with
    ``extras["rate_se"]``) is ``L^Delta / Delta``, the quantity that
    converges to the continuum exponent, and ``extras["exact"]`` is that
    exponent.

    Raises
    ------
    Degenerate
        If ``eps^2 Delta^2 >= 1``.
    """
    config = config or SimConfig()
    delta = config.delta if delta is None else delta
    _check_product(eps, delta)
    law.check_delta(delta)
    n, burn = int(config.n_steps), config.burn
    tasks = [(law, eps, delta, n, burn, config.seed, r, 0) for r in range(config.replicas)]
    res = _fan_out(_product_replica, tasks, config.jobs)
    sums = np.array([r[0] for r in res])
    sums2 = np.array([r[1] for r in res])
    est, se, ess = _batch_summary(sums, sums2, n - burn, 1.0)
    exact_l = exact.lyapunov(law.continuum(eps))
    return PathSummary(est, se, ess, {
        "rate": est / delta, "rate_se": se / delta, "exact": exact_l,
        "delta": delta, "eps": eps, "replicas": config.replicas,
        "steps": n, "burn_in": burn,
    })


def fixed_point_bound(law: DisorderLaw, eps: float, delta: float) -> float:
    """``x+ = ((q-1)/(eps D) + sqrt(((q-1)/(eps D))^2 + 4q)) / 2`` with
    ``q = sqrt(E[Z^2])``: the positive fixed point of ``u -> q (u + eps D)
    / (1 + eps D u)``, which bounds ``sqrt(E[Y^2])`` under the invariant
    law."""
    q = math.sqrt(law.moment(delta, 2.0))
    ed = abs(eps) * delta
    r = (q - 1.0) / ed
    return 0.5 * (r + math.sqrt(r * r + 4.0 * q))


@dataclass(frozen=True)
class InvariantMeasureResult:
    edges: np.ndarray          # log-spaced bin edges
    counts: np.ndarray
    ks_distance: float
    second_moment: float       # E[Y^2]
    inverse_moment: float      # E[1/Y]
    x_plus: float
    lyapunov_rate: float       # int log(1 + eps D y) dmu / D
    lyapunov_rate_se: float
    samples: int


def _stationary_cdf(params: ModelParams, lo: float, hi: float, n: int = 20001):
    """CDF of the invariant density on a log grid covering [lo, hi]."""
    u = np.linspace(math.log(lo), math.log(hi), n)
    with np.errstate(under="ignore"):
        g = exact.invariant_density(params, np.exp(u)) * np.exp(u)
    c = sint.cumulative_simpson(g, x=u, initial=0.0)
    # mass outside the grid, from the complementary side
    total = c[-1]
    return u, c, total


def product_invariant_measure(law: DisorderLaw, eps: float, delta: float | None = None,
                              config: SimConfig | None = None, bins: int = 100,
                              max_samples: int = 2_000_000) -> InvariantMeasureResult:
    """Empirical law of ``|Y^Delta|`` after burn-in, compared to the
    continuum invariant density by the Kolmogorov-Smirnov distance.

    ``Y`` is recorded every ``k`` steps with ``k`` chosen so that at most
    ``max_samples`` values are stored per replica; the moments and the
    Lyapunov functional use the recorded values.
    """
    config = config or SimConfig()
    delta = config.delta if delta is None else delta
    _check_product(eps, delta)
    law.check_delta(delta)
    n, burn = int(config.n_steps), config.burn
    rec_every = max(1, -(-(n - burn) // max_samples))
    tasks = [(law, eps, delta, n, burn, config.seed, r, rec_every) for r in range(config.replicas)]
    res = _fan_out(_product_replica, tasks, config.jobs)
    y = np.abs(np.concatenate([r[2] for r in res]))
    params = law.continuum(abs(eps))
    ys = np.sort(y)
    lo = min(ys[0], exact.density_mode(params)) * 1e-3
    hi = max(ys[-1], exact.density_mode(params)) * 1e3
    u, c, total = _stationary_cdf(params, lo, hi)
    f_model = np.interp(np.log(ys), u, c) / total
    m = ys.size
    ecdf_hi = np.arange(1, m + 1) / m
    ecdf_lo = np.arange(0, m) / m
    ks = float(max(np.max(ecdf_hi - f_model), np.max(f_model - ecdf_lo)))
    edges = np.geomspace(ys[0], ys[-1] * (1 + 1e-12), bins + 1)
    counts, _ = np.histogram(ys, edges)
    ed = abs(eps) * delta
    inc = np.log1p(ed * y) / delta
    rate = float(np.mean(inc))
    per_rep = np.array([np.mean(np.log1p(ed * np.abs(r[2]))) / delta for r in res])
    if per_rep.size > 1:
        rate_se = float(np.std(per_rep, ddof=1) / math.sqrt(per_rep.size))
    else:
        bm = np.array([b.mean() for b in np.array_split(inc, BATCHES)])
        rate_se = float(np.std(bm, ddof=1) / math.sqrt(BATCHES))
    return InvariantMeasureResult(edges, counts, ks, float(np.mean(y * y)), float(np.mean(1.0 / y)),
                                  fixed_point_bound(law, eps, delta), rate, rate_se, m)


# ---------------------------------------------------------------------------
# Diffusion
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _s_kernel(s, logx, g, eps, mu, sig, dt, offset, burn, n_post, sums, sums2, rec, rec_every):
    nb = sums.size
    for i in range(g.size):
        k = offset + i
        ey = math.exp(s)
        inc = eps * ey * dt
        if k >= burn:
            j = k - burn
            b = j * nb // n_post
            sums[b] += inc
            sums2[b] += inc * inc
            if rec_every > 0 and j % rec_every == 0:
                r = j // rec_every
                if r < rec.size:
                    rec[r] = s
        s = s + (eps * (1.0 / ey - ey) + mu) * dt + sig * g[i]
        logx += inc
    return s, logx


@numba.njit(cache=True)
def _y_kernel(y, logx, g, eps, dlt, sig, dt, offset, burn, n_post, sums, sums2, rec, rec_every):
    nb = sums.size
    for i in range(g.size):
        k = offset + i
        inc = eps * y * dt
        if k >= burn:
            j = k - burn
            b = j * nb // n_post
            sums[b] += inc
            sums2[b] += inc * inc
            if rec_every > 0 and j % rec_every == 0:
                r = j // rec_every
                if r < rec.size:
                    rec[r] = math.log(abs(y))
        y = y + (eps * (1.0 - y * y) + dlt * y) * dt + sig * y * g[i]
        logx += inc
    return y, logx


@numba.njit(cache=True)
def _xy_kernel(state, g, eps, dlt, sig, dt, offset, burn, n_post, sums, sums2, rec, rec_every):
    # state: x1, x2, log-norm offset, tau (-1 until trapped), exits
    x1, x2, lognorm, tau, exits = state[0], state[1], state[2], state[3], state[4]
    nb = sums.size
    for i in range(g.size):
        k = offset + i
        if k >= burn:
            j = k - burn
            if rec_every > 0 and j % rec_every == 0:
                r = j // rec_every
                if r < rec.size:
                    rec[r] = math.log(abs(x2 / x1))
        n1 = x1 + eps * x2 * dt
        n2 = x2 + (eps * x1 + dlt * x2) * dt + sig * x2 * g[i]
        x1, x2 = n1, n2
        if tau < 0.0:
            if x1 * x2 > 0.0:
                tau = (k + 1) * dt
        elif x1 * x2 <= 0.0:
            exits += 1.0
        if (k + 1) % 64 == 0:
            nrm = math.sqrt(x1 * x1 + x2 * x2)
            x1 /= nrm
            x2 /= nrm
            inc = math.log(nrm)
            lognorm += inc
            if k >= burn:
                b = (k - burn) * nb // n_post
                sums[b] += inc
                sums2[b] += inc * inc
    state[0], state[1], state[2], state[3], state[4] = x1, x2, lognorm, tau, exits


def _check_dt(params: ModelParams, dt: float):
    lim = 1e-3 * min(1.0, 1.0 / abs(params.eps), 1.0 / params.sigma ** 2)
    if dt > lim * (1 + 1e-12):
        raise StepTooLarge(f"dt = {dt} exceeds the stability limit {lim:.3g}")


def _diffusion_replica(args):
    params, dt, n_steps, burn, coords, seed, index, rec_every, start = args
    rng = stream(seed, index, "diffusion")
    eps = abs(params.eps) if coords != "XY" else params.eps
    sig = params.sigma
    dlt = params.delta
    sqdt = math.sqrt(dt)
    n_post = n_steps - burn
    sums = np.zeros(BATCHES)
    sums2 = np.zeros(BATCHES)
    n_rec = (n_post + rec_every - 1) // rec_every if rec_every > 0 else 0
    rec = np.full(n_rec, np.nan)
    if coords == "XY":
        state = np.array([start[0], start[1], 0.0, -1.0, 0.0])
        if state[0] * state[1] > 0:
            state[3] = 0.0
    elif coords == "log-S":
        s, logx = math.log(abs(start)), 0.0
    else:
        y, logx = abs(start), 0.0
    done = 0
    while done < n_steps:
        m = min(CHUNK, n_steps - done)
        g = rng.standard_normal(m)
        if coords == "log-S":
            s, logx = _s_kernel(s, logx, g, eps, dlt - 0.5 * sig * sig, sig * sqdt, dt,
                                done, burn, n_post, sums, sums2, rec, rec_every)
        elif coords == "ratio-Y":
            y, logx = _y_kernel(y, logx, g, eps, dlt, sig * sqdt, dt,
                                done, burn, n_post, sums, sums2, rec, rec_every)
        else:
            _xy_kernel(state, g, eps, dlt, sig * sqdt, dt, done, burn, n_post, sums, sums2, rec, rec_every)
        done += m
    extra = {}
    if coords == "XY":
        extra = {"tau": state[3], "sign_exits": state[4]}
    return sums, sums2, rec, extra


def _integrated_autocorr(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time (in samples) with Sokal's window."""
    x = x - x.mean()
    n = x.size
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for m in range(1, n):
        tau += 2 * acf[m]
        if m >= c * tau:
            break
    return max(tau, 1.0)


def simulate_diffusion(params: ModelParams, config: SimConfig | None = None, coords: str = "log-S",
                       start=None, record_every: float = 0.01, bins: int = 50,
                       return_path: bool = False):
    """Euler-Maruyama simulation of the diffusion.

    Parameters
    ----------
    coords : {"log-S", "ratio-Y", "XY"}
        Integration chart.  In ``log-S`` and ``ratio-Y`` the sign of
        ``eps`` is absorbed by ``Y -> -Y`` and the estimate is the growth
        rate of ``|X_1|``; in ``XY`` it is the growth rate of ``|X|`` and the
        path is renormalized every 64 steps.
    start : float or (float, float)
        ``Y(0)`` (default 1) or ``(X_1(0), X_2(0))`` for ``XY`` (default
        ``(-1, 1)``, the second quadrant).
    record_every : float
        Time between recorded values of ``log |Y|``.

    Returns
    -------
    PathSummary
        ``estimate`` is the Lyapunov exponent with batch-means error;
        ``extras`` holds ``exact``, the chi-square statistic and p-value of
        the recorded ``Y`` on ``bins`` equiprobable bins of the invariant law
        (after thinning by twice the integrated autocorrelation time), and
        for ``XY`` the sign-trapping times ``tau``.  With ``return_path``
        the recorded ``log |Y|`` values are returned as well.

    Raises
    ------
    StepTooLarge
        If ``dt > 1e-3 min(1, 1/|eps|, 1/sigma^2)``.
    """
    config = config or SimConfig()
    if coords not in ("log-S", "ratio-Y", "XY"):
        raise ValidationError(f"unknown chart {coords!r}")
    dt = config.dt
    _check_dt(params, dt)
    if start is None:
        start = (-1.0, 1.0) if coords == "XY" else 1.0
    if coords == "XY":
        if len(start) != 2 or (start[0] == 0 and start[1] == 0):
            raise ValidationError("XY start must be a nonzero pair")
        start = (float(start[0]), float(start[1]))
    elif not float(start) != 0:
        raise ValidationError("Y(0) must be nonzero")
    n, burn = int(config.n_steps), config.burn
    rec_every = max(1, int(round(record_every / dt)))
    tasks = [(params, dt, n, burn, coords, config.seed, r, rec_every, start)
             for r in range(config.replicas)]
    res = _fan_out(_diffusion_replica, tasks, config.jobs)
    sums = np.array([r[0] for r in res])
    sums2 = np.array([r[1] for r in res])
    est, se, ess = _batch_summary(sums, sums2, n - burn, 1.0 / dt)
    extras = {"exact": exact.lyapunov(params), "coords": coords, "dt": dt,
              "steps": n, "burn_in": burn, "replicas": config.replicas}
    if coords == "XY":
        taus = [r[3]["tau"] for r in res]
        extras["tau"] = taus
        extras["tau_mean"] = float(np.mean(taus)) if all(t >= 0 for t in taus) else math.inf
        extras["sign_exits"] = int(sum(r[3]["sign_exits"] for r in res))
    logy = [r[2][np.isfinite(r[2])] for r in res]
    if params.eps > 0 or coords != "XY":
        chi = _chi_square(params, logy, bins)
        extras.update(chi)
    if return_path:
        return PathSummary(est, se, ess, extras), logy
    return PathSummary(est, se, ess, extras)


def _chi_square(params: ModelParams, logy: list, bins: int) -> dict:
    p = ModelParams(params.sigma, params.alpha, abs(params.eps))
    thinned = []
    taus = []
    for s in logy:
        if s.size < 4 * bins:
            continue
        tau = _integrated_autocorr(s)
        k = max(1, int(math.ceil(2 * tau)))
        taus.append(tau)
        thinned.append(s[::k])
    if not thinned:
        return {"chi2_stat": math.nan, "chi2_p": math.nan}
    v = np.concatenate(thinned)
    mode = exact.density_mode(p)
    lo = min(math.exp(v.min()), mode) * 1e-3
    hi = max(math.exp(v.max()), mode) * 1e3
    u, c, total = _stationary_cdf(p, lo, hi)
    probs = np.interp(v, u, c) / total
    counts, _ = np.histogram(probs, np.linspace(0.0, 1.0, bins + 1))
    expected = v.size / bins
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return {"chi2_stat": stat, "chi2_p": float(stats.chi2.sf(stat, bins - 1)),
            "chi2_samples": int(v.size), "tau_int_records": float(np.mean(taus))}


def integrate_increments(params: ModelParams, dB: np.ndarray, dt: float, coords: str = "log-S",
                         y0: float = 1.0) -> tuple[float, float]:
    """Integrate one path with prescribed Brownian increments ``dB`` and
    return ``(Y(T), log X_1(T))``.  Used to compare charts pathwise."""
    dB = np.ascontiguousarray(dB, dtype=float)
    sums = np.zeros(1)
    sums2 = np.zeros(1)
    rec = np.empty(0)
    eps, sig, dlt = abs(params.eps), params.sigma, params.delta
    big = dB.size + 1
    if coords == "log-S":
        s, logx = _s_kernel(math.log(y0), 0.0, dB, eps, dlt - 0.5 * sig * sig, sig, dt,
                            0, big, 1, sums, sums2, rec, 0)
        return math.exp(s), logx
    if coords == "ratio-Y":
        y, logx = _y_kernel(y0, 0.0, dB, eps, dlt, sig, dt, 0, big, 1, sums, sums2, rec, 0)
        return y, logx
    raise ValidationError("coords must be 'log-S' or 'ratio-Y'")


# ---------------------------------------------------------------------------
# Central limit theorem
# ---------------------------------------------------------------------------

def _clt_replica(args):
    params, dt, n_steps, seed, index = args
    rng = stream(seed, index, "clt")
    x = abs(4 * params.eps / params.sigma ** 2)
    y0 = float(stats.geninvgauss.rvs(-params.alpha, x, random_state=rng))
    sig = params.sigma
    eps = abs(params.eps)
    s, logx = math.log(y0), 0.0
    empty = np.empty(0)
    dummy = np.zeros(1)
    done = 0
    while done < n_steps:
        m = min(CHUNK, n_steps - done)
        g = rng.standard_normal(m)
        s, logx = _s_kernel(s, logx, g, eps, params.delta - 0.5 * sig * sig, sig * math.sqrt(dt), dt,
                            done, n_steps + 1, 1, dummy, dummy, empty, 0)
        done += m
    # log |X(t)| - log |X(0)| with X = X_1 (1, Y)
    return logx + 0.5 * (math.log1p(math.exp(2 * s)) - math.log1p(y0 * y0))


def clt_variance_estimate(params: ModelParams, config: SimConfig) -> PathSummary:
    """Replica variance of ``(log |X(t)| - t L)/sqrt(t)`` at ``t = n_steps dt``.

    Each replica starts from the invariant law of ``Y`` and is integrated in
    the S chart.  The standard error of the sample variance uses the sample
    fourth moment; ``extras`` holds the exact variance, skewness and excess
    kurtosis of the replica values.

    Raises
    ------
    BudgetTooSmall
        If fewer than 1000 replicas are requested.
    """
    if config.replicas < 1000:
        raise BudgetTooSmall("the CLT estimate needs at least 1000 replicas")
    _check_dt(params, config.dt)
    n = int(config.n_steps)
    t = n * config.dt
    tasks = [(params, config.dt, n, config.seed, r) for r in range(config.replicas)]
    logs = np.array(_fan_out(_clt_replica, tasks, config.jobs))
    lyap = exact.lyapunov(params)
    w = (logs - t * lyap) / math.sqrt(t)
    m = w.size
    c = w - w.mean()
    s2 = float(np.sum(c * c) / (m - 1))
    m4 = float(np.mean(c ** 4))
    var_s2 = max((m4 - (m - 3) / (m - 1) * s2 * s2) / m, 0.0)
    se = math.sqrt(var_s2)
    extras = {"t": t, "replicas": m, "mean": float(w.mean()),
              "skewness": float(stats.skew(w)), "excess_kurtosis": float(stats.kurtosis(w))}
    try:
        extras["exact"] = exact.variance(params).v
    except Exception:  # pragma: no cover - exact variance has its own domain
        extras["exact"] = math.nan
    return PathSummary(s2, se, float(m), extras)


# ---------------------------------------------------------------------------
# McCoy-Wu transfer matrices
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _mw_kernel(lam, c, d, state, offset, burn, n_post, sums):
    """Products of ``[[1, c], [lam c, lam d]]`` applied to ``state`` with
    per-step renormalization; log-norm increments after ``burn`` go into
    ``sums`` by batch."""
    v1, v2 = state[0], state[1]
    nb = sums.size
    for i in range(lam.size):
        k = offset + i
        n1 = v1 + c * v2
        n2 = lam[i] * (c * v1 + d * v2)
        nrm = math.sqrt(n1 * n1 + n2 * n2)
        v1 = n1 / nrm
        v2 = n2 / nrm
        if k >= burn:
            j = k - burn
            if j < n_post:
                sums[j * nb // n_post] += math.log(nrm)
    state[0], state[1] = v1, v2
