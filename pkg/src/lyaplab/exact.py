"""Continuum-limit quantities of the random-coupling diffusion.

The model is indexed by a noise amplitude ``sigma``, an index ``alpha`` and a
coupling ``eps``.  With ``x = 4|eps|/sigma**2`` the Lyapunov exponent is

    L = (sigma^2 / 4) * x K_{alpha-1}(x) / K_alpha(x),

the ratio process has invariant density

    p(y) = y^{-1-alpha} exp(-(x/2)(y + 1/y)) / (2 K_alpha(x)),     y > 0,

and ``log |X(t)| - t L`` satisfies a central limit theorem with variance
given by a double integral of ``p`` (see :func:`variance`).  This module also
provides the small-coupling expansion of ``L`` (exact rational coefficients
from formal power series division) and the constants ``C(alpha)`` governing
the small-coupling behaviour of the variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import special as sc

from . import specfun
from .errors import (GridTooNarrow, NonPositivePoint, PoleOfCoefficient,
                     ToleranceNotMet, ValidationError)
from .quadrature import integrate
from .specfun import DEFAULT_POLICY, EULER_GAMMA, PrecisionPolicy, SpecialEval

__all__ = [
    "ModelParams", "ExpansionResult", "VarianceResult", "lyapunov",
    "lyapunov_eval", "invariant_density", "density_mode", "ergodic_averages",
    "expansion_coefficients", "expansion_coefficients_exact",
    "lyapunov_asymptotic", "singular_exponent_fit", "variance",
    "variance_asymptotic_constant", "q1",
]

J_MAX = 12


@dataclass(frozen=True)
class ModelParams:
    """Parameters (sigma, alpha, eps) of the diffusion.

    ``x`` and ``delta`` are properties, always recomputed from the three
    fields.
    """
    sigma: float
    alpha: float
    eps: float

    def __post_init__(self):
        for name in ("sigma", "alpha", "eps"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.eps == 0:
            raise ValidationError("eps must be nonzero")

    @property
    def x(self) -> float:
        """Signed Bessel argument 4 eps / sigma^2."""
        return 4.0 * self.eps / self.sigma ** 2

    @property
    def abs_x(self) -> float:
        return abs(self.x)

    @property
    def delta(self) -> float:
        """Drift shortcut sigma^2 (1 - alpha) / 2."""
        return 0.5 * self.sigma ** 2 * (1.0 - self.alpha)


# ---------------------------------------------------------------------------
# Lyapunov exponent and invariant density
# ---------------------------------------------------------------------------

def lyapunov_eval(params: ModelParams, policy: PrecisionPolicy = DEFAULT_POLICY) -> SpecialEval:
    """Lyapunov exponent with error estimate and method tag.

    The tag is that of :func:`lyaplab.specfun.bessel_k_ratio`; for
    ``x < 1e-8`` it reads ``asymptotic``.
    """
    r = specfun.bessel_k_ratio(params.alpha, params.abs_x, policy)
    s = 0.25 * params.sigma ** 2
    return SpecialEval(s * r.value, s * r.err_est, r.method)


def lyapunov(params: ModelParams, policy: PrecisionPolicy = DEFAULT_POLICY) -> float:
    """Lyapunov exponent ``(sigma^2/4) x K_{alpha-1}(x) / K_alpha(x)``.

    Symmetric under ``eps -> -eps`` (only ``|eps|`` enters).
    """
    return float(lyapunov_eval(params, policy).value)


def _check_density_params(params: ModelParams):
    if params.eps <= 0:
        raise ValidationError("the invariant density is defined for eps > 0")


def _log_norm(params: ModelParams) -> float:
    # log(2 K_alpha(x)) through the exponentially scaled K
    x = params.abs_x
    ks = specfun.bessel_k_scaled(params.alpha, x)
    return math.log(2.0 * float(ks.value)) - x


def invariant_density(params: ModelParams, y):
    """Invariant density of the ratio process, vectorized in ``y``.

    Evaluated in log space, so it does not overflow for tiny couplings.

    Raises
    ------
    NonPositivePoint
        If any ``y <= 0``.
    """
    _check_density_params(params)
    ya = np.asarray(y, dtype=float)
    if np.any(ya <= 0):
        raise NonPositivePoint("the density is defined for y > 0")
    x = params.abs_x
    logp = (-1.0 - params.alpha) * np.log(ya) - 0.5 * x * (ya + 1.0 / ya) - _log_norm(params)
    out = np.exp(logp)
    return float(out) if np.ndim(out) == 0 else out


def density_mode(params: ModelParams) -> float:
    """Maximizer of the invariant density.

    Stationarity of ``log p`` gives ``(x/2) y^2 + (1+alpha) y - x/2 = 0``.
    """
    _check_density_params(params)
    x = params.abs_x
    b = 1.0 + params.alpha
    # positive root, written to avoid cancellation for either sign of b
    disc = math.hypot(b, x)
    if b >= 0:
        return x / (b + disc)
    return (disc - b) / x


def _halfline(f: Callable, rel_tol: float) -> tuple[float, float]:
    """int_0^inf f(y) dy split at 1, with y -> 1/y on (0, 1)."""
    hi = integrate(f, 1.0, np.inf, rel_tol=rel_tol)
    lo = integrate(lambda u: f(1.0 / u) / (u * u), 1.0, np.inf, rel_tol=rel_tol)
    return hi.value + lo.value, hi.err + lo.err


def ergodic_averages(params: ModelParams, rel_tol: float = 1e-12) -> tuple[float, float]:
    """The two ergodic expressions for the Lyapunov exponent.

    Returns ``eps E[Y]`` and ``eps E[1/Y] - alpha sigma^2 / 2`` under the
    invariant density, both by quadrature.
    """
    _check_density_params(params)
    with np.errstate(over="ignore", under="ignore"):
        m1, _ = _halfline(lambda y: y * invariant_density(params, y), rel_tol)
        mm1, _ = _halfline(lambda y: invariant_density(params, y) / y, rel_tol)
    e = params.eps
    return e * m1, e * mm1 - 0.5 * params.alpha * params.sigma ** 2


# ---------------------------------------------------------------------------
# Small coupling expansion
# ---------------------------------------------------------------------------

def _series_quotient(num: Sequence[Fraction], den: Sequence[Fraction], n: int) -> list[Fraction]:
    q = []
    for k in range(n):
        s = num[k] if k < len(num) else Fraction(0)
        for i in range(1, k + 1):
            if i < len(den):
                s -= den[i] * q[k - i]
        q.append(s / den[0])
    return q


def expansion_coefficients_exact(alpha, j_max: int) -> list[Fraction]:
    """c_1 .. c_{j_max} as exact rationals at the (rational) point ``alpha``.

    ``p_alpha(y) = -(y/2) N(y)/D(y)`` with

        N = sum_k y^k / (k! (1-alpha)_{k+1} 4^k),
        D = sum_k y^k / (k! (1-alpha)_k 4^k),

    and ``c_j`` is the coefficient of ``y^j``.  A float ``alpha`` is
    converted to the exact binary rational it represents.
    """
    if int(j_max) != j_max or not 1 <= j_max <= J_MAX:
        raise ValidationError(f"j_max must be an integer in [1, {J_MAX}]")
    j_max = int(j_max)
    a = Fraction(alpha)
    for p in range(1, j_max + 1):
        if abs(float(a) - p) < 1e-8:
            raise PoleOfCoefficient(f"c_{p}..c_{j_max} have a pole at alpha = {p}")
    one_m = 1 - a
    num, den = [], []
    fact = 1
    for k in range(j_max):
        if k:
            fact *= k
        scale = Fraction(1, fact * 4 ** k)
        num.append(scale / specfun.pochhammer(one_m, k + 1))
        den.append(scale / specfun.pochhammer(one_m, k))
    q = _series_quotient(num, den, j_max)
    return [-q[j - 1] / 2 for j in range(1, j_max + 1)]


def expansion_coefficients(alpha: float, j_max: int) -> list[float]:
    """Floating values of c_1(alpha) .. c_{j_max}(alpha).

    Raises
    ------
    PoleOfCoefficient
        If ``alpha`` lies within 1e-8 of one of 1, ..., j_max.
    """
    return [float(c) for c in expansion_coefficients_exact(alpha, j_max)]


@dataclass(frozen=True)
class ExpansionResult:
    """Small-x expansion of ``(4/sigma^2) L`` in one of four regimes.

    ``singular_kind`` is one of

    * ``"power"``: ``sum_j c_j x^{2j} + singular_coeff * (x/2)^{2 alpha}``
      (non-integer ``alpha > 0``);
    * ``"power-log"``: ``sum_j c_j x^{2j} + singular_coeff * x^{2 alpha} log x``
      (positive integer ``alpha``);
    * ``"inverse-log"``: ``1 / (log(2/x) - gamma)`` (``alpha = 0``);
    * ``"constant-shift"``: ``shift + `` the expansion at ``|alpha|``
      (``alpha < 0``), where ``inner`` holds the latter.

    ``remainder_order`` is the exponent ``r`` of the ``O(x^r)`` remainder
    (for the inverse-log regime the remainder is ``O(log(1/x)^{-3})`` on
    this scale and ``remainder_order`` is ``None``).
    """
    alpha: float
    analytic_coeffs: list
    singular_coeff: float
    singular_kind: str
    remainder_order: float | None
    shift: float = 0.0
    inner: "ExpansionResult | None" = field(default=None, repr=False)

    def evaluate(self, x: float) -> float:
        """Value of the truncated expansion of ``(4/sigma^2) L`` at ``x > 0``."""
        if self.singular_kind == "constant-shift":
            return self.shift + self.inner.evaluate(x)
        if self.singular_kind == "inverse-log":
            return 1.0 / (math.log(2.0 / x) - EULER_GAMMA)
        s = sum(c * x ** (2 * j) for j, c in self.analytic_coeffs)
        if self.singular_kind == "power":
            s += self.singular_coeff * (0.5 * x) ** (2 * self.alpha)
        else:
            s += self.singular_coeff * x ** (2 * self.alpha) * math.log(x)
        return s


def _expansion_nonneg(alpha: float) -> ExpansionResult:
    if alpha == 0:
        return ExpansionResult(0.0, [], 1.0, "inverse-log", None)
    n = round(alpha)
    if abs(alpha - n) < 1e-8:
        n = int(n)
        # the rational functions are regular at alpha = n up to degree n-1
        cs = [float(c) for c in expansion_coefficients_exact(n, n - 1)] if n > 1 else []
        log_c = (-1) ** n * 2.0 ** (2 - 2 * n) / math.factorial(n - 1) ** 2
        return ExpansionResult(float(n), list(enumerate(cs, start=1)), log_c,
                               "power-log", 2.0 * n)
    fl = math.floor(alpha)
    cs = expansion_coefficients(alpha, fl) if fl >= 1 else []
    sing = 2.0 * sc.gamma(1.0 - alpha) / sc.gamma(alpha)
    rem = min(2.0 * math.ceil(alpha), 4.0 * alpha)
    return ExpansionResult(alpha, list(enumerate(cs, start=1)), float(sing), "power", rem)


def lyapunov_asymptotic(params: ModelParams) -> ExpansionResult:
    """Small-coupling expansion of ``(4/sigma^2) L`` for the given index.

    Only ``alpha`` enters the coefficients; evaluate the result at
    ``params.abs_x`` and multiply by ``sigma^2/4`` to approximate ``L``.

    Raises
    ------
    PoleOfCoefficient
        Only if ``floor(alpha)`` exceeds the coefficient cap of 12.
    """
    a = params.alpha
    if math.floor(abs(a)) > J_MAX:
        raise PoleOfCoefficient(f"expansion supported for |alpha| < {J_MAX + 1}")
    if a < 0:
        inner = _expansion_nonneg(-a)
        return ExpansionResult(a, inner.analytic_coeffs, inner.singular_coeff,
                               "constant-shift", inner.remainder_order,
                               shift=2.0 * abs(a), inner=inner)
    return _expansion_nonneg(a)


@dataclass(frozen=True)
class FitResult:
    slope: float
    prefactor: float
    kind: str

    def __iter__(self):
        return iter((self.slope, self.prefactor))


def singular_exponent_fit(sigma: float, alpha: float, eps_grid) -> FitResult:
    """Least-squares fit of the small-coupling law of ``L`` over a grid.

    * ``alpha > 0``: slope of ``log L`` against ``log eps`` (expected
      ``2 alpha`` for ``alpha < 1``) and the prefactor ``exp(intercept)``,
      to be compared with ``(sigma^2/4) 2 Gamma(1-alpha)/Gamma(alpha) (2/sigma^2)^{2 alpha}``.
    * ``alpha = 0``: slope of ``1/L`` against ``log(1/x)`` (expected
      ``4/sigma^2``) and the prefactor ``L log(1/x)`` at the smallest
      coupling of the grid (expected to approach ``sigma^2/4``).
    * ``alpha < 0``: slope of ``log L`` against ``log eps`` (expected 0)
      and the prefactor ``L`` at the smallest coupling (expected to
      approach ``sigma^2 |alpha| / 2``).

    Raises
    ------
    GridTooNarrow
        If the grid spans less than two decades in ``eps``.
    """
    e = np.abs(np.asarray(eps_grid, dtype=float))
    if e.size < 2 or np.any(e == 0) or math.log10(e.max() / e.min()) < 2.0 - 1e-12:
        raise GridTooNarrow("the eps grid must span at least two decades")
    e = np.sort(e)
    L = np.array([lyapunov(ModelParams(sigma, alpha, float(v))) for v in e])
    if alpha == 0:
        lx = np.log(sigma ** 2 / (4.0 * e))
        slope = np.polyfit(lx, 1.0 / L, 1)[0]
        return FitResult(float(slope), float(L[0] * lx[0]), "inverse-log")
    slope, icpt = np.polyfit(np.log(e), np.log(L), 1)
    if alpha < 0:
        return FitResult(float(slope), float(L[0]), "constant")
    return FitResult(float(slope), float(math.exp(icpt)), "power")


# ---------------------------------------------------------------------------
# CLT variance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceResult:
    v: float
    quad_err: float
    inner_cancellation_flag: bool


def variance(params: ModelParams, policy: PrecisionPolicy = DEFAULT_POLICY,
             rel_tol: float = 1e-10) -> VarianceResult:
    """CLT variance of ``log |X(t)|``.

    With ``p`` the invariant density (for ``|eps|``), ``e = |eps|`` and
    ``L`` the Lyapunov exponent,

        v = (4/sigma^2) int_0^inf (y^2 p(y))^{-1} G(y)^2 dy,
        G(y) = int_0^y (e z - L) p(z) dz .

    The centered integrand ``(e z - L) p(z)`` is negative below
    ``z_c = L/e`` and positive above, and ``G(inf) = 0``.  For ``y >= z_c``
    the tail complement ``G(y) = -int_y^inf (...)`` is used, and the
    direct form below; neither inner integrand then changes sign, so no
    cancellation occurs.  Outer and inner integrals run in logarithmic
    variables centred at ``z_c`` (``y -> 1/y`` on the lower side), and the
    factor ``exp((x/2)(y+1/y))`` of the outer integrand is absorbed into
    the inner integrals so that nothing overflows.

    Raises
    ------
    ToleranceNotMet
        If a quadrature does not reach ``rel_tol``.
    """
    a = params.alpha
    e = abs(params.eps)
    x = params.abs_x
    L = lyapunov(params, policy)
    h = 0.5 * x
    zc = L / e
    tol_in = rel_tol * 1e-2

    # (rounding can push the linear factor below zero right at z_c; it is
    # clamped there.)
    # Inner integrals run over the offset t >= 0 from the outer point c.
    # The integrand varies on the scale of c and decays on the scale 1/h;
    # these can be dozens of decades apart, so t is integrated in log t
    # from t0 = 1e-8 min(c, 1/h) up to 800/h (where exp(-h t) < e^-800),
    # and [0, t0] is covered by one trapezoid.
    def offset_integral(g, c):
        t0 = 1e-8 * min(c, 1.0 / h)
        head = 0.5 * t0 * (g(np.array([0.0]))[0] + g(np.array([t0]))[0])

        def gl(tau):
            t = np.exp(tau)
            return g(t) * t
        r = integrate(gl, math.log(t0), math.log(800.0 / h), rel_tol=tol_in)
        return r.value + head, r.err + abs(head) * 1e-8

    def inner_hi(y):
        # exp(h(y+1/y)) * int_y^inf (e z - L) z^{-1-a} exp(-h(z+1/z)) dz, z = y + t
        def g(t):
            z = y + t
            return np.exp(np.log(np.maximum(e * z - L, 0.0)) + (-1.0 - a) * np.log(z)
                          - h * (t + 1.0 / z - 1.0 / y))
        return offset_integral(g, y)

    def inner_lo(u):
        # y = 1/u: exp(h(y+1/y)) * int_0^y (L - e z) z^{-1-a} exp(...) dz,
        # with z = 1/w and w = u + t
        def g(t):
            w = u + t
            return np.exp(np.log(np.maximum(L * w - e, 0.0)) + (a - 2.0) * np.log(w)
                          - h * (t + 1.0 / w - 1.0 / u))
        return offset_integral(g, u)

    inner_err = [0.0]

    def outer(inner, pts, expo):
        # exp(x) of 1/K_a(x) = exp(x)/ks is folded into the outer weight
        out = np.zeros_like(pts)
        for i, y in enumerate(pts):
            damp = h * (y + 1.0 / y - 2.0)
            if damp > 700.0:
                continue
            gv, ge = inner(y)
            w = math.exp(expo * math.log(y) - damp)
            inner_err[0] += w * 2 * abs(gv) * ge
            out[i] = w * gv * gv
        return out

    def outer_hi(taus):
        ys = zc * np.exp(taus)
        return outer(inner_hi, ys, a - 1.0) * ys

    def outer_lo(taus):
        # y = 1/u with u >= 1/zc: y^{a-1} dy = u^{-1-a} du
        us = np.exp(taus) / zc
        return outer(inner_lo, us, -1.0 - a) * us

    tau_hi = math.log1p(1400.0 / (h * zc)) + 1.0
    tau_lo = math.log1p(1400.0 * zc / h) + 1.0
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        hi = integrate(outer_hi, 0.0, tau_hi, rel_tol=rel_tol)
        lo = integrate(outer_lo, 0.0, tau_lo, rel_tol=rel_tol)
    ks = float(specfun.bessel_k_scaled(a, x).value)
    pref = 2.0 / (params.sigma ** 2 * ks)
    total = (hi.value + lo.value) * pref
    err = (hi.err + lo.err) * pref + inner_err[0] * pref * 1e-2
    if not total > 0 or not math.isfinite(total):
        raise ToleranceNotMet(f"variance quadrature produced {total}")
    return VarianceResult(float(total), float(err), True)


def _gamma_tail_scaled(alpha: float, y: float, rel_tol: float) -> float:
    """``e^y int_y^inf z^{-alpha} e^{-z} dz = int_0^inf (y+s)^{-alpha} e^{-s} ds``.

    For ``y >= 1`` the integrand varies on the unit scale and is integrated
    directly.  Otherwise the range ``s < y`` is rescaled by ``s = y t`` and
    the rest is integrated in ``log s`` up to ``s = e^5``, beyond which the
    integrand is below ``exp(-148)``.
    """
    if y >= 1.0:
        return integrate(lambda s: (y + s) ** (-alpha) * np.exp(-s), 0.0, np.inf,
                         rel_tol=rel_tol).value
    near = integrate(lambda t: (1.0 + t) ** (-alpha) * np.exp(-y * t), 0.0, 1.0,
                     rel_tol=rel_tol).value * y ** (1.0 - alpha)

    def g(tau):
        sv = np.exp(tau)
        return np.exp(tau - sv - alpha * np.log(y + sv))
    far = integrate(g, math.log(y), 5.0, rel_tol=rel_tol).value
    return near + far


def q1(alpha: float, rel_tol: float = 1e-10) -> float:
    """Constant ``q_1(alpha)`` for ``0 < alpha < 2``.

    Defined through

        (x/2)^alpha int_0^inf y^{alpha-1} e^y (int_y^inf z^{-alpha} e^{-z} dz)^2 dy
            = q_1(alpha) x^alpha,

    i.e. ``q_1 = 2^{-alpha}`` times the double integral, which is computed
    by nested quadrature.
    """
    if not 0 < alpha < 2:
        raise ValidationError("q1 is defined for 0 < alpha < 2")
    tol_in = rel_tol * 1e-2
    y0 = 1e-300

    def outer(ys):
        out = np.zeros_like(ys)
        for i, y in enumerate(ys):
            if y0 <= y < 700.0:
                g = _gamma_tail_scaled(alpha, y, tol_in)
                out[i] = math.exp((alpha - 1.0) * math.log(y) - y + 2.0 * math.log(g))
        return out

    # On (0, 1) the outer integrand behaves like y^{-|1-alpha|}; with
    # p = 1 - |1 - alpha| the map y = w^{1/p} makes it bounded.
    p = 1.0 - abs(1.0 - alpha)

    def outer_w(ws):
        out = np.zeros_like(ws)
        for i, w in enumerate(ws):
            y = max(w ** (1.0 / p), y0)
            g = _gamma_tail_scaled(alpha, y, tol_in)
            out[i] = math.exp((alpha - p) * math.log(y) - y + 2.0 * math.log(g)) / p
        return out

    with np.errstate(over="ignore", under="ignore"):
        lo = integrate(outer_w, y0 ** p, 1.0, rel_tol=rel_tol)
        hi = integrate(outer, 1.0, np.inf, rel_tol=rel_tol)
    return float(2.0 ** (-alpha) * (lo.value + hi.value + _q1_endpoint(alpha, y0)))


def _q1_endpoint(alpha: float, y0: float) -> float:
    # int_0^{y0} of the outer integrand with the two leading terms of the
    # small-y behaviour of the inner integral (relative error O(y0))
    if alpha == 1.0:
        lg = math.log(y0) + EULER_GAMMA
        return y0 * (lg * lg - 2.0 * lg + 2.0)
    g = sc.gamma(1.0 - alpha)
    b = 1.0 - alpha
    return (g * g * y0 ** alpha / alpha - 2.0 * g * y0 / b
            + y0 ** (2.0 - alpha) / (b * b * (2.0 - alpha)))


def variance_asymptotic_constant(alpha: float) -> tuple[float, str]:
    """Constant ``C(alpha)`` of the small-coupling law of the variance.

    ``v ~ C(alpha) (sigma^2/2) * {1, x^{2 alpha}, x^4 log(1/x), x^4}`` in
    the regimes ``alpha < 0``, ``0 <= alpha < 2`` (``1`` at
    ``alpha = 0``), ``alpha = 2``, ``alpha > 2``.

    At ``alpha = 0`` the limit is ``2/3``, approached with a relative
    correction of order ``1 / log(1/x)^2``: the ratio ``v / (sigma^2/2)``
    computed by :func:`variance` is 0.6609, 0.6663 and 0.66664 at
    ``x = 2e-5, 2e-20, 2e-80``.

    Returns
    -------
    (C, regime)
        ``regime`` is one of ``"alpha<0"``, ``"alpha=0"``,
        ``"0<alpha<2"``, ``"alpha=2"``, ``"alpha>2"``.
    """
    a = float(alpha)
    if not math.isfinite(a):
        raise ValidationError("alpha must be finite")
    if a < 0:
        return 2.0, "alpha<0"
    if a == 0:
        return 2.0 / 3.0, "alpha=0"
    if a < 2:
        return q1(a) * 2.0 ** (1.0 - a) / sc.gamma(a), "0<alpha<2"
    if a == 2:
        return 0.25, "alpha=2"
    return 1.0 / (8.0 * (a - 1.0) ** 3 * (a - 2.0)), "alpha>2"
