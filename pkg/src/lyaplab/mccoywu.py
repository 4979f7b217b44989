"""McCoy-Wu model: the integral F(alpha; eta), its Taylor coefficients at
alpha = 0, the simplified model F~ / F-check, and the Ising transfer matrix
side (beta_c, the beta <-> alpha map, the free energy).

Notation
--------
``f_x(alpha) = x K_{alpha-1}(x) / K_alpha(x)`` is the Lyapunov integrand
(``4 L_{1,alpha}(x/4)``) and

    F(alpha; eta) = int_0^eta f_x(alpha) dx .

Because ``x K_{1+a} = 2 a K_a + x K_{a-1}`` and ``K_a = K_{-a}``,
``f_x(-alpha) = f_x(alpha) + 2 alpha``; hence ``F(-alpha) = F(alpha) +
2 eta alpha`` and the Taylor series of F at 0 is even apart from the linear
term, whose coefficient is ``-eta``.  The even coefficients grow
factorially: the two poles of ``f_x`` at ``+-i nu_1(x)`` closest to the
real axis give

    c_n ~ 4 e^{-gamma} (-1)^{n/2+1} Gamma(n, log(2/eta) - gamma) / pi^n .

The simplified model replaces ``f_x`` by ``2 alpha / (exp(2 alpha L) - 1)``
with ``L = log(2/x)``, for which

    F-check(alpha) = int_0^2 (2 alpha / (exp(2 alpha L) - 1) - 1/L) dx
                   = -4 alpha - 2 log(2 alpha) - 2 psi(1/(2 alpha)),

with asymptotic expansion ``-2 alpha + sum_j (B_2j / j) (2 alpha)^{2j}``.
"""
from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from mpmath.calculus.quadrature import GaussLegendre
from scipy import special as sc

from . import quadrature, spectral, specfun
from .errors import (BudgetTooSmall, DegenerateDisorder, NearPole, NoRootInBracket,
                     NonPositiveArgument, OutOfRange, PrecisionLoss, ToleranceNotMet,
                     ValidationError, WrongHalfPlane)
from .specfun import DEFAULT_POLICY, EPS, EULER_GAMMA, EXTENDED_BITS, PrecisionPolicy

__all__ = [
    "ETA_DEFAULT", "FSeries", "f_integrand", "big_f", "big_f_extended",
    "big_f_simplified", "taylor_simplified", "taylor_f", "taylor_series",
    "E2Law", "IsingDisorderModel", "transfer_matrix", "ReductionResult",
    "leading_order_reduction", "beta_c", "alpha_of_beta", "beta_of_alpha",
    "mw_power_moment", "mw_lambda1", "FreeEnergyResult", "free_energy",
    "mw_lyapunov",
]

ETA_DEFAULT = 0.5
X_FLOOR = 1e-12           # inner end of the graded panels of big_f
V_MAX_EXT = 80.0          # the extended rule integrates over x > 2 exp(-80)
FD_MAX_ORDER = 6
DOMINANT_MAX_ORDER = 20

_GL16 = np.polynomial.legendre.leggauss(16)
_GL24 = np.polynomial.legendre.leggauss(24)


# ---------------------------------------------------------------------------
# The integrand and F
# ---------------------------------------------------------------------------

def _check_eta(eta: float, upper: float = 2.0):
    if not 0 < eta < upper:
        raise ValidationError(f"eta must lie in (0, {upper}), got {eta}")


def f_integrand(alpha, x: float, policy: PrecisionPolicy = DEFAULT_POLICY):
    """``x K_{alpha-1}(x) / K_alpha(x)``, real or complex ``alpha``.

    Equals ``4 * lyapunov(sigma=1, alpha, eps=x/4)`` for real ``alpha``.

    Raises
    ------
    NearPole
        For complex ``alpha`` so close to a zero of ``K_alpha(x)`` that the
        quotient is dominated by rounding.
    """
    if not x > 0:
        raise NonPositiveArgument("x must be positive")
    if isinstance(alpha, complex) and alpha.imag != 0:
        den = complex(specfun.bessel_k_complex(alpha, x, policy).value)
        scale = abs(specfun.bessel_k(abs(alpha.real), x, policy).value)
        if abs(den) <= 1e3 * EPS * scale:
            raise NearPole(f"K_alpha({x}) vanishes to rounding at alpha = {alpha}")
        num = complex(specfun.bessel_k_complex(alpha - 1.0, x, policy).value)
        return x * num / den
    a = alpha.real if isinstance(alpha, complex) else float(alpha)
    return float(specfun.bessel_k_ratio(a, x, policy).value)


def _f_vec(alpha: float, xs: np.ndarray, policy: PrecisionPolicy) -> np.ndarray:
    return np.array([specfun.bessel_k_ratio(alpha, float(x), policy).value for x in xs])


def _graded_panels(eta: float) -> np.ndarray:
    """Panel ends in v = log(2/x) for x_k = eta 2^-k down to X_FLOOR."""
    k_max = int(math.floor(math.log2(eta / X_FLOOR)))
    return math.log(2.0 / eta) + math.log(2.0) * np.arange(k_max + 1)


def big_f(alpha: float, eta: float = ETA_DEFAULT, policy: PrecisionPolicy = DEFAULT_POLICY,
          return_error: bool = False):
    """``F(alpha; eta) = int_0^eta f_x(alpha) dx`` in double precision.

    The interval is cut at ``x_k = eta 2^-k`` down to ``1e-12``; each panel
    is integrated in ``v = log(2/x)`` by 16- and 24-point Gauss-Legendre and
    the difference is kept as the error.  Below ``1e-12`` the integrand is
    bounded by ``2 |alpha| + 0.1``; the remaining piece is approximated by
    ``1e-12 f_{1e-12}(alpha)`` and its bound is added to the error.

    Raises
    ------
    ToleranceNotMet
        If the panel error exceeds ``max(policy.rel_tol |F|, 1e-13)``.
    """
    _check_eta(eta)
    a = float(alpha)
    if not abs(a) < 1:
        raise OutOfRange("big_f requires |alpha| < 1")
    vs = _graded_panels(eta)
    total, err = 0.0, 0.0
    for lo, hi in zip(vs[:-1], vs[1:]):
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        vals = []
        for nodes, weights in (_GL16, _GL24):
            v = c + r * nodes
            x = 2.0 * np.exp(-v)
            vals.append(r * np.sum(weights * x * _f_vec(a, x, policy)))
        total += vals[1]
        err += abs(vals[1] - vals[0])
    x_end = 2.0 * math.exp(-vs[-1])
    total = float(total) + x_end * f_integrand(a, x_end, policy)
    err = float(err)
    if err > max(policy.rel_tol * abs(total), 1e-13):
        raise ToleranceNotMet(f"F({a}; {eta}) quadrature error estimate {err:.3e}")
    # the tail bound is part of the reported error but cannot be reduced
    # without moving the floor
    err += (2.0 * abs(a) + 0.1) * x_end
    return (total, err) if return_error else total


# ---------------------------------------------------------------------------
# F in 106-bit arithmetic (for differencing in alpha)
# ---------------------------------------------------------------------------

_EXT_BREAKS = (0.0, 0.5, 1.5, 3.5, 7.5, 15.5, 31.5, 63.5)


@lru_cache(maxsize=8)
def _ext_rule(eta: float, prec: int, degree: int = 4):
    """Nodes (v, x/2 weight) of the composite extended rule on
    ``v in [log(2/eta), V_MAX_EXT]``; geometric panels keep the nearest
    singularity of the integrand (at ``v ~ gamma``) well outside each
    panel's Bernstein ellipse."""
    with mpmath.workprec(prec):
        g = GaussLegendre(mpmath.mp)
        base = g.calc_nodes(degree, prec)
        v0 = mpmath.log(2 / mpmath.mpf(eta))
        ends = [v0 + b for b in _EXT_BREAKS if v0 + b < V_MAX_EXT] + [mpmath.mpf(V_MAX_EXT)]
        out = []
        for lo, hi in zip(ends[:-1], ends[1:]):
            c, r = (lo + hi) / 2, (hi - lo) / 2
            for t, w in base:
                v = c + r * t
                # dx = 2 exp(-v) dv
                out.append((v, 2 * r * w * mpmath.exp(-v)))
        return tuple(out)


def _itilde_coeffs(nu, kmax):
    c = [mpmath.rgamma(nu + 1)]
    for k in range(1, kmax + 1):
        c.append(c[-1] / (k * (nu + k)))
    return c


def _horner(c, y):
    s = c[-1]
    for ck in reversed(c[:-1]):
        s = s * y + ck
    return s


_F_EXT_CACHE: dict = {}


def big_f_extended(alpha, eta: float = ETA_DEFAULT) -> mpmath.mpf:
    """``F(alpha; eta)`` restricted to ``x > 2 exp(-80)``, in 106-bit
    arithmetic, as an ``mpmath`` number.

    The integrand is written without the ``1/sin(pi alpha)`` prefactor,

        f_x = 2 [h^{2a} It_{a-1} - h^2 It_{1-a}] / [It_{-a} - h^{2a} It_a],  h = x/2,

    with guard bits covering the cancellation of order ``|alpha| log(2/x)``
    near ``alpha = 0``.  The neglected piece of the integral is below
    ``1e-34``; the truncated function is analytic for
    ``|alpha| < nu_1(2 exp(-80)) ~ 0.0397``.
    """
    _check_eta(eta)
    a = mpmath.mpf(alpha)
    key = (eta, str(a))
    if key in _F_EXT_CACHE:
        return _F_EXT_CACHE[key]
    guard = 24 if a == 0 else int(max(0, -float(mpmath.log(abs(a), 2)))) + 24
    prec = EXTENDED_BITS + guard
    rule = _ext_rule(float(eta), EXTENDED_BITS + 40)
    with mpmath.workprec(prec):
        a = mpmath.mpf(alpha)
        h_max = mpmath.mpf(eta) / 2
        y_max = h_max * h_max
        kmax = 4
        while y_max ** kmax / mpmath.factorial(kmax) ** 2 > mpmath.mpf(2) ** (-prec - 8):
            kmax += 1
        total = mpmath.mpf(0)
        if a == 0:
            for v, w in rule:
                x = 2 * mpmath.exp(-v)
                k0 = specfun._mp_k_logseries(0, x)
                k1 = specfun._mp_k_logseries(1, x)
                total += w * x * k1 / k0
        else:
            c_am1 = _itilde_coeffs(a - 1, kmax)
            c_1ma = _itilde_coeffs(1 - a, kmax)
            c_ma = _itilde_coeffs(-a, kmax)
            c_a = _itilde_coeffs(a, kmax)
            for v, w in rule:
                y = mpmath.exp(-2 * v)
                p = mpmath.exp(-2 * a * v)
                num = p * _horner(c_am1, y) - y * _horner(c_1ma, y)
                den = _horner(c_ma, y) - p * _horner(c_a, y)
                total += w * 2 * num / den
    with mpmath.workprec(EXTENDED_BITS):
        total = +total
    _F_EXT_CACHE[key] = total
    return total


# ---------------------------------------------------------------------------
# Simplified model
# ---------------------------------------------------------------------------

def _bose(u):
    """``u / (e^u - 1)`` for complex arrays, accurate near ``u = 0``."""
    u = np.asarray(u, dtype=complex)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-3
    us = u[small]
    out[small] = 1 - us / 2 + us * us / 12 - us ** 4 / 720
    big = ~small
    ub = u[big]
    with np.errstate(over="ignore", invalid="ignore"):
        pos = ub.real > 0
        e = np.exp(-ub[pos])
        vals = np.empty_like(ub)
        vals[pos] = ub[pos] * e / (1.0 - e)
        vals[~pos] = ub[~pos] / np.expm1(ub[~pos])
    out[big] = vals
    return out


def big_f_simplified(alpha, mode: str = "quadrature", eta: float = ETA_DEFAULT,
                     counterterm: bool = False, rel_tol: float = 1e-12) -> complex:
    """Simplified McCoy-Wu integral.

    Parameters
    ----------
    alpha : complex
    mode : {"quadrature", "closed-form"}
        ``quadrature`` integrates ``2 alpha / (exp(2 alpha L(x)) - 1)`` over
        ``(0, eta)`` with ``L = log(2/x)``; with ``counterterm=True`` the
        integrand is ``... - 1/L`` (for ``eta = 2`` this is F-check).
        ``closed-form`` returns ``-4 alpha - 2 log(2 alpha) - 2 psi(1/(2 alpha))``
        (F-check), defined for ``Re alpha > 0``.

    Raises
    ------
    WrongHalfPlane
        Closed form with ``Re alpha <= 0``.
    """
    a = complex(alpha)
    if mode == "closed-form":
        if not a.real > 0:
            raise WrongHalfPlane("the digamma form of F-check needs Re alpha > 0")
        v = -4 * a - 2 * cmath.log(2 * a) - 2 * specfun._psi(1 / (2 * a))
        return v
    if mode != "quadrature":
        raise ValidationError(f"unknown mode {mode!r}")
    _check_eta(eta, 2.0 + 1e-15)
    lo = math.log(2.0 / eta)

    # x = 2 e^{-L}: dx = 2 e^{-L} dL
    def g(L):
        L = np.asarray(L, dtype=float)
        val = _bose(2 * a * L) / L
        if counterterm:
            val = (_bose(2 * a * L) - 1.0) / L
        return 2.0 * np.exp(-L) * val

    r = quadrature.integrate(g, lo, np.inf, rel_tol=rel_tol, abs_tol=1e-300)
    v = complex(r.value)
    return v


# ---------------------------------------------------------------------------
# Taylor coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FSeries:
    """Taylor data ``(n, c_n)`` of an F-type function at ``alpha = 0``."""
    eta: float
    coeffs: list
    method: str
    errors: list = field(default_factory=list)

    def coefficient(self, n: int):
        for k, c in self.coeffs:
            if k == n:
                return c
        raise KeyError(n)


def taylor_simplified(j_max: int) -> FSeries:
    """Asymptotic (Taylor) coefficients of F-check at 0 as exact fractions.

    Linear term ``-2``; coefficient of ``alpha^{2j}`` is
    ``(B_2j / j) 2^{2j}``; odd terms beyond the linear one vanish.
    """
    if int(j_max) != j_max or not 1 <= j_max <= 14:
        raise OutOfRange("taylor_simplified needs 1 <= j_max <= 14")
    coeffs = [(1, Fraction(-2))]
    for j in range(1, int(j_max) + 1):
        coeffs.append((2 * j, specfun.bernoulli_even(j) / j * 2 ** (2 * j)))
        if 2 * j + 1 <= 2 * j_max:
            coeffs.append((2 * j + 1, Fraction(0)))
    return FSeries(2.0, coeffs, "bernoulli-exact", [0.0] * len(coeffs))


def _fd_weights(n: int) -> list[tuple[Fraction, Fraction]]:
    """Central difference of order n: pairs (offset in units of h, weight)."""
    return [(Fraction(n, 2) - k, Fraction((-1) ** k * math.comb(n, k))) for k in range(n + 1)]


def _taylor_fd(n: int, eta: float) -> tuple[float, float]:
    levels = 5
    table = []
    absw = []
    with mpmath.workprec(EXTENDED_BITS + 30):
        h0 = mpmath.mpf(2) ** (-mpmath.mpf(EXTENDED_BITS) / (n + 2))
        fmax = mpmath.mpf(0)
        for l in range(levels):
            h = h0 * 2 ** l
            s = mpmath.mpf(0)
            sw = 0
            for off, w in _fd_weights(n):
                fv = big_f_extended(h * mpmath.mpf(off.numerator) / off.denominator, eta)
                fmax = max(fmax, abs(fv))
                s += int(w) * fv
                sw += abs(int(w))
            table.append(s / h ** n / mpmath.factorial(n))
            absw.append(sw / h ** n / mpmath.factorial(n))
        # Richardson in h^2 (steps grow by 2 from row to row)
        rows = [table]
        for k in range(1, levels):
            prev = rows[-1]
            f = mpmath.mpf(4) ** k
            rows.append([(f * prev[i] - prev[i + 1]) / (f - 1) for i in range(len(prev) - 1)])
        value = rows[-1][0]
        trunc = abs(rows[-1][0] - rows[-2][0])
        noise = mpmath.mpf(2) ** (-EXTENDED_BITS + 4) * fmax * absw[0] * 2
    return float(value), float(trunc + noise), float(noise)


@lru_cache(maxsize=4096)
def _pole_data(x: float) -> tuple[float, float]:
    z = spectral.zeros_of_k(x, 1)[0]
    r = spectral.residue_at_zero(z)
    return z.nu, r.residue.imag


def _taylor_pole_numeric(n: int, eta: float) -> tuple[float, float]:
    """Integrate ``(-1)^{n/2} 2 i R_1(x) / nu_1(x)^{n+1}`` over ``(0, eta)``."""
    v_lo = math.log(2.0 / eta)
    v_hi = max(60.0, 2.0 * n + 60.0)
    ends = np.arange(v_lo, v_hi + 2.0, 2.0)
    nodes, weights = np.polynomial.legendre.leggauss(12)
    nodes_lo, weights_lo = np.polynomial.legendre.leggauss(8)
    sign = (-1) ** (n // 2)
    total, total_lo = 0.0, 0.0
    for lo, hi in zip(ends[:-1], ends[1:]):
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for nd, wt, acc in ((nodes, weights, 0), (nodes_lo, weights_lo, 1)):
            s = 0.0
            for t, w in zip(nd, wt):
                v = c + r * t
                x = 2.0 * math.exp(-v)
                nu, r_im = _pole_data(x)
                # 2 i R with R = i r_im
                s += w * x * sign * (-2.0 * r_im) / nu ** (n + 1)
            if acc == 0:
                total += r * s
            else:
                total_lo += r * s
    return total, abs(total - total_lo)


def taylor_f(n: int, eta: float = ETA_DEFAULT, method: str = "finite-difference") -> tuple[float, float]:
    """Taylor coefficient ``c_n`` of ``F(.; eta)`` at ``alpha = 0`` and an
    error estimate.

    Methods
    -------
    ``finite-difference``
        Central differences of order n of the 106-bit F at steps
        ``h 2^l`` (``l = 0..4``, ``h = 2^{-106/(n+2)}``) with a 5-level
        Richardson table in ``h^2``.  ``n <= 6``.
    ``pole-dominant``
        ``4 e^{-gamma} (-1)^{n/2+1} Gamma(n, log(2/eta) - gamma) / pi^n``
        for even n, 0 for odd ``n > 1`` and ``-eta`` for ``n = 1``.
    ``pole-numeric``
        Integral over ``x in (0, eta)`` of the n-th coefficient of the pole
        pair ``2 i R_1 nu_1 / (alpha^2 + nu_1^2)``, with ``nu_1``, ``R_1``
        computed by :mod:`lyaplab.spectral`.

    Raises
    ------
    PrecisionLoss
        Finite differences whose rounding noise exceeds 10% of ``|c_n|``
        (for even n and n = 1; odd ``n > 1`` are zero and only reported).
    """
    if int(n) != n or n < 1:
        raise ValidationError("n must be a positive integer")
    n = int(n)
    _check_eta(eta)
    if method == "finite-difference":
        if n > FD_MAX_ORDER:
            raise OutOfRange(f"finite differences are limited to n <= {FD_MAX_ORDER}")
        value, err, noise = _taylor_fd(n, eta)
        if (n == 1 or n % 2 == 0) and noise > 0.1 * abs(value):
            raise PrecisionLoss(f"stencil noise {noise:.2e} exceeds 10% of c_{n} = {value:.3e}")
        return value, err
    if method == "pole-dominant":
        if n > DOMINANT_MAX_ORDER:
            raise OutOfRange(f"pole-dominant is limited to n <= {DOMINANT_MAX_ORDER}")
        if n == 1:
            return -eta, 0.0
        if n % 2:
            return 0.0, 0.0
        lbar = math.log(2.0 / eta) - EULER_GAMMA
        g = specfun.gamma_upper(n, lbar).value
        sign = (-1) ** (n // 2 + 1)
        v = 4.0 * math.exp(-EULER_GAMMA) * sign * g / math.pi ** n
        return v, 16 * EPS * abs(v)
    if method == "pole-numeric":
        if n == 1:
            return -eta, 0.0
        if n % 2:
            return 0.0, 0.0
        return _taylor_pole_numeric(n, eta)
    raise ValidationError(f"unknown method {method!r}")


def taylor_series(n_max: int, eta: float = ETA_DEFAULT, method: str = "finite-difference") -> FSeries:
    """Coefficients ``c_1 .. c_{n_max}`` by :func:`taylor_f`."""
    coeffs, errs = [], []
    for n in range(1, int(n_max) + 1):
        c, e = taylor_f(n, eta, method)
        coeffs.append((n, c))
        errs.append(e)
    return FSeries(eta, coeffs, method, errs)


# ---------------------------------------------------------------------------
# Ising model with columnar disorder
# ---------------------------------------------------------------------------

_GL64 = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class E2Law:
    """Law of the vertical coupling ``E_2``.

    ``kind`` is ``"point"`` (mass at ``hi``), ``"uniform"`` on ``[lo, hi]`` or
    ``"power"``: ``lambda = tanh^2(beta E_2)`` has density
    ``N lambda_0^-N y^{N-1}`` on ``(0, lambda_0)``, ``lambda_0 =
    tanh^2(beta hi)``.
    """
    kind: str
    lo: float
    hi: float
    n_param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "uniform", "power"):
            raise ValidationError(f"unknown E2 law {self.kind!r}")
        if not (self.hi > 0 and math.isfinite(self.hi)):
            raise ValidationError("E2 support must be bounded and positive")
        if self.kind == "uniform" and not 0 < self.lo < self.hi:
            raise ValidationError("uniform E2 law needs 0 < lo < hi")
        if self.kind == "point" and self.lo != self.hi:
            raise ValidationError("point mass needs lo == hi")
        if self.kind == "power" and not self.n_param > 0:
            raise ValidationError("power family needs N > 0")

    @classmethod
    def point(cls, e2: float) -> "E2Law":
        return cls("point", e2, e2)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "E2Law":
        return cls("uniform", lo, hi)

    @classmethod
    def power(cls, n_param: float, e2_max: float) -> "E2Law":
        return cls("power", 0.0, e2_max, n_param)

    @property
    def degenerate(self) -> bool:
        return self.kind == "point"

    def _nodes(self):
        t, w = _GL64
        c, r = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        return c + r * t, 0.5 * w

    def mean_log_tanh(self, beta: float) -> float:
        """``E[log tanh(beta E_2)]``."""
        if self.kind == "point":
            return math.log(math.tanh(beta * self.hi))
        if self.kind == "power":
            return math.log(math.tanh(beta * self.hi)) - 0.5 / self.n_param
        e, w = self._nodes()
        return float(np.sum(w * np.log(np.tanh(beta * e))))

    def d_mean_log_tanh(self, beta: float) -> float:
        """``d/dbeta E[log tanh(beta E_2)] = E[2 E_2 / sinh(2 beta E_2)]``."""
        if self.kind in ("point", "power"):
            return 2 * self.hi / math.sinh(2 * beta * self.hi)
        e, w = self._nodes()
        return float(np.sum(w * 2 * e / np.sinh(2 * beta * e)))

    def mean_lambda_power(self, beta: float, nu: float) -> float:
        """``E[lambda^nu]``, ``lambda = tanh^2(beta E_2)``."""
        if self.kind == "point":
            return math.tanh(beta * self.hi) ** (2 * nu)
        if self.kind == "power":
            if not nu > -self.n_param:
                raise OutOfRange("moment of order <= -N does not exist")
            return math.tanh(beta * self.hi) ** (2 * nu) / (1 + nu / self.n_param)
        e, w = self._nodes()
        return float(np.sum(w * np.tanh(beta * e) ** (2 * nu)))

    def sample_lambda(self, beta: float, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "point":
            return np.full(size, math.tanh(beta * self.hi) ** 2)
        if self.kind == "power":
            lam0 = math.tanh(beta * self.hi) ** 2
            return lam0 * rng.random(size) ** (1.0 / self.n_param)
        e = rng.uniform(self.lo, self.hi, size)
        return np.tanh(beta * e) ** 2


@dataclass(frozen=True)
class IsingDisorderModel:
    e1: float
    e2_law: E2Law
    beta: float = 1.0

    def __post_init__(self):
        if not self.e1 > 0:
            raise ValidationError("E1 must be positive")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")

    @property
    def z1(self) -> float:
        return math.tanh(self.beta * self.e1)

    def with_beta(self, beta: float) -> "IsingDisorderModel":
        return IsingDisorderModel(self.e1, self.e2_law, beta)

    def mean_log_z(self) -> float:
        """``E[log Z]``, ``Z = e^{4 beta E_1} tanh^2(beta E_2)``."""
        return 4 * self.beta * self.e1 + 2 * self.e2_law.mean_log_tanh(self.beta)


def _ab(z1: float, theta: float) -> tuple[float, float]:
    den = 1 + 2 * z1 * math.cos(theta) + z1 * z1
    return -2 * z1 * math.sin(theta) / den, (1 - z1 * z1) / den


def _mw_entries(model: IsingDisorderModel, theta: float) -> tuple[float, float]:
    """``(a/(a^2+b^2), 1/(a^2+b^2))``."""
    a, b = _ab(model.z1, theta)
    s = a * a + b * b
    return a / s, 1.0 / s


def transfer_matrix(model: IsingDisorderModel, theta: float, lambda_sample: float) -> np.ndarray:
    """``M_beta(theta)`` for one sample ``lambda = tanh^2(beta E_2)``:
    ``[[1, a/(a^2+b^2)], [lambda a/(a^2+b^2), lambda/(a^2+b^2)]]``."""
    if not 0 < lambda_sample < 1:
        raise ValidationError("lambda must lie in (0, 1)")
    c, d = _mw_entries(model, theta)
    return np.array([[1.0, c], [lambda_sample * c, lambda_sample * d]])


@dataclass(frozen=True)
class ReductionResult:
    eps: float                 # sinh(2 beta E1) theta
    eps_tilde: float           # 2 z1 theta / (1 - z1)^2
    z_scale: float             # Z = z_scale * lambda
    leading: np.ndarray        # [[1, -eps~], [-eps~ lam, e^{4 beta E1} lam]]
    reduced: np.ndarray        # [[1, eps], [eps Z, Z]]
    conjugated: np.ndarray     # diag(1, -e^{2bE1}) M(theta) diag(1, -e^{-2bE1})
    lam: float


def leading_order_reduction(model: IsingDisorderModel, theta: float,
                            lambda_sample: float | None = None) -> ReductionResult:
    """Small-theta reduction of ``M_beta(theta)`` to the form
    ``[[1, eps], [eps Z, Z]]``.

    To first order ``M_beta(theta)`` is ``A = [[1, -eps~], [-eps~ lambda,
    e^{4 beta E1} lambda]]`` with ``eps~ = 2 z1 theta / (1 - z1)^2``, and
    ``diag(1, -e^{2 beta E1}) A diag(1, -e^{-2 beta E1})`` equals the reduced
    matrix with ``Z = e^{4 beta E1} lambda`` and
    ``eps = eps~ e^{-2 beta E1} = sinh(2 beta E1) theta``.
    """
    if abs(theta) > 0.1:
        raise OutOfRange("the reduction is a small-theta statement (|theta| <= 0.1)")
    lam = lambda_sample if lambda_sample is not None else math.tanh(model.beta * model.e2_law.hi) ** 2
    b1 = model.beta * model.e1
    z1 = model.z1
    eps_t = 2 * z1 * theta / (1 - z1) ** 2
    s = math.exp(2 * b1)
    zs = math.exp(4 * b1)
    eps = eps_t / s
    leading = np.array([[1.0, -eps_t], [-eps_t * lam, zs * lam]])
    reduced = np.array([[1.0, eps], [eps * zs * lam, zs * lam]])
    d_left = np.diag([1.0, -s])
    d_right = np.diag([1.0, -1.0 / s])
    conj = d_left @ transfer_matrix(model, theta, lam) @ d_right
    return ReductionResult(eps, eps_t, zs, leading, reduced, conj, lam)


def _newton_bisect(g, dg, lo, hi, tol=1e-12, max_iter=200):
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    if (glo > 0) == (ghi > 0):
        raise NoRootInBracket("no sign change in the bracket")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gx = g(x)
        if abs(gx) <= tol:
            return x
        if (gx > 0) == (glo > 0):
            lo, glo = x, gx
        else:
            hi = x
        d = dg(x) if dg is not None else 0.0
        step = x - gx / d if d else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * EPS * abs(hi):
            return x
    return x


def beta_c(model: IsingDisorderModel) -> float:
    """Root of ``2 beta E1 + E[log tanh(beta E2)] = 0``."""
    law = model.e2_law

    def g(b):
        return 2 * b * model.e1 + law.mean_log_tanh(b)

    def dg(b):
        return 2 * model.e1 + law.d_mean_log_tanh(b)

    lo, hi = 1e-3, 1.0
    while g(lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            raise NoRootInBracket("beta_c could not be bracketed from below")
    while g(hi) < 0:
        hi *= 2
        if hi > 1e12:
            raise NoRootInBracket("beta_c could not be bracketed from above")
    return _newton_bisect(g, dg, lo, hi, tol=1e-13)


def _alpha_equation(model: IsingDisorderModel):
    """``f(alpha) = (E[Z^alpha] - 1) / alpha`` with ``f(0) = E[log Z]``,
    written through expm1 so that it is accurate near 0."""
    law = model.e2_law
    b = model.beta
    c = 4 * b * model.e1
    if law.kind == "power":
        ell = c + 2 * math.log(math.tanh(b * law.hi))
        n = law.n_param

        def f(a):
            if a == 0:
                return ell - 1.0 / n
            return (math.expm1(a * ell) / a - 1.0 / n) / (1 + a / n)
        return f, -n
    e, w = law._nodes()
    logz = c + 2 * np.log(np.tanh(b * e))

    def f(a):
        if a == 0:
            return float(np.sum(w * logz))
        return float(np.sum(w * np.expm1(a * logz))) / a
    return f, -np.inf


def alpha_of_beta(model: IsingDisorderModel) -> float:
    """Unique real root of ``(E[Z^alpha] - 1)/alpha = 0`` (0 when
    ``E[log Z] = 0``); decreasing in beta.

    Raises
    ------
    DegenerateDisorder
        For a point-mass ``E_2``: the equation then has no root.
    """
    if model.e2_law.degenerate:
        raise DegenerateDisorder(
            "E2 is constant: (E[Z^alpha]-1)/alpha has no root; "
            f"sign of -E[log Z] is {'+' if model.mean_log_z() < 0 else '-'}")
    f, a_min = _alpha_equation(model)
    f0 = f(0.0)
    if f0 == 0:
        return 0.0
    # f is increasing in alpha
    step = 1.0
    if f0 > 0:
        hi, lo = 0.0, -step
        while f(lo) > 0:
            hi = lo
            step *= 2
            lo = max(-step, 0.5 * (a_min + hi) if math.isfinite(a_min) else -step)
            if step > 1e6:
                raise NoRootInBracket("alpha could not be bracketed")
    else:
        lo, hi = 0.0, step
        while f(hi) < 0:
            lo = hi
            step *= 2
            hi = step
            if step > 1e6:
                raise NoRootInBracket("alpha could not be bracketed")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if fm > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 2 * EPS * max(abs(lo), abs(hi), 1e-300):
            break
    return 0.5 * (lo + hi)


def beta_of_alpha(e1: float, e2_law: E2Law, alpha: float) -> float:
    """Inverse of :func:`alpha_of_beta` by bracketing in beta."""
    bc = beta_c(IsingDisorderModel(e1, e2_law, 1.0))

    def g(b):
        try:
            return alpha_of_beta(IsingDisorderModel(e1, e2_law, b)) - alpha
        except NoRootInBracket:
            # Z < 1 (resp. > 1) almost surely: alpha = +inf (resp. -inf)
            return math.inf if b < bc else -math.inf
    lo, hi = 0.5 * bc, 2.0 * bc
    while g(lo) < 0:
        lo *= 0.5
        if lo < 1e-8:
            raise NoRootInBracket("beta could not be bracketed")
    while g(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise NoRootInBracket("beta could not be bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * EPS * hi:
            break
    return 0.5 * (lo + hi)


def mw_power_moment(n_param: float, lambda1: float, nu: float) -> float:
    """``E[Z^nu] = lambda_1^nu / (1 + nu/N)`` for ``Z = lambda_1 U^{1/N}``."""
    if not n_param > 0 or not lambda1 > 0:
        raise ValidationError("N and lambda_1 must be positive")
    if not nu > -n_param:
        raise OutOfRange(f"the moment of order {nu} needs nu > -N = {-n_param}")
    return lambda1 ** nu / (1 + nu / n_param)


def mw_lambda1(alpha: float, n_param: float) -> float:
    """``lambda_1`` for which ``E[Z^alpha] = 1`` holds exactly:
    ``(1 + alpha/N)^{1/alpha}`` (``e^{1/N}`` at ``alpha = 0``); its
    expansion is ``1 + 1/N + (1 - alpha)/(2 N^2) + O(N^-3)``."""
    if not n_param > 0:
        raise ValidationError("N must be positive")
    if alpha == 0:
        return math.exp(1.0 / n_param)
    if not alpha > -n_param:
        raise OutOfRange("alpha must exceed -N")
    return math.exp(math.log1p(alpha / n_param) / alpha)


# ---------------------------------------------------------------------------
# Free energy
# ---------------------------------------------------------------------------

def mw_lyapunov(model: IsingDisorderModel, theta: float, n_steps: int, seed: int,
                index: int = 0, batches: int = 32) -> tuple[float, float]:
    """Monte Carlo top Lyapunov exponent of products of ``M_beta(theta)``
    with batch-means standard error."""
    from . import simulate
    c, d = _mw_entries(model, theta)
    rng = simulate.stream(seed, index, "mw-free-energy")
    burn = max(n_steps // 10, 1000)
    total = burn + n_steps
    sums = np.zeros(batches)
    state = np.array([1.0, 0.0])
    done = 0
    chunk = 1 << 16
    while done < total:
        m = min(chunk, total - done)
        lam = model.e2_law.sample_lambda(model.beta, rng, m)
        simulate._mw_kernel(lam, c, d, state, done, burn, n_steps, sums)
        done += m
    means = sums / (n_steps / batches)
    return float(np.mean(means)), float(np.std(means, ddof=1) / math.sqrt(batches))


@dataclass(frozen=True)
class FreeEnergyResult:
    value: float
    err: float
    mc_err: float
    quad_err: float
    thetas: tuple
    lyapunov: tuple
    std_errors: tuple


def _free_energy_job(args):
    model, theta, n_steps, seed, idx = args
    return mw_lyapunov(model, theta, n_steps, seed, idx)


def free_energy(model: IsingDisorderModel, theta_grid, mc_budget: int = 200_000,
                seed: int = 0, jobs: int | None = None) -> FreeEnergyResult:
    """``(1/2pi) int_0^pi L^MW_beta(theta) dtheta`` by the trapezoidal rule on
    ``theta_grid`` (the piece ``[0, theta_min]`` uses the value at
    ``theta_min``) with Monte Carlo Lyapunov exponents.

    Each grid point is an independent job whose random stream is keyed by
    ``(seed, index)``; results are reduced in grid order.

    Raises
    ------
    BudgetTooSmall
        If the combined error exceeds 10% of the value.
    """
    th = np.sort(np.asarray(theta_grid, dtype=float))
    if th.size < 2 or th[0] <= 0 or th[-1] > math.pi:
        raise ValidationError("theta_grid must contain >= 2 points in (0, pi]")
    n_steps = int(mc_budget)
    if n_steps < 1000:
        raise BudgetTooSmall("mc_budget must be at least 1000 steps")
    work = [(model, float(t), n_steps, seed, i) for i, t in enumerate(th)]
    from .simulate import resolve_jobs
    jobs = resolve_jobs(jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            res = list(ex.map(_free_energy_job, work))
    else:
        res = [_free_energy_job(w) for w in work]
    ly = np.array([r[0] for r in res])
    se = np.array([r[1] for r in res])
    pts = np.concatenate([[0.0], th])
    vals = np.concatenate([[ly[0]], ly])
    w = np.zeros_like(pts)
    dx = np.diff(pts)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    integral = float(np.sum(w * vals)) / (2 * math.pi)
    wse = w[1:].copy()
    wse[0] += w[0]
    mc_err = float(math.sqrt(np.sum((wse * se) ** 2))) / (2 * math.pi)
    if pts.size >= 3:
        coarse = np.concatenate([pts[::2], [] if (pts.size - 1) % 2 == 0 else [pts[-1]]])
        cv = np.interp(coarse, pts, vals)
        quad_err = abs(float(np.trapezoid(cv, coarse)) / (2 * math.pi) - integral)
    else:
        quad_err = abs(integral)
    err = mc_err + quad_err
    if err > 0.1 * abs(integral):
        raise BudgetTooSmall(f"free energy {integral:.4g} has error {err:.2g} (> 10%)")
    return FreeEnergyResult(integral, err, mc_err, quad_err, tuple(th), tuple(ly), tuple(se))
