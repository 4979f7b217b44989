"""Zeros of K_{i nu}(x) in the order, residues of the Lyapunov integrand
and the contribution of the pair of poles closest to the real axis.

For 0 < x < 2 exp(-gamma) the function nu -> K_{i nu}(x) has infinitely many
simple zeros 0 < nu_1(x) < nu_2(x) < ...  Writing

    K_{i nu}(x) = -(pi / (nu sinh(pi nu)))^{1/2} sum_k (x^2/4)^k / k!
                  * sin(theta_k(nu)) / prod_{m<=k} (m^2 + nu^2)^{1/2},
    theta_k(nu) = nu log(x/2) - arg Gamma(1 + k + i nu),

the k = 0 term dominates and the n-th zero lies in the window
|theta_0(nu_n) + n pi| <= asin(cosh x - 1).  Since theta_0 is strictly
decreasing in this range of x, each window is an interval in nu containing
exactly one zero, which is then polished by a safeguarded Newton iteration.

The integrand f_x(alpha) = x K_{alpha-1}(x) / K_alpha(x) has poles at
alpha = +-i nu_n(x) with residues +-R_n(x).  With L(x) = log(2/x) - gamma
the first zero and its residue behave like pi / L and i pi / L^2, where the
residue is taken with respect to alpha (the orientation fixed by
``dK_alpha/dalpha``), and the two poles closest to the real axis
contribute about -(2/L) / (1 + (alpha L / pi)^2) to f_x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special as sc

from . import specfun
from .errors import (ArgumentTooLarge, BracketFailure, NonPositiveArgument,
                     PoleCollision, ValidationError)
from .specfun import DEFAULT_POLICY, EPS, EULER_GAMMA, PrecisionPolicy

__all__ = [
    "SpectralZero", "ResidueData", "X_MAX", "theta0", "phase_window",
    "log_scale", "zeros_of_k", "zeros_below", "residue_at_zero",
    "pole_pair_contribution", "f_integrand_complex",
]

X_MAX = 1.1
NEWTON_STEPS = 25


@dataclass(frozen=True)
class SpectralZero:
    n: int
    x: float
    nu: float
    residual: float


@dataclass(frozen=True)
class ResidueData:
    zero: SpectralZero
    residue: complex
    ktilde: complex

    @property
    def deviation(self) -> float:
        """``|R_n L(x)^2 - i pi|``, the distance of the scaled residue to
        its leading form ``i pi`` (meaningful for ``n = 1``)."""
        L = log_scale(self.zero.x)
        return abs(self.residue * L * L - 1j * math.pi)


def log_scale(x: float) -> float:
    """``L(x) = log(2/x) - gamma``."""
    return math.log(2.0 / x) - EULER_GAMMA


def theta0(nu: float, x: float) -> float:
    """Phase ``nu log(x/2) - arg Gamma(1 + i nu)`` (continuous branch)."""
    return nu * math.log(0.5 * x) - sc.loggamma(1.0 + 1j * nu).imag


def phase_window(x: float) -> float:
    """Half width ``asin(cosh x - 1)`` of the window around ``-n pi``."""
    return math.asin(min(1.0, math.cosh(x) - 1.0))


def _check_x(x: float):
    if not x > 0:
        raise NonPositiveArgument("x must be positive")
    if x >= X_MAX:
        raise ArgumentTooLarge(f"zeros are computed for x < {X_MAX}")


def _solve_phase(target: float, x: float, lo: float, hi: float) -> float:
    # theta0 is strictly decreasing; find theta0(nu) = target in [lo, hi]
    while theta0(hi, x) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise BracketFailure("phase condition could not be bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if theta0(mid, x) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * EPS * hi:
            break
    return float(0.5 * (lo + hi))


def _k_imag(nu: float, x: float) -> tuple[float, float]:
    return specfun.k_imag_sine_series(nu, x)


def _dk_dnu(nu: float, x: float, policy: PrecisionPolicy) -> float:
    # d/dnu K_{i nu}(x) = i dK_a/da at a = i nu (real for real nu)
    d = specfun.bessel_k_order_derivative(complex(0.0, nu), x, policy)
    return (1j * complex(d.value)).real


def _polish(n: int, x: float, lo: float, hi: float, policy: PrecisionPolicy) -> SpectralZero:
    flo, _ = _k_imag(lo, x)
    fhi, _ = _k_imag(hi, x)
    # for tiny x the window is narrower than the rounding of nu; widen it by
    # a few ulps at a time (still far inside the zero spacing pi / L)
    c = 0.5 * (lo + hi)
    pad = 8 * EPS * c
    while (flo > 0) == (fhi > 0) and flo != 0.0 and fhi != 0.0 and pad < 1e-6 * c:
        lo, hi = c - pad, c + pad
        flo, _ = _k_imag(lo, x)
        fhi, _ = _k_imag(hi, x)
        pad *= 4
    if flo == 0.0:
        return SpectralZero(n, x, float(lo), 0.0)
    if fhi == 0.0:
        return SpectralZero(n, x, float(hi), 0.0)
    if (flo > 0) == (fhi > 0):
        raise BracketFailure(f"no sign change of K_(i nu)({x}) in the window of zero {n}")
    nu = 0.5 * (lo + hi)
    newton_ok = True
    for it in range(4 * NEWTON_STEPS + 200):
        f, fabs = _k_imag(nu, x)
        floor = max(policy.abs_tol, 16 * EPS * fabs)
        if abs(f) <= floor:
            return SpectralZero(n, x, float(nu), float(abs(f)))
        if (f > 0) == (flo > 0):
            lo, flo = nu, f
        else:
            hi, fhi = nu, f
        if hi - lo <= 2 * EPS * hi:
            return SpectralZero(n, x, float(nu), float(abs(f)))
        step_nu = None
        if newton_ok and it < NEWTON_STEPS:
            df = _dk_dnu(nu, x, policy)
            if df != 0.0:
                step_nu = nu - f / df
                if not lo < step_nu < hi:
                    step_nu = None
        else:
            newton_ok = False
        nu = step_nu if step_nu is not None else 0.5 * (lo + hi)
    f, _ = _k_imag(nu, x)
    return SpectralZero(n, x, float(nu), float(abs(f)))


def zeros_of_k(x: float, count: int, policy: PrecisionPolicy = DEFAULT_POLICY) -> list[SpectralZero]:
    """First ``count`` zeros ``nu_n(x)`` of ``nu -> K_{i nu}(x)``.

    Raises
    ------
    ArgumentTooLarge
        If ``x >= 1.1``.
    BracketFailure
        If a phase window does not contain a sign change.
    """
    _check_x(x)
    if int(count) != count or count < 1:
        raise ValidationError("count must be a positive integer")
    w = phase_window(x)
    out: list[SpectralZero] = []
    guess = math.pi / log_scale(x)
    for n in range(1, int(count) + 1):
        lo = _solve_phase(-n * math.pi + w, x, 0.0 if not out else out[-1].nu, max(guess * n, 1e-3))
        hi = _solve_phase(-n * math.pi - w, x, lo, max(guess * (n + 1), 2 * lo))
        out.append(_polish(n, x, lo, hi, policy))
    return out


def zeros_below(x: float, nu_max: float, policy: PrecisionPolicy = DEFAULT_POLICY) -> list[SpectralZero]:
    """All zeros with ``nu_n(x) < nu_max``."""
    _check_x(x)
    out: list[SpectralZero] = []
    n = 0
    while True:
        n += 1
        z = zeros_of_k(x, n, policy)[-1] if not out else _next_zero(x, out, policy)
        if z.nu >= nu_max:
            return out
        out.append(z)


def _next_zero(x, found, policy):
    n = found[-1].n + 1
    w = phase_window(x)
    guess = math.pi / log_scale(x)
    lo = _solve_phase(-n * math.pi + w, x, found[-1].nu, max(guess * n, 1e-3))
    hi = _solve_phase(-n * math.pi - w, x, lo, max(guess * (n + 1), 2 * lo))
    return _polish(n, x, lo, hi, policy)


def residue_at_zero(zero: SpectralZero, policy: PrecisionPolicy = DEFAULT_POLICY) -> ResidueData:
    """Residue of ``f_x`` at ``alpha = i nu_n``.

    ``R_n = x K_{1 - i nu_n}(x) / Ktilde``, where ``Ktilde`` is the order
    derivative ``dK_alpha/dalpha`` at the zero (the ``pi cot`` part of the
    derivative vanishes there).  For ``n = 1`` and small ``x``,
    ``R_1 = i pi / L^2 + O(L^-4)``; ``Ktilde`` is close to ``i L^2 / pi``.
    """
    a = complex(0.0, zero.nu)
    kt = complex(specfun.bessel_k_order_derivative(a, zero.x, policy).value)
    k1 = complex(specfun.bessel_k_complex(1.0 - a, zero.x, policy).value)
    return ResidueData(zero, zero.x * k1 / kt, kt)


def f_integrand_complex(x: float, alpha: complex, policy: PrecisionPolicy = DEFAULT_POLICY) -> complex:
    """``x K_{alpha-1}(x) / K_alpha(x)`` for complex ``alpha``."""
    num = complex(specfun.bessel_k_complex(alpha - 1.0, x, policy).value)
    den = complex(specfun.bessel_k_complex(alpha, x, policy).value)
    return x * num / den


def pole_pair_contribution(x: float, alpha: complex, policy: PrecisionPolicy = DEFAULT_POLICY,
                           residue: ResidueData | None = None) -> complex:
    """Part of ``f_x(alpha)`` coming from the poles at ``+-i nu_1(x)``:

        R_1 / (alpha - i nu_1) - R_1 / (alpha + i nu_1) = 2 i R_1 nu_1 / (alpha^2 + nu_1^2),

    which is real for real ``alpha`` and close to ``-2/L`` at ``alpha = 0``.
    A precomputed ``residue`` for this ``x`` may be passed to avoid solving
    for the zero again.

    Raises
    ------
    PoleCollision
        If ``alpha^2 + nu_1^2`` vanishes to rounding.
    """
    if residue is None:
        residue = residue_at_zero(zeros_of_k(x, 1, policy)[0], policy)
    nu = residue.zero.nu
    a = complex(alpha)
    den = a * a + nu * nu
    if abs(den) <= 1e3 * EPS * nu * nu:
        raise PoleCollision(f"alpha = {alpha} hits the pole +-i nu_1 = +-{nu}i")
    return 2j * residue.residue * nu / den
