"""Natural exponential families, conjugate priors, and mean reparameterization.

Cumulant conventions (fixed once, used by every downstream formula):

===================  =========================  ==================  ============
family               cumulant k(theta)          Theta               mean domain
===================  =========================  ==================  ============
gaussian             theta^2 / 2                R                   R
poisson              exp(theta) - 1             R                   (0, inf)
binomial(n)          n log(1 + e^theta)         R                   (0, n)
negative_binomial    -lam log(1 - e^theta)      (-inf, 0)           (0, inf)
gamma(q)             -q log(1 - theta)          (-inf, 1)           (0, inf)
hyperbolic(q)        -q log cos(theta)          (-pi/2, pi/2)       R
===================  =========================  ==================  ============

All six are regular (the natural domain is open and equals the full Laplace
domain), which is what the conjugate-prior construction requires.  Steep but
non-regular families are intentionally out of scope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from . import measures as me
from .measures import MeasureSpec

__all__ = [
    "NefSpec",
    "DYPrior",
    "DomainError",
    "UnsupportedFamilyError",
    "NonIntegrableError",
    "make_nef",
    "mean_map",
    "psi",
    "dy_prior",
    "mean_reparam",
    "mixture_marginal",
    "jorgensen_contains",
    "NEF_FAMILIES",
]

NEF_FAMILIES = ("gaussian", "poisson", "binomial", "negative_binomial", "gamma", "hyperbolic")


class DomainError(ValueError):
    """Argument outside the natural domain or the domain of means."""


class UnsupportedFamilyError(ValueError):
    pass


class NonIntegrableError(ValueError):
    pass


@dataclass(frozen=True)
class NefSpec:
    """One of the six quadratic natural exponential families."""

    family: str
    params: tuple
    theta_domain: Tuple[float, float]
    mean_domain: Tuple[float, float]

    def cumulant(self, theta: float) -> float:
        f, p = self.family, self.params
        if f == "gaussian":
            return theta ** 2 / 2
        if f == "poisson":
            return math.exp(theta) - 1
        if f == "binomial":
            return p[0] * math.log1p(math.exp(theta)) if theta < 30 else p[0] * theta
        if f == "negative_binomial":
            return -p[0] * math.log1p(-math.exp(theta))
        if f == "gamma":
            return -p[0] * math.log1p(-theta)
        if f == "hyperbolic":
            return -p[0] * math.log(math.cos(theta))
        raise UnsupportedFamilyError(self.family)

    def cumulant_d1(self, theta: float) -> float:
        f, p = self.family, self.params
        if f == "gaussian":
            return theta
        if f == "poisson":
            return math.exp(theta)
        if f == "binomial":
            e = math.exp(theta)
            return p[0] * e / (1 + e)
        if f == "negative_binomial":
            e = math.exp(theta)
            return p[0] * e / (1 - e)
        if f == "gamma":
            return p[0] / (1 - theta)
        if f == "hyperbolic":
            return p[0] * math.tan(theta)
        raise UnsupportedFamilyError(self.family)

    def cumulant_d2(self, theta: float) -> float:
        f, p = self.family, self.params
        if f == "gaussian":
            return 1.0
        if f == "poisson":
            return math.exp(theta)
        if f == "binomial":
            e = math.exp(theta)
            return p[0] * e / (1 + e) ** 2
        if f == "negative_binomial":
            e = math.exp(theta)
            return p[0] * e / (1 - e) ** 2
        if f == "gamma":
            return p[0] / (1 - theta) ** 2
        if f == "hyperbolic":
            return p[0] / math.cos(theta) ** 2
        raise UnsupportedFamilyError(self.family)

    def base_measure(self) -> MeasureSpec:
        """A reference probability in the family (theta at the standard point)."""
        f, p = self.family, self.params
        if f == "gaussian":
            return me.gaussian_measure()
        if f == "poisson":
            return me.poisson_measure(1)
        if f == "binomial":
            return me.binomial_measure(int(p[0]), 0.5)
        if f == "negative_binomial":
            return me.negative_binomial_measure(0.5, p[0])
        if f == "gamma":
            return me.gamma_measure(p[0])
        if f == "hyperbolic":
            return me.hyperbolic_measure(p[0])
        raise UnsupportedFamilyError(f)

    def to_json_dict(self) -> dict:
        from .orthopoly import format_real
        return {"family": self.family,
                "params": {f"p{i}": format_real(float(v)) for i, v in enumerate(self.params)}}


def make_nef(family: str, *params) -> NefSpec:
    if family == "gaussian":
        return NefSpec("gaussian", (), (-math.inf, math.inf), (-math.inf, math.inf))
    if family == "poisson":
        return NefSpec("poisson", (), (-math.inf, math.inf), (0.0, math.inf))
    if family == "binomial":
        (n,) = params
        if int(n) < 1:
            raise DomainError("binomial needs n >= 1")
        return NefSpec("binomial", (int(n),), (-math.inf, math.inf), (0.0, float(n)))
    if family == "negative_binomial":
        (lam,) = params
        if float(lam) <= 0:
            raise DomainError("negative_binomial needs lam > 0")
        return NefSpec("negative_binomial", (float(lam),), (-math.inf, 0.0), (0.0, math.inf))
    if family == "gamma":
        (q,) = params
        if float(q) <= 0:
            raise DomainError("gamma needs q > 0")
        return NefSpec("gamma", (float(q),), (-math.inf, 1.0), (0.0, math.inf))
    if family == "hyperbolic":
        (q,) = params
        if float(q) <= 0:
            raise DomainError("hyperbolic needs q > 0")
        return NefSpec("hyperbolic", (float(q),), (-math.pi / 2, math.pi / 2),
                       (-math.inf, math.inf))
    raise UnsupportedFamilyError(family)


def mean_map(nef: NefSpec, theta: float) -> float:
    lo, hi = nef.theta_domain
    if not (lo < theta < hi):
        raise DomainError(f"theta={theta} outside natural domain ({lo}, {hi})")
    return nef.cumulant_d1(theta)


def psi(nef: NefSpec, m: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Inverse mean map, by bisection safeguarded with Newton steps.

    Strict convexity of the cumulant makes the mean map increasing, so a
    bracket always exists inside the natural domain.
    """
    lo_m, hi_m = nef.mean_domain
    if not (lo_m < m < hi_m):
        raise DomainError(f"mean={m} outside domain of means ({lo_m}, {hi_m})")
    lo, hi = nef.theta_domain
    # expand/contract to a finite bracket
    width = 1.0
    t_lo = lo + 1e-12 if math.isfinite(lo) else -width
    t_hi = hi - 1e-12 if math.isfinite(hi) else width
    while nef.cumulant_d1(t_lo) > m:
        t_lo = (t_lo + lo) / 2 if math.isfinite(lo) else t_lo * 2
    while nef.cumulant_d1(t_hi) < m:
        t_hi = (t_hi + hi) / 2 if math.isfinite(hi) else t_hi * 2
    t = 0.5 * (t_lo + t_hi)
    for _ in range(max_iter):
        f = nef.cumulant_d1(t) - m
        if f > 0:
            t_hi = t
        else:
            t_lo = t
        d = nef.cumulant_d2(t)
        t_new = t - f / d if d > 0 else t
        if not (t_lo < t_new < t_hi):
            t_new = 0.5 * (t_lo + t_hi)
        if abs(t_new - t) < tol * max(1.0, abs(t)):
            return t_new
        t = t_new
    return t


def _tilt_exponent(nef: NefSpec, lam: float, x0: float, theta: float) -> float:
    """lam * (theta x0 - k(theta)), with overflow at the domain edges mapped
    to -inf (the density vanishes there)."""
    try:
        k = nef.cumulant(theta)
    except (OverflowError, ValueError):
        return -math.inf
    val = lam * (theta * x0 - k)
    return val if not math.isnan(val) else -math.inf


@dataclass(frozen=True)
class DYPrior:
    """Conjugate prior exp(lam * (theta x0 - k(theta))) dtheta on the natural domain."""

    nef: NefSpec
    x0: float
    lam: float
    C: float
    parameterization: str = "canonical-theta"
    closed_form: Optional[str] = None

    def log_density(self, theta: float) -> float:
        return math.log(self.C) + _tilt_exponent(self.nef, self.lam, self.x0, theta)

    def density(self, theta):
        th = np.atleast_1d(np.asarray(theta, float))
        lo, hi = self.nef.theta_domain
        out = np.zeros_like(th)
        inside = (th > lo) & (th < hi)
        out[inside] = np.array([math.exp(max(self.log_density(t), -745.0))
                                for t in th[inside]])
        return out if np.ndim(theta) else float(out[0])

    def to_json_dict(self) -> dict:
        from .orthopoly import format_real
        d = self.nef.to_json_dict()
        d.update({"x0": format_real(self.x0), "lambda": format_real(self.lam),
                  "C": format_real(self.C)})
        if self.closed_form:
            d["closed_form"] = self.closed_form
        return d


def dy_prior(nef: NefSpec, x0: float, lam: float) -> DYPrior:
    """Normalize the conjugate density over the natural domain.

    Recognized closed forms are tagged: binomial -> Beta(lam*x0, lam*(n-x0))
    on the success-probability scale, poisson -> Gamma(lam*x0, rate lam) on
    the mean scale, gaussian -> N(x0, 1/lam) on theta.
    """
    lo_m, hi_m = nef.mean_domain
    if not (lo_m < x0 < hi_m):
        raise DomainError(f"x0={x0} must lie strictly inside the domain of means")
    if lam <= 0:
        raise DomainError("lam must be positive")
    lo, hi = nef.theta_domain

    def integrand(t):
        return math.exp(max(_tilt_exponent(nef, lam, x0, t), -745.0))

    val, err = quad(integrand, lo, hi, limit=400)
    if not math.isfinite(val) or val <= 0 or err > 1e-6 * max(val, 1e-300):
        raise NonIntegrableError(
            f"conjugate normalizer failed for {nef.family} (x0={x0}, lam={lam})")
    closed = None
    if nef.family == "binomial":
        n = nef.params[0]
        closed = f"beta(a={lam * x0:g}, b={lam * (n - x0):g}) on p=e^t/(1+e^t)"
    elif nef.family == "poisson":
        closed = f"gamma(shape={lam * x0:g}, rate={lam:g}) on m=e^t"
    elif nef.family == "gaussian":
        closed = f"gaussian(mean={x0:g}, var={1 / lam:g}) on t"
    return DYPrior(nef, float(x0), float(lam), 1.0 / val, closed_form=closed)


def mean_reparam(prior: DYPrior) -> MeasureSpec:
    """Image of the prior under theta -> k'(theta), as a density on the mean domain."""
    if prior.parameterization != "canonical-theta":
        raise ValueError("prior must be in canonical parameterization")
    nef = prior.nef

    def dens(m):
        marr = np.atleast_1d(np.asarray(m, float))
        out = np.zeros_like(marr)
        lo, hi = nef.mean_domain
        for i, mv in enumerate(marr):
            if lo < mv < hi:
                t = psi(nef, mv)
                out[i] = math.exp(prior.log_density(t)) / nef.cumulant_d2(t)
        return out if np.ndim(m) else float(out[0])

    return MeasureSpec(
        kind="continuous",
        family="dy_mean",
        params=(prior.x0, prior.lam) + tuple(nef.params),
        name=f"dy_mean[{nef.family}](x0={prior.x0},lam={prior.lam})",
        support=nef.mean_domain,
        density=dens,
        exp_moments=False,
    )


def mixture_marginal(nef: NefSpec, prior: DYPrior) -> MeasureSpec:
    """Marginal of x when theta is drawn from the prior.

    Exact closed forms: binomial/beta (the beta-binomial law, rational
    masses), poisson/gamma (negative binomial) and gaussian/gaussian; other
    families fall back to numeric mixing of the conditional law.
    """
    if prior.nef != nef:
        raise ValueError("prior was built for a different family")
    if nef.family == "binomial":
        n = nef.params[0]
        from fractions import Fraction
        a = Fraction(prior.lam * prior.x0).limit_denominator(10 ** 12)
        b = Fraction(prior.lam * (n - prior.x0)).limit_denominator(10 ** 12)
        return me.beta_binomial_measure(n, a, b)
    if nef.family == "poisson":
        shape = prior.lam * prior.x0
        return me.negative_binomial_measure(1.0 / (1.0 + prior.lam), shape)
    if nef.family == "gaussian":
        var = 1.0 + 1.0 / prior.lam
        x0 = prior.x0

        def dens(x):
            x = np.asarray(x, float)
            return np.exp(-(x - x0) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)

        return MeasureSpec("continuous", "gaussian_loc_scale", (x0, var),
                           f"gaussian(mean={x0},var={var})", (-math.inf, math.inf),
                           density=dens)
    # numeric fallback: mix the exponentially tilted base density over the
    # prior; the base measure sits at theta = 0 where k(0) = 0.
    lo, hi = nef.theta_domain
    if nef.family in ("gamma", "hyperbolic"):
        base = nef.base_measure()

        def dens(x):
            xs = np.atleast_1d(np.asarray(x, float))
            out = np.empty_like(xs)
            for i, xv in enumerate(xs):
                b = float(base.density(xv))

                def f(t):
                    return b * math.exp(t * xv - nef.cumulant(t) + prior.log_density(t))

                out[i], _ = quad(f, lo, hi, limit=200)
            return out if np.ndim(x) else float(out[0])

        return MeasureSpec("continuous", f"{nef.family}_mixture",
                           (prior.x0, prior.lam) + tuple(nef.params),
                           f"{nef.family}_mixture(x0={prior.x0},lam={prior.lam})",
                           (0.0, math.inf) if nef.family == "gamma" else (-math.inf, math.inf),
                           density=dens, exp_moments=False)
    raise UnsupportedFamilyError(nef.family)


def jorgensen_contains(family: str, lam: float) -> bool:
    """Membership of lam in the convolution semigroup of the family's base.

    The infinitely divisible families admit every nonnegative power; the
    Bernoulli/binomial base only the nonnegative integers.
    """
    if family in ("gaussian", "poisson", "negative_binomial", "gamma", "hyperbolic"):
        return lam >= 0
    if family in ("binomial", "bernoulli"):
        return lam >= 0 and abs(lam - round(lam)) < 1e-12
    raise UnsupportedFamilyError(family)
