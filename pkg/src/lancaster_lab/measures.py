"""Marginal probability measures and their exact moment engines.

Every measure used by the library is described by a :class:`MeasureSpec`:
either a finite/countable atom list or a continuous density on a support
interval.  Each family also registers an exact moment routine (rational
arithmetic whenever the parameters are rational), which is what the
moment-based recurrence oracle consumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Tuple

import numpy as np

__all__ = [
    "MeasureSpec",
    "MeasureError",
    "gaussian_measure",
    "gaussian_loc_scale_measure",
    "poisson_measure",
    "binomial_measure",
    "negative_binomial_measure",
    "gamma_measure",
    "gamma_scaled_measure",
    "hyperbolic_measure",
    "beta_measure",
    "jacobi_symmetric_measure",
    "beta_binomial_measure",
    "cartier_dunau_measure",
    "exact_moments",
    "pochhammer",
    "falling_factorial",
    "stirling2_table",
]


class MeasureError(ValueError):
    """Invalid measure parameters or unsupported request."""


def _as_fraction(x) -> Fraction:
    # Fraction(float) is the exact binary value; ints/Fractions pass through.
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x)


def pochhammer(x, k: int):
    """Rising factorial (x)_k = x(x+1)...(x+k-1); preserves Fraction inputs."""
    out = Fraction(1) if isinstance(x, Fraction) else 1
    for i in range(k):
        out = out * (x + i)
    return out


def falling_factorial(x, k: int):
    out = Fraction(1) if isinstance(x, Fraction) else 1
    for i in range(k):
        out = out * (x - i)
    return out


def stirling2_table(n: int):
    """Stirling numbers of the second kind S[k][j], 0 <= j <= k <= n."""
    S = [[Fraction(0)] * (n + 1) for _ in range(n + 1)]
    S[0][0] = Fraction(1)
    for k in range(1, n + 1):
        for j in range(1, k + 1):
            S[k][j] = S[k - 1][j - 1] + j * S[k - 1][j]
    return S


@dataclass(frozen=True)
class MeasureSpec:
    """A univariate probability measure.

    Parameters
    ----------
    kind : str
        ``"discrete"`` or ``"continuous"``.
    family : str
        Canonical family key used for moment/recurrence dispatch.
    params : tuple
        Family parameters, kept exact (Fraction) when given exact.
    name : str
        Human-readable identifier with parameters.
    atoms : tuple of (point, mass), optional
        For discrete measures.  Masses sum to 1 within 1e-12 (tails of
        infinite-support families are truncated below that tolerance).
    density : callable, optional
        Vectorized density for continuous measures.
    support : (float, float)
        Smallest closed interval of full mass (+-inf allowed).
    exp_moments : bool
        Whether exp(a|x|) is integrable for some a > 0.
    """

    kind: str
    family: str
    params: tuple
    name: str
    support: Tuple[float, float]
    atoms: Optional[Tuple[Tuple[object, object], ...]] = None
    density: Optional[Callable] = field(default=None, compare=False)
    exp_moments: bool = True

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise MeasureError(f"unknown measure kind {self.kind!r}")
        if self.kind == "discrete":
            if not self.atoms:
                raise MeasureError("discrete measure needs atoms")
            total = sum(Fraction(m) if isinstance(m, (int, Fraction)) else m
                        for _, m in self.atoms)
            if abs(float(total) - 1.0) > 1e-12:
                raise MeasureError(f"atom masses sum to {float(total)}, not 1")
        elif self.density is None:
            raise MeasureError("continuous measure needs a density")

    # -- identity used for margin-compatibility checks ---------------------
    def same_measure(self, other: "MeasureSpec") -> bool:
        return (self.family == other.family
                and tuple(map(float, self.params)) == tuple(map(float, other.params)))

    def support_class(self) -> str:
        """'bounded', 'half_line' or 'real_line' (after affine normalization)."""
        lo, hi = self.support
        if math.isinf(lo) and math.isinf(hi):
            return "real_line"
        if math.isinf(lo) or math.isinf(hi):
            return "half_line"
        return "bounded"

    def validate_mass(self, tol: float = 1e-8) -> float:
        """Numerically integrate/sum total mass; returns the deviation from 1."""
        if self.kind == "discrete":
            return abs(float(sum(float(m) for _, m in self.atoms)) - 1.0)
        from scipy.integrate import quad
        lo, hi = self.support
        val, _ = quad(lambda x: float(self.density(x)), lo, hi, limit=300)
        dev = abs(val - 1.0)
        if dev > tol:
            raise MeasureError(f"{self.name}: density integrates to {val}, off by {dev}")
        return dev

    def to_json_dict(self) -> dict:
        from .orthopoly import format_real
        return {
            "family": self.family,
            "params": {f"p{i}": format_real(float(p)) for i, p in enumerate(self.params)},
            "kind": self.kind,
            "support": [format_real(self.support[0]), format_real(self.support[1])],
        }


# ---------------------------------------------------------------------------
# family constructors
# ---------------------------------------------------------------------------

def gaussian_measure() -> MeasureSpec:
    """Standard normal N(0, 1)."""
    dens = lambda x: np.exp(-np.asarray(x, float) ** 2 / 2) / math.sqrt(2 * math.pi)
    return MeasureSpec("continuous", "gaussian", (), "gaussian", (-math.inf, math.inf),
                       density=dens)


def gaussian_loc_scale_measure(mean, var) -> MeasureSpec:
    """Normal with arbitrary mean and variance."""
    if float(var) <= 0:
        raise MeasureError("variance must be positive")
    mf, vf = float(mean), float(var)
    dens = lambda x: np.exp(-(np.asarray(x, float) - mf) ** 2 / (2 * vf)) / math.sqrt(2 * math.pi * vf)
    return MeasureSpec("continuous", "gaussian_loc_scale", (_as_fraction(mean), _as_fraction(var)),
                       f"gaussian(mean={mf},var={vf})", (-math.inf, math.inf), density=dens)


def poisson_measure(a) -> MeasureSpec:
    """Poisson with mean a > 0; atom list truncated below mass 1e-15."""
    if float(a) <= 0:
        raise MeasureError("poisson mean must be positive")
    af = float(a)
    atoms, k, cum = [], 0, 0.0
    while cum < 1 - 1e-15 or k < 5:
        m = math.exp(-af + k * math.log(af) - math.lgamma(k + 1))
        atoms.append((k, m))
        cum += m
        k += 1
        if k > 4000:
            break
    return MeasureSpec("discrete", "poisson", (_as_fraction(a),), f"poisson(a={float(a)})",
                       (0.0, math.inf), atoms=tuple(atoms))


def binomial_measure(n: int, p) -> MeasureSpec:
    if n < 1 or not (0 < float(p) < 1):
        raise MeasureError("binomial needs n >= 1 and 0 < p < 1")
    pf = _as_fraction(p)
    atoms = tuple((k, math.comb(n, k) * pf ** k * (1 - pf) ** (n - k)) for k in range(n + 1))
    return MeasureSpec("discrete", "binomial", (n, pf), f"binomial(n={n},p={float(p)})",
                       (0.0, float(n)), atoms=atoms)


def negative_binomial_measure(a, lam) -> MeasureSpec:
    """NB(a, lam): masses (1-a)^lam (lam)_k a^k / k! on k = 0, 1, ..."""
    if not (0 < float(a) < 1) or float(lam) <= 0:
        raise MeasureError("negative binomial needs 0 < a < 1 and lam > 0")
    af, lf = float(a), float(lam)
    atoms, k, cum, logm = [], 0, 0.0, lf * math.log1p(-af)
    while cum < 1 - 1e-15 or k < 5:
        m = math.exp(logm + math.lgamma(lf + k) - math.lgamma(lf) - math.lgamma(k + 1)
                     + k * math.log(af))
        atoms.append((k, m))
        cum += m
        k += 1
        if k > 20000:
            break
    return MeasureSpec("discrete", "negative_binomial", (_as_fraction(a), _as_fraction(lam)),
                       f"negative_binomial(a={af},lam={lf})", (0.0, math.inf), atoms=tuple(atoms))


def gamma_measure(q) -> MeasureSpec:
    if float(q) <= 0:
        raise MeasureError("gamma shape must be positive")
    qf = float(q)
    lognorm = math.lgamma(qf)
    def dens(x):
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0, np.exp((qf - 1) * np.log(np.maximum(x, 1e-300)) - x - lognorm), 0.0)
        return out
    return MeasureSpec("continuous", "gamma", (_as_fraction(q),), f"gamma(q={qf})",
                       (0.0, math.inf), density=dens)


def gamma_scaled_measure(q, rate) -> MeasureSpec:
    """Gamma with shape q and rate parameter (mean q/rate)."""
    if float(q) <= 0 or float(rate) <= 0:
        raise MeasureError("gamma shape and rate must be positive")
    qf, rf = float(q), float(rate)
    lognorm = math.lgamma(qf) - qf * math.log(rf)
    def dens(x):
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0, np.exp((qf - 1) * np.log(np.maximum(x, 1e-300)) - rf * x - lognorm), 0.0)
        return out
    return MeasureSpec("continuous", "gamma_scaled", (_as_fraction(q), _as_fraction(rate)),
                       f"gamma(q={qf},rate={rf})", (0.0, math.inf), density=dens)


def hyperbolic_measure(q) -> MeasureSpec:
    """The measure with Laplace transform (cos theta)^(-q) on (-pi/2, pi/2).

    Density 2^(q-2) / (pi Gamma(q)) * |Gamma(q/2 + ix/2)|^2 on the real line;
    for q = 1 this is the hyperbolic secant law 1 / (2 cosh(pi x / 2)).
    """
    if float(q) <= 0:
        raise MeasureError("hyperbolic parameter must be positive")
    qf = float(q)
    from scipy.special import loggamma
    c = (qf - 2) * math.log(2) - math.log(math.pi) - math.lgamma(qf)
    def dens(x):
        x = np.asarray(x, float)
        return np.exp(c + 2 * np.real(loggamma(qf / 2 + 1j * x / 2)))
    return MeasureSpec("continuous", "hyperbolic", (_as_fraction(q),), f"hyperbolic(q={qf})",
                       (-math.inf, math.inf), density=dens)


def beta_measure(a, b) -> MeasureSpec:
    if float(a) <= 0 or float(b) <= 0:
        raise MeasureError("beta parameters must be positive")
    af, bf = float(a), float(b)
    logB = math.lgamma(af) + math.lgamma(bf) - math.lgamma(af + bf)
    def dens(x):
        x = np.asarray(x, float)
        inside = (x > 0) & (x < 1)
        xs = np.where(inside, x, 0.5)
        v = np.exp((af - 1) * np.log(xs) + (bf - 1) * np.log1p(-xs) - logB)
        return np.where(inside, v, 0.0)
    return MeasureSpec("continuous", "beta", (_as_fraction(a), _as_fraction(b)),
                       f"beta(a={af},b={bf})", (0.0, 1.0), density=dens)


def jacobi_symmetric_measure(a) -> MeasureSpec:
    """Symmetric beta on (-1,1): density 2^(1-2a)/B(a,a) * (1-x^2)^(a-1)."""
    if float(a) <= 0:
        raise MeasureError("jacobi parameter must be positive")
    af = float(a)
    logc = (1 - 2 * af) * math.log(2) - (math.lgamma(af) * 2 - math.lgamma(2 * af))
    def dens(x):
        x = np.asarray(x, float)
        inside = np.abs(x) < 1
        xs = np.where(inside, x, 0.0)
        return np.where(inside, np.exp(logc + (af - 1) * np.log1p(-xs * xs)), 0.0)
    return MeasureSpec("continuous", "jacobi_symmetric", (_as_fraction(a),),
                       f"jacobi_symmetric(a={af})", (-1.0, 1.0), density=dens)


def beta_binomial_measure(n: int, a, b) -> MeasureSpec:
    """Beta-mixed binomial: masses C(n,k) (a)_k (b)_{n-k} / (a+b)_n, exact rationals."""
    if n < 1 or float(a) <= 0 or float(b) <= 0:
        raise MeasureError("beta-binomial needs n >= 1 and positive a, b")
    aF, bF = _as_fraction(a), _as_fraction(b)
    denom = pochhammer(aF + bF, n)
    atoms = tuple((k, Fraction(math.comb(n, k)) * pochhammer(aF, k) * pochhammer(bF, n - k) / denom)
                  for k in range(n + 1))
    assert sum(m for _, m in atoms) == 1
    return MeasureSpec("discrete", "beta_binomial", (n, aF, bF),
                       f"beta_binomial(n={n},a={float(a)},b={float(b)})", (0.0, float(n)),
                       atoms=atoms)


def cartier_dunau_measure(q) -> MeasureSpec:
    """Spectral measure of the (q+1)-homogeneous tree, rescaled to (-p, p).

    Density (q+1)/(2 pi) * sqrt(p^2 - x^2) / (1 - x^2) with p = 2 sqrt(q)/(1+q).
    The density carries full mass only for q >= 1 (below that the spectral
    measure acquires endpoint atoms), so q >= 1 is required here.
    """
    qf = float(q)
    if qf < 1:
        raise MeasureError("cartier_dunau is implemented for q >= 1")
    p = 2 * math.sqrt(qf) / (1 + qf)
    def dens(x):
        x = np.asarray(x, float)
        inside = np.abs(x) < p
        xs = np.where(inside, x, 0.0)
        v = (qf + 1) / (2 * math.pi) * np.sqrt(np.maximum(p * p - xs * xs, 0.0)) / (1 - xs * xs)
        return np.where(inside, v, 0.0)
    return MeasureSpec("continuous", "cartier_dunau", (_as_fraction(q),),
                       f"cartier_dunau(q={qf})", (-p, p), density=dens)


# ---------------------------------------------------------------------------
# exact moments
# ---------------------------------------------------------------------------

def _moments_gaussian(params, K):
    m = [Fraction(0)] * (K + 1)
    m[0] = Fraction(1)
    for k in range(2, K + 1, 2):
        m[k] = m[k - 2] * (k - 1)
    return m


def _moments_gaussian_loc_scale(params, K):
    mean, var = params
    z = _moments_gaussian((), K)
    out = []
    for k in range(K + 1):
        s = Fraction(0)
        for j in range(0, k + 1, 2):
            s += math.comb(k, j) * mean ** (k - j) * var ** (j // 2) * z[j]
        out.append(s)
    return out


def _moments_poisson(params, K):
    (a,) = params
    m = [Fraction(1)]
    for k in range(K):
        m.append(a * sum(math.comb(k, j) * m[j] for j in range(k + 1)))
    return m


def _moments_binomial(params, K):
    n, p = params
    S = stirling2_table(K)
    return [sum(S[k][j] * falling_factorial(Fraction(n), j) * p ** j for j in range(k + 1))
            for k in range(K + 1)]


def _moments_negative_binomial(params, K):
    a, lam = params
    S = stirling2_table(K)
    r = a / (1 - a)
    return [sum(S[k][j] * pochhammer(lam, j) * r ** j for j in range(k + 1))
            for k in range(K + 1)]


def _moments_gamma(params, K):
    (q,) = params
    return [pochhammer(q, k) for k in range(K + 1)]


def _moments_gamma_scaled(params, K):
    q, rate = params
    return [pochhammer(q, k) / rate ** k for k in range(K + 1)]


def _log_cos_series(K: int):
    """Taylor coefficients of -log(cos t) up to order K, exact rationals."""
    cos = [Fraction(0)] * (K + 1)
    for j in range(0, K + 1, 2):
        cos[j] = Fraction((-1) ** (j // 2), math.factorial(j))
    u = cos[:]
    u[0] = Fraction(0)
    out = [Fraction(0)] * (K + 1)
    upow = [Fraction(1)] + [Fraction(0)] * K
    for j in range(1, K + 1):
        new = [Fraction(0)] * (K + 1)
        for i1, v1 in enumerate(upow):
            if v1 == 0:
                continue
            for i2 in range(2, K + 1 - i1):
                if u[i2]:
                    new[i1 + i2] += v1 * u[i2]
        upow = new
        if all(v == 0 for v in upow):
            break
        sgn = Fraction((-1) ** j, j)  # -log(1+u) = sum (-1)^j u^j / j ... sign folded
        for i in range(K + 1):
            out[i] += sgn * upow[i]
    return out  # coefficients of -log cos t


def _moments_hyperbolic(params, K):
    # cumulant function q * g(t) with g = -log cos t; cumulants are exact
    # rational multiples of q, moments follow by the standard recursion.
    (q,) = params
    g = _log_cos_series(K)
    kappa = [q * g[m] * math.factorial(m) for m in range(K + 1)]
    m = [Fraction(1)]
    for k in range(1, K + 1):
        m.append(sum(math.comb(k - 1, j - 1) * kappa[j] * m[k - j] for j in range(1, k + 1)))
    return m


def _moments_beta(params, K):
    a, b = params
    return [pochhammer(a, k) / pochhammer(a + b, k) for k in range(K + 1)]


def _moments_jacobi_symmetric(params, K):
    (a,) = params
    mb = _moments_beta((a, a), K)
    out = []
    for k in range(K + 1):
        s = Fraction(0)
        for j in range(k + 1):
            s += math.comb(k, j) * Fraction(2) ** j * Fraction((-1) ** (k - j)) * mb[j]
        out.append(s)
    return out


def _moments_from_atoms(atoms, K):
    out = []
    pts = [(Fraction(x) if isinstance(x, (int, Fraction)) else x,
            Fraction(m) if isinstance(m, (int, Fraction)) else m) for x, m in atoms]
    for k in range(K + 1):
        out.append(sum(m * x ** k for x, m in pts))
    return out


def _moments_cartier_dunau(params, K):
    # moment_k = (weighted closed walks of length k at the tree root) / (q+1)^k;
    # root emits q+1 outward edges, interior vertices q outward and 1 inward.
    (q,) = params
    out = []
    for k in range(K + 1):
        cur = {0: Fraction(1)}
        for _ in range(k):
            nxt = {}
            for d, w in cur.items():
                if d == 0:
                    nxt[1] = nxt.get(1, Fraction(0)) + w * (q + 1)
                else:
                    nxt[d + 1] = nxt.get(d + 1, Fraction(0)) + w * q
                    nxt[d - 1] = nxt.get(d - 1, Fraction(0)) + w
            cur = nxt
        out.append(cur.get(0, Fraction(0)) / (q + 1) ** k)
    return out


_MOMENT_ENGINES = {
    "gaussian": _moments_gaussian,
    "gaussian_loc_scale": _moments_gaussian_loc_scale,
    "poisson": _moments_poisson,
    "binomial": _moments_binomial,
    "negative_binomial": _moments_negative_binomial,
    "gamma": _moments_gamma,
    "gamma_scaled": _moments_gamma_scaled,
    "hyperbolic": _moments_hyperbolic,
    "beta": _moments_beta,
    "jacobi_symmetric": _moments_jacobi_symmetric,
    "cartier_dunau": _moments_cartier_dunau,
}


def exact_moments(measure: MeasureSpec, max_order: int) -> list:
    """Exact rational moments m_0..m_max_order for a registered family."""
    if measure.family in _MOMENT_ENGINES:
        return _MOMENT_ENGINES[measure.family](measure.params, max_order)
    if measure.family == "beta_binomial" or (measure.kind == "discrete"
                                             and len(measure.atoms) <= 10000
                                             and all(isinstance(m, (int, Fraction)) for _, m in measure.atoms)):
        return _moments_from_atoms(measure.atoms, max_order)
    raise MeasureError(f"no exact moment engine for family {measure.family!r}")
