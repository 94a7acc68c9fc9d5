"""Orthonormal polynomial systems for the library's marginal measures.

Two routes produce three-term recurrence coefficients:

* ``mode="oracle"`` orthogonalizes the monomials against exact rational
  moments (Hankel/Stieltjes process in Fraction arithmetic).  It is slow and
  exact, and serves as ground truth.
* ``mode="fast_path"`` uses the classical closed-form coefficients of the
  family (Hermite, Charlier, Krawtchouk, Meixner, Laguerre, the symmetric
  Meixner-Pollaczek system of the hyperbolic family, Jacobi, Hahn, and the
  homogeneous-tree Cartier-Dunau system).

Both routes emit the same orthonormal convention

    sqrt(beta_{k+1}) p_{k+1}(x) = (x - alpha_k) p_k(x) - sqrt(beta_k) p_{k-1}(x)

with p_0 = 1, so the coefficient of x^n in p_n is prod(beta_k^(-1/2)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .measures import (
    MeasureSpec,
    MeasureError,
    exact_moments,
    pochhammer,
)

__all__ = [
    "DEGREE_CAP",
    "DegreeError",
    "IndefiniteHankelError",
    "MomentSequence",
    "RecurrenceCoeffs",
    "moments",
    "recurrence",
    "eval_orthonormal",
    "orthonormal_table",
    "leading_coeff",
    "quadrature",
    "gram_matrix",
    "monic_coefficients",
    "format_real",
]

# Hankel orthogonalization past this degree cannot be verified in double
# precision, so the whole library stops here.
DEGREE_CAP = 40


class DegreeError(ValueError):
    """Requested degree/order outside the valid range."""


class IndefiniteHankelError(ValueError):
    """Moment matrix failed positive-definiteness during orthogonalization."""


def format_real(x: float) -> str:
    """Serialize a float as a decimal string with 17 significant digits."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class MomentSequence:
    """Raw moments m_0..m_N of a measure; ``exact`` marks rational provenance."""

    values: tuple
    exact: bool

    def __len__(self):
        return len(self.values)

    def as_floats(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    def hankel_min_eig(self) -> float:
        """Smallest eigenvalue of the leading Hankel matrix (PSD for true moments)."""
        m = self.as_floats()
        k = (len(m) - 1) // 2
        H = np.array([[m[i + j] for j in range(k + 1)] for i in range(k + 1)])
        return float(np.linalg.eigvalsh(H).min())


def moments(measure: MeasureSpec, max_order: int) -> MomentSequence:
    """Exact moments of a registered family up to ``max_order`` (<= 40)."""
    if max_order > DEGREE_CAP:
        raise DegreeError(f"moment order {max_order} exceeds the cap {DEGREE_CAP}")
    if max_order < 0:
        raise DegreeError("max_order must be nonnegative")
    vals = exact_moments(measure, max_order)
    return MomentSequence(tuple(vals), exact=True)


@dataclass(frozen=True)
class RecurrenceCoeffs:
    """Recurrence data (alpha_0..alpha_N, beta_1..beta_N) for one measure.

    Exact rational copies are carried along whenever the producing route was
    exact; float arrays are always available for numeric work.
    """

    alpha: Tuple[float, ...]
    beta: Tuple[float, ...]
    family: str
    params: tuple
    name: str
    mode: str
    alpha_exact: Optional[tuple] = None
    beta_exact: Optional[tuple] = None

    def __post_init__(self):
        if len(self.alpha) != len(self.beta) + 1:
            raise ValueError("need alpha_0..alpha_N and beta_1..beta_N")
        if any(b <= 0 for b in self.beta):
            raise IndefiniteHankelError(f"{self.name}: nonpositive beta coefficient")

    @property
    def max_degree(self) -> int:
        return len(self.beta)

    def leading(self, n: int) -> float:
        if n > self.max_degree:
            raise DegreeError(f"degree {n} exceeds stored {self.max_degree}")
        return float(np.prod([1.0 / math.sqrt(b) for b in self.beta[:n]])) if n else 1.0

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "params": {f"p{i}": format_real(float(p)) for i, p in enumerate(self.params)},
            "alpha": [format_real(a) for a in self.alpha],
            "beta": [format_real(b) for b in self.beta],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RecurrenceCoeffs":
        return RecurrenceCoeffs(
            alpha=tuple(float(a) for a in d["alpha"]),
            beta=tuple(float(b) for b in d["beta"]),
            family=d.get("family", "unknown"),
            params=tuple(float(v) for v in d.get("params", {}).values()),
            name=d.get("family", "unknown"),
            mode="deserialized",
        )


# ---------------------------------------------------------------------------
# oracle route: Stieltjes orthogonalization against exact moments
# ---------------------------------------------------------------------------

def _oracle_recurrence(measure: MeasureSpec, N: int):
    order = 2 * N + 1
    m = exact_moments(measure, order)

    def L(coeffs):
        return sum(c * m[i] for i, c in enumerate(c0 for c0 in coeffs))

    def mul(p, q):
        out = [Fraction(0)] * (len(p) + len(q) - 1)
        for i, ci in enumerate(p):
            if ci == 0:
                continue
            for j, cj in enumerate(q):
                out[i + j] += ci * cj
        return out

    pis = [[Fraction(1)]]
    norms = [Fraction(1)]
    alphas, betas = [], []
    for k in range(N + 1):
        pi = pis[k]
        nk = L(mul(pi, pi))
        if nk <= 0:
            raise IndefiniteHankelError(
                f"{measure.name}: Hankel form indefinite at degree {k}")
        norms.append(nk)
        alphas.append(L(mul([Fraction(0)] + pi, pi)) / nk)
        if k >= 1:
            betas.append(nk / norms[k])
        if k < N:
            new = [Fraction(0)] + pi
            for i, c in enumerate(pi):
                new[i] -= alphas[k] * c
            if k >= 1:
                bk = nk / norms[k]
                for i, c in enumerate(pis[k - 1]):
                    new[i] -= bk * c
            pis.append(new)
    return tuple(alphas), tuple(betas)


# ---------------------------------------------------------------------------
# fast-path route: closed-form coefficients per family
# ---------------------------------------------------------------------------

def _jacobi_monic(al_j, be_j, N):
    """Monic Jacobi coefficients on [-1,1] for weight (1-x)^al (1+x)^be."""
    s = al_j + be_j
    alpha = [(be_j - al_j) / (s + 2)]
    for k in range(1, N + 1):
        num = (be_j - al_j) * (be_j + al_j)
        alpha.append(num / ((2 * k + s) * (2 * k + s + 2)) if num != 0 else 0 * num)
    beta = []
    if N >= 1:
        beta.append(4 * (al_j + 1) * (be_j + 1) / ((s + 2) ** 2 * (s + 3)))
    for k in range(2, N + 1):
        beta.append(4 * k * (k + al_j) * (k + be_j) * (k + s)
                    / ((2 * k + s) ** 2 * (2 * k + s + 1) * (2 * k + s - 1)))
    return alpha, beta


def _fast_path(measure: MeasureSpec, N: int):
    fam, par = measure.family, measure.params
    if fam == "gaussian":
        return [Fraction(0)] * (N + 1), [Fraction(k) for k in range(1, N + 1)]
    if fam == "gaussian_loc_scale":
        mean, var = par
        return [mean for _ in range(N + 1)], [k * var for k in range(1, N + 1)]
    if fam == "poisson":
        (a,) = par
        return [a + k for k in range(N + 1)], [a * k for k in range(1, N + 1)]
    if fam == "binomial":
        n, p = par
        return ([n * p + k * (1 - 2 * p) for k in range(N + 1)],
                [k * p * (1 - p) * (n - k + 1) for k in range(1, N + 1)])
    if fam == "negative_binomial":
        a, lam = par
        return ([(k * (1 + a) + lam * a) / (1 - a) for k in range(N + 1)],
                [k * (k + lam - 1) * a / (1 - a) ** 2 for k in range(1, N + 1)])
    if fam == "gamma":
        (q,) = par
        return ([2 * k + q for k in range(N + 1)],
                [k * (k + q - 1) for k in range(1, N + 1)])
    if fam == "gamma_scaled":
        q, rate = par
        return ([(2 * k + q) / rate for k in range(N + 1)],
                [k * (k + q - 1) / rate ** 2 for k in range(1, N + 1)])
    if fam == "hyperbolic":
        (q,) = par
        return ([Fraction(0)] * (N + 1), [k * (k + q - 1) for k in range(1, N + 1)])
    if fam == "jacobi_symmetric":
        (a,) = par
        return _jacobi_monic(a - 1, a - 1, N)
    if fam == "beta":
        a, b = par
        al, be = _jacobi_monic(b - 1, a - 1, N)
        return [(x + 1) / 2 for x in al], [x / Fraction(4) for x in be]
    if fam == "beta_binomial":
        n, a, b = par
        alj, bej = a - 1, b - 1

        def A(k):
            return ((k + alj + bej + 1) * (k + alj + 1) * (n - k)
                    / ((2 * k + alj + bej + 1) * (2 * k + alj + bej + 2)))

        def C(k):
            if k == 0:
                return 0 * alj
            return (k * (k + alj + bej + n + 1) * (k + bej)
                    / ((2 * k + alj + bej) * (2 * k + alj + bej + 1)))

        return ([A(k) + C(k) for k in range(N + 1)],
                [A(k - 1) * C(k) for k in range(1, N + 1)])
    if fam == "cartier_dunau":
        (q,) = par
        return ([Fraction(0)] * (N + 1),
                [1 / (q + 1)] + [q / (q + 1) ** 2] * (N - 1) if N >= 1 else [])
    raise MeasureError(f"no fast-path recurrence for family {fam!r}")


def recurrence(measure: MeasureSpec, N: int, mode: str = "fast_path") -> RecurrenceCoeffs:
    """Orthonormal recurrence coefficients up to degree N.

    ``oracle`` requires exact moments up to 2N+1 and is limited to N <= 19;
    ``fast_path`` is available to the global degree cap.  For a discrete
    measure with m atoms only degrees n < m exist.
    """
    if N < 0:
        raise DegreeError("N must be nonnegative")
    if N > DEGREE_CAP:
        raise DegreeError(f"degree {N} exceeds the cap {DEGREE_CAP}")
    if measure.kind == "discrete" and measure.family in ("binomial", "beta_binomial"):
        n_atoms = len(measure.atoms)
        if N > n_atoms - 1:
            raise DegreeError(
                f"{measure.name}: degree {N} exceeds support (only {n_atoms} atoms)")
    if mode == "oracle":
        if 2 * N + 1 > DEGREE_CAP:
            raise DegreeError(f"oracle needs moments to {2*N+1} > {DEGREE_CAP}; use N <= 19")
        al, be = _oracle_recurrence(measure, N)
    elif mode == "fast_path":
        al, be = _fast_path(measure, N)
    else:
        raise ValueError(f"unknown recurrence mode {mode!r}")
    exact = all(isinstance(v, (int, Fraction)) for v in list(al) + list(be))
    return RecurrenceCoeffs(
        alpha=tuple(float(a) for a in al),
        beta=tuple(float(b) for b in be),
        family=measure.family,
        params=measure.params,
        name=measure.name,
        mode=mode,
        alpha_exact=tuple(al) if exact else None,
        beta_exact=tuple(be) if exact else None,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def orthonormal_table(rec: RecurrenceCoeffs, x, n: int) -> np.ndarray:
    """Values of p_0..p_n at the points x, shape (len(x), n+1)."""
    if n > rec.max_degree:
        raise DegreeError(f"degree {n} exceeds stored {rec.max_degree}")
    x = np.atleast_1d(np.asarray(x, float))
    P = np.zeros((x.size, n + 1))
    P[:, 0] = 1.0
    if n >= 1:
        sb = np.sqrt(np.asarray(rec.beta[:n]))
        P[:, 1] = (x - rec.alpha[0]) / sb[0]
        for k in range(1, n):
            P[:, k + 1] = ((x - rec.alpha[k]) * P[:, k] - sb[k - 1] * P[:, k - 1]) / sb[k]
    return P


def eval_orthonormal(rec: RecurrenceCoeffs, n: int, x):
    """p_n(x) by forward recurrence; scalar in, scalar out."""
    vals = orthonormal_table(rec, x, n)[:, n]
    return float(vals[0]) if np.ndim(x) == 0 else vals


def monic_coefficients(rec: RecurrenceCoeffs, n: int, exact: bool = False):
    """Coefficient lists (low->high) of the monic pi_0..pi_n.

    With ``exact=True`` the recurrence must carry rational coefficients and
    the result is in Fractions, suitable for identity-level Gram checks.
    """
    if n > rec.max_degree:
        raise DegreeError(f"degree {n} exceeds stored {rec.max_degree}")
    if exact:
        if rec.alpha_exact is None:
            raise ValueError(f"{rec.name}: no exact coefficients stored")
        al, be = rec.alpha_exact, rec.beta_exact
        zero, one = Fraction(0), Fraction(1)
    else:
        al, be = rec.alpha, rec.beta
        zero, one = 0.0, 1.0
    polys = [[one]]
    for k in range(n):
        pi = polys[k]
        new = [zero] + list(pi)
        for i, c in enumerate(pi):
            new[i] -= al[k] * c
        if k >= 1:
            for i, c in enumerate(polys[k - 1]):
                new[i] -= be[k - 1] * c
        polys.append(new)
    return polys


def leading_coeff(rec: RecurrenceCoeffs, n: int) -> Tuple[float, float]:
    """Leading coefficient of p_n together with the Jorgensen-style c_n.

    Returns ``(lead, c_n)`` where ``lead = prod(beta_k^(-1/2))`` and

        c_n = prod(beta_k) / (n!)^2 = 1 / (n! * lead)^2.

    The c_n convention is pinned by the hyperbolic family, where it must give
    the Pochhammer ratio c_n(q) = (q)_n / n!; the same definition reproduces
    lambda^n/n! for the Gaussian and Poisson convolution semigroups and
    binom(lambda, n) for the Bernoulli one (after the theta-reference scale
    factor cancels in eigenvalue ratios).
    """
    if n > rec.max_degree:
        raise DegreeError(f"degree {n} exceeds stored {rec.max_degree}")
    if rec.beta_exact is not None:
        prod = Fraction(1)
        for b in rec.beta_exact[:n]:
            prod *= b
        c_n = prod / Fraction(math.factorial(n)) ** 2
        return float(prod) ** -0.5, float(c_n)
    prod = float(np.prod(np.asarray(rec.beta[:n]))) if n else 1.0
    return prod ** -0.5, prod / math.factorial(n) ** 2


# ---------------------------------------------------------------------------
# Gauss quadrature
# ---------------------------------------------------------------------------

def quadrature(rec: RecurrenceCoeffs, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights from the symmetric tridiagonal Jacobi matrix.

    Exact for polynomials up to degree 2*n_nodes - 1; weights are positive
    and sum to 1.  Allows n_nodes up to N+1 (alpha_N exists for exactly this).
    """
    if n_nodes < 1:
        raise DegreeError("need at least one node")
    if n_nodes > len(rec.alpha):
        raise DegreeError(f"{n_nodes} nodes need recurrence degree {n_nodes - 1}")
    if n_nodes == 1:
        return np.array([rec.alpha[0]]), np.array([1.0])
    try:
        ev, V = eigh_tridiagonal(np.asarray(rec.alpha[:n_nodes]),
                                 np.sqrt(np.asarray(rec.beta[: n_nodes - 1])))
    except Exception as exc:  # pragma: no cover - eigensolver failure is exotic
        raise RuntimeError(f"tridiagonal eigensolver failed: {exc}") from exc
    w = V[0] ** 2
    return ev, w / w.sum()


def _deep_discrete_points(measure: MeasureSpec, N: int):
    """Support points and exact pmf of an unbounded discrete family, summed
    deep enough that the degree-2N tail contribution is negligible."""
    import scipy.special as sp
    fam, par = measure.family, measure.params
    if fam == "poisson":
        a = float(par[0])
        logpmf = lambda k: -a + k * math.log(a) - sp.gammaln(k + 1)
    elif fam == "negative_binomial":
        a, lam = float(par[0]), float(par[1])
        logpmf = lambda k: (lam * math.log1p(-a) + sp.gammaln(lam + k)
                            - sp.gammaln(lam) - sp.gammaln(k + 1) + k * math.log(a))
    else:
        raise MeasureError(f"no deep pmf for family {fam!r}")
    K = 256
    while True:
        ks = np.arange(K, dtype=float)
        lw = np.array([logpmf(k) for k in ks])
        # tail factor k^{2N} against the pmf decay
        if lw[-1] + 2 * N * math.log(K) < -60 or K > 50000:
            return ks, np.exp(lw)
        K *= 2


def _christoffel_rule(measure: MeasureSpec, n_nodes: int):
    """Gauss nodes with weights from the Christoffel function 1/sum p_k^2.

    Eigenvector-based weights lose all relative accuracy in the far tails of
    unbounded measures; the sum-of-squares form does not cancel.
    """
    full = recurrence(measure, n_nodes - 1, mode="fast_path")
    ev, _ = eigh_tridiagonal(np.asarray(full.alpha[:n_nodes]),
                             np.sqrt(np.asarray(full.beta[: n_nodes - 1])))
    P = orthonormal_table(full, ev, n_nodes - 1)
    return ev, 1.0 / np.sum(P ** 2, axis=1)


def gram_matrix(rec: RecurrenceCoeffs, measure: MeasureSpec, N: int) -> np.ndarray:
    """Gram matrix G_mn = int p_m p_n dmu, for orthonormality diagnostics.

    Finite atom sets are summed directly; unbounded discrete families are
    summed deep into their tails against the exact pmf; continuous measures
    use their own (2N+1)-node Gauss rule, which integrates every entry
    exactly.
    """
    if measure.kind == "discrete" and measure.family in ("binomial", "beta_binomial"):
        pts = np.array([float(x) for x, _ in measure.atoms])
        wts = np.array([float(m) for _, m in measure.atoms])
    elif measure.kind == "discrete":
        pts, wts = _deep_discrete_points(measure, N)
    else:
        pts, wts = _christoffel_rule(measure, 2 * N + 1)
    P = orthonormal_table(rec, pts, N)
    return (P * wts[:, None]).T @ P
