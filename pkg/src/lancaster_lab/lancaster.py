"""Lancaster sequences and bivariate Lancaster distributions.

A sequence (rho_n) with rho_0 = 1 defines, when admissible, a bivariate
probability whose density against the product of its margins expands as

    sum_n rho_n p_n(x) q_n(y)

in the margins' orthonormal polynomials.  This module builds such sequences
from every construction the library supports, evaluates truncated joint
densities, estimates rho_n from samples or quadrature (the canonical oracle
rho_n = E[p_n(X) q_n(Y)]), and screens candidate sequences with the
truncated-moment-problem necessary conditions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from . import measures as me
from . import orthopoly as op
from .measures import MeasureSpec, pochhammer, falling_factorial, stirling2_table
from .orthopoly import RecurrenceCoeffs, format_real

__all__ = [
    "LancasterSequence",
    "BivariateLancaster",
    "VerifyReport",
    "PartialSumSeries",
    "RhoEstimate",
    "MarginMismatchError",
    "AdmissibilityError",
    "WrongCaseError",
    "BudgetError",
    "seq_buja",
    "seq_beta_binomial",
    "seq_eagleson",
    "seq_hyperbolic_beta",
    "seq_geometric_cross",
    "seq_product",
    "density_truncated",
    "verify_moment_representation",
    "estimate_rho",
    "kibble_laplace",
    "BujaModel",
    "BetaBinomialModel",
    "EaglesonGammaModel",
    "KibbleMoranModel",
    "beta_mixture_moment",
]


class MarginMismatchError(ValueError):
    pass


class AdmissibilityError(ValueError):
    """Parameter outside the admissible range printed for the construction."""


class WrongCaseError(ValueError):
    """Margin supports do not match the requested moment-problem case."""


class BudgetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LancasterSequence:
    """Coefficients rho_0..rho_N with their margins and provenance.

    ``printed_variant`` stores an alternative convention published for the
    same construction when it differs from the canonical correlation values
    (the beta-binomial case, where the published numbers are the x-chain
    eigenvalues, i.e. the squares of the canonical values).
    """

    rho: Tuple[float, ...]
    margins: Tuple[MeasureSpec, MeasureSpec]
    provenance: str
    printed_variant: Optional[Tuple[float, ...]] = None
    notes: Tuple[str, ...] = ()
    rho_sq_exact: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if abs(self.rho[0] - 1.0) > 1e-12:
            raise ValueError(f"rho_0 must be 1, got {self.rho[0]}")
        if any(abs(r) > 1 + 1e-9 for r in self.rho):
            raise ValueError("|rho_n| <= 1 violated")

    @property
    def max_degree(self) -> int:
        return len(self.rho) - 1

    def eigenvalues(self) -> Tuple[float, ...]:
        """x-chain spectrum: always the squares of the canonical values."""
        return tuple(r * r for r in self.rho)

    def to_json_dict(self) -> dict:
        d = {
            "rho": [format_real(r) for r in self.rho],
            "margins": [m.to_json_dict() for m in self.margins],
            "provenance": self.provenance,
        }
        if self.printed_variant is not None:
            d["printed_variant"] = [format_real(r) for r in self.printed_variant]
        if self.notes:
            d["notes"] = list(self.notes)
        return d


@dataclass(frozen=True)
class BivariateLancaster:
    """A Lancaster sequence together with both orthonormal bases."""

    sequence: LancasterSequence
    bases: Tuple[RecurrenceCoeffs, RecurrenceCoeffs]
    truncation: int

    def __post_init__(self):
        if self.truncation > self.sequence.max_degree:
            raise ValueError("truncation exceeds the stored sequence")

    def to_json_dict(self) -> dict:
        d = self.sequence.to_json_dict()
        d["bases"] = [b.to_json_dict() for b in self.bases]
        d["truncation"] = self.truncation
        return d


@dataclass(frozen=True)
class PartialSumSeries:
    """Partial sums S_0..S_N with a tail-oscillation diagnostic."""

    sums: Tuple[float, ...]
    oscillation: float
    stabilized: bool

    @property
    def value(self) -> float:
        return self.sums[-1]


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of the moment-representation screen.

    The test is one-sided: ``consistent`` never certifies membership (there
    are moment-consistent sequences that are provably not Lancaster for
    their margins), while ``refuted`` always carries a concrete failed
    positivity condition.
    """

    verdict: str
    gamma_estimate: float
    gamma_stable: bool
    hankel_min_eigenvalues: Tuple[Tuple[str, float, float], ...]
    one_sided: bool = True
    witness: Optional[Tuple[float, float]] = None
    notes: Tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "one_sided": self.one_sided,
            "gamma_estimate": format_real(self.gamma_estimate),
            "gamma_stable": self.gamma_stable,
            "hankel_min_eigenvalues": [
                {"matrix": nm, "min_eig": format_real(ev), "tol": format_real(tol)}
                for nm, ev, tol in self.hankel_min_eigenvalues
            ],
            "witness": list(self.witness) if self.witness else None,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    stderr: float
    method: str
    n_samples: int = 0


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def seq_buja(a: float, b: float, N: int) -> LancasterSequence:
    """Simplex-supported pair with margins Beta(a, b+1) and Beta(b, a+1).

    rho_n = (-1)^n sqrt(ab) / sqrt((a+n)(b+n)).
    """
    if a <= 0 or b <= 0:
        raise AdmissibilityError("a and b must be positive")
    rho = tuple((-1.0) ** n * math.sqrt(a * b) / math.sqrt((a + n) * (b + n))
                for n in range(N + 1))
    return LancasterSequence(rho, (me.beta_measure(a, b + 1), me.beta_measure(b, a + 1)),
                             provenance="buja")


def _exact_cross_rho(joint, mom_x, mom_y, N: int):
    """Canonical rho_n = E[p_n(X) q_n(Y)] from exact moment functionals.

    ``joint(i, j)`` returns E[X^i Y^j]; ``mom_x``/``mom_y`` the marginal
    moments.  Everything runs in Fractions; returns (floats, exact squares).
    """
    def monic(mom):
        def inner(p, q, shift=0):
            return sum(ci * cj * mom(i + j + shift)
                       for i, ci in enumerate(p) for j, cj in enumerate(q))

        pis = [[Fraction(1)]]
        norms = [Fraction(1)]
        for k in range(N):
            pi = pis[k]
            ak = inner(pi, pi, shift=1) / norms[k]
            new = [Fraction(0)] + list(pi)
            for i, c in enumerate(pi):
                new[i] -= ak * c
            if k >= 1:
                bk = norms[k] / norms[k - 1]
                for i, c in enumerate(pis[k - 1]):
                    new[i] -= bk * c
            pis.append(new)
            norms.append(inner(new, new))
        return pis, norms

    px, nx = monic(mom_x)
    py, ny = monic(mom_y)
    rhos, squares = [], []
    for n in range(N + 1):
        num = sum(ci * cj * joint(i, j) for i, ci in enumerate(px[n])
                  for j, cj in enumerate(py[n]))
        sq = num * num / (nx[n] * ny[n])
        val = math.sqrt(float(sq))
        rhos.append(val if num >= 0 else -val)
        squares.append(sq if num >= 0 else -sq)
    return tuple(rhos), tuple(squares)


def _beta_binomial_functionals(n: int, a, b):
    aF = a if isinstance(a, Fraction) else Fraction(a)
    bF = b if isinstance(b, Fraction) else Fraction(b)
    S = stirling2_table(2 * n + 2)

    def mom_t(r):
        return pochhammer(aF, r) / pochhammer(aF + bF, r)

    def mom_x(i):
        return sum(S[i][k] * falling_factorial(Fraction(n), k) * mom_t(k) for k in range(i + 1))

    def joint(i, j):
        return sum(S[i][k] * falling_factorial(Fraction(n), k) * mom_t(k + j)
                   for k in range(i + 1))

    return joint, mom_x, mom_t


def seq_beta_binomial(n: int, a, b) -> LancasterSequence:
    """Beta-mixed binomial pair: margins are the exact-rational mixed law on
    {0..n} and Beta(a, b).

    Stores the canonical correlations rho_j = E[p_j(X) q_j(theta)] computed
    by exact Beta integrals, alongside the published variant
    n! / ((a+b+n)_j (n-j)!), which matches the squares of the canonical
    values (the x-chain eigenvalues).  Degrees above n vanish.
    """
    if n < 1 or float(a) <= 0 or float(b) <= 0:
        raise AdmissibilityError("need n >= 1 and positive a, b")
    if n > op.DEGREE_CAP:
        raise op.DegreeError(f"n exceeds the degree cap {op.DEGREE_CAP}")
    joint, mom_x, mom_t = _beta_binomial_functionals(n, a, b)
    rho, squares = _exact_cross_rho(joint, mom_x, mom_t, n)
    aF, bF = Fraction(a), Fraction(b)
    printed = tuple(
        float(Fraction(math.factorial(n))
              / (pochhammer(aF + bF + n, j) * math.factorial(n - j)))
        for j in range(n + 1))
    return LancasterSequence(
        rho,
        (me.beta_binomial_measure(n, a, b), me.beta_measure(a, b)),
        provenance="beta_binomial",
        printed_variant=printed,
        notes=("printed variant equals the squared canonical values "
               "(eigenvalue convention); spectra always use canonical^2",),
        rho_sq_exact=squares,
    )


def _c_n(family: str, lam, n: int):
    """Semigroup coefficient c_n(lam): prod(beta_k(lam)) / (n!)^2 at the
    reference member, with the theta scale factor dropped (it cancels in
    every ratio the Eagleson formula forms)."""
    lamF = Fraction(lam) if not isinstance(lam, Fraction) else lam
    if family in ("gaussian", "poisson"):
        return lamF ** n / math.factorial(n)
    if family in ("gamma", "hyperbolic", "negative_binomial"):
        return pochhammer(lamF, n) / math.factorial(n)
    if family == "binomial":
        if abs(float(lamF) - round(float(lamF))) > 1e-12:
            raise AdmissibilityError("binomial semigroup parameter must be integer")
        return Fraction(math.comb(int(round(float(lamF))), n)) if n <= lamF else Fraction(0)
    raise me.MeasureError(f"no semigroup coefficients for family {family!r}")


def seq_eagleson(family: str, lam, eta, xi, N: int) -> LancasterSequence:
    """Additive-overlap construction on a quadratic family.

    For independent X, Y, Z with semigroup parameters lam, eta, xi at a
    common theta, the pair (X+Y, Y+Z) has

        rho_n = c_n(eta) / sqrt(c_n(lam+eta) c_n(eta+xi)).

    The margins are the laws of the sums at the family's reference theta.
    """
    from .nef import jorgensen_contains
    if family not in ("gaussian", "poisson", "binomial", "negative_binomial",
                      "gamma", "hyperbolic"):
        raise me.MeasureError(f"{family!r} is not one of the quadratic families")
    for name, v in (("lam", lam), ("eta", eta), ("xi", xi)):
        if not jorgensen_contains(family if family != "binomial" else "bernoulli", float(v)):
            raise AdmissibilityError(f"{name}={v} is outside the semigroup of {family}")
    if float(eta) <= 0:
        raise AdmissibilityError("eta must be positive")
    rho = []
    for n in range(N + 1):
        num = _c_n(family, eta, n)
        d1 = _c_n(family, lam + eta, n)
        d2 = _c_n(family, eta + xi, n)
        rho.append(float(num) / math.sqrt(float(d1) * float(d2)) if float(d1) * float(d2) > 0
                   else 0.0)

    def sum_margin(par):
        if family == "gaussian":
            return me.gaussian_loc_scale_measure(0, par)
        if family == "poisson":
            return me.poisson_measure(par)
        if family == "binomial":
            return me.binomial_measure(int(round(float(par))), Fraction(1, 2))
        if family == "negative_binomial":
            return me.negative_binomial_measure(Fraction(1, 2), par)
        if family == "gamma":
            return me.gamma_measure(par)
        return me.hyperbolic_measure(par)

    return LancasterSequence(tuple(rho), (sum_margin(lam + eta), sum_margin(eta + xi)),
                             provenance=f"eagleson[{family}]")


def beta_mixture_moment(q: float, eta: float, n: int) -> float:
    """n-th moment of Beta(eta, q - eta) by the measure's own Gauss rule.

    Degenerate endpoints: eta = 0 is the point mass at 0, eta = q the point
    mass at 1.  The quadrature route is deliberately independent of the
    Pochhammer-ratio algebra it is used to cross-check.
    """
    if n == 0:
        return 1.0
    if eta <= 0:
        return 0.0
    if eta >= q:
        return 1.0
    if eta < 1e-6 or q - eta < 1e-6:
        # too close to a degenerate endpoint for a stable Jacobi rule
        out = 1.0
        for k in range(n):
            out *= (eta + k) / (q + k)
        return out
    deg = max(n // 2 + 1, 1)
    rec = op.recurrence(me.beta_measure(eta, q - eta), deg)
    nodes, wts = op.quadrature(rec, deg + 1)
    return float(np.sum(wts * nodes ** n))


def seq_hyperbolic_beta(q: float, eta: float, N: int) -> LancasterSequence:
    """Pochhammer-ratio sequence rho_n = (eta)_n / (q)_n on hyperbolic margins.

    Identical to the moment sequence of Beta(eta, q - eta); the identity is
    asserted here at 1e-12.
    """
    if not (0 <= eta <= q):
        raise AdmissibilityError("need 0 <= eta <= q")
    rho = []
    for n in range(N + 1):
        r = float(pochhammer(Fraction(eta), n) / pochhammer(Fraction(q), n)) \
            if pochhammer(Fraction(q), n) != 0 else 0.0
        mix = beta_mixture_moment(q, eta, n)
        if abs(r - mix) > 1e-12 * max(1.0, abs(r)):
            raise AssertionError(f"beta-mixture identity failed at n={n}: {r} vs {mix}")
        rho.append(r)
    m = me.hyperbolic_measure(q)
    return LancasterSequence(tuple(rho), (m, m), provenance="hyperbolic_beta",
                             notes=(f"equals the moment sequence of Beta({eta}, {q - eta})",))


def seq_geometric_cross(kind: str, t: float, N: int, **params) -> LancasterSequence:
    """Geometric sequences rho_n = t^n on cross margins, inside the printed
    admissible range (closed endpoints):

    * ``poisson``: margins Poisson(a), Poisson(b); 0 <= t <= sqrt(a/b), a <= b.
    * ``negbin``: margins NB(a, lam), NB(b, lam); same bound, a <= b.
    * ``negbin_gamma``: margins NB(a, lam), Gamma(lam); 0 <= t <= sqrt(a).
    """
    if t < 0:
        raise AdmissibilityError("t must be nonnegative")
    if kind == "poisson":
        a, b = params["a"], params["b"]
        if not a <= b:
            raise AdmissibilityError("need a <= b")
        bound = math.sqrt(a / b)
        margins = (me.poisson_measure(a), me.poisson_measure(b))
    elif kind == "negbin":
        a, b, lam = params["a"], params["b"], params["lam"]
        if not a <= b:
            raise AdmissibilityError("need a <= b")
        bound = math.sqrt(a / b)
        margins = (me.negative_binomial_measure(a, lam),
                   me.negative_binomial_measure(b, lam))
    elif kind == "negbin_gamma":
        a, lam = params["a"], params["lam"]
        bound = math.sqrt(a)
        margins = (me.negative_binomial_measure(a, lam), me.gamma_measure(lam))
    else:
        raise ValueError(f"unknown cross kind {kind!r}")
    if t > bound + 1e-15:
        raise AdmissibilityError(f"t={t} exceeds the admissible bound {bound}")
    return LancasterSequence(tuple(t ** n for n in range(N + 1)), margins,
                             provenance=f"geometric_cross[{kind}]")


def seq_product(a_seq: LancasterSequence, rho: LancasterSequence,
                b_seq: LancasterSequence) -> LancasterSequence:
    """Componentwise product (a_n rho_n b_n); a on (mu, mu), b on (nu, nu)."""
    mu, nu = rho.margins
    if not (a_seq.margins[0].same_measure(mu) and a_seq.margins[1].same_measure(mu)):
        raise MarginMismatchError("left factor must live on (mu, mu)")
    if not (b_seq.margins[0].same_measure(nu) and b_seq.margins[1].same_measure(nu)):
        raise MarginMismatchError("right factor must live on (nu, nu)")
    n = min(a_seq.max_degree, rho.max_degree, b_seq.max_degree)
    vals = tuple(a_seq.rho[k] * rho.rho[k] * b_seq.rho[k] for k in range(n + 1))
    return LancasterSequence(vals, rho.margins,
                             provenance=f"product({a_seq.provenance},{rho.provenance},{b_seq.provenance})")


# ---------------------------------------------------------------------------
# truncated density
# ---------------------------------------------------------------------------

def density_truncated(biv: BivariateLancaster, x: float, y: float,
                      N: Optional[int] = None) -> PartialSumSeries:
    """All partial sums of the diagonal expansion at (x, y).

    The tail diagnostic is the spread of the last five partial sums; the
    series is declared stabilized when that spread is below 1e-6 |S_N|.
    Weak-limit members may not converge pointwise, and then the diagnostic
    stays visibly large instead of silently returning a number.
    """
    if N is None:
        N = biv.truncation
    if N > biv.sequence.max_degree:
        raise op.DegreeError("N exceeds the stored sequence")
    rec_x, rec_y = biv.bases
    px = op.orthonormal_table(rec_x, x, N)[0]
    py = op.orthonormal_table(rec_y, y, N)[0]
    terms = np.asarray(biv.sequence.rho[: N + 1]) * px * py
    sums = np.cumsum(terms)
    tail = sums[max(0, N - 4):]
    osc = float(tail.max() - tail.min())
    return PartialSumSeries(tuple(float(s) for s in sums), osc,
                            stabilized=osc <= 1e-6 * abs(float(sums[-1])) + 1e-300)


# ---------------------------------------------------------------------------
# moment-representation screen
# ---------------------------------------------------------------------------

def _margin_recurrence(m: MeasureSpec, N: int) -> RecurrenceCoeffs:
    return op.recurrence(m, min(N, op.DEGREE_CAP), mode="fast_path")


def verify_moment_representation(seq: LancasterSequence, case: str,
                                 N: Optional[int] = None) -> VerifyReport:
    """Necessary-condition screen for membership in the Lancaster class.

    Rescaled values m_n = a_n rho_n / (b_n gamma^n) must form a truncated
    moment sequence on [0, gamma] (case D, both margins on half-lines) or
    [-gamma, gamma] (case C, both margins on the whole line), where a_n, b_n
    are the orthonormal leading coefficients of the margins and gamma is a
    finite-N proxy of the liminf of (a_n/b_n)^(1/n).

    Refutation requires a concrete failure (a Hankel eigenvalue below the
    scale-relative tolerance, or a support-order violation in case D);
    consistency is one-sided and never certifies membership.
    """
    if case not in ("C", "D"):
        raise WrongCaseError("case must be 'C' or 'D'")
    mu, nu = seq.margins
    if case == "C" and not (mu.support_class() == nu.support_class() == "real_line"):
        raise WrongCaseError("case C needs both margins supported on the whole line")
    if case == "D" and not (mu.support_class() == nu.support_class() == "half_line"):
        raise WrongCaseError("case D needs both margins on half-lines")
    if N is None:
        N = seq.max_degree
    N = min(N, seq.max_degree)
    rec_x = _margin_recurrence(mu, N)
    rec_y = _margin_recurrence(nu, N)
    lead_a = np.array([op.leading_coeff(rec_x, n)[0] for n in range(N + 1)])
    lead_b = np.array([op.leading_coeff(rec_y, n)[0] for n in range(N + 1)])

    notes = []
    # gamma proxy with a trend check over the last five usable indices
    if case == "D":
        g = [(lead_a[n] / lead_b[n]) ** (1.0 / n) for n in range(1, N + 1)]
    else:
        g = [(lead_a[2 * n] / lead_b[2 * n]) ** (1.0 / (2 * n)) for n in range(1, N // 2 + 1)]
    gamma = float(g[-1])
    tail = g[-5:]
    gamma_stable = bool((max(tail) - min(tail)) <= 0.10 * abs(gamma))
    if not gamma_stable:
        notes.append("gamma-unstable: leading-coefficient trend varies more than 10%")
    # the finite-N proxy underestimates a liminf whenever the ratio drifts;
    # interval-restriction conditions are then not trustworthy and only the
    # scale-free Hankel positivity is applied
    gamma_exact = bool((max(g) - min(g)) <= 1e-9 * abs(gamma))
    if not gamma_exact:
        notes.append("interval-restriction tests skipped: gamma proxy is a lower "
                     "bound (drifting leading-coefficient ratio)")

    mvals = np.array([lead_a[n] * seq.rho[n] / (lead_b[n] * gamma ** n) for n in range(N + 1)])

    def hankel(offset, diff=0):
        size = (N - offset - diff) // 2 + 1
        H = np.empty((size, size))
        for i in range(size):
            for j in range(size):
                H[i, j] = mvals[i + j + offset] - (mvals[i + j + offset + diff] if diff else 0.0)
        return H

    tests = [("hankel", hankel(0))]
    if case == "D":
        tests.append(("hankel_shifted", hankel(1)))
        if gamma_exact:
            tests.append(("hankel_decreasing", hankel(0, diff=1)))
            # pairwise support-order condition m_{k+1} <= m_k (t^{k+1} <= t^k
            # on [0,1]); the truncated difference Hankel misses the tail pairs
            tests.append(("support_order", np.diag(mvals[:-1] - mvals[1:])))
    elif gamma_exact:
        tests.append(("hankel_unit_interval", hankel(0, diff=2)))

    eigs = []
    failed = False
    for name, H in tests:
        tol = 1e-8 * max(np.abs(H).sum(axis=0).max(), 1.0)
        ev = float(np.linalg.eigvalsh(H).min())
        eigs.append((name, ev, tol))
        if ev < -tol:
            failed = True
    verdict = "refuted" if (failed and gamma_stable) else "consistent"
    if failed and not gamma_stable:
        notes.append("Hankel negativity observed but gamma proxy unstable; not refuting")
    notes.append("one-sided: consistency does not prove Lancaster membership")
    if (mu.family == nu.family == "hyperbolic" and mu.same_measure(nu)
            and seq.max_degree >= 2 and 0 < seq.rho[1] < 1
            and all(abs(seq.rho[n] - seq.rho[1] ** n) < 1e-12 for n in range(seq.max_degree + 1))):
        notes.append("known non-Lancaster: geometric sequences are never admissible "
                     "for hyperbolic margins despite passing this screen")
    return VerifyReport(verdict, float(gamma), gamma_stable, tuple(eigs), notes=tuple(notes))


# ---------------------------------------------------------------------------
# canonical-correlation oracle
# ---------------------------------------------------------------------------

def estimate_rho(model, n: int, budget: int = 200_000, seed: int = 0,
                 tol: Optional[float] = None) -> RhoEstimate:
    """Estimate rho_n = E[p_n(X) q_n(Y)] for a joint model.

    Dispatches on the model's capabilities: an ``exact_rho`` method wins,
    then a deterministic ``quadrature_grid``, then seeded Monte Carlo with a
    standard-error estimate.  Raises when a requested tolerance cannot be
    met within the budget.
    """
    if hasattr(model, "exact_rho"):
        return RhoEstimate(float(model.exact_rho(n)), 0.0, "exact")
    rec_x, rec_y = model.bases(n)
    if hasattr(model, "quadrature_grid"):
        X, Y, W = model.quadrature_grid(n)
        px = op.orthonormal_table(rec_x, X, n)[:, n]
        py = op.orthonormal_table(rec_y, Y, n)[:, n]
        return RhoEstimate(float(np.sum(W * px * py)), 1e-13, "quadrature")
    rng = np.random.default_rng(np.random.Philox(seed))
    total, acc, acc2 = 0, 0.0, 0.0
    while total < budget:
        size = min(budget - total, 1_000_000)
        X, Y = model.sample_joint(rng, size)
        v = op.orthonormal_table(rec_x, X, n)[:, n] * op.orthonormal_table(rec_y, Y, n)[:, n]
        acc += v.sum()
        acc2 += (v * v).sum()
        total += size
    mean = acc / total
    var = max(acc2 / total - mean * mean, 0.0)
    se = math.sqrt(var / total)
    if tol is not None and se > tol:
        raise BudgetError(f"standard error {se:.2e} exceeds tol {tol:.2e} at budget {budget}")
    return RhoEstimate(float(mean), float(se), "monte_carlo", total)


def estimator_variance(seq: LancasterSequence, n: int) -> float:
    """Exact per-sample variance of the estimator p_n(X) q_n(Y) under ``seq``.

    Uses the diagonal expansion of the joint: the second moment is
    sum_k rho_k E[p_n^2 p_k] E[q_n^2 q_k] with linearization coefficients
    from each margin's Gauss rule.  Unbounded margins make the empirical
    standard error of a heavy-tailed product badly downward-biased at desk
    budgets; this gives the honest scale for a consistency test.
    """
    if 2 * n > seq.max_degree:
        raise op.DegreeError(f"need the sequence to degree {2 * n}")
    out = []
    for m in seq.margins:
        rec = _margin_recurrence(m, 2 * n)
        nodes, wts = op.quadrature(rec, 2 * n + 1)
        P = op.orthonormal_table(rec, nodes, 2 * n)
        out.append((wts * P[:, n] ** 2) @ P)
    cX, cY = out
    second = float(np.sum(cX * cY * np.asarray(seq.rho[: 2 * n + 1])))
    return max(second - seq.rho[n] ** 2, 0.0)


# ---------------------------------------------------------------------------
# joint models used by the oracle
# ---------------------------------------------------------------------------

class BujaModel:
    """Dirichlet(a, b, 1) face pair; margins Beta(a, b+1) and Beta(b, a+1)."""

    def __init__(self, a: float, b: float):
        self.a, self.b = float(a), float(b)
        self.margins = (me.beta_measure(a, b + 1), me.beta_measure(b, a + 1))

    def bases(self, n):
        return (_margin_recurrence(self.margins[0], n), _margin_recurrence(self.margins[1], n))

    def sample_joint(self, rng, size):
        d = rng.dirichlet((self.a, self.b, 1.0), size=size)
        return d[:, 0], d[:, 1]


class BetaBinomialModel:
    """Exact-path model for the beta-mixed binomial pair."""

    def __init__(self, n: int, a, b):
        self.n, self.a, self.b = n, a, b
        self._joint, self._mx, self._mt = _beta_binomial_functionals(n, a, b)
        self.margins = (me.beta_binomial_measure(n, a, b), me.beta_measure(a, b))

    def exact_rho(self, n: int):
        if n > self.n:
            return 0.0
        rho, _ = _exact_cross_rho(self._joint, self._mx, self._mt, n)
        return rho[n]

    def sample_joint(self, rng, size):
        th = rng.beta(float(self.a), float(self.b), size=size)
        return rng.binomial(self.n, th).astype(float), th


class EaglesonGammaModel:
    """(X+Y, Y+Z) with independent gamma components lam, eta, xi."""

    def __init__(self, lam: float, eta: float, xi: float):
        if eta <= 0 or lam < 0 or xi < 0:
            raise AdmissibilityError("need eta > 0 and nonnegative lam, xi")
        self.lam, self.eta, self.xi = lam, eta, xi
        self.margins = (me.gamma_measure(lam + eta), me.gamma_measure(eta + xi))

    def bases(self, n):
        return (_margin_recurrence(self.margins[0], n), _margin_recurrence(self.margins[1], n))

    def sample_joint(self, rng, size):
        X = rng.gamma(self.lam, size=size) if self.lam > 0 else 0.0
        Y = rng.gamma(self.eta, size=size)
        Z = rng.gamma(self.xi, size=size) if self.xi > 0 else 0.0
        return X + Y, Y + Z


class KibbleMoranModel:
    """Bivariate gamma with Laplace transform (1+s+t+(1-r)st)^(-q).

    Sampling goes through the latent-count thinning coupling: N | X is
    Poisson(r X / (1-r)) and Y | N is Gamma(q + N, scale 1-r), which
    reproduces the transform exactly (checked against kibble_laplace).
    """

    def __init__(self, q: float, r: float):
        if q <= 0 or not (0 <= r <= 1):
            raise AdmissibilityError("need q > 0 and r in [0, 1]")
        self.q, self.r = float(q), float(r)
        m = me.gamma_measure(q)
        self.margins = (m, m)

    def bases(self, n):
        rec = _margin_recurrence(self.margins[0], n)
        return rec, rec

    def exact_rho(self, n: int):
        return self.r ** n

    def sample_joint(self, rng, size):
        X = rng.gamma(self.q, size=size)
        if self.r == 1.0:
            return X, X.copy()
        if self.r == 0.0:
            return X, rng.gamma(self.q, size=size)
        lat = rng.poisson(self.r * X / (1.0 - self.r))
        Y = rng.gamma(self.q + lat) * (1.0 - self.r)
        return X, Y


# ---------------------------------------------------------------------------
# Kibble-Moran Laplace transform with mixing
# ---------------------------------------------------------------------------

def kibble_laplace(q: float, mixing, s: float, t: float) -> float:
    """E[exp(-sX - tY)] for the (mixed) bivariate gamma family.

    ``mixing`` selects the correlation law on [0, 1]: ``("point", r)``,
    ``("beta", eta)`` for Beta(eta, q - eta), or ``("histogram", pairs)``
    with (r_i, w_i) atoms.  Point mixing gives the plain transform
    (1 + s + t + (1-r) s t)^(-q).
    """
    if s < 0 or t < 0:
        raise ValueError("s and t must be nonnegative")

    def point(r):
        return (1.0 + s + t + (1.0 - r) * s * t) ** (-q)

    kind = mixing[0]
    if kind == "point":
        r = float(mixing[1])
        if not 0 <= r <= 1:
            raise AdmissibilityError("mixing support must lie in [0, 1]")
        return point(r)
    if kind == "beta":
        eta = float(mixing[1])
        if not 0 < eta < q:
            raise AdmissibilityError("beta mixing needs 0 < eta < q")
        rec = op.recurrence(me.beta_measure(eta, q - eta), 40, mode="fast_path")
        nodes, wts = op.quadrature(rec, 41)
        return float(np.sum(wts * (1.0 + s + t + (1.0 - nodes) * s * t) ** (-q)))
    if kind == "histogram":
        pairs = mixing[1]
        if any(not 0 <= r <= 1 for r, _ in pairs):
            raise AdmissibilityError("mixing support must lie in [0, 1]")
        wsum = sum(w for _, w in pairs)
        if abs(wsum - 1.0) > 1e-12:
            raise AdmissibilityError("histogram weights must sum to 1")
        return float(sum(w * point(r) for r, w in pairs))
    raise ValueError(f"unknown mixing kind {kind!r}")
