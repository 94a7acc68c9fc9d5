"""Exact two-component Gibbs samplers and their spectral diagnostics.

Each :class:`ConjugateModel` packages the two exact conditional laws of a
joint distribution whose diagonal expansion is known, so the marginal
x-chain (draw y given x, then a new x given y) has the orthonormal
polynomials of the stationary law as eigenfunctions, with eigenvalues equal
to the squared sequence values.  All randomness flows through a
counter-based Philox generator so traces are bit-for-bit reproducible.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln

from . import lancaster as lc
from . import measures as me
from . import orthopoly as op
from .measures import MeasureSpec, pochhammer
from .orthopoly import RecurrenceCoeffs, format_real

__all__ = [
    "GENERATOR_ID",
    "ConjugateModel",
    "ChainTrace",
    "DecayFit",
    "UnsupportedModelError",
    "make_model",
    "run_x_chain",
    "exact_transition_matrix",
    "spectral_eigencheck",
    "autocorrelation_vs_spectrum",
    "chisq_decay_bound",
]

GENERATOR_ID = "numpy-philox-4x64"
MODEL_KINDS = ("beta_binomial", "gamma_poisson", "gauss_gauss", "kibble_gamma")


class UnsupportedModelError(ValueError):
    pass


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ConjugateModel:
    """Joint law with exact conditional samplers K(x, .) and L(y, .).

    The analytic sequence carries the canonical correlations; the x-chain
    spectrum is their squares.
    """

    kind: str
    params: tuple
    marginal: MeasureSpec
    y_marginal: MeasureSpec
    sequence: lc.LancasterSequence

    # -- conditional laws --------------------------------------------------
    def sample_y_given_x(self, rng: np.random.Generator, x):
        k, p = self.kind, self.params
        if k == "beta_binomial":
            n, a, b = p
            return rng.beta(x + float(a), n - x + float(b))
        if k == "gamma_poisson":
            x0, lam = p
            return rng.gamma(x + lam * x0) / (1.0 + lam)
        if k == "gauss_gauss":
            x0, lam = p
            return rng.normal((lam * x0 + x) / (1.0 + lam), math.sqrt(1.0 / (1.0 + lam)))
        if k == "kibble_gamma":
            q, r = p
            if r == 1.0:
                return np.asarray(x) + 0.0
            if r == 0.0:
                return rng.gamma(q, size=np.shape(x) or None)
            lat = rng.poisson(r * np.asarray(x) / (1.0 - r))
            return rng.gamma(q + lat) * (1.0 - r)
        raise UnsupportedModelError(self.kind)

    def sample_x_given_y(self, rng: np.random.Generator, y):
        k, p = self.kind, self.params
        if k == "beta_binomial":
            n = p[0]
            return rng.binomial(n, y)
        if k == "gamma_poisson":
            return rng.poisson(y)
        if k == "gauss_gauss":
            return rng.normal(y, 1.0)
        if k == "kibble_gamma":
            return self.sample_y_given_x(rng, y)  # symmetric coupling
        raise UnsupportedModelError(self.kind)

    # -- joint sampling / bases, for the canonical-correlation oracle ------
    def sample_joint(self, rng: np.random.Generator, size: int):
        k, p = self.kind, self.params
        if k == "beta_binomial":
            n, a, b = p
            th = rng.beta(float(a), float(b), size=size)
            return rng.binomial(n, th).astype(float), th
        if k == "gamma_poisson":
            x0, lam = p
            m = rng.gamma(lam * x0, size=size) / lam
            return rng.poisson(m).astype(float), m
        if k == "gauss_gauss":
            x0, lam = p
            th = rng.normal(x0, math.sqrt(1.0 / lam), size=size)
            return rng.normal(th, 1.0), th
        if k == "kibble_gamma":
            q, r = p
            X = rng.gamma(q, size=size)
            return X, self.sample_y_given_x(rng, X)
        raise UnsupportedModelError(self.kind)

    def bases(self, n: int):
        return (op.recurrence(self.marginal, min(n, op.DEGREE_CAP)),
                op.recurrence(self.y_marginal, min(n, op.DEGREE_CAP)))

    def basis(self, n: int) -> RecurrenceCoeffs:
        return self.bases(n)[0]

    def describe(self) -> dict:
        return {"kind": self.kind,
                "params": [format_real(float(v)) for v in self.params]}


def make_model(kind: str, **params) -> ConjugateModel:
    """Build one of the supported conjugate models.

    * ``beta_binomial(n, a, b)``: theta | x ~ Beta(x+a, n-x+b), x | theta ~
      Binomial(n, theta); canonical rho_j from the exact Beta-integral oracle.
    * ``gamma_poisson(x0, lam)``: mean m ~ Gamma(lam*x0, rate lam), x | m ~
      Poisson(m); rho_n = (1+lam)^(-n/2).
    * ``gauss_gauss(x0, lam)``: theta ~ N(x0, 1/lam), x | theta ~ N(theta, 1);
      rho_n = (1+lam)^(-n/2).
    * ``kibble_gamma(q, r)``: bivariate gamma with rho_n = r^n, sampled by the
      latent-count coupling validated against the Laplace transform.
    """
    if kind == "beta_binomial":
        n, a, b = int(params["n"]), params["a"], params["b"]
        seq = lc.seq_beta_binomial(n, a, b)
        return ConjugateModel(kind, (n, Fraction(a), Fraction(b)),
                              me.beta_binomial_measure(n, a, b), me.beta_measure(a, b), seq)
    if kind == "gamma_poisson":
        x0, lam = float(params["x0"]), float(params["lam"])
        if x0 <= 0 or lam <= 0:
            raise UnsupportedModelError("gamma_poisson needs x0 > 0 and lam > 0")
        r = lam * x0
        t = 1.0 / math.sqrt(1.0 + lam)
        N = min(op.DEGREE_CAP, 20)
        seq = lc.LancasterSequence(
            tuple(t ** n for n in range(N + 1)),
            (me.negative_binomial_measure(1.0 / (1.0 + lam), r),
             me.gamma_scaled_measure(r, lam)),
            provenance="gamma_poisson")
        return ConjugateModel(kind, (x0, lam), seq.margins[0], seq.margins[1], seq)
    if kind == "gauss_gauss":
        x0, lam = float(params["x0"]), float(params["lam"])
        if lam <= 0:
            raise UnsupportedModelError("gauss_gauss needs lam > 0")
        t = 1.0 / math.sqrt(1.0 + lam)
        N = min(op.DEGREE_CAP, 20)
        seq = lc.LancasterSequence(
            tuple(t ** n for n in range(N + 1)),
            (me.gaussian_loc_scale_measure(x0, 1.0 + 1.0 / lam),
             me.gaussian_loc_scale_measure(x0, 1.0 / lam)),
            provenance="gauss_gauss")
        return ConjugateModel(kind, (x0, lam), seq.margins[0], seq.margins[1], seq)
    if kind == "kibble_gamma":
        q, r = float(params["q"]), float(params["r"])
        model = lc.KibbleMoranModel(q, r)
        N = min(op.DEGREE_CAP, 20)
        seq = lc.LancasterSequence(tuple(r ** n for n in range(N + 1)), model.margins,
                                   provenance="kibble_gamma")
        return ConjugateModel(kind, (q, r), model.margins[0], model.margins[1], seq)
    raise UnsupportedModelError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# chain simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainTrace:
    """x-states of one Gibbs run; reproducible from (model, x0, seed, steps)."""

    states: np.ndarray = field(compare=False)
    x0: float
    seed: int
    steps: int
    model: ConjugateModel = field(compare=False)
    generator_id: str = GENERATOR_ID

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,x\n")
        for i, v in enumerate(self.states):
            buf.write(f"{i},{format_real(float(v))}\n")
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"model": self.model.describe(), "seed": self.seed,
                "steps": self.steps, "x0": format_real(self.x0),
                "generator": self.generator_id}


def run_x_chain(model: ConjugateModel, x0: float, steps: int, seed: int) -> ChainTrace:
    """Alternate y ~ K(x, .) and x' ~ L(y, .), recording the x-states."""
    if model.kind not in MODEL_KINDS:
        raise UnsupportedModelError(model.kind)
    lo, hi = model.marginal.support
    if not (lo <= x0 <= hi):
        raise ValueError(f"x0={x0} outside the support of {model.marginal.name}")
    rng = _rng(seed)
    states = np.empty(steps + 1)
    states[0] = x = x0
    for i in range(1, steps + 1):
        y = model.sample_y_given_x(rng, x)
        x = model.sample_x_given_y(rng, y)
        states[i] = x
    return ChainTrace(states, float(x0), int(seed), int(steps), model)


# ---------------------------------------------------------------------------
# exact transition operator (finite state space)
# ---------------------------------------------------------------------------

def exact_transition_matrix(model: ConjugateModel):
    """Exact x-chain kernel k(x, x') for the finite-support model.

    Rows are Beta-integral compositions evaluated in rational arithmetic:

        k(x, x') = C(n, x') (x+a)_{x'} (n-x+b)_{n-x'} / (n+a+b)_n.

    Returns (float matrix, Fraction matrix); rows sum to one exactly and the
    beta-mixed binomial marginal is exactly stationary.
    """
    if model.kind != "beta_binomial":
        raise UnsupportedModelError("exact transition matrix needs a finite marginal")
    n, a, b = model.params
    denom = pochhammer(a + b + n, n)
    K = [[Fraction(math.comb(n, xp)) * pochhammer(x + a, xp) * pochhammer(n - x + b, n - xp)
          / denom for xp in range(n + 1)] for x in range(n + 1)]
    for row in K:
        assert sum(row) == 1
    return np.array([[float(v) for v in row] for row in K]), K


# ---------------------------------------------------------------------------
# spectral checks
# ---------------------------------------------------------------------------

def _poisson_poly_expectation(values_at, n, y, cutoff):
    """E[p_n(X') | X' ~ Poisson(y)] for an array of y, by direct pmf summation."""
    ks = np.arange(cutoff + 1)
    pv = values_at(ks.astype(float), n)
    y = np.atleast_1d(y)
    with np.errstate(divide="ignore"):
        lpmf = ks[None, :] * np.log(np.maximum(y, 1e-300))[:, None] - y[:, None] \
            - gammaln(ks + 1)[None, :]
    return np.exp(lpmf) @ pv


def spectral_eigencheck(model: ConjugateModel, n: int, resolution: int = 64) -> float:
    """max_x |(T p_n)(x) - rho_n^2 p_n(x)| over a grid in the stationary bulk.

    Finite model: exact matrix action (the residual is rational zero, the
    returned float is the roundoff of the verification).  Continuous/countable
    models: nested quadrature, outer over the y-posterior Gauss rule, inner
    over the x'-conditional (pmf summation or a Gauss rule).  Grid points
    with stationary mass below 1e-12 are excluded: orthonormal values there
    exceed what double precision can verify.
    """
    seq = model.sequence
    if n > seq.max_degree:
        raise op.DegreeError(f"degree {n} exceeds the model sequence ({seq.max_degree})")
    ev = seq.eigenvalues()[n]
    if model.kind == "beta_binomial":
        nn, a, b = model.params
        _, K = exact_transition_matrix(model)
        rec = model.basis(max(n, 1))
        polys = op.monic_coefficients(rec, n, exact=True)
        pin = polys[n]
        lam_exact = abs(seq.rho_sq_exact[n])
        resid = []
        for x in range(nn + 1):
            tv = sum(K[x][xp] * sum(c * Fraction(xp) ** i for i, c in enumerate(pin))
                     for xp in range(nn + 1))
            resid.append(tv - lam_exact * sum(c * Fraction(x) ** i for i, c in enumerate(pin)))
        if any(r != 0 for r in resid):
            # monic residual -> orthonormal scale
            return max(abs(float(r)) for r in resid) * op.leading_coeff(rec, n)[0]
        return 0.0
    if model.kind == "gamma_poisson":
        x0, lam = model.params
        r = lam * x0
        rec = model.basis(max(n, 1))
        pmf = np.array([float(m) for _, m in model.marginal.atoms])
        pts = np.array([float(k) for k, _ in model.marginal.atoms])
        keep = pmf >= 1e-12
        grid = pts[keep][:resolution]
        values_at = lambda xs, d: op.orthonormal_table(rec, xs, max(d, 1))[:, d]
        out = np.empty_like(grid)
        m_nodes = n + 3
        for i, x in enumerate(grid):
            post = op.recurrence(me.gamma_scaled_measure(x + r, 1.0 + lam), m_nodes)
            ynodes, yw = op.quadrature(post, m_nodes)
            cutoff = int(ynodes.max() + 20 * math.sqrt(ynodes.max() + 1) + 60)
            out[i] = yw @ _poisson_poly_expectation(values_at, n, ynodes, cutoff)
        return float(np.abs(out - ev * values_at(grid, n)).max())
    if model.kind == "gauss_gauss":
        x0, lam = model.params
        rec = model.basis(max(n, 1))
        mrec = op.recurrence(model.marginal, op.DEGREE_CAP)
        gx, gw = op.quadrature(mrec, min(resolution, op.DEGREE_CAP + 1))
        keep = gw >= 1e-12
        grid = gx[keep]
        m_nodes = n + 3
        base = op.recurrence(me.gaussian_measure(), max(m_nodes, 1))
        hn, hw = op.quadrature(base, m_nodes)
        values_at = lambda xs, d: op.orthonormal_table(rec, xs, max(d, 1))[:, d]
        out = np.empty_like(grid)
        sd_post = math.sqrt(1.0 / (1.0 + lam))
        for i, x in enumerate(grid):
            mu_post = (lam * x0 + x) / (1.0 + lam)
            thetas = mu_post + sd_post * hn
            inner = np.array([hw @ values_at(th + hn, n) for th in thetas])
            out[i] = hw @ inner
        return float(np.abs(out - ev * values_at(grid, n)).max())
    raise UnsupportedModelError(
        f"{model.kind}: no eigencheck (its validation oracle is the Laplace transform)")


@dataclass(frozen=True)
class DecayFit:
    rate: float
    ci_low: float
    ci_high: float
    acf: Tuple[float, ...]
    lags_used: int
    note: str = ""

    def to_json_dict(self) -> dict:
        return {"rate": format_real(self.rate),
                "ci": [format_real(self.ci_low), format_real(self.ci_high)],
                "acf": {str(i + 1): format_real(v) for i, v in enumerate(self.acf)},
                "lags_used": self.lags_used, "note": self.note}


def autocorrelation_vs_spectrum(trace: ChainTrace, n: int, max_lag: int,
                                basis: Optional[RecurrenceCoeffs] = None) -> DecayFit:
    """Fit the decay of the autocorrelation of p_n(X_t) and report the rate.

    The log-autocorrelations over the usable lags (above the Monte Carlo
    noise floor) are fit by least squares; exp(slope) estimates the
    eigenvalue rho_n^2.
    """
    T = trace.steps
    if T < 100 * max_lag:
        raise ValueError(f"trace length {T} < 100 * max_lag")
    rec = basis if basis is not None else trace.model.basis(max(n, 1))
    f = op.orthonormal_table(rec, trace.states, max(n, 1))[:, n]
    f = f - f.mean()
    var = float(f @ f) / len(f)
    acf = np.array([float(f[l:] @ f[:-l]) / ((len(f) - l) * var) for l in range(1, max_lag + 1)])
    floor = 4.0 / math.sqrt(T)
    usable = np.where(acf > floor)[0]
    if len(usable) == 0:
        return DecayFit(0.0, 0.0, float(floor), tuple(acf), 0,
                        note="autocorrelation indistinguishable from 0 (independence)")
    lags = usable + 1.0
    ly = np.log(acf[usable])
    if len(usable) == 1:
        rate = float(acf[0])
        se = floor
        return DecayFit(rate, rate - 2 * se, rate + 2 * se, tuple(acf), 1)
    A = np.vstack([np.ones_like(lags), lags]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope = coef[1]
    dof = max(len(lags) - 2, 1)
    s2 = float(res[0]) / dof if len(res) else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    se = math.sqrt(max(cov[1, 1], 1e-30)) + floor / max(acf[usable][-1], floor)
    rate = math.exp(slope)
    return DecayFit(float(rate), float(rate * math.exp(-2 * se)),
                    float(rate * math.exp(2 * se)), tuple(acf), len(usable))


def chisq_decay_bound(seq: lc.LancasterSequence, basis: RecurrenceCoeffs, x: float,
                      ell: int, N: Optional[int] = None) -> float:
    """Truncated chi-square distance bound sum_n rho_n^(4 ell) p_n(x)^2 after
    ell x-chain steps started at x; nonincreasing in ell."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if N is None:
        N = min(seq.max_degree, basis.max_degree)
    N = min(N, seq.max_degree, basis.max_degree)
    pv = op.orthonormal_table(basis, x, N)[0]
    rho = np.asarray(seq.rho[: N + 1])
    return float(np.sum((rho[1:] ** (4 * ell)) * pv[1:] ** 2))
