"""Triple-product kernel K(x, y, z) = sum_n p_n(x) p_n(y) p_n(z) / p_n(x0).

Nonnegativity of this kernel identifies the extreme diagonal-expansion
sequences rho_n = p_n(z) / p_n(x0).  For finite discrete systems the series
is a finite sum and verdicts are exact.  For continuous measures the raw
partial sums oscillate (the terms decay only algebraically), so verdict
paths evaluate spectrally windowed partial sums: an exponential filter of
order 2s applied at several truncations, declared stabilized only when the
local spread and a dyadic half-truncation agree.  Raw partial sums remain
available for diagnostics.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from . import lancaster as lc
from . import measures as me
from . import orthopoly as op
from .measures import MeasureSpec
from .orthopoly import RecurrenceCoeffs, format_real

__all__ = [
    "KernelSpec",
    "PositivityReport",
    "SeriesResult",
    "ResourceBudgetError",
    "series_K",
    "jacobi_delta",
    "jacobi_Ka",
    "jacobi_Ka_constant",
    "extremal_sigma_z",
    "elliptical_contour_check",
    "positivity_scan",
    "default_kernel_spec",
]

FILTER_ALPHA = 36.0       # window value at the cut is exp(-36) ~ 2e-16
FILTER_ORDER = 4          # exponential filter of order 2s = 8
DEFAULT_TRUNCATION = 400  # continuous families need a deep window for 1e-6 bands
STAB_TOL = 1e-6


class ResourceBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Measure, orthonormal basis, normalization point and truncation order."""

    measure: MeasureSpec
    basis: RecurrenceCoeffs
    x0: float
    truncation: int
    finite: bool = False

    def __post_init__(self):
        vals = op.orthonormal_table(self.basis, self.x0, self.truncation)[0]
        if np.any(vals <= 0):
            bad = int(np.argmax(vals <= 0))
            raise ValueError(f"p_{bad}(x0={self.x0}) <= 0; kernel is ill-posed")

    def p_at_x0(self) -> np.ndarray:
        return op.orthonormal_table(self.basis, self.x0, self.truncation)[0]


def default_kernel_spec(measure: MeasureSpec, truncation: Optional[int] = None) -> KernelSpec:
    """Kernel spec with the family's conventional normalization point.

    x0 = 1 for the symmetric Jacobi system, the rightmost support point for
    the finite discrete systems, and the right endpoint for the tree
    (Cartier-Dunau) system, where the bound |p_n(x)| <= p_n(x0) is only
    spot-checked on the scan grid, not asserted.
    """
    fam = measure.family
    finite = measure.kind == "discrete" and fam in ("binomial", "beta_binomial")
    if finite:
        n_atoms = len(measure.atoms)
        trunc = n_atoms - 1 if truncation is None else min(truncation, n_atoms - 1)
        x0 = float(max(x for x, _ in measure.atoms))
    elif fam in ("jacobi_symmetric", "cartier_dunau"):
        trunc = DEFAULT_TRUNCATION if truncation is None else truncation
        x0 = 1.0 if fam == "jacobi_symmetric" else measure.support[1]
    else:
        trunc = DEFAULT_TRUNCATION if truncation is None else truncation
        x0 = measure.support[1]
        if not math.isfinite(x0):
            raise ValueError(f"no conventional normalization point for {fam}")
    # closed-form recurrences are cheap at any depth; the degree cap guards
    # only the moment-oracle verification path
    basis = op.recurrence(measure, trunc) if trunc <= op.DEGREE_CAP else _deep_recurrence(measure, trunc)
    return KernelSpec(measure, basis, x0, trunc, finite=finite)


def _deep_recurrence(measure: MeasureSpec, N: int) -> RecurrenceCoeffs:
    from .orthopoly import _fast_path
    al, be = _fast_path(measure, N)
    return RecurrenceCoeffs(tuple(float(a) for a in al), tuple(float(b) for b in be),
                            measure.family, measure.params, measure.name, "fast_path")


@dataclass(frozen=True)
class SeriesResult:
    """Raw partial sums plus the windowed value used for verdicts."""

    partial_sums: Tuple[float, ...]
    smoothed: float
    smoothed_band: float
    stabilized: bool

    @property
    def value(self) -> float:
        return self.smoothed


def _window(M: int, s: int = FILTER_ORDER, alpha: float = FILTER_ALPHA) -> np.ndarray:
    n = np.arange(M + 1)
    return np.exp(-alpha * (n / (M + 1.0)) ** (2 * s))


def _smoothed_stack(terms: np.ndarray, N: int, finite: bool):
    """Windowed sums at truncations N-4..N and N//2; terms shape (npts, N+1)."""
    if finite:
        s = terms.sum(axis=1)
        return s, np.zeros_like(s), np.ones(s.shape, dtype=bool)
    stack = []
    for M in range(max(N - 4, 0), N + 1):
        stack.append(terms[:, : M + 1] @ _window(M))
    stack = np.array(stack)
    half = terms[:, : N // 2 + 1] @ _window(N // 2)
    band = stack.max(axis=0) - stack.min(axis=0)
    ref = np.maximum(np.abs(stack[-1]), 1.0)
    stab = (band < STAB_TOL * ref) & (np.abs(stack[-1] - half) < STAB_TOL * ref)
    return stack[-1], band, stab


def series_K(spec: KernelSpec, x: float, y: float, z: float) -> SeriesResult:
    """Partial sums S_0..S_N of the kernel series at one point."""
    N = spec.truncation
    rec = spec.basis
    px = op.orthonormal_table(rec, x, N)[0]
    py = op.orthonormal_table(rec, y, N)[0]
    pz = op.orthonormal_table(rec, z, N)[0]
    terms = px * py * pz / spec.p_at_x0()
    sums = np.cumsum(terms)
    val, band, stab = _smoothed_stack(terms[None, :], N, spec.finite)
    return SeriesResult(tuple(float(v) for v in sums), float(val[0]), float(band[0]),
                        bool(stab[0]))


def jacobi_delta(x: float, y: float, z: float) -> float:
    """The symmetric quadratic 1 - x^2 - y^2 - z^2 + 2xyz."""
    return 1.0 - x * x - y * y - z * z + 2.0 * x * y * z


def jacobi_Ka_constant(a: float) -> float:
    """Normalizing constant of the symmetric-Jacobi kernel closed form.

    Calibrated so the kernel integrates to one against both margins; the
    separable quadrature evaluates to Gamma(a)^2 / (Gamma(a+1/2) Gamma(a-1/2)),
    which the tests cross-check numerically.
    """
    if a <= 0.5:
        raise ValueError("closed form requires a > 1/2 (a = 1/2 is the open boundary)")
    return gamma_fn(a) ** 2 / (gamma_fn(a + 0.5) * gamma_fn(a - 0.5))


def jacobi_Ka(a: float, x, y, z: float):
    """Closed form of the kernel for the symmetric beta weight on (-1, 1).

    Zero outside the ellipse-bounded region where the quadratic is positive;
    inside it equals C(a) [(1-x^2)(1-y^2)(1-z^2)]^(1-a) Delta^(a-3/2).
    Requires a >= 1/2 (below that, positivity is an open problem and no
    closed form is implemented).
    """
    if a < 0.5:
        raise ValueError("parameter below 1/2: positivity range not covered")
    C = jacobi_Ka_constant(a)
    xs = np.asarray(x, float)
    ys = np.asarray(y, float)
    d = 1.0 - xs ** 2 - ys ** 2 - z ** 2 + 2.0 * xs * ys * z
    inside = d > 0
    factor = np.where(inside, (1.0 - xs ** 2) * (1.0 - ys ** 2) * (1.0 - z ** 2), 1.0)
    out = np.where(inside, C * factor ** (1.0 - a) * np.where(inside, d, 1.0) ** (a - 1.5), 0.0)
    return float(out) if np.ndim(out) == 0 else out


class _SigmaZModel:
    """Quadrature model for the extremal kernel pair, used by estimate_rho."""

    def __init__(self, a: float, z: float, m_nodes: int = 64):
        self.a, self.z = a, z
        mu = me.jacobi_symmetric_measure(a)
        self.margins = (mu, mu)
        self._m = m_nodes

    def bases(self, n):
        rec = op.recurrence(self.margins[0], min(max(n, 1), op.DEGREE_CAP))
        return rec, rec

    def quadrature_grid(self, n):
        a, z = self.a, self.z
        rec_x = op.recurrence(me.jacobi_symmetric_measure(a), op.DEGREE_CAP)
        nx, wx = op.quadrature(rec_x, min(self._m, op.DEGREE_CAP + 1))
        # Delta factorizes on y = x z + u sqrt((1-x^2)(1-z^2)); the u-marginal
        # is the symmetric beta with parameter a - 1/2
        rec_u = op.recurrence(me.jacobi_symmetric_measure(a - 0.5), op.DEGREE_CAP)
        nu, wu = op.quadrature(rec_u, min(self._m, op.DEGREE_CAP + 1))
        X, U = np.meshgrid(nx, nu, indexing="ij")
        Y = X * z + U * np.sqrt((1 - X ** 2) * (1 - z * z))
        W = np.outer(wx, wu)
        return X.ravel(), Y.ravel(), W.ravel()


def extremal_sigma_z(a: float, z: float, N: int = 20) -> lc.BivariateLancaster:
    """Extreme pair with rho_n = p_n(z) / p_n(1) on symmetric-Jacobi margins.

    Its density against the product margins is the closed-form kernel at
    level z.
    """
    if not -1.0 < z < 1.0:
        raise ValueError("z must lie in (-1, 1)")
    if a < 0.5:
        raise ValueError("parameter below 1/2: positivity range not covered")
    mu = me.jacobi_symmetric_measure(a)
    N = min(N, op.DEGREE_CAP)
    rec = op.recurrence(mu, N)
    vals = op.orthonormal_table(rec, np.array([z, 1.0]), N)
    rho = tuple(float(v) for v in vals[0] / vals[1])
    seq = lc.LancasterSequence(rho, (mu, mu), provenance=f"extremal_jacobi(z={z})")
    return lc.BivariateLancaster(seq, (rec, rec), N)


def sigma_z_model(a: float, z: float) -> _SigmaZModel:
    return _SigmaZModel(a, z)


def elliptical_contour_check(a: float, z: float, pairs: int = 1000, seed: int = 0,
                             margin: float = 0.05) -> float:
    """Max relative spread of the Lebesgue density over equal-Delta pairs.

    The planar density of the extremal pair depends on (x, y) only through
    the quadratic Delta, so two interior points on the same level set must
    carry identical densities up to rounding.  Points within ``margin`` of
    the boundary level are excluded.
    """
    if a < 0.5 or not -1 < z < 1:
        raise ValueError("need a >= 1/2 and z in (-1, 1)")
    rng = np.random.default_rng(np.random.Philox(seed))
    mu = me.jacobi_symmetric_measure(a)
    dens = mu.density
    worst = 0.0
    dmax = 1.0 - z * z  # Delta at (x, y) = (z t, t)-style interior max is <= 1 - z^2
    made = 0
    while made < pairs:
        level = rng.uniform(margin, dmax - margin)
        pts = []
        for _ in range(64):
            x = rng.uniform(-1, 1)
            rad = (1 - x * x) * (1 - z * z) - level
            if rad <= 0:
                continue
            y = x * z + rng.choice([-1.0, 1.0]) * math.sqrt(rad)
            if -1 < y < 1:
                pts.append((x, y))
            if len(pts) == 2:
                break
        if len(pts) < 2:
            continue
        (x1, y1), (x2, y2) = pts
        f = []
        for xx, yy in pts:
            f.append(jacobi_Ka(a, xx, yy, z) * float(dens(xx)) * float(dens(yy)))
        rel = abs(f[0] - f[1]) / max(abs(f[0]), abs(f[1]), 1e-300)
        worst = max(worst, rel)
        made += 1
    return worst


@dataclass(frozen=True)
class PositivityReport:
    """Scan outcome over a cubic grid.

    A negative witness must be stabilized (windowed spread and dyadic check
    both below tolerance), never a transient oscillation of the raw series.
    """

    grid_per_axis: int
    truncation: int
    min_stabilized: float
    stabilization_fraction: float
    witnesses: Tuple[Tuple[float, float, float, float], ...]
    verdict: str
    x0_bound_ok: bool
    notes: Tuple[str, ...] = ()
    grid_points: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    grid_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    grid_stabilized: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def to_csv(self) -> str:
        """Flattened grid dump (x, y, z, S_N, stabilized), plot-ready."""
        if self.grid_values is None:
            raise ValueError("report carries no grid values")
        g = self.grid_points
        n = len(g)
        lines = ["x,y,z,S_N,stabilized"]
        for flat, (v, st) in enumerate(zip(self.grid_values, self.grid_stabilized)):
            i, j, k = np.unravel_index(flat, (n, n, n))
            lines.append(f"{format_real(g[i])},{format_real(g[j])},{format_real(g[k])},"
                         f"{format_real(v)},{int(st)}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "grid_per_axis": self.grid_per_axis,
            "truncation": self.truncation,
            "min_stabilized": format_real(self.min_stabilized),
            "stabilization_fraction": format_real(self.stabilization_fraction),
            "witnesses": [[format_real(v) for v in w] for w in self.witnesses],
            "verdict": self.verdict,
            "x0_bound_ok": self.x0_bound_ok,
            "notes": list(self.notes),
        }


def _scan_grid(spec: KernelSpec, grid_per_axis: int) -> np.ndarray:
    if spec.finite:
        return np.array([float(x) for x, _ in spec.measure.atoms])
    lo, hi = spec.measure.support
    return np.linspace(lo, hi, grid_per_axis + 2)[1:-1]


def positivity_scan(spec: KernelSpec, grid_per_axis: int = 50,
                    neg_tol: float = 1e-6, threads: Optional[int] = None) -> PositivityReport:
    """Evaluate stabilized kernel values on the cubic grid and classify.

    Finite discrete systems are summed exactly.  Grid cells are evaluated
    independently and reduced in a fixed order, so the report does not
    depend on the thread count (capped by LANCASTER_LAB_THREADS).
    """
    if grid_per_axis > 200:
        raise ResourceBudgetError("grid_per_axis capped at 200")
    g = _scan_grid(spec, grid_per_axis)
    N = spec.truncation
    P = op.orthonormal_table(spec.basis, g, N)
    p0 = spec.p_at_x0()
    bound_ok = bool(np.all(np.abs(P) <= np.abs(p0)[None, :] + 1e-9))

    if threads is None:
        threads = int(os.environ.get("LANCASTER_LAB_THREADS", "1"))

    def windowed(M):
        w = (_window(M) if not spec.finite else np.ones(M + 1)) / p0[: M + 1]
        A = P[:, : M + 1] * w
        B = P[:, : M + 1]
        return _einsum_chunked(A, B, threads)

    if spec.finite:
        S = windowed(N)
        stab = np.ones(S.shape, dtype=bool)
        band = np.zeros_like(S)
        val = S
    else:
        stack = [windowed(M) for M in range(max(N - 4, 0), N + 1)]
        half = windowed(N // 2)
        arr = np.array(stack)
        val = arr[-1]
        band = arr.max(axis=0) - arr.min(axis=0)
        ref = np.maximum(np.abs(val), 1.0)
        stab = (band < STAB_TOL * ref) & (np.abs(val - half) < STAB_TOL * ref)

    frac = float(stab.mean())
    stab_vals = val[stab]
    min_stab = float(stab_vals.min()) if stab_vals.size else math.nan
    witnesses = []
    if stab_vals.size:
        neg = stab & (val < -neg_tol)
        n_pts = len(g)
        for flat in np.flatnonzero(neg)[:16]:
            i, j, k = np.unravel_index(int(flat), (n_pts, n_pts, n_pts))
            witnesses.append((float(g[i]), float(g[j]), float(g[k]), float(val[int(flat)])))
    if not stab_vals.size:
        verdict = "inconclusive"
    elif witnesses:
        verdict = "negative-witness"
    elif frac >= 0.5:
        verdict = "nonnegative-on-grid"
    else:
        verdict = "inconclusive"
    notes = []
    if not bound_ok:
        notes.append("normalization bound |p_n(x)| <= p_n(x0) fails somewhere on the grid")
    return PositivityReport(len(g), N, min_stab, frac, tuple(witnesses), verdict,
                            bound_ok, tuple(notes), grid_points=g, grid_values=val,
                            grid_stabilized=stab)


def _einsum_chunked(A: np.ndarray, B: np.ndarray, threads: int) -> np.ndarray:
    """sum_n A[i,n] B[j,n] B[k,n] flattened to (i*m+j)*m+k, chunked over i."""
    m = A.shape[0]
    chunks = np.array_split(np.arange(m), max(1, min(threads, m)))

    def work(rows):
        return np.einsum("in,jn,kn->ijk", A[rows], B, B, optimize=True)

    if threads <= 1 or len(chunks) == 1:
        out = work(np.arange(m))
        return out.ravel()
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(work, chunks))
    return np.concatenate(parts, axis=0).ravel()
