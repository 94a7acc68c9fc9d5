import json
import math
from fractions import Fraction

import numpy as np
import pytest

import lancaster_lab as ll
from lancaster_lab import measures as me, orthopoly as op


FAMILIES = {
    "gaussian": lambda: me.gaussian_measure(),
    "poisson": lambda: me.poisson_measure(Fraction(3, 2)),
    "binomial": lambda: me.binomial_measure(24, Fraction(1, 3)),
    "negative_binomial": lambda: me.negative_binomial_measure(Fraction(1, 3), Fraction(5, 2)),
    "gamma": lambda: me.gamma_measure(Fraction(27, 10)),
    "hyperbolic": lambda: me.hyperbolic_measure(2),
    "jacobi_symmetric": lambda: me.jacobi_symmetric_measure(Fraction(3, 2)),
    "beta_binomial": lambda: me.beta_binomial_measure(22, Fraction(3, 2), Fraction(1)),
    "cartier_dunau": lambda: me.cartier_dunau_measure(2),
}


def test_moments_of_two_point_uniform():
    m = me.beta_binomial_measure(1, 1, 1)  # atoms {0: 1/2, 1: 1/2}
    assert op.moments(m, 2).values == (1, Fraction(1, 2), Fraction(1, 2))


def test_moment_zero_is_total_mass():
    for make in FAMILIES.values():
        assert float(op.moments(make(), 0).values[0]) == 1.0


def test_gaussian_moments():
    assert op.moments(me.gaussian_measure(), 4).values == (1, 0, 1, 0, 3)


def test_moment_order_cap():
    with pytest.raises(op.DegreeError):
        op.moments(me.gaussian_measure(), 41)


def test_hankel_psd_for_true_moments():
    for make in FAMILIES.values():
        ms = op.moments(make(), 12)
        assert ms.hankel_min_eig() > -1e-9


def test_gaussian_oracle_recurrence():
    rec = op.recurrence(me.gaussian_measure(), 2, mode="oracle")
    assert rec.alpha[:2] == (0.0, 0.0)
    assert rec.beta == (1.0, 2.0)
    # p_1(x) = x, p_2(x) = (x^2 - 1)/sqrt(2)
    assert op.eval_orthonormal(rec, 1, 0.7) == pytest.approx(0.7)
    assert op.eval_orthonormal(rec, 2, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert op.eval_orthonormal(rec, 2, 2.0) == pytest.approx(3 / math.sqrt(2))


def test_bernoulli_first_degree():
    rec = op.recurrence(me.beta_binomial_measure(1, 1, 1), 1, mode="oracle")
    for x in (0.0, 0.25, 1.0):
        assert op.eval_orthonormal(rec, 1, x) == pytest.approx(2 * x - 1)


def test_degree_zero_is_one():
    rec = op.recurrence(me.gamma_measure(2), 8)
    assert op.eval_orthonormal(rec, 0, 1.234) == 1.0


def test_degree_out_of_range():
    rec = op.recurrence(me.gamma_measure(2), 4)
    with pytest.raises(op.DegreeError):
        op.eval_orthonormal(rec, 5, 0.0)


def test_discrete_degree_exceeds_support():
    with pytest.raises(op.DegreeError):
        op.recurrence(me.binomial_measure(3, 0.5), 4)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_oracle_matches_fast_path(name):
    m = FAMILIES[name]()
    N = min(10, 21 if m.kind == "continuous" else len(m.atoms) - 1, 10)
    fast = op.recurrence(m, N, mode="fast_path")
    oracle = op.recurrence(m, N, mode="oracle")
    assert np.allclose(fast.alpha, oracle.alpha, atol=1e-9, rtol=0)
    assert np.allclose(fast.beta, oracle.beta, atol=1e-9, rtol=0)


def test_leading_coeff_conventions():
    # n = 0: leading coefficient and c_0 both 1
    rec = op.recurrence(me.hyperbolic_measure(Fraction(2)), 5)
    lead0, c0 = op.leading_coeff(rec, 0)
    assert (lead0, c0) == (1.0, 1.0)
    # hyperbolic: c_n(q) = (q)_n / n!
    _, c1 = op.leading_coeff(rec, 1)
    assert c1 == pytest.approx(2.0)
    _, c3 = op.leading_coeff(rec, 3)
    assert c3 == pytest.approx(float(me.pochhammer(Fraction(2), 3)) / math.factorial(3))
    assert c3 == pytest.approx(4.0)


def test_leading_coeff_is_product_of_betas():
    for name in ("gamma", "jacobi_symmetric", "poisson"):
        rec = op.recurrence(FAMILIES[name](), 12)
        for n in (1, 5, 12):
            lead, _ = op.leading_coeff(rec, n)
            expected = float(np.prod([b ** -0.5 for b in rec.beta[:n]]))
            assert abs(lead - expected) < 1e-10 * abs(expected)


def test_leading_coeff_matches_monic_normalization():
    rec = op.recurrence(me.gamma_measure(Fraction(2)), 8)
    polys = op.monic_coefficients(rec, 5, exact=True)
    lead, _ = op.leading_coeff(rec, 5)
    # orthonormal p_n = monic / sqrt(prod beta): monic leading coeff is 1
    assert polys[5][-1] == 1


def test_quadrature_gaussian_two_nodes():
    rec = op.recurrence(me.gaussian_measure(), 2)
    nodes, wts = op.quadrature(rec, 2)
    assert np.allclose(sorted(nodes), [-1.0, 1.0], atol=1e-14)
    assert np.allclose(wts, [0.5, 0.5], atol=1e-15)


def test_quadrature_single_node_is_mean():
    rec = op.recurrence(me.gamma_measure(3), 2)
    nodes, wts = op.quadrature(rec, 1)
    assert nodes[0] == pytest.approx(3.0)
    assert wts[0] == 1.0


def test_quadrature_uniform_three_nodes_degree_four():
    # symmetric Jacobi a=1 is the uniform law on [-1, 1]; E x^4 = 1/5
    rec = op.recurrence(me.jacobi_symmetric_measure(1), 3)
    nodes, wts = op.quadrature(rec, 3)
    assert abs(float(wts @ nodes ** 4) - 0.2) < 1e-14


def test_quadrature_weights_positive_sum_one():
    for make in FAMILIES.values():
        m = make()
        N = min(12, len(m.atoms) - 1 if m.kind == "discrete" else 12)
        rec = op.recurrence(m, N)
        nodes, wts = op.quadrature(rec, N)
        assert np.all(wts > 0)
        assert abs(wts.sum() - 1.0) < 1e-12


def test_gram_small_battery():
    for name in ("gaussian", "beta_binomial", "cartier_dunau"):
        m = FAMILIES[name]()
        N = 8
        rec = op.recurrence(m, N)
        G = op.gram_matrix(rec, m, N)
        assert np.abs(G - np.eye(N + 1)).max() < 1e-10


def test_gram_poisson_direct_atom_sum():
    # independent of the quadrature path: deep direct summation of the pmf
    # (the polynomial tail needs far more terms than the stored atom list)
    a = 1.5
    rec = op.recurrence(me.poisson_measure(Fraction(3, 2)), 6)
    pts = np.arange(250.0)
    wts = np.exp(-a + pts * math.log(a) - np.array([math.lgamma(k + 1) for k in pts]))
    P = op.orthonormal_table(rec, pts, 6)
    G = (P * wts[:, None]).T @ P
    assert np.abs(G - np.eye(7)).max() < 1e-9


def test_exact_rational_gram_krawtchouk():
    m = me.binomial_measure(6, Fraction(1, 3))
    rec = op.recurrence(m, 6)
    polys = op.monic_coefficients(rec, 6, exact=True)

    def ev(poly, x):
        return sum(c * Fraction(x) ** i for i, c in enumerate(poly))

    for i in range(7):
        for j in range(i):
            s = sum(mass * ev(polys[i], x) * ev(polys[j], x) for x, mass in m.atoms)
            assert s == 0
    for i in range(1, 7):
        s = sum(mass * ev(polys[i], x) ** 2 for x, mass in m.atoms)
        prod = Fraction(1)
        for b in rec.beta_exact[:i]:
            prod *= b
        assert s == prod


def test_beta_endpoint_singularity_gram():
    # a, b in (1/2, 1): integrable endpoint singularities; the rule comes from
    # the recurrence itself, never from a uniform grid
    m = me.beta_measure(Fraction(3, 4), Fraction(4, 5))
    rec = op.recurrence(m, 10)
    G = op.gram_matrix(rec, m, 10)
    assert np.abs(G - np.eye(11)).max() < 1e-9


def test_cartier_dunau_requires_q_at_least_one():
    with pytest.raises(me.MeasureError):
        me.cartier_dunau_measure(0.5)


def test_continuous_densities_normalized():
    for name in ("gaussian", "gamma", "hyperbolic", "jacobi_symmetric", "cartier_dunau"):
        FAMILIES[name]().validate_mass(1e-8)


def test_serialization_roundtrip():
    rec = op.recurrence(me.gamma_measure(2.5), 6)
    d = rec.to_json_dict()
    text = json.dumps(d)
    back = op.RecurrenceCoeffs.from_json_dict(json.loads(text))
    assert back.alpha == rec.alpha
    assert back.beta == rec.beta
    # decimal strings, 17 significant digits
    assert isinstance(d["alpha"][0], str)


def test_oracle_indefinite_detection():
    # corrupt moments: not a moment sequence -> indefinite Hankel
    bad = me.MeasureSpec("discrete", "beta_binomial", (1, Fraction(1), Fraction(1)),
                         "bad", (0.0, 1.0),
                         atoms=((0, Fraction(1, 2)), (1, Fraction(1, 2))))
    rec = op.recurrence(bad, 1, mode="oracle")  # fine at N=1
    with pytest.raises(op.DegreeError):
        op.recurrence(bad, 2, mode="oracle")  # only 2 atoms
