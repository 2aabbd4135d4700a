import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from twistrmt.errors import DomainError, InterpolationRangeError, PoleError
from twistrmt.specfun import (
    GLAISHER,
    barnes_g_half,
    default_grid,
    h_asymptotic,
    h_residue,
    log_mo_moment,
    mellin_cdf,
    mellin_pdf,
    mo_moment,
    p_o_density,
    polyfit_density,
    small_value_cdf,
)

mpmath.mp.dps = 40


def mp_moment(n, s):
    """Independent product formula in 40-digit arithmetic."""
    s = mpmath.mpmathify(s)
    out = mpmath.power(2, 2 * n * s)
    for j in range(1, n + 1):
        out *= mpmath.gamma(n + j - 1) * mpmath.gamma(s + j - mpmath.mpf(1) / 2)
        out /= mpmath.gamma(j - mpmath.mpf(1) / 2) * mpmath.gamma(s + j + n - 1)
    return out


def quad_moment_n1(s):
    """(1/pi) int_0^pi (2 - 2 cos t)^s dt: theta is uniform for SO(2).

    Written as t^{2s} (2 sin(t/2) / t)^{2s} so the algebraic endpoint
    singularity for s < 0 goes into QUADPACK's weight function.
    """
    smooth = lambda t: (2 * math.sin(t / 2) / t) ** (2 * s) if t > 0 else 1.0
    val, _ = integrate.quad(smooth, 0, math.pi, weight="alg", wvar=(2 * s, 0), epsabs=0, epsrel=1e-12)
    return val / math.pi


# --- moments --------------------------------------------------------------


def test_zeroth_moment_is_one():
    for n in range(1, 33):
        assert mo_moment(n, 0) == 1.0


@pytest.mark.parametrize("s", [-0.4, 0.5, 1, 2])
def test_n1_moment_quadrature(s):
    assert mo_moment(1, s) == pytest.approx(quad_moment_n1(s), rel=1e-10)


def test_known_moment():
    assert mo_moment(1, 1) == pytest.approx(2.0, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 32), st.floats(-0.49, 4.0))
def test_moment_against_high_precision(n, s):
    assert mo_moment(n, s) == pytest.approx(float(mp_moment(n, s)), rel=1e-11)


def test_pole():
    with pytest.raises(PoleError):
        mo_moment(3, -0.5)
    with pytest.raises(PoleError):
        mo_moment(3, -0.7)


def test_log_moment_convex():
    # Hoelder: s -> log E[Lambda^s] is convex.
    s = np.linspace(-0.45, 3, 70)
    for n in (1, 2, 6, 12):
        lm = np.array([log_mo_moment(n, x) for x in s])
        assert np.all(np.diff(lm, 2) > 0)


def test_moment_increasing_beyond_one():
    s = np.linspace(1, 3, 41)
    for n in (1, 2, 6, 12, 24):
        m = np.array([mo_moment(n, x) for x in s])
        assert np.all(np.diff(m) > 0)
    m1 = np.array([mo_moment(1, x) for x in np.linspace(0, 3, 61)])
    assert np.all(np.diff(m1) > 0)


def test_moment_dips_below_one_for_n_ge_2():
    # d/ds M(N, s) at 0 is E[log Lambda] = sum_j (2 log 2 + psi(j - 1/2) - psi(j + N - 1)) < 0.
    from scipy.special import digamma

    for n in (2, 6, 12):
        slope = sum(2 * math.log(2) + digamma(j - 0.5) - digamma(j + n - 1) for j in range(1, n + 1))
        assert slope < 0
        eps = 1e-6
        assert (log_mo_moment(n, eps) - log_mo_moment(n, -eps)) / (2 * eps) == pytest.approx(slope, rel=1e-6)


@pytest.mark.slow
def test_mean_log_value_monte_carlo(batch12):
    eps = 1e-6
    slope = (log_mo_moment(12, eps) - log_mo_moment(12, -eps)) / (2 * eps)
    logs = np.log(batch12.values)
    se = logs.std(ddof=1) / math.sqrt(logs.size)
    assert abs(logs.mean() - slope) <= 3 * se


def test_log_moment_complex_matches_mpmath():
    z = 0.3 + 2.5j
    got = np.exp(log_mo_moment(6, z))
    want = complex(mp_moment(6, mpmath.mpc(0.3, 2.5)))
    assert abs(got - want) <= 1e-11 * abs(want)


# --- residue and Barnes G ------------------------------------------------


def test_h_one():
    assert h_residue(1) == pytest.approx(1 / (2 * math.pi), abs=1e-12)


def _richardson_limit(n):
    # f(e) = e M(N, -1/2 + e) is analytic in e; Richardson over e = 10^-k.
    es = [10.0**-k for k in (2, 3, 4, 5)]
    f = [e * mo_moment(n, -0.5 + e) for e in es]
    r1 = [(10 * f[i + 1] - f[i]) / 9 for i in range(3)]
    r2 = [(100 * r1[i + 1] - r1[i]) / 99 for i in range(2)]
    return r2[-1]


@pytest.mark.parametrize("n", [1, 2, 6, 12])
def test_residue_limit(n):
    assert _richardson_limit(n) == pytest.approx(h_residue(n), rel=1e-6)


@pytest.mark.parametrize("n", [2, 5, 12, 20])
def test_residue_against_mpmath(n):
    # Residue of the product formula: only the j = 1 factor Gamma(s + 1/2) has a pole.
    want = mpmath.limit(lambda e: e * mp_moment(n, -mpmath.mpf(1) / 2 + e), 0)
    assert h_residue(n) == pytest.approx(float(want), rel=1e-11)


def test_barnes_g_half():
    assert barnes_g_half() == pytest.approx(float(mpmath.barnesg(0.5)), rel=1e-14)
    assert barnes_g_half() == pytest.approx(0.6032442, abs=1e-6)
    assert 0 < barnes_g_half() < 1


def test_glaisher_constant():
    assert GLAISHER == pytest.approx(float(mpmath.glaisher), rel=1e-15)


def test_barnes_g_consistency_with_delta():
    val = (8 / 3) * 2 ** (-7 / 8) * barnes_g_half() * math.pi**-0.25 * math.sqrt(0.185116)
    assert val == pytest.approx(0.2834620, abs=1e-5)


def test_h_asymptotic_ratio_n12():
    ratio = h_residue(12) / h_asymptotic(12)
    assert 0.95 < ratio < 1.05
    # Regression value frozen from this implementation.
    assert ratio == pytest.approx(0.9761638100881104, rel=1e-10)


def test_h_asymptotic_ratio_approaches_one():
    gaps = [abs(h_residue(n) / h_asymptotic(n) - 1) for n in (2, 4, 8, 16, 32)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


# --- small-value law ------------------------------------------------------


def test_small_value_zero():
    assert small_value_cdf(6, 0.0) == 0.0


def test_small_value_formula():
    assert small_value_cdf(12, 1e-4) == pytest.approx(2 * 1e-2 * h_residue(12), rel=1e-14)


def test_small_value_vs_inversion():
    law = small_value_cdf(12, 1e-3)
    inv = float(mellin_cdf(12, np.array([1e-3]))[0])
    assert abs(law - inv) / inv <= 0.05


# --- density tables -------------------------------------------------------


def test_density_normalisation(density12):
    assert abs(density12.normalization_defect) <= 1e-6
    assert np.all(density12.density >= 0)
    assert np.all(np.diff(density12.cdf) >= 0)
    assert density12.cdf[-1] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n", [3, 6, 20])
def test_density_normalisation_other_n(n):
    t = p_o_density(n)
    assert abs(t.normalization_defect) <= 1e-6
    assert t.cdf[-1] == pytest.approx(1.0, abs=1e-6)


def test_small_y_law_in_table(density12):
    h = h_residue(12)
    assert density12.pdf(1e-4) * 1e-2 == pytest.approx(h, rel=0.02)
    y = density12.grid[density12.grid <= 1e-3]
    ratio = density12.density[density12.grid <= 1e-3] * np.sqrt(y) / h
    assert np.all(np.abs(ratio - 1) <= 0.02)


@pytest.mark.parametrize("n,s", [(6, 1), (6, 2), (12, 1), (12, 2), (12, 0.5)])
def test_table_moments(n, s):
    """int y^s P_O dy over the table reproduces the closed-form moment."""
    t = p_o_density(n)
    y, p = t.grid, t.density
    val = np.trapezoid(p * y ** (s + 1), np.log(y))
    assert val == pytest.approx(mo_moment(n, s), rel=1e-5)


def test_pdf_and_cdf_columns_consistent(density12):
    y = density12.grid
    mass = np.concatenate([[0.0], integrate.cumulative_trapezoid(density12.density * y, np.log(y))])
    mass += density12.cdf[0]
    sel = y > 1e-3
    np.testing.assert_allclose(mass[sel], density12.cdf[sel], atol=2e-6)


def test_n1_closed_form_against_quadrature():
    y = np.array([0.1, 1.0, 2.0, 3.9])
    pdf = mellin_pdf(1, y)
    np.testing.assert_allclose(pdf, 1 / (math.pi * np.sqrt(y * (4 - y))), rtol=1e-12)


def test_generic_inversion_n2_vs_quadrature():
    """N=2 CDF by direct quadrature over the Weyl density (cos a - cos b)^2 on [0, pi]^2."""
    y0 = 3.0

    def b_limit(a):
        s = 16 * math.sin(a / 2) ** 2
        return math.pi if s <= y0 else 2 * math.asin(math.sqrt(y0 / s))

    weyl = lambda b, a: (math.cos(a) - math.cos(b)) ** 2
    total = integrate.dblquad(weyl, 0, math.pi, 0, math.pi, epsabs=1e-13)[0]
    inside = integrate.dblquad(weyl, 0, math.pi, 0, b_limit, epsabs=1e-13)[0]
    assert float(mellin_cdf(2, np.array([y0]))[0]) == pytest.approx(inside / total, abs=1e-8)


def test_support_warning(caplog):
    with caplog.at_level("WARNING"):
        t = p_o_density(2, np.array([1.0, 10.0, 16.0, 20.0]))
    assert "support" in caplog.text
    assert t.density[-1] == 0 and t.cdf[-1] == 1.0


def test_grid_validation():
    with pytest.raises(DomainError):
        p_o_density(4, np.array([1.0, 0.5]))
    with pytest.raises(DomainError):
        p_o_density(4, np.array([-1.0, 0.5]))


def test_interpolation_range(density12):
    with pytest.raises(InterpolationRangeError):
        density12.pdf(1e-20)
    assert density12.cdf_at(1e-20) == pytest.approx(small_value_cdf(12, 1e-20))
    assert density12.cdf_at(1e9) == 1.0


def test_quantile_inverts_cdf(density12):
    p = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(density12.cdf_at(density12.quantile(p)), p, atol=1e-6)


def test_default_grid():
    g = default_grid(5, 100)
    assert g[0] == 1e-12 and g[-1] < 4**5 and np.all(np.diff(g) > 0)


def test_export(tmp_path, density12):
    density12.to_csv(tmp_path / "d.csv")
    density12.to_json(tmp_path / "d.json")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "y,pdf,cdf"
    import json

    meta = json.loads((tmp_path / "d.json").read_text())
    assert {"N", "contour", "truncation", "normalization_defect"} <= set(meta)
    arr = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(arr[:, 1], density12.density)


# --- Monte Carlo checks ---------------------------------------------------


@pytest.mark.slow
def test_histogram_against_table(big_batch12, density12):
    """100 equiprobable bins; every bin within 3 Monte Carlo standard errors."""
    edges = density12.quantile(np.linspace(0, 1, 101)[1:-1])
    edges = np.concatenate([[0.0], edges, [np.inf]])
    counts, _ = np.histogram(big_batch12.values, bins=edges)
    n = big_batch12.values.size
    p = np.diff(density12.cdf_at(np.where(np.isinf(edges), 1e30, np.maximum(edges, 1e-300))))
    se = np.sqrt(p * (1 - p) / n)
    z = np.abs(counts / n - p) / se
    assert z.max() <= 3.0, f"max |z| = {z.max():.2f} at bin {z.argmax()}"


@pytest.mark.slow
def test_small_value_law_n6_monte_carlo(big_batch6):
    rho = (0.01 / (2 * h_residue(6))) ** 2
    hits = np.mean(big_batch6.values <= rho)
    se = math.sqrt(0.01 * 0.99 / big_batch6.values.size)
    assert small_value_cdf(6, rho) == pytest.approx(0.01, rel=1e-12)
    assert abs(hits - 0.01) <= 3 * se


@pytest.mark.slow
def test_polyfit_fallback_close_to_inversion(batch12, density12):
    est = polyfit_density(batch12.values)
    y = density12.quantile(np.linspace(0.1, 0.9, 9))
    np.testing.assert_allclose(est(y), density12.pdf(y), rtol=0.1)
