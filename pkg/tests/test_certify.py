import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from packnlp.certify import (
    CertificateError,
    FarkasCertificate,
    SLemmaCertificate,
    best_multiplier,
    body_halfspaces,
    certify_pair,
    farkas_check,
    farkas_from_axis,
    is_sparse,
    positive_support,
    sat_margin,
    simplex_max,
    slemma_check,
    slemma_contains,
    slemma_minors,
)
from packnlp.geometry import Pose2, Pose3, platonic_spec, polygon_constants

from _support import ellipse_margin

# ------------------------------------------------------------------ simplex


def _linprog_max(c, A, b):
    return linprog(-np.asarray(c), A_eq=A, b_eq=b, bounds=[(0, None)] * len(c), method="highs")


def test_simplex_small_known_lp():
    # max x + 2y  s.t.  x + y + s = 4,  x + 3y + u = 6
    c = [1, 2, 0, 0]
    A = [[1, 1, 1, 0], [1, 3, 0, 1]]
    res = simplex_max(c, A, [4, 6])
    assert res.status == "optimal"
    assert res.value == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(res.x[:2], [3, 1])


def test_simplex_infeasible():
    res = simplex_max([1, 1], [[1, 1]], [-1])
    assert res.status == "infeasible"


def test_simplex_unbounded():
    res = simplex_max([1, 0], [[1, -1]], [1])
    assert res.status == "unbounded"


def test_simplex_redundant_rows():
    res = simplex_max([1, 1, 0], [[1, 0, 1], [2, 0, 2]], [1, 2])
    assert res.status == "unbounded"
    res = simplex_max([-1, -1, 0], [[1, 1, 1], [2, 2, 2]], [1, 2])
    assert res.status == "optimal" and res.value == pytest.approx(0.0, abs=1e-12)


def test_simplex_agrees_with_highs_on_random_lps():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(400):
        m, n = rng.integers(1, 5), rng.integers(2, 9)
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        c = rng.normal(size=n)
        ours = simplex_max(c, A, b)
        ref = _linprog_max(c, A, b)
        expected = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
        assert ours.status == expected
        seen.add(expected)
        if expected == "optimal":
            assert ours.value == pytest.approx(-ref.fun, rel=1e-9, abs=1e-9)
            assert np.all(ours.x >= -1e-12)
            assert np.allclose(A @ ours.x, b, atol=1e-9)
    assert seen == {"optimal", "infeasible", "unbounded"}


def test_simplex_degenerate_tie_near_parallel_columns():
    """Captured from a hexagon pose rotated by 3.5e-10: the target is one of the normals."""
    normals = np.array([
        [3.534625925283308e-10, 1.0],
        [0.8660254039611699, 0.4999999996938925],
        [0.8660254036077074, -0.5000000003061074],
        [-3.5346247006365085e-10, -1.0],
        [-0.8660254039611694, -0.4999999996938932],
        [-0.8660254036077075, 0.5000000003061073],
    ])
    offsets = np.array([-2.309401084923734, -1.1547005400191126, 0.28867514112018255,
                        0.5773502773548566, -0.5773502675497637, -2.02072594868906])
    res = simplex_max(offsets, normals.T, normals[3])
    assert res.status == "optimal"
    assert res.x == pytest.approx([0, 0, 0, 1, 0, 0], abs=1e-12)
    ref = _linprog_max(offsets, normals.T, normals[3])
    assert res.value == pytest.approx(-ref.fun, abs=1e-12)


@pytest.mark.parametrize("theta", [3.5e-10, -3.5e-10, 1e-13, 1e-8])
def test_support_lp_near_axis_aligned_bodies(theta):
    spec = polygon_constants(6)
    a, b = Pose2(0.3, -0.2, theta), Pose2(0.3, 1.9, -theta)
    cert = certify_pair(a, b, spec)
    assert farkas_check(cert, a, b, spec)


def test_simplex_is_deterministic():
    rng = np.random.default_rng(4)
    A, b, c = rng.normal(size=(3, 8)), rng.normal(size=3), rng.normal(size=8)
    r1, r2 = simplex_max(c, A, b), simplex_max(c, A, b)
    assert r1.status == r2.status
    if r1.x is not None:
        assert np.array_equal(r1.x, r2.x)


# ------------------------------------------------------------------ Farkas


SQUARE = polygon_constants(4)


def test_two_squares_facing_edges():
    cert = farkas_from_axis(Pose2(0, 0, 0), Pose2(2, 0, 0), SQUARE, (1.0, 0.0))
    mu, nu = positive_support(cert)
    assert len(mu) == 1 and len(nu) == 1
    ni, _ = body_halfspaces(Pose2(0, 0, 0), SQUARE)
    nj, _ = body_halfspaces(Pose2(2, 0, 0), SQUARE)
    assert np.allclose(ni[mu[0]], [-1, 0]) and np.allclose(nj[nu[0]], [1, 0])
    assert cert.lambdas[mu[0]] == pytest.approx(0.5, abs=1e-15)
    assert cert.lambdas[4 + nu[0]] == pytest.approx(0.5, abs=1e-15)
    assert cert.offset_gap == pytest.approx(2 - math.sqrt(2), abs=1e-14)
    assert farkas_check(cert, Pose2(0, 0, 0), Pose2(2, 0, 0), SQUARE)


def test_touching_squares_zero_gap():
    d = 2 * SQUARE.rho
    cert = certify_pair(Pose2(0, 0, 0), Pose2(d, 0, 0), SQUARE)
    assert abs(cert.offset_gap) <= 1e-12
    assert farkas_check(cert, Pose2(0, 0, 0), Pose2(d, 0, 0), SQUARE)


def test_touching_cubes_zero_gap():
    cube = platonic_spec("cube")
    d = 2 * cube.rho
    a, b = Pose3(0, 0, 0, 0, 0, 0), Pose3(0, 0, d, 0, 0, 0)
    cert = certify_pair(a, b, cube)
    assert abs(cert.offset_gap) <= 1e-12
    assert farkas_check(cert, a, b, cube)


def test_non_separating_axis_raises():
    with pytest.raises(CertificateError):
        farkas_from_axis(Pose2(0, 0, 0), Pose2(1.0, 0, 0), SQUARE, (1.0, 0.0))


def test_perturbed_multiplier_rejected():
    a, b = Pose2(0, 0, 0.3), Pose2(2.5, 0.4, 0.1)
    cert = certify_pair(a, b, polygon_constants(5))
    assert farkas_check(cert, a, b, polygon_constants(5))
    for k in np.flatnonzero(cert.lambdas > 0):
        bad = FarkasCertificate(cert.pair, cert.lambdas.copy(), cert.axis, cert.offset_gap)
        bad.lambdas[k] += 1e-6
        assert not farkas_check(bad, a, b, polygon_constants(5))


def test_negative_multiplier_rejected():
    a, b = Pose2(0, 0, 0), Pose2(3, 0, 0)
    cert = certify_pair(a, b, SQUARE)
    cert.lambdas[0] = -1e-9
    assert not farkas_check(cert, a, b, SQUARE)


def test_per_body_normalization():
    a, b = Pose2(0, 0, 0.2), Pose2(0.3, 2.2, 0.9)
    spec = polygon_constants(6)
    cert = certify_pair(a, b, spec)
    F = spec.m
    mu, nu = cert.lambdas[:F], cert.lambdas[F:]
    # a common scale keeps the normals cancelling; each body then sums to at least one
    scaled = FarkasCertificate(cert.pair, cert.lambdas / min(mu.sum(), nu.sum()), cert.axis, 0.0)
    assert farkas_check(scaled, a, b, spec, per_body=True)
    assert not farkas_check(scaled, a, b, spec)


def _lp_certificate_exists(pa, pb, spec) -> bool:
    """Independent oracle: is there lambda >= 0, sum 1, cancelling normals, offset sum >= 0?"""
    ni, si = body_halfspaces(pa, spec)
    nj, sj = body_halfspaces(pb, spec)
    N = np.vstack([ni, nj])
    s = np.concatenate([si, sj])
    A_eq = np.vstack([np.ones(len(s)), N.T])
    b_eq = np.concatenate([[1.0], np.zeros(N.shape[1])])
    res = linprog(-s, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * len(s), method="highs")
    return res.status == 0 and -res.fun >= 0.0


def _random_pose2(rng, spread=1.6):
    return Pose2(*rng.uniform(-spread, spread, 2), rng.uniform(0, 2 * math.pi))


def _random_pose3(rng, spread=1.6):
    return Pose3(*rng.uniform(-spread, spread, 3), *rng.uniform(0, 2 * math.pi, 3))


@pytest.mark.parametrize("m", [3, 4, 5, 6, 7, 8])
def test_farkas_agrees_with_sat_2d(m):
    rng = np.random.default_rng(m)
    spec = polygon_constants(m)
    outcomes = set()
    for _ in range(300):
        a, b = _random_pose2(rng), _random_pose2(rng)
        margin, _ = sat_margin(a, b, spec)
        if abs(margin) <= 1e-9:
            continue
        try:
            cert = certify_pair(a, b, spec)
            ok = farkas_check(cert, a, b, spec)
        except CertificateError:
            ok = False
        assert ok == (margin > 0)
        assert _lp_certificate_exists(a, b, spec) == (margin > 0)
        if ok:
            assert is_sparse(cert, spec)
        outcomes.add(ok)
    assert outcomes == {True, False}


@pytest.mark.parametrize("kind", ["tetrahedron", "cube", "octahedron", "dodecahedron", "icosahedron"])
def test_farkas_agrees_with_sat_3d(kind):
    rng = np.random.default_rng(len(kind))
    spec = platonic_spec(kind)
    outcomes = set()
    for _ in range(120):
        a, b = _random_pose3(rng, 1.2), _random_pose3(rng, 1.2)
        margin, _ = sat_margin(a, b, spec)
        if abs(margin) <= 1e-9:
            continue
        try:
            cert = certify_pair(a, b, spec)
            ok = farkas_check(cert, a, b, spec)
        except CertificateError:
            ok = False
        assert ok == (margin > 0)
        assert _lp_certificate_exists(a, b, spec) == (margin > 0)
        if ok:
            assert is_sparse(cert, spec)
        outcomes.add(ok)
    assert outcomes == {True, False}


def test_overlap_certificate_from_other_pose_fails():
    """A certificate valid for separated poses never checks on overlapping ones."""
    rng = np.random.default_rng(12)
    spec = polygon_constants(5)
    for _ in range(200):
        a, b = _random_pose2(rng, 1.0), _random_pose2(rng, 1.0)
        if sat_margin(a, b, spec)[0] >= -1e-9:
            continue
        sep_b = Pose2(b.x + 5.0, b.y, b.theta)
        cert = certify_pair(a, sep_b, spec)
        assert not farkas_check(cert, a, b, spec)
        # any point of the simplex also fails
        lam = rng.dirichlet(np.ones(2 * spec.m))
        assert not farkas_check(FarkasCertificate((0, 1), lam, cert.axis, 0.0), a, b, spec)


def test_sparsity_adjacent_edges():
    spec = polygon_constants(6)
    # vertex against edge: one body uses two adjacent edges
    a = Pose2(0, 0, 0)
    b = Pose2(2.5, 0.0, 0.5)
    cert = certify_pair(a, b, spec)
    assert is_sparse(cert, spec)
    for idx in positive_support(cert):
        assert len(idx) <= 2


def test_is_sparse_rejects_non_adjacent():
    spec = polygon_constants(6)
    lam = np.zeros(12)
    lam[[0, 2]] = 0.25
    lam[6] = 0.5
    assert not is_sparse(FarkasCertificate((0, 1), lam, np.array([1.0, 0.0]), 0.0), spec)
    lam = np.zeros(12)
    lam[[0, 5]] = 0.25
    lam[6] = 0.5
    assert is_sparse(FarkasCertificate((0, 1), lam, np.array([1.0, 0.0]), 0.0), spec)


def test_certificate_dict_round_trip():
    cert = certify_pair(Pose2(0, 0, 0), Pose2(2, 1, 0.3), polygon_constants(3))
    back = FarkasCertificate.from_dict(cert.to_dict())
    assert np.array_equal(back.lambdas, cert.lambdas) and back.pair == cert.pair


# ------------------------------------------------------------------ S-lemma


def test_unit_circle_in_unit_disc():
    cert = slemma_contains(1.0, 1.0, 0.0, 0.0, 1.0)
    assert cert is not None
    assert cert.t == 1.0
    assert all(v == 0.0 for v in cert.minors)
    assert slemma_check(cert, 1.0, 1.0, 0.0, 0.0, 1.0)


def test_slightly_larger_circle_rejected():
    assert slemma_contains(1.0, 1.0, 0.0, 0.0, 1.001) is None


def test_off_center_circle_matches_sampling():
    a, b, x0, y0, r = 2.0, 1.0, 1.0, 0.0, 0.5
    phi = np.linspace(0, 2 * np.pi, 10**6, endpoint=False)
    dmin = np.min(np.hypot(a * np.cos(phi) - x0, b * np.sin(phi) - y0))
    inside = dmin >= r
    assert (slemma_contains(a, b, x0, y0, r) is not None) == inside
    assert inside  # nearest boundary point is about 0.577 away


def test_certificate_round_trip():
    args = (3.0, 2.0, 0.7, -0.4, 1.0)
    cert = slemma_contains(*args)
    assert cert is not None and slemma_check(cert, *args)
    back = SLemmaCertificate.from_dict(cert.to_dict())
    assert back == cert


def test_multiplier_at_a_squared_can_fail_while_larger_succeeds():
    a, b, x0, y0, r = 2.0, 1.0, 0.5, 0.2, 0.5
    assert ellipse_margin(a, b, x0, y0, r) > 0
    results = {}
    for t in np.linspace(a * a, 40.0, 2000):
        results[t] = min(slemma_minors(t, a, b, x0, y0, r)) >= -1e-12
    assert not results[a * a]
    assert any(results.values())
    # the valid multipliers form an interval of positive length
    valid = [t for t, ok in results.items() if ok]
    assert max(valid) - min(valid) > 0.0


def test_best_multiplier_is_a_maximizer_of_the_determinant():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = rng.uniform(1, 5)
        b = rng.uniform(0.5, a)
        x0, y0 = rng.uniform(-a, a), rng.uniform(-b, b)
        r = rng.uniform(0.1, b)
        t = best_multiplier(a, b, x0, y0, r)
        assert t >= a * a
        det = slemma_minors(t, a, b, x0, y0, r)[-1]
        grid = np.linspace(a * a, a * a + 50 * (1 + abs(t)), 4000)
        others = [slemma_minors(s, a, b, x0, y0, r)[-1] for s in grid]
        assert det >= max(others) - 1e-9 * max(1.0, abs(det))


def test_strict_determinant_means_strict_interior():
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(500):
        a = rng.uniform(1, 4)
        b = rng.uniform(1, a)
        x0, y0 = rng.uniform(-a, a), rng.uniform(-b, b)
        r = rng.uniform(0.2, 1.0)
        cert = slemma_contains(a, b, x0, y0, r)
        if cert is not None and min(cert.minors) > 1e-9:
            hits += 1
            assert ellipse_margin(a, b, x0, y0, r) > 0
    assert hits > 20


def test_slemma_agrees_with_boundary_sampling():
    rng = np.random.default_rng(2024)
    outcomes = set()
    for _ in range(2000):
        a = rng.uniform(1.0, 6.0)
        b = rng.uniform(1.0, a)
        x0, y0 = rng.uniform(-a, a), rng.uniform(-b, b)
        r = rng.uniform(0.05, b)
        margin = ellipse_margin(a, b, x0, y0, r)
        if abs(margin) <= 1e-9:
            continue
        ok = slemma_contains(a, b, x0, y0, r) is not None
        assert ok == (margin > 0), (a, b, x0, y0, r, margin)
        outcomes.add(ok)
    assert outcomes == {True, False}


@settings(max_examples=200, deadline=None)
@given(
    st.floats(1.0, 5.0),
    st.floats(0.0, 1.0),
    st.floats(-1.0, 1.0),
    st.floats(-1.0, 1.0),
    st.floats(0.05, 1.0),
    st.floats(0.2, 5.0),
)
def test_scale_covariance(a, bf, xf, yf, rf, sigma):
    b = 1.0 + bf * (a - 1.0)
    x0, y0, r = xf * a, yf * b, rf * b
    cert = slemma_contains(a, b, x0, y0, r)
    scaled = slemma_contains(sigma * a, sigma * b, sigma * x0, sigma * y0, sigma * r)
    margin = ellipse_margin(a, b, x0, y0, r)
    assume(abs(margin) > 1e-6)
    assert (cert is None) == (scaled is None)
    if cert is not None:
        moved = SLemmaCertificate(0, sigma * sigma * cert.t, ())
        assert slemma_check(moved, sigma * a, sigma * b, sigma * x0, sigma * y0, sigma * r)
        assert scaled.t == pytest.approx(sigma * sigma * cert.t, rel=1e-9)


def test_check_rejects_non_finite_and_small_multiplier():
    cert = slemma_contains(2.0, 1.5, 0.1, 0.1, 0.5)
    assert cert is not None
    assert not slemma_check(SLemmaCertificate(0, math.nan, ()), 2.0, 1.5, 0.1, 0.1, 0.5)
    assert not slemma_check(SLemmaCertificate(0, 1.0, ()), 2.0, 1.5, 0.1, 0.1, 0.5)
