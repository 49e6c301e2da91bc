import math

import numpy as np
import pytest

from packnlp.certify import best_multiplier, sat_margin
from packnlp.geometry import InvalidShapeError, platonic_spec, polygon_constants
from packnlp.models import (
    EllipseOptions,
    Instance,
    InvalidInstanceError,
    build_circle,
    build_ellipse,
    build_platonic,
    build_polygon,
    build_system,
    jacobian,
    objective,
    r_min,
    residuals,
)
from packnlp.solver import fill_auxiliary

from _support import (
    FAMILY_CASES,
    fd_gradient,
    fd_jacobian,
    max_rel_error,
    random_feasible_bodies,
    random_point,
)


def _block(sys, x, name):
    return sys.residuals(x)[sys.block_rows[name]]


def _set_poses(sys, x, rows):
    p = sys.layout.view(x, "pose")
    p[:] = rows
    x[sys.layout.slice("pose")] = p.reshape(-1)


# ------------------------------------------------------------------ structure


def test_circle_square_rows():
    sys = build_circle(2)
    counts = {b.name: b.rows for b in sys.blocks}
    assert counts == {"containment": 8, "separation": 1, "area": 1}
    assert sys.layout.names == ["pose", "r"]


def test_circle_rect_has_width_variable_first():
    sys = build_system(Instance("circle_rect", 3))
    assert sys.layout.names[0] == "alpha"
    assert sys.n_vars == 1 + 3 * 3


def test_polygon_row_counts_triangles():
    sys = build_polygon(3, 3, 2, "dist")
    counts = {b.name: b.rows for b in sys.blocks}
    assert counts["containment"] == 18
    assert counts["normal_a"] == 6 and counts["normal_b"] == 6
    assert counts["offset"] == 6
    farkas = counts["farkas_sum"] + counts["farkas_normal_x"] + counts["farkas_normal_y"] + counts["farkas_gap"]
    assert farkas == 4
    assert counts["distance"] == 1
    assert sys.n_rows == 18 + 12 + 6 + 4 + 1


def test_variant_deltas_polygon():
    names = {v: {b.name for b in build_polygon(5, 4, 3, v).blocks} for v in ("dist", "nodist", "inner", "farkas", "sym")}
    assert names["dist"] - names["nodist"] == {"distance"}
    assert names["sym"] - names["dist"] == {"sort_x", "centroid_cone"}
    assert "farkas_norm" in names["farkas"] and "farkas_sum" not in names["farkas"]
    assert "distance" not in names["farkas"]
    assert {"inner_upper", "inner_lower"} <= names["inner"]
    assert not any(n.startswith("farkas") for n in names["inner"])


def test_platonic_farkas_multiplier_count():
    sys = build_platonic("cube", "tetrahedron", 3, "dist")
    lam = sys.layout.shape("lambda")
    assert lam == (3, 2 * 4)
    # every inner vertex against every outer face
    assert sys.block_rows["containment"].stop - sys.block_rows["containment"].start == 3 * 4 * 6


@pytest.mark.parametrize("family,n,m,l", FAMILY_CASES)
def test_layout_order_container_elements_pairs(family, n, m, l):
    sys = build_system(Instance(family, n, m, l))
    names = sys.layout.names
    assert names[0] in ("pose", "alpha", "axes", "R")
    assert names.index("pose") <= 1
    for tail in ("lambda", "sep"):
        if tail in names:
            assert names.index(tail) == len(names) - 1


@pytest.mark.parametrize("family,n,m,l", FAMILY_CASES)
def test_structure_depends_only_on_instance(family, n, m, l):
    a = build_system(Instance(family, n, m, l))
    b = build_system(Instance(family, n, m, l, epsilon=1e-3))
    assert a.n_rows == b.n_rows
    assert np.array_equal(a.jac_rows, b.jac_rows) and np.array_equal(a.jac_cols, b.jac_cols)
    assert list(a.tags) == list(b.tags)


def test_tags_are_known_labels():
    allowed = {"containment", "separation", "farkas_sum", "halfspace", "distance", "symmetry", "area", "strengthening"}
    for family, n, m, l in FAMILY_CASES:
        for variant in ("dist", "sym") if family in ("polygon", "platonic") else ("dist",):
            sys = build_system(Instance(family, n, m, l, variant=variant))
            assert set(sys.tags) <= allowed


# ------------------------------------------------------------------ hand-built points


def test_single_circle_inscribed():
    sys = build_circle(1, fixed_alpha=1.0)
    x = np.array([0.5, 0.5, 0.5 / (1 + 2e-8)])
    assert sys.max_violation(x) == 0.0
    assert sys.objective(x)[0] == pytest.approx(0.5, abs=1e-7)
    # the full radius violates the epsilon-scaled containment
    assert sys.max_violation(np.array([0.5, 0.5, 0.5])) > 0


def test_single_circle_exact_at_zero_epsilon():
    sys = build_system(Instance("circle_square", 1, epsilon=0.0))
    x = np.array([0.5, 0.5, 0.5])
    assert np.all(sys.residuals(x) <= 0)


def test_two_circles_on_diagonal_feasible():
    r = (2 - math.sqrt(2)) / 2 * 0.999
    sys = build_circle(2)
    x = np.zeros(sys.n_vars)
    _set_poses(sys, x, [[r * 1.001, r * 1.001], [1 - r * 1.001, 1 - r * 1.001]])
    x[sys.layout.slice("r")] = r
    assert np.all(sys.residuals(x) <= 0)
    assert sys.objective(x)[0] == pytest.approx(2 * r)


def test_overlapping_circles_violate_separation():
    sys = build_circle(2)
    x = np.zeros(sys.n_vars)
    _set_poses(sys, x, [[0.3, 0.3], [0.4, 0.3]])
    x[sys.layout.slice("r")] = 0.2
    assert _block(sys, x, "separation")[0] > 0


def test_rectangle_height_is_two_minus_width():
    sys = build_system(Instance("circle_rect", 1))
    x = np.zeros(sys.n_vars)
    x[sys.layout.slice("alpha")] = 0.5
    _set_poses(sys, x, [[0.25, 1.0]])
    x[sys.layout.slice("r")] = 0.2
    assert np.all(sys.residuals(x) <= 0)
    # y + r(1+2eps) must stay below H = 1.5
    _set_poses(sys, x, [[0.25, 1.35]])
    assert sys.max_violation(x) > 0


def test_four_squares_in_square_feasible():
    inst = Instance("polygon", 4, 4, 4)
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 3.0
    _set_poses(sys, x, [[-1.1, -1.1, 0.1], [1.1, -1.1, 0.2], [-1.1, 1.1, 0.3], [1.1, 1.1, 0.4]])
    fill_auxiliary(inst, sys, x)
    assert sys.max_violation(x) <= 1e-12


def test_two_cubes_feasible():
    inst = Instance("platonic", 2, "cube", "cube")
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 4.0
    _set_poses(sys, x, [[-1.1, 0, 0, 0.1, 0.2, 0.3], [1.1, 0, 0, 0.4, 0.5, 0.6]])
    fill_auxiliary(inst, sys, x)
    assert sys.max_violation(x) <= 1e-12


def test_identity_packing_polygon_at_scaled_radius():
    inst = Instance("polygon", 1, 6, 6)
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 1 + inst.epsilon / polygon_constants(6).rho
    fill_auxiliary(inst, sys, x)
    assert sys.max_violation(x) <= 1e-15
    x[0] = 1.0
    assert sys.max_violation(x) > 0


def test_identity_packing_exact_at_zero_epsilon():
    inst = Instance("platonic", 1, "dodecahedron", "dodecahedron", epsilon=0.0)
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 1.0
    fill_auxiliary(inst, sys, x)
    assert sys.max_violation(x) <= 1e-15


def test_eight_cubes_in_doubled_cube():
    inst = Instance("platonic", 8, "cube", "cube", epsilon=0.0)
    sys = build_system(inst)
    h = 1 / math.sqrt(3)  # half edge of a unit-circumradius cube
    x = np.zeros(sys.n_vars)
    x[0] = 2.0
    corners = [[sx * h, sy * h, sz * h, 0, 0, 0] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    _set_poses(sys, x, corners)
    fill_auxiliary(inst, sys, x)
    # cubes are axis aligned; the cube table must have axis-aligned faces for this layout
    assert np.allclose(np.sort(np.abs(platonic_spec("cube").normals), axis=1)[:, :2], 0, atol=1e-15)
    assert sys.max_violation(x) <= 1e-14


def test_ellipse_feasible_two_circles():
    sys = build_ellipse(2)
    x = np.zeros(sys.n_vars)
    x[:2] = [2.5, 1.5]
    _set_poses(sys, x, [[-1.05, 0.0], [1.05, 0.0]])
    t = sys.layout.view(x, "t")
    for i, (px, py) in enumerate(sys.layout.view(x, "pose")):
        t[i] = max(1.0, best_multiplier(2.5, 1.5, px, py, 1 + 2e-8))
    x[sys.layout.slice("t")] = t
    assert np.all(sys.residuals(x) <= 0)
    assert sys.objective(x)[0] == pytest.approx(math.pi * 2.5 * 1.5)


def test_ellipse_unit_circle_in_unit_ellipse_minors_vanish():
    sys = build_system(Instance("circle_ellipse", 1, epsilon=0.0, ellipse=EllipseOptions(strengthening=False)))
    x = np.array([1.0, 1.0, 0.0, 0.0, 1.0])
    g = _block(sys, x, "containment")
    assert np.all(g == 0.0)
    assert np.all(sys.residuals(x) <= 0)


def test_ellipse_circle_outside_is_infeasible_for_every_t():
    sys = build_ellipse(1, EllipseOptions(strengthening=False))
    x = np.array([3.0, 1.0, 2.5, 0.0, 1.0])
    for t in np.geomspace(1.0, 1e4, 40):
        x[-1] = t
        assert np.max(_block(sys, x, "containment")) > 0


# ------------------------------------------------------------------ ellipse options


def test_ellipse_strengthening_rows_and_bounds():
    on = build_ellipse(4)
    off = build_ellipse(4, EllipseOptions(strengthening=False))
    names_on = {b.name for b in on.blocks}
    names_off = {b.name for b in off.blocks}
    assert {"center_inside", "box", "area_cut"} <= names_on
    assert not names_off & {"center_inside", "box", "area_cut"}
    assert on.lower[0] == 2.0 and off.lower[0] == 1.0
    assert on.upper[0] == 5.0  # initial box a <= n + 1


@pytest.mark.parametrize("mode,rows", [("centroid", 2), ("sort_x", 4), ("generic_line", 3)])
def test_ellipse_symmetry_rows(mode, rows):
    sys = build_ellipse(4, EllipseOptions(symmetry=mode))
    sym = sys.rows_with_tag("symmetry")
    # one row keeps a >= b; the rest come from the mode
    assert len(sym) == 1 + rows


def test_ellipse_generic_line_orders_projection():
    sys = build_ellipse(2, EllipseOptions(symmetry="generic_line"))
    x = np.zeros(sys.n_vars)
    x[:2] = [3.0, 1.5]
    x[sys.layout.slice("t")] = 20.0
    _set_poses(sys, x, [[1.0, 0.0], [-1.0, 0.0]])
    g_bad = sys.residuals(x)[sys.rows_with_tag("symmetry")]
    _set_poses(sys, x, [[-1.0, 0.0], [1.0, 0.0]])
    g_good = sys.residuals(x)[sys.rows_with_tag("symmetry")]
    assert np.max(g_bad) > 0 and np.max(g_good) <= 0


# ------------------------------------------------------------------ bounds


@pytest.mark.parametrize("n", [1, 2, 4, 7, 9])
def test_rmin_hexagons(n):
    inst = Instance("polygon", n, 6, 6)
    assert r_min(inst) == math.sqrt(n)
    assert build_system(inst).lower[0] == pytest.approx(math.sqrt(n), rel=1e-15)


def test_rmin_polygon_area_ratio():
    inst = Instance("polygon", 6, 3, 5)
    a3, a5 = polygon_constants(3).area, polygon_constants(5).area
    assert r_min(inst) == pytest.approx(math.sqrt(6 * a3 / a5), rel=1e-14)


def test_rmin_platonic_volume_ratio():
    inst = Instance("platonic", 11, "cube", "cube")
    assert r_min(inst) == pytest.approx(11 ** (1 / 3), rel=1e-14)
    inst = Instance("platonic", 5, "tetrahedron", "icosahedron")
    vt, vi = platonic_spec("tetrahedron").volume, platonic_spec("icosahedron").volume
    assert r_min(inst) == pytest.approx((5 * vt / vi) ** (1 / 3), rel=1e-14)


def test_rmin_absent_for_circles():
    assert r_min(Instance("circle_square", 3)) is None


def test_polygon_rotation_bounds():
    sys = build_polygon(5, 4, 2)
    pose = sys.layout.index("pose")
    assert np.all(sys.lower[pose[:, 2]] == 0.0)
    assert np.allclose(sys.upper[pose[:, 2]], math.pi / 2)


def test_platonic_rotation_bounds():
    sys = build_platonic("cube", "cube", 2)
    pose = sys.layout.index("pose")
    assert np.all(sys.lower[pose[:, 3:]] == 0.0)
    assert np.allclose(sys.upper[pose[:, 3:]], 2 * math.pi)


def test_inner_variant_angle_bounds():
    sys = build_polygon(4, 4, 3, "inner")
    sep = sys.layout.index("sep")
    assert np.all(sys.lower[sep[:, 0]] == 0.0)
    assert np.allclose(sys.upper[sep[:, 0]], 2 * math.pi)


# ------------------------------------------------------------------ derivatives


@pytest.mark.parametrize("family,n,m,l", FAMILY_CASES)
def test_jacobian_matches_finite_differences(family, n, m, l):
    variants = ("dist", "nodist", "inner", "farkas", "sym") if family in ("polygon", "platonic") else ("dist",)
    rng = np.random.default_rng(7)
    for variant in variants:
        sys = build_system(Instance(family, n, m, l, variant=variant))
        for _ in range(5):
            x = random_point(sys, rng)
            err = max_rel_error(jacobian(sys, x).toarray(), fd_jacobian(sys, x))
            assert err < 1e-6, (variant, err)


@pytest.mark.parametrize("family,n,m,l", FAMILY_CASES)
def test_objective_gradient_matches_finite_differences(family, n, m, l):
    sys = build_system(Instance(family, n, m, l))
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = random_point(sys, rng)
        assert max_rel_error(objective(sys, x)[1], fd_gradient(sys, x)) < 1e-6


def test_jacobian_rows_follow_residual_order():
    sys = build_polygon(4, 3, 3)
    x = random_point(sys, np.random.default_rng(0))
    J = jacobian(sys, x)
    assert J.shape == (sys.n_rows, sys.n_vars)
    assert len(residuals(sys, x)) == sys.n_rows


def test_dimension_mismatch_rejected():
    sys = build_circle(3)
    with pytest.raises(ValueError):
        sys.residuals(np.zeros(sys.n_vars + 1))
    with pytest.raises(ValueError):
        sys.objective(np.zeros((2, sys.n_vars)))


# ------------------------------------------------------------------ variants


def _feasible(sys, x, tol=1e-12):
    return sys.max_violation(x) <= tol


@pytest.mark.parametrize("family,m,l,n", [("polygon", 4, 5, 3), ("polygon", 3, 4, 4), ("platonic", "cube", "cube", 3)])
def test_variant_rows_nest(family, m, l, n):
    rng = np.random.default_rng(3)
    dist = build_system(Instance(family, n, m, l, variant="dist"))
    nodist = build_system(Instance(family, n, m, l, variant="nodist"))
    sym = build_system(Instance(family, n, m, l, variant="sym"))
    assert dist.n_vars == nodist.n_vars == sym.n_vars
    for _ in range(20):
        x = random_point(dist, rng)
        for outer_sys, inner_sys in ((sym, dist), (dist, nodist)):
            ga, gb = outer_sys.residuals(x), inner_sys.residuals(x)
            for b in inner_sys.blocks:
                assert np.array_equal(gb[inner_sys.block_rows[b.name]], ga[outer_sys.block_rows[b.name]])


@pytest.mark.parametrize("family,m,l,n", [("polygon", 4, 5, 3), ("platonic", "tetrahedron", "cube", 2)])
def test_variant_feasibility_nesting_on_random_points(family, m, l, n):
    rng = np.random.default_rng(5)
    systems = {v: build_system(Instance(family, n, m, l, variant=v)) for v in ("sym", "dist", "nodist")}
    sym_hits = 0
    for _ in range(300):
        x = random_feasible_bodies(systems["dist"].instance, rng, systems["dist"], sort_x=True)
        if x is None:
            continue
        assert _feasible(systems["dist"], x)
        assert _feasible(systems["nodist"], x)
        if _feasible(systems["sym"], x):
            sym_hits += 1
            assert _feasible(systems["dist"], x)
    assert sym_hits >= 1


@pytest.mark.parametrize("family,m", [("polygon", 3), ("polygon", 5), ("platonic", "octahedron")])
def test_distance_rows_redundant_given_farkas_block(family, m):
    rng = np.random.default_rng(9)
    l = 6 if family == "polygon" else "cube"
    inst = Instance(family, 2, m, l, variant="nodist")
    nodist = build_system(inst)
    dist = build_system(Instance(family, 2, m, l, variant="dist"))
    spec = polygon_constants(m) if family == "polygon" else platonic_spec(m)
    dim = 2 if family == "polygon" else 3
    checked = 0
    for _ in range(400):
        x = random_point(nodist, rng)
        x[0] = 10.0
        p = nodist.layout.view(x, "pose")
        # centers close enough that many pairs nearly touch
        p[:, :dim] = rng.uniform(-1.0, 1.0, (2, dim))
        x[nodist.layout.slice("pose")] = p.reshape(-1)
        fill_auxiliary(inst, nodist, x)
        if not _feasible(nodist, x):
            continue
        assert _block(dist, x, "distance")[0] <= 1e-12
        assert np.linalg.norm(p[0, :dim] - p[1, :dim]) >= 2 * spec.rho
        checked += 1
    assert checked > 20


def test_farkas_variant_uses_per_body_normalization():
    inst = Instance("polygon", 2, 4, 4, variant="farkas")
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 3.0
    _set_poses(sys, x, [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    fill_auxiliary(inst, sys, x)
    lam = sys.layout.view(x, "lambda")[0]
    assert lam[:4].sum() >= 1 - 1e-12 and lam[4:].sum() >= 1 - 1e-12
    assert _feasible(sys, x)


def test_inner_variant_separating_line():
    inst = Instance("polygon", 2, 4, 4, variant="inner")
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    x[0] = 3.0
    _set_poses(sys, x, [[-1.0, 0.0, 0.3], [1.0, 0.0, 0.3]])
    fill_auxiliary(inst, sys, x)
    assert _feasible(sys, x)
    # shifting the line into a body breaks it
    x[sys.layout.index("sep")[0, -1]] += 0.5
    assert not _feasible(sys, x)


def test_sym_sort_rows_order_x():
    inst = Instance("polygon", 3, 4, 6, variant="sym")
    sys = build_system(inst)
    x = random_feasible_bodies(inst, np.random.default_rng(1), sys)
    p = sys.layout.view(x, "pose")
    rows = _block(sys, x, "sort_x")
    assert np.allclose(rows, p[:-1, 0] - p[1:, 0])


def test_sat_margin_agrees_with_pair_feasibility():
    """Random polygon pairs: the pair rows are satisfiable iff the SAT margin clears epsilon."""
    rng = np.random.default_rng(2)
    inst = Instance("polygon", 2, 5, 8, variant="nodist")
    sys = build_system(inst)
    spec = polygon_constants(5)
    for _ in range(200):
        x = random_point(sys, rng)
        x[0] = 10.0
        p = sys.layout.view(x, "pose")
        p[:, :2] = rng.uniform(-1.5, 1.5, (2, 2))
        x[sys.layout.slice("pose")] = p.reshape(-1)
        fill_auxiliary(inst, sys, x)
        margin = sat_margin(*(_pose2(r) for r in p), spec)[0]
        if abs(margin - inst.epsilon) < 1e-9:
            continue
        pair = sys.rows_with_tag("separation", "farkas_sum", "halfspace")
        ok = np.max(sys.violation(x)[pair]) <= 1e-12
        assert ok == (margin > inst.epsilon)


def _pose2(row):
    from packnlp.geometry import Pose2

    return Pose2(*row)


# ------------------------------------------------------------------ invalid instances


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family="circle_square", n=0),
        dict(family="circle_square", n=1.5),
        dict(family="hexagon", n=2),
        dict(family="polygon", n=2, m=4, l=5, variant="exotic"),
        dict(family="circle_square", n=2, epsilon=-1e-8),
    ],
)
def test_invalid_instance(kwargs):
    with pytest.raises(InvalidInstanceError):
        Instance(**kwargs)


@pytest.mark.parametrize("m,l", [(2, 5), (4, 2), (None, 4), (3.5, 4)])
def test_invalid_polygon_orders(m, l):
    with pytest.raises(InvalidShapeError):
        Instance("polygon", 2, m, l)


def test_invalid_platonic_kind():
    with pytest.raises(InvalidShapeError):
        Instance("platonic", 2, "sphere", "cube")


def test_ellipse_bad_symmetry_mode():
    with pytest.raises(InvalidInstanceError):
        EllipseOptions(symmetry="mirror")


def test_instance_dict_round_trip():
    inst = Instance("circle_ellipse", 5, epsilon=1e-7, ellipse=EllipseOptions(False, "sort_x"))
    assert Instance.from_dict(inst.to_dict()) == inst
    inst = Instance("platonic", 3, 3, "cube", variant="sym")
    assert inst.m == "cube"
    assert Instance.from_dict(inst.to_dict()) == inst
