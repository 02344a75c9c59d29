from types import SimpleNamespace

import numpy as np
import pytest
from scipy.spatial import cKDTree

from sbdfcut.errors import FoldedPatch, HistoryMissing
from sbdfcut.fem import DofMap, FEFunction
from sbdfcut.flowmaps import BackwardMap, ForwardMap, build_patch_map, source_pieces
from sbdfcut.kernels import eval_poly
from sbdfcut.polybasis import QUAD, sample_points
from sbdfcut.problems import rotation_flow
from sbdfcut.sbdf import sbdf_table

from conftest import level

C = np.array([0.5, 0.5])


def rot(theta):
    return lambda x: rotation_flow(np.atleast_2d(x), 0.0, theta)


def rot_field(x):
    x = np.atleast_2d(x)
    return np.stack([-(x[:, 1] - 0.5), x[:, 0] - 0.5], axis=1)


def exact_history(k, tau, field=rot_field):
    return [SimpleNamespace(solution=field, backward=rot(-tau)) for _ in range(k)]


def random_image_points(pm, n, rng):
    """Points ``G(xi)`` uniformly over random pieces (strictly inside each piece)."""
    r = rng.integers(0, len(pm), size=n)
    xi = rng.uniform(0.02, 0.98, size=(n, 2))
    tri = pm.kind[r] != QUAD
    xi[tri] *= 0.98 / np.maximum(xi[tri].sum(axis=1, keepdims=True), 0.98)
    return eval_poly(pm.Gcoef, r, xi, pm.k)


def test_forward_map_k1_is_forward_euler(rng):
    tau = 0.01
    t = sbdf_table(1)
    fwd = ForwardMap(exact_history(1, tau), t.af, t.bf, tau)
    x = rng.uniform(0.2, 0.8, size=(50, 2))
    np.testing.assert_allclose(fwd(x), x + tau * rot_field(x), atol=1e-15)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_forward_map_order_on_rotation(k, rng):
    x = rng.uniform(0.3, 0.7, size=(40, 2))
    errs = []
    for tau in (np.pi / 16, np.pi / 32, np.pi / 64):
        t = sbdf_table(k)
        fwd = ForwardMap(exact_history(k, tau), t.af, t.bf, tau)
        errs.append(np.max(np.linalg.norm(fwd(x) - rot(tau)(x), axis=1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    # local error of the extrapolated characteristic is O(tau^(k+1))
    assert np.all(orders >= k + 0.7), orders


def test_forward_map_needs_history():
    t = sbdf_table(3)
    with pytest.raises(HistoryMissing):
        ForwardMap(exact_history(2, 0.1), t.af, t.bf, 0.1)
    hist = exact_history(3, 0.1)
    hist[0].backward = None
    with pytest.raises(HistoryMissing):
        ForwardMap(hist, t.af, t.bf, 0.1)(np.array([[0.5, 0.5]]))


def test_compose_exact_rotations(rng):
    tau = 0.05
    t = sbdf_table(4)
    fwd = ForwardMap(exact_history(4, tau), t.af, t.bf, tau)
    x = rng.uniform(0.2, 0.8, size=(30, 2))
    np.testing.assert_allclose(fwd.compose(x, 1), x, atol=0)
    # X^{n-1, n-i} goes back i - 1 levels
    np.testing.assert_allclose(fwd.compose(x, 3), rot(-2 * tau)(x), atol=1e-11)
    np.testing.assert_allclose(fwd.compose(x, 4), rot(-3 * tau)(x), atol=1e-11)


@pytest.fixture(scope="module")
def rotation_map():
    _, grid, curve, cls, geo, _ = level(1, 16, 3)
    tau = np.pi / 16
    pm = build_patch_map(geo, rot(tau))
    return geo, curve, pm, tau


def test_patch_map_pieces_and_areas(rotation_map):
    geo, curve, pm, _ = rotation_map
    kind, parent, curved, _ = source_pieces(geo)
    assert len(pm) == len(geo.interior) + len(geo.regions)
    np.testing.assert_array_equal(pm.parent, parent)
    # rigid motion keeps the area of every piece
    assert abs(pm.image_area() - pm.source_area()) < 1e-13
    assert abs(pm.source_area() - geo.area()) < 1e-13
    data = pm.to_json()
    assert len(data) == len(pm) and set(data[0]) == {"parent", "kind", "F_nodes", "G_nodes"}


def test_backward_rotation_inside(rotation_map, rng):
    _, _, pm, tau = rotation_map
    back = BackwardMap(pm)
    x = random_image_points(pm, 1000, rng)
    np.testing.assert_allclose(back(x), rot(-tau)(x), atol=1e-12)
    assert back.stats.extended == 0


def test_backward_rotation_extension_outside(rotation_map):
    _, curve, pm, tau = rotation_map
    back = BackwardMap(pm)
    h = pm.grid.h
    t = np.linspace(0, curve.period, 200, endpoint=False)
    p = rot(tau)(curve.eval(t))
    n = rot(tau)(curve.eval(t) + curve.normal(t)) - p
    x = p + 0.1 * h * n
    r, xi = back.locate(x)
    assert np.all(pm.curved[r]) and np.all(xi[:, 1] == 0.0)
    # constant extension along the normal: the image of the foot point
    np.testing.assert_allclose(back(x), curve.eval(t), atol=1e-12)


@pytest.mark.parametrize("k", [2, 3])
def test_round_trip_on_flow_step(k, rng):
    problem, grid, _, _, geo, _ = level(3, 32, k)
    tau = grid.h
    pm = build_patch_map(geo, lambda x: problem.flow(x, 0.0, tau))
    back = BackwardMap(pm)
    x = random_image_points(pm, 1000, rng)
    y = back(x)
    assert np.max(np.linalg.norm(back.forward(y) - x, axis=1)) <= 1e-10 * grid.h


def test_folded_patch_detected():
    _, _, _, _, geo, _ = level(1, 16, 2)
    mirror = lambda x: np.stack([1.0 - x[:, 0], x[:, 1]], axis=1)
    with pytest.raises(FoldedPatch):
        build_patch_map(geo, mirror)


def test_patch_images_injective_on_samples(rotation_map):
    _, _, pm, _ = rotation_map
    k = pm.k
    pts = []
    for kd in (0, 1):
        sel = np.flatnonzero(pm.kind == kd)
        xi = sample_points(kd, 5 * k + 1)
        # interior samples only: shared edges legitimately coincide
        far = (xi.sum(axis=1) < 0.99) if kd else (xi < 0.99).all(axis=1)
        xi = xi[(xi > 0.01).all(axis=1) & far]
        ids = np.repeat(sel, len(xi))
        pts.append(eval_poly(pm.Gcoef, ids, np.tile(xi, (len(sel), 1)), k))
    P = np.concatenate(pts)
    pairs = cKDTree(P).query_pairs(1e-12)
    assert not pairs


def test_pull_matches_composition(rotation_map):
    geo, _, pm, tau = rotation_map
    dm = DofMap(geo.cls, 3)
    w = FEFunction.interpolate(dm, lambda x: np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]], 1))
    back = BackwardMap(pm)
    x = random_image_points(pm, 300, np.random.default_rng(3))
    np.testing.assert_allclose(back.pull(w, x), w(back(x)), atol=1e-12)
