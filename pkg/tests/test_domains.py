import numpy as np
import pytest

from fbms.domains import (
    Ball, Ellipsoid, EllipsoidSpec, Outcome, ProfileCurve, Quadric, QuadricSpec, Rotational, Verdict,
    classify_profile, classify_quadric, domain_from_dict, load_domain, project_to_boundary,
)
from fbms.errors import DegenerateGradient, ParseError, ProjectionDiverged, QueryOutsideProfileInterval


def test_ball_evaluate():
    F, g, H = Ball().evaluate([1.0, 0, 0])
    assert F == 1.0
    np.testing.assert_allclose(g, [2, 0, 0])
    np.testing.assert_allclose(H, 2 * np.eye(3))


def test_quadric_evaluate():
    F, g, _ = Quadric(QuadricSpec((1, 1, -1))).evaluate([1.0, 1, 1])
    assert F == 1.0
    np.testing.assert_allclose(g, [2, 2, -2])


def test_ellipsoid_evaluate():
    F, g, H = Ellipsoid(EllipsoidSpec(2, 1)).evaluate([2.0, 0, 0])
    assert F == pytest.approx(1.0)
    np.testing.assert_allclose(g, [1, 0, 0])
    np.testing.assert_allclose(H, np.diag([0.5, 0.5, 2]))


@pytest.mark.parametrize("point, expected", [
    ([2.0, 0, 0], [1, 0, 0]),
    ([0.5, 0, 0], [1, 0, 0]),
])
def test_ball_projection(point, expected):
    np.testing.assert_allclose(project_to_boundary(Ball(), point), expected, atol=1e-12)


def test_ellipsoid_axis_projection():
    q = project_to_boundary(Ellipsoid(EllipsoidSpec(2, 1)), [0, 0, 2.0])
    np.testing.assert_allclose(q, [0, 0, 1], atol=1e-12)


def test_projection_idempotent(rng):
    doms = [Ball(), Ellipsoid(EllipsoidSpec(2, 1)), Quadric(QuadricSpec((1, 1, -1), 0, 0)),
            Rotational(ProfileCurve.catenoid(1.0, (0.0, 2.0)))]
    for dom in doms:
        P = rng.uniform(-1, 1, (50, 3)) + np.array([1.5, 0, 0])
        if isinstance(dom, Rotational):
            P[:, 2] = rng.uniform(0.3, 1.7, 50)
        q = project_to_boundary(dom, P)
        np.testing.assert_allclose(dom.value(q), 1.0, atol=1e-12)
        assert np.abs(project_to_boundary(dom, q) - q).max() <= 1e-12


def test_projection_errors():
    with pytest.raises(DegenerateGradient):
        project_to_boundary(Ball(), [0.0, 0, 0])
    with pytest.raises(ProjectionDiverged):
        project_to_boundary(Ball(), [1e6, 0, 0], max_iter=3)


def _fd_check(dom, points, h=1e-4, rtol=1e-6):
    for p in points:
        F, g, H = dom.evaluate(p)
        gfd = np.zeros(3)
        Hfd = np.zeros((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            gfd[k] = (dom.value(p + e) - dom.value(p - e)) / (2 * h)
            Hfd[k] = (dom.gradient(p + e) - dom.gradient(p - e)) / (2 * h)
        scale = max(np.abs(g).max(), 1.0)
        assert np.abs(gfd - g).max() <= rtol * scale
        assert np.abs(Hfd - H).max() <= rtol * max(np.abs(H).max(), 1.0)


def test_finite_differences(rng):
    pts = rng.uniform(-0.8, 0.8, (10, 3))
    _fd_check(Ball(2.0), pts)
    _fd_check(Ellipsoid(EllipsoidSpec(2, 1)), pts)
    _fd_check(Quadric(QuadricSpec((1, -1, 0), 0.5, 0.2)), pts)
    pr = rng.uniform(0.3, 1.7, (10, 3))
    for prof in (ProfileCurve.catenoid(), ProfileCurve.cone(1.0, 0.5, (0, 2)), ProfileCurve.cylinder(2.0, (0, 2)),
                 ProfileCurve.custom(np.linspace(0, 2, 9), 1 + np.linspace(0, 2, 9) ** 2 / 4)):
        _fd_check(Rotational(prof), pr)
    _fd_check(Rotational(ProfileCurve.sphere(1.0)), rng.uniform(-0.5, 0.5, (10, 3)))


def test_constant_shift_keeps_derivatives(rng):
    P = rng.normal(size=(20, 3))
    _, g0, H0 = Quadric(QuadricSpec((1, 0, -1), 0, 0)).evaluate(P)
    _, g1, H1 = Quadric(QuadricSpec((1, 0, -1), 0, 0.7)).evaluate(P)
    np.testing.assert_array_equal(g0, g1)
    np.testing.assert_array_equal(H0, H1)


def test_profile_interval():
    with pytest.raises(QueryOutsideProfileInterval):
        ProfileCurve.cone().f(np.array([1.5]))


@pytest.mark.parametrize("a, b, c, outcome, desc", [
    ((1, 1, 0), 1, 0, Outcome.NO_EXISTENCE, None),
    ((1, 1, -1), 0, 0, Outcome.ONLY_TOTALLY_GEODESIC, "flat disk supported at the origin"),
    ((1, 1, -1), 0, 1, Outcome.NO_EXISTENCE, None),
    ((1, 1, 0), 0, 0, Outcome.ONLY_TOTALLY_GEODESIC, "flat disks intersecting ∂Ω orthogonally"),
    ((1, 1, 1), 0, 0, Outcome.UNCONSTRAINED, None),
    ((1, 1, 1), 1, 0, Outcome.UNCONSTRAINED, None),
])
def test_classify_quadric(a, b, c, outcome, desc):
    v = classify_quadric(QuadricSpec(a, b, c))
    assert v.outcome is outcome
    if desc:
        assert v.description == desc


def test_classify_quadric_permutation_invariant():
    import itertools

    for a in itertools.product((-1, 0, 1), repeat=3):
        for b, c in ((0, 0), (0, -1), (0, 1), (0, 2), (1, 0)):
            try:
                spec = QuadricSpec(a, b, c)
            except ValueError:
                continue
            swapped = QuadricSpec((a[1], a[0], a[2]), b, c)
            assert classify_quadric(spec) == classify_quadric(swapped)


@pytest.mark.parametrize("profile, outcome, desc", [
    (ProfileCurve.cone(1.0, 1.0, (0.0, 1.0)), Outcome.NO_EXISTENCE, None),
    (ProfileCurve.catenoid(1.0, (0.0, 2.0)), Outcome.ONLY_TOTALLY_GEODESIC, "flat disk supported at the origin"),
    (ProfileCurve.sphere(1.0, (-0.9, 0.9)), Outcome.UNCONSTRAINED, None),
])
def test_classify_profile(profile, outcome, desc):
    v = classify_profile(profile)
    assert v.outcome is outcome
    if desc:
        assert v.description == desc


def test_verdict_needs_description():
    with pytest.raises(ValueError):
        Verdict(Outcome.ONLY_TOTALLY_GEODESIC)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadricSpec((1, 2, 0))
    with pytest.raises(ValueError):
        EllipsoidSpec(1, 2)


def test_domain_json_roundtrip(tmp_path):
    for dom in (Ball(), Ellipsoid(EllipsoidSpec(2, 1)), Quadric(QuadricSpec((1, 1, 0), 1, 0)),
                Rotational(ProfileCurve.catenoid(1.0, (0.0, 2.0)))):
        d = dom.to_dict()
        assert domain_from_dict(d).to_dict() == d
    p = tmp_path / "bad.json"
    p.write_text('{"a": [1,')
    with pytest.raises(ParseError):
        load_domain(p)
    with pytest.raises(ParseError):
        domain_from_dict({"kind": "torus"})
