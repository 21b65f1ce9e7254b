import numpy as np
import pytest

from stap.errors import DataError, UndefinedDirectionError
from stap.geometry import (Ellipse, Path, atan_star, ellipse_contour,
                           metrics_to_path, path_to_metrics, rotation,
                           wrap_angle)


def test_atan_star_cardinal_directions():
    assert atan_star(0.0, 1.0) == 0.0
    assert atan_star(1.0, 0.0) == pytest.approx(np.pi / 2)
    # the boundary maps into the half-open range
    assert atan_star(0.0, -1.0) == -np.pi


def test_atan_star_zero_vector_rejected():
    with pytest.raises(UndefinedDirectionError):
        atan_star(0.0, 0.0)


def test_atan_star_range_and_wrapping():
    rng = np.random.default_rng(0)
    a = rng.uniform(-10 * np.pi, 10 * np.pi, 2000)
    out = atan_star(np.sin(a), np.cos(a))
    assert np.all(out >= -np.pi) and np.all(out < np.pi)
    assert np.allclose(wrap_angle(a), out, atol=1e-9)


def test_rotation_basics():
    assert np.allclose(rotation(0.0), np.eye(2))
    assert np.allclose(rotation(np.pi / 2) @ [1.0, 0.0], [0.0, 1.0])
    assert np.isclose(np.linalg.det(rotation(1.234)), 1.0)


def test_rotation_group_property():
    assert np.allclose(rotation(0.3) @ rotation(0.5), rotation(0.8), atol=1e-12)


def test_rotation_inverse_transpose():
    rng = np.random.default_rng(1)
    for w in rng.uniform(-20, 20, 1000):
        r = rotation(w)
        assert np.max(np.abs(r.T - rotation(-w))) < 1e-12
        assert np.max(np.abs(r @ r.T - np.eye(2))) < 1e-12


def test_path_to_metrics_hand_example():
    path = Path(points=[[0, 0], [1, 0], [1, 1]], s0=[-1, 0])
    m = path_to_metrics(path)
    assert np.allclose(m.v, [[1, 0], [0, 1]])
    assert np.allclose(m.phi, [0, np.pi / 2])
    assert np.allclose(m.theta, [0, np.pi / 2])
    assert np.allclose(m.y, [[1, 0], [0, 1]])
    assert m.phi0 == 0.0


def test_metrics_preserve_step_length():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(50, 2)).cumsum(axis=0)
    path = Path(points=pts, s0=pts[0] - [1.0, 0.0])
    m = path_to_metrics(path)
    assert np.allclose(np.linalg.norm(m.v, axis=1), m.r, atol=1e-12)
    assert np.allclose(np.linalg.norm(m.y, axis=1), m.r, atol=1e-12)


def test_theta_equals_wrapped_bearing_difference():
    # independent oracle: wrap phi_i - phi_{i-1} by hand
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(10, 2)).cumsum(axis=0)
    path = Path(points=pts, s0=pts[0] - [0.5, 0.5])
    m = path_to_metrics(path)
    phi_full = np.concatenate([[m.phi0], m.phi])
    expected = np.mod(np.diff(phi_full) + np.pi, 2 * np.pi) - np.pi
    assert np.allclose(m.theta, expected, atol=1e-12)


def test_metrics_to_path_hand_examples():
    p = metrics_to_path([0, 0], 0.0, [0, 0], [1, 1])
    assert np.allclose(p.points, [[0, 0], [1, 0], [2, 0]])
    p = metrics_to_path([0, 0], 0.0, [np.pi / 2], [1])
    assert np.allclose(p.points[1], [0, 1], atol=1e-12)


def test_round_trip_path_to_metrics_and_back():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(30, 2)).cumsum(axis=0)
    path = Path(points=pts, s0=pts[0] - [1.0, 0.0])
    m = path_to_metrics(path)
    back = metrics_to_path(path.points[0], m.phi0, m.theta, m.r)
    assert np.max(np.abs(back.points - path.points)) < 1e-12
    assert path_to_metrics(back).phi0 == pytest.approx(m.phi0)


def test_round_trip_metrics_to_path_fuzz():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n = rng.integers(2, 12)
        theta = rng.uniform(-np.pi, np.pi, n)
        r = rng.uniform(0.05, 3.0, n)
        phi0 = rng.uniform(-np.pi, np.pi)
        s1 = rng.normal(size=2)
        path = metrics_to_path(s1, phi0, theta, r)
        m = path_to_metrics(path)
        worst = max(worst,
                    np.max(np.abs(m.theta - wrap_angle(theta))),
                    np.max(np.abs(m.r - r)))
    assert worst < 1e-9


def test_zero_length_step_carries_bearing():
    path = Path(points=[[0, 0], [1, 0], [1, 0], [2, 0]], s0=[-1, 0])
    m = path_to_metrics(path)
    assert m.r[1] == 0.0
    assert m.phi[1] == m.phi[0]
    assert m.theta[1] == 0.0


def test_degenerate_initial_bearing_raises():
    path = Path(points=[[0, 0], [1, 0], [2, 0]], s0=[0, 0])
    with pytest.raises(UndefinedDirectionError):
        path_to_metrics(path)


def test_path_invariants():
    with pytest.raises(DataError):
        Path(points=[[0, 0]], s0=[0, 0])
    with pytest.raises(DataError):
        Path(points=[[0, 0], [1, 1], [2, 2]], s0=[0, 0],
             missing_mask=[True, False, False])
    with pytest.raises(DataError):
        Path(points=[[0, 0], [1, 1], [2, 2]], s0=[0, 0],
             timestamps=[0, 2, 1])
    with pytest.raises(DataError):
        Path(points=[[0, 0], [1, 1], [2, 2]], s0=[0, 0],
             timestamps=[0, 1, 5])


def test_ellipse_radius_closed_form():
    e = ellipse_contour([0, 0], np.eye(2), 0.95)
    assert e.radius_sq == pytest.approx(-2 * np.log(0.05), abs=1e-12)


def test_ellipse_axis_alignment():
    e = ellipse_contour([0, 0], np.diag([0.2, 1.0]), 0.95)
    pts = e.boundary(400)
    # major axis along the second coordinate
    assert pts[:, 1].max() > pts[:, 0].max()
    q = np.einsum("ni,ij,nj->n", pts, np.linalg.inv(e.shape), pts)
    assert np.allclose(q, e.radius_sq, atol=1e-9)


def test_ellipse_monte_carlo_coverage():
    # oracle: fraction of Gaussian draws inside the 95% contour
    rng = np.random.default_rng(6)
    cov = np.array([[2.0, 0.7], [0.7, 1.0]])
    mean = np.array([1.0, -2.0])
    chol = np.linalg.cholesky(cov)
    draws = mean + rng.standard_normal((1_000_000, 2)) @ chol.T
    e = ellipse_contour(mean, cov, 0.95)
    frac = e.contains(draws).mean()
    assert abs(frac - 0.95) < 0.002


def test_ellipse_rejects_bad_inputs():
    with pytest.raises(DataError):
        ellipse_contour([0, 0], [[1.0, 2.0], [2.0, 1.0]], 0.95)  # not PD
    with pytest.raises(DataError):
        Ellipse([0, 0], np.eye(2), 1.5)
