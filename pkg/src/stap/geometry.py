"""Planar path geometry: bearings, rotations, movement metrics and density ellipses.

Angles follow the anticlockwise convention with 0 pointing east and values
kept in the half-open interval [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, UndefinedDirectionError

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    return np.mod(np.asarray(a, dtype=float) + np.pi, TWO_PI) - np.pi


def atan_star(y, x):
    """Two-argument direction angle of the vector (x, y), in [-pi, pi).

    The usual atan2 returns +pi for directions along the negative x-axis;
    those are mapped to -pi so the half-open range holds exactly.

    Raises
    ------
    UndefinedDirectionError
        If (x, y) is the zero vector (the direction is undefined there).
    """
    if isinstance(y, (float, int)) and isinstance(x, (float, int)):
        if x == 0.0 and y == 0.0:
            raise UndefinedDirectionError("direction of the zero vector is undefined")
        a = math.atan2(y, x)
        return -math.pi if a >= math.pi else a
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any((y == 0.0) & (x == 0.0)):
        raise UndefinedDirectionError("direction of the zero vector is undefined")
    a = np.arctan2(y, x)
    a = np.where(a >= np.pi, a - TWO_PI, a)
    return float(a) if a.ndim == 0 else a


def rotation(omega: float) -> np.ndarray:
    """2x2 anticlockwise rotation matrix for angle omega."""
    c, s = np.cos(omega), np.sin(omega)
    return np.array([[c, -s], [s, c]])


def rotate(omega, vec):
    """Apply rotation(omega) to 2-vectors; both arguments broadcast.

    ``omega`` may be an array of n angles paired with an (n, 2) array of
    vectors, which avoids materialising n rotation matrices.
    """
    if isinstance(omega, (float, int)) and isinstance(vec, np.ndarray) and vec.ndim == 1:
        c, s = math.cos(omega), math.sin(omega)
        return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])
    omega = np.asarray(omega, dtype=float)
    vec = np.asarray(vec, dtype=float)
    c, s = np.cos(omega), np.sin(omega)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


@dataclass(frozen=True)
class Path:
    """A time-ordered 2-D track.

    ``points`` holds the observed (or currently imputed) locations s_1..s_T,
    ``s0`` is the extra location parameter that defines the initial bearing,
    and ``missing_mask[i]`` flags points[i] as unobserved.  Timestamps, when
    present, must be strictly increasing and equally spaced.
    """

    points: np.ndarray
    s0: np.ndarray
    missing_mask: np.ndarray = None
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DataError("points must be an (T, 2) array")
        # single-step reconstructions are representable; model fitting
        # requires 3 points and checks that at ingestion
        if pts.shape[0] < 2:
            raise DataError("a path needs at least 2 points")
        mask = self.missing_mask
        if mask is None:
            mask = np.zeros(pts.shape[0], dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (pts.shape[0],):
            raise DataError("missing_mask length must match points")
        if mask[0]:
            raise DataError("the first point of a path cannot be missing")
        s0 = np.asarray(self.s0, dtype=float).reshape(2)
        ts = self.timestamps
        if ts is not None:
            ts = np.asarray(ts)
            if ts.shape != (pts.shape[0],):
                raise DataError("timestamps length must match points")
            dt = np.diff(ts.astype(float))
            if np.any(dt <= 0):
                raise DataError("timestamps must be strictly increasing")
            if dt.size and not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-6):
                raise DataError("timestamps must be equally spaced")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    def with_points(self, points: np.ndarray) -> "Path":
        return Path(points, self.s0, self.missing_mask, self.timestamps)


@dataclass(frozen=True)
class MovementMetrics:
    """Displacement and polar representations of a path.

    v[i] is the raw displacement s_{i+2}-s_{i+1} (0-based storage of the
    1-based step i+1), y[i] the same displacement in the frame aligned with
    the previous bearing, r the step-lengths, phi the bearing-angles, theta
    the turning-angles, and phi0 the initial bearing derived from s0 and s1.
    """

    v: np.ndarray
    y: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    phi0: float


def bearings(points: np.ndarray, phi0: float) -> np.ndarray:
    """Bearing angles of consecutive displacements, carrying the previous
    bearing forward over zero-length steps."""
    v = np.diff(points, axis=0)
    nonzero = (v[:, 0] != 0.0) | (v[:, 1] != 0.0)
    phi = np.empty(v.shape[0])
    if np.all(nonzero):
        return atan_star(v[:, 1], v[:, 0])
    prev = phi0
    for i in range(v.shape[0]):
        if nonzero[i]:
            prev = atan_star(v[i, 1], v[i, 0])
        phi[i] = prev
    return phi


def path_to_metrics(path: Path) -> MovementMetrics:
    """Decompose a path into displacements, step-lengths, bearing- and
    turning-angles.

    Requires missing points to have been substituted beforehand.  A
    zero-length step keeps the previous bearing (and a zero turning-angle);
    a zero-length initial segment s0 == s1 has no defined bearing and raises.
    """
    pts = path.points
    if np.array_equal(path.s0, pts[0]):
        raise UndefinedDirectionError("s0 equals s1, the initial bearing is undefined")
    phi0 = atan_star(pts[0, 1] - path.s0[1], pts[0, 0] - path.s0[0])
    v = np.diff(pts, axis=0)
    r = np.hypot(v[:, 0], v[:, 1])
    phi = bearings(pts, phi0)
    phi_prev = np.concatenate([[phi0], phi[:-1]])
    y = rotate(-phi_prev, v)
    theta = wrap_angle(phi - phi_prev)
    return MovementMetrics(v=v, y=y, r=r, phi=phi, theta=theta, phi0=phi0)


def metrics_to_path(s1, phi0: float, theta, r) -> Path:
    """Rebuild a path from its initial point, initial bearing, turning-angles
    and step-lengths.  Inverse of path_to_metrics on the observable geometry;
    the reconstructed s0 sits one unit behind s1 along phi0.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if theta.shape != r.shape:
        raise DataError("theta and r must have the same length")
    if np.any(r < 0):
        raise DataError("step lengths must be nonnegative")
    s1 = np.asarray(s1, dtype=float).reshape(2)
    phi = wrap_angle(phi0 + np.cumsum(theta))
    v = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    points = np.vstack([s1, s1 + np.cumsum(v, axis=0)])
    s0 = s1 - np.array([np.cos(phi0), np.sin(phi0)])
    return Path(points=points, s0=s0)


@dataclass(frozen=True)
class Ellipse:
    """Probability-mass contour of a bivariate normal distribution.

    Points s with (s-center)' shape^{-1} (s-center) = radius_sq enclose
    exactly ``level`` of the Gaussian mass; radius_sq = -2 ln(1-level) is the
    chi-square(2) quantile in closed form.
    """

    center: np.ndarray
    shape: np.ndarray
    level: float
    radius_sq: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        shape = np.asarray(self.shape, dtype=float).reshape(2, 2)
        check_spd(shape)
        object.__setattr__(self, "shape", shape)
        if not 0.0 < self.level < 1.0:
            raise DataError("level must lie in (0, 1)")
        object.__setattr__(self, "radius_sq", -2.0 * np.log1p(-self.level))

    def boundary(self, n: int = 100) -> np.ndarray:
        """n points on the contour, anticlockwise from the major axis."""
        w, u = np.linalg.eigh(self.shape)
        t = np.linspace(0.0, TWO_PI, n, endpoint=False)
        circle = np.stack([np.cos(t), np.sin(t)], axis=1)
        return self.center + np.sqrt(self.radius_sq) * circle * np.sqrt(w) @ u.T

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(pts) - self.center
        inv = inv_2x2(self.shape)
        q = np.einsum("ni,ij,nj->n", d, inv, d)
        return q <= self.radius_sq


def check_spd(m: np.ndarray) -> None:
    """Raise DataError unless m is a symmetric positive definite 2x2 matrix."""
    if not isinstance(m, np.ndarray) or m.shape != (2, 2):
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise DataError("expected a 2x2 matrix")
    a, b, c, d = float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1])
    tol = 1e-10 * max(abs(b), abs(c)) + 1e-12
    if abs(b - c) > tol:
        raise DataError("matrix is not symmetric")
    if a <= 0.0 or a * d - b * c <= 0.0:
        raise DataError("matrix is not positive definite")


def inv_2x2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def chol_2x2(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a 2x2 SPD matrix."""
    l11 = np.sqrt(m[0, 0])
    l21 = m[1, 0] / l11
    l22 = np.sqrt(m[1, 1] - l21 * l21)
    return np.array([[l11, 0.0], [l21, l22]])


def ellipse_contour(mean, cov, level: float) -> Ellipse:
    """Ellipse enclosing ``level`` of the N(mean, cov) probability mass."""
    return Ellipse(center=mean, shape=cov, level=level)
