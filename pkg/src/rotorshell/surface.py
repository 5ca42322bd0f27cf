"""Parametric surface charts: frames, reciprocal frames, curvature,
and Christoffel coefficients.

Tensors (curvature, strain) are stored as 2x2 symmetric component arrays in
the local orthonormalized frame (Gram-Schmidt of the coordinate frame
E1, E2), so symmetry is a plain matrix property.  The unit normal is always
E3 = unit(E1 x E2); chart authors order coordinates to orient it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Vec3 = np.ndarray
Coords = tuple

DEFAULT_FD_SCALE = 1e-4  # finite-difference step as a fraction of domain span
METRIC_DET_TOL = 1e-12


class ChartError(ValueError):
    pass


class SingularParametrizationError(ChartError):
    """Coordinate frame degenerate (metric determinant below tolerance)."""


class Chart:
    """Map (X1, X2) -> position in R^3 with first and second partials.

    Derivatives are analytic when the ``d*`` callables are supplied,
    otherwise central finite differences with step ``fd_scale * span`` per
    coordinate (one-sided at the boundary of a non-periodic coordinate,
    which marks results as reduced accuracy).
    """

    def __init__(
        self,
        position: Callable[[float, float], Vec3],
        domain,
        d1: Optional[Callable] = None,
        d2: Optional[Callable] = None,
        d11: Optional[Callable] = None,
        d12: Optional[Callable] = None,
        d22: Optional[Callable] = None,
        periodic=(False, False),
        fd_scale: float = DEFAULT_FD_SCALE,
        name: str = "",
    ):
        self._position = position
        self.domain = ((float(domain[0][0]), float(domain[0][1])),
                       (float(domain[1][0]), float(domain[1][1])))
        self._d = (d1, d2)
        self._dd = {(0, 0): d11, (0, 1): d12, (1, 0): d12, (1, 1): d22}
        self.periodic = (bool(periodic[0]), bool(periodic[1]))
        self.fd_scale = float(fd_scale)
        self.name = name

    # -- evaluation -----------------------------------------------------
    @property
    def spans(self):
        return tuple(hi - lo for lo, hi in self.domain)

    @property
    def analytic(self) -> bool:
        return all(f is not None for f in self._d) and all(
            self._dd[k] is not None for k in ((0, 0), (0, 1), (1, 1)))

    def fd_steps(self):
        return tuple(self.fd_scale * s for s in self.spans)

    def position(self, coords) -> Vec3:
        return np.asarray(self._position(coords[0], coords[1]), dtype=float)

    def _fd_mode(self, coords, axis: int):
        """-1/0/+1: backward / central / forward differencing on this axis."""
        if self.periodic[axis]:
            return 0
        lo, hi = self.domain[axis]
        h = self.fd_steps()[axis]
        if coords[axis] - h < lo:
            return 1
        if coords[axis] + h > hi:
            return -1
        return 0

    def _shift(self, coords, axis, delta):
        c = list(coords)
        c[axis] += delta
        return tuple(c)

    def _fd1(self, f, coords, axis):
        h = self.fd_steps()[axis]
        mode = self._fd_mode(coords, axis)
        if mode == 0:
            return (f(self._shift(coords, axis, h)) - f(self._shift(coords, axis, -h))) / (2 * h)
        s = float(mode)
        f0 = f(coords)
        f1 = f(self._shift(coords, axis, s * h))
        f2 = f(self._shift(coords, axis, 2 * s * h))
        return s * (-3.0 * f0 + 4.0 * f1 - f2) / (2 * h)

    def first_derivative(self, coords, axis: int) -> Vec3:
        fn = self._d[axis]
        if fn is not None:
            return np.asarray(fn(coords[0], coords[1]), dtype=float)
        return self._fd1(self.position, coords, axis)

    def second_derivative(self, coords, i: int, j: int) -> Vec3:
        fn = self._dd[(i, j)]
        if fn is not None:
            return np.asarray(fn(coords[0], coords[1]), dtype=float)
        if self._d[i] is not None:
            return self._fd1(lambda c: self.first_derivative(c, i), coords, j)
        if i == j:
            h = self.fd_steps()[i]
            if self._fd_mode(coords, i) == 0:
                return (self.position(self._shift(coords, i, h))
                        - 2.0 * self.position(coords)
                        + self.position(self._shift(coords, i, -h))) / (h * h)
        # mixed (or boundary) case: difference the FD first derivative
        return self._fd1(lambda c: self.first_derivative(c, i), coords, j)

    def reduced_accuracy(self, coords) -> bool:
        return self._fd_mode(coords, 0) != 0 or self._fd_mode(coords, 1) != 0

    def grid(self, n1: int, n2: int):
        """Sample coordinates: n1 x n2 points.

        Periodic coordinates exclude the duplicated endpoint; non-periodic
        coordinates include both ends.
        """
        axes = []
        for axis, n in ((0, n1), (1, n2)):
            lo, hi = self.domain[axis]
            if self.periodic[axis]:
                axes.append(lo + (hi - lo) * np.arange(n) / n)
            else:
                axes.append(np.linspace(lo, hi, n))
        return axes[0], axes[1]

    def contains(self, coords) -> bool:
        return all(lo - 1e-12 <= c <= hi + 1e-12
                   for c, (lo, hi) in zip(coords, self.domain))


@dataclass(frozen=True)
class SurfaceFrame:
    """Frame data at one coordinate point.

    ``ortho`` holds the Gram-Schmidt orthonormal tangent pair as rows;
    ``ortho_coeffs[a, i]`` expresses ortho[a] = sum_i coeffs[a,i] * E_i.
    """
    coords: tuple
    point: Vec3
    E1: Vec3
    E2: Vec3
    normal: Vec3
    recip1: Vec3
    recip2: Vec3
    metric: np.ndarray
    ortho: np.ndarray          # (2,3)
    ortho_coeffs: np.ndarray   # (2,2)
    reduced_accuracy: bool = False

    @property
    def frame_matrix(self) -> np.ndarray:
        """Columns ortho[0], ortho[1], normal: an orthonormal 3x3 basis."""
        return np.column_stack([self.ortho[0], self.ortho[1], self.normal])

    def tangent_from_components(self, comps) -> Vec3:
        return comps[0] * self.ortho[0] + comps[1] * self.ortho[1]

    def components_of(self, v: Vec3) -> np.ndarray:
        return np.array([self.ortho[0] @ v, self.ortho[1] @ v])


def frame_at(chart: Chart, coords) -> SurfaceFrame:
    E1v = chart.first_derivative(coords, 0)
    E2v = chart.first_derivative(coords, 1)
    g11 = E1v @ E1v
    g12 = E1v @ E2v
    g22 = E2v @ E2v
    det = g11 * g22 - g12 * g12
    if det < METRIC_DET_TOL:
        raise SingularParametrizationError(
            "degenerate parametrization at %s (det g = %.3g)" % (coords, det))
    # reciprocal frame from the inverse metric
    recip1 = (g22 * E1v - g12 * E2v) / det
    recip2 = (g11 * E2v - g12 * E1v) / det
    normal = np.cross(E1v, E2v)
    normal /= np.linalg.norm(normal)
    # Gram-Schmidt orthonormal tangent pair
    n1 = math.sqrt(g11)
    o1 = E1v / n1
    u = E2v - (g12 / g11) * E1v
    nu = np.linalg.norm(u)
    o2 = u / nu
    coeffs = np.array([[1.0 / n1, 0.0], [-g12 / (g11 * nu), 1.0 / nu]])
    return SurfaceFrame(
        coords=tuple(coords),
        point=chart.position(coords),
        E1=E1v, E2=E2v, normal=normal,
        recip1=recip1, recip2=recip2,
        metric=np.array([[g11, g12], [g12, g22]]),
        ortho=np.vstack([o1, o2]),
        ortho_coeffs=coeffs,
        reduced_accuracy=chart.reduced_accuracy(coords),
    )


@dataclass(frozen=True)
class SurfaceTensor:
    """2x2 symmetric tensor components in the frame's orthonormal basis."""
    components: np.ndarray
    frame: SurfaceFrame

    def principal(self):
        return principal_decomposition(self.components, self.frame)


def normal_derivatives(chart: Chart, coords, frame: SurfaceFrame = None):
    """d(unit normal)/dX^i for i = 1, 2."""
    if frame is None:
        frame = frame_at(chart, coords)
    E1v, E2v = frame.E1, frame.E2
    N = np.cross(E1v, E2v)
    nN = np.linalg.norm(N)
    out = []
    for i in range(2):
        dE1 = chart.second_derivative(coords, i, 0)
        dE2 = chart.second_derivative(coords, i, 1)
        dN = np.cross(dE1, E2v) + np.cross(E1v, dE2)
        out.append(dN / nN - N * (N @ dN) / nN**3)
    return out


def curvature_tensor(chart: Chart, coords) -> SurfaceTensor:
    """Second-fundamental-form map Y -> -Y . dE3, restricted to the tangent
    plane, as symmetric components in the orthonormal frame."""
    frame = frame_at(chart, coords)
    b = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            b[i, j] = b[j, i] = frame.normal @ chart.second_derivative(coords, i, j)
    C = frame.ortho_coeffs
    return SurfaceTensor(components=C @ b @ C.T, frame=frame)


def christoffels(chart: Chart, coords) -> np.ndarray:
    """gamma[a, i, b] = e^a . d(e_b)/dX^i, a,b = 1..3 (index 0-based),
    i = 1..2, with e_3 = e^3 = unit normal appended to the frame."""
    frame = frame_at(chart, coords)
    dn = normal_derivatives(chart, coords, frame)
    recip = (frame.recip1, frame.recip2, frame.normal)
    gam = np.zeros((3, 2, 3))
    for i in range(2):
        d_eb = (chart.second_derivative(coords, i, 0),
                chart.second_derivative(coords, i, 1),
                dn[i])
        for a in range(3):
            for b in range(3):
                gam[a, i, b] = recip[a] @ d_eb[b]
    return gam


def principal_decomposition(tensor, frame: SurfaceFrame = None):
    """Eigenvalues (descending) and eigenvectors of a symmetric 2x2 tensor.

    With a frame, eigenvectors are returned as unit tangent 3-vectors;
    otherwise as components in the tensor's own basis.
    """
    t = tensor.components if isinstance(tensor, SurfaceTensor) else np.asarray(tensor, dtype=float)
    if frame is None and isinstance(tensor, SurfaceTensor):
        frame = tensor.frame
    w, v = np.linalg.eigh(0.5 * (t + t.T))
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]
    if frame is None:
        vecs = (v[:, 0], v[:, 1])
    else:
        vecs = (frame.tangent_from_components(v[:, 0]),
                frame.tangent_from_components(v[:, 1]))
    return (float(w[0]), float(w[1])), vecs


# -- built-in charts ------------------------------------------------------

def plane_chart(lx: float, ly: float) -> Chart:
    """Flat plate, X(u, v) = (u, v, 0); normal +z."""
    zero = np.zeros(3)
    return Chart(
        position=lambda u, v: np.array([u, v, 0.0]),
        d1=lambda u, v: np.array([1.0, 0.0, 0.0]),
        d2=lambda u, v: np.array([0.0, 1.0, 0.0]),
        d11=lambda u, v: zero, d12=lambda u, v: zero, d22=lambda u, v: zero,
        domain=((0.0, lx), (0.0, ly)),
        name="plane",
    )


def cylinder_chart(radius: float, length: float) -> Chart:
    """Tube of radius a: X1 axial in [0, length], X2 azimuthal arc length
    in [0, 2*pi*a) (periodic).  Both coordinates are unit speed; the normal
    points inward, making the azimuthal principal curvature +1/a."""
    a = float(radius)

    def pos(x1, x2):
        p = x2 / a
        return np.array([a * math.cos(p), a * math.sin(p), x1])

    def d1(x1, x2):
        return np.array([0.0, 0.0, 1.0])

    def d2(x1, x2):
        p = x2 / a
        return np.array([-math.sin(p), math.cos(p), 0.0])

    def d22(x1, x2):
        p = x2 / a
        return np.array([-math.cos(p) / a, -math.sin(p) / a, 0.0])

    zero = np.zeros(3)
    return Chart(
        position=pos, d1=d1, d2=d2,
        d11=lambda x1, x2: zero, d12=lambda x1, x2: zero, d22=d22,
        domain=((0.0, length), (0.0, 2 * math.pi * a)),
        periodic=(False, True),
        name="cylinder(a=%g)" % a,
    )


def sphere_chart(radius: float, colat_band=(math.pi / 3, 2 * math.pi / 3)) -> Chart:
    """Sphere band: X1 azimuth (periodic), X2 colatitude restricted away from
    the poles.  Normal points inward, so both principal curvatures are +1/R."""
    R = float(radius)

    def pos(phi, th):
        return R * np.array([math.cos(phi) * math.sin(th),
                             math.sin(phi) * math.sin(th),
                             math.cos(th)])

    def d1(phi, th):
        return R * np.array([-math.sin(phi) * math.sin(th),
                             math.cos(phi) * math.sin(th), 0.0])

    def d2(phi, th):
        return R * np.array([math.cos(phi) * math.cos(th),
                             math.sin(phi) * math.cos(th),
                             -math.sin(th)])

    def d11(phi, th):
        return R * np.array([-math.cos(phi) * math.sin(th),
                             -math.sin(phi) * math.sin(th), 0.0])

    def d12(phi, th):
        return R * np.array([-math.sin(phi) * math.cos(th),
                             math.cos(phi) * math.cos(th), 0.0])

    def d22(phi, th):
        return R * np.array([-math.cos(phi) * math.sin(th),
                             -math.sin(phi) * math.sin(th),
                             -math.cos(th)])

    return Chart(
        position=pos, d1=d1, d2=d2, d11=d11, d12=d12, d22=d22,
        domain=((0.0, 2 * math.pi), tuple(colat_band)),
        periodic=(True, False),
        name="sphere(R=%g)" % R,
    )
