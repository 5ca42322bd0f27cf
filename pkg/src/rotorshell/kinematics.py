"""Deformation between two charts sharing convected coordinates.

The deformation gradient maps the reference tangent frame onto the spatial
one (same coordinate labels on both charts).  Its polar decomposition
splits local deformation into a symmetric positive-definite stretch and a
rotation, carried here as a rotor; the change-of-curvature tensor is then
available through two independent routes:

* classical: pull the spatial curvature back through the gradient and
  subtract the reference curvature;
* rotor: a stretch-times-curvature term plus a term built from spatial
  derivatives of the rotation bivector field.

Tensors are 2x2 symmetric component arrays in the reference orthonormal
frame unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ga3
from .ga3 import Multivector
from .surface import (Chart, SurfaceFrame, SurfaceTensor, curvature_tensor,
                      christoffels, frame_at, principal_decomposition)


class DeformationError(ValueError):
    pass


class OrientationError(DeformationError):
    """Deformation gradient singular or orientation-reversing."""


class BranchAmbiguityError(DeformationError):
    """Rotation near pi between neighbouring samples; continuation ambiguous."""


@dataclass(frozen=True)
class Deformation:
    """Reference and spatial charts over shared convected coordinates."""
    reference: Chart
    spatial: Chart

    def __post_init__(self):
        for (a, b) in zip(self.reference.domain, self.spatial.domain):
            if not np.allclose(a, b):
                raise DeformationError(
                    "charts must share the convected coordinate domain")

    @property
    def domain(self):
        return self.reference.domain


@dataclass(frozen=True)
class DeformationGradient:
    """Tangent map at one point, as the 2x2 matrix between the two
    orthonormal frames: matrix[a, b] = f_a . F(e_b)."""
    ref_frame: SurfaceFrame
    sp_frame: SurfaceFrame
    matrix: np.ndarray

    def push(self, Y) -> np.ndarray:
        """F(Y) for a reference tangent 3-vector Y."""
        comps = self.matrix @ self.ref_frame.components_of(np.asarray(Y, float))
        return self.sp_frame.tangent_from_components(comps)

    def pull_adjoint(self, y) -> np.ndarray:
        """Adjoint map: Fbar(y) for a spatial tangent 3-vector y."""
        comps = self.matrix.T @ self.sp_frame.components_of(np.asarray(y, float))
        return self.ref_frame.tangent_from_components(comps)


def deformation_gradient(d: Deformation, coords) -> DeformationGradient:
    ref = frame_at(d.reference, coords)
    sp = frame_at(d.spatial, coords)
    # F(e_b) = sum_i C[b, i] * E_i^spatial  (convected coordinates)
    e_sp = np.column_stack([sp.E1, sp.E2])          # 3x2
    M = sp.ortho @ e_sp @ ref.ortho_coeffs.T        # 2x2
    return DeformationGradient(ref_frame=ref, sp_frame=sp, matrix=M)


@dataclass(frozen=True)
class PolarDecomposition:
    rotor: Multivector
    stretch: np.ndarray           # 2x2 SPD in the reference orthonormal frame
    rotation_2x2: np.ndarray      # orthonormal-frame components of the rotation


def polar_decompose(F: DeformationGradient) -> PolarDecomposition:
    """F = R U with U = sqrt(Fbar F) SPD and R the rotation carrying the
    reference frame (tangent pair and normal) onto the spatial one."""
    M = F.matrix
    detM = float(np.linalg.det(M))
    if detM <= 0.0:
        raise OrientationError(
            "deformation gradient is singular or orientation-reversing "
            "(det = %.3g)" % detM)
    C = M.T @ M
    w, V = np.linalg.eigh(C)
    if w[0] <= 0.0:
        raise OrientationError("metric image not positive definite")
    sq = np.sqrt(w)
    U = (V * sq) @ V.T
    Uinv = (V / sq) @ V.T
    R2 = M @ Uinv
    rot3 = np.eye(3)
    rot3[:2, :2] = R2
    O = F.sp_frame.frame_matrix @ rot3 @ F.ref_frame.frame_matrix.T
    return PolarDecomposition(rotor=ga3.rotor_from_matrix(O),
                              stretch=U, rotation_2x2=R2)


def strain(F: DeformationGradient) -> np.ndarray:
    """Green-Lagrange strain 0.5 * (Fbar F - G)."""
    M = F.matrix
    return 0.5 * (M.T @ M - np.eye(2))


def curvature_change_classical(d: Deformation, coords) -> SurfaceTensor:
    """H = Fbar b F - B in the reference orthonormal frame."""
    F = deformation_gradient(d, coords)
    B = curvature_tensor(d.reference, coords)
    b = curvature_tensor(d.spatial, coords)
    H = F.matrix.T @ b.components @ F.matrix - B.components
    return SurfaceTensor(components=H, frame=B.frame)


# -- rotor fields over grids ----------------------------------------------

def _rotor_dot(a: Multivector, b: Multivector) -> float:
    return float(np.dot(a.c, b.c))


@dataclass
class RotorField:
    """Sign-continuized rotor field sampled on a coordinate grid."""
    x1: np.ndarray
    x2: np.ndarray
    rotors: np.ndarray           # (n1, n2) object array of Multivector
    ambiguous: list = field(default_factory=list)

    def angle(self, i, j) -> float:
        s = min(1.0, abs(self.rotors[i, j].scalar_part))
        return 2.0 * math.acos(s)


def _grid_neighbors(n1, n2, periodic):
    def nbrs(i, j):
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if periodic[0]:
                a %= n1
            if periodic[1]:
                b %= n2
            if 0 <= a < n1 and 0 <= b < n2:
                yield a, b
    return nbrs


def rotor_field(d: Deformation, x1, x2) -> RotorField:
    """Per-point polar-decomposition rotors with signs made continuous.

    The sweep is seeded at the grid point with the smallest rotation angle
    (deterministic, matches the identity limit) and flips signs so that
    neighbouring rotors correlate positively.  Neighbour pairs whose
    relative rotation is at angle ~pi are recorded as ambiguous.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    n1, n2 = len(x1), len(x2)
    rotors = np.empty((n1, n2), dtype=object)
    for i in range(n1):
        for j in range(n2):
            F = deformation_gradient(d, (x1[i], x2[j]))
            rotors[i, j] = polar_decompose(F).rotor
    angles = np.array([[2.0 * math.acos(min(1.0, abs(rotors[i, j].scalar_part)))
                        for j in range(n2)] for i in range(n1)])
    seed = np.unravel_index(np.argmin(angles), angles.shape)
    periodic = (d.reference.periodic[0], d.reference.periodic[1])
    nbrs = _grid_neighbors(n1, n2, periodic)
    ambiguous = []
    seen = np.zeros((n1, n2), dtype=bool)
    seen[seed] = True
    if rotors[seed].scalar_part < 0:
        rotors[seed] = -rotors[seed]
    queue = [seed]
    while queue:
        i, j = queue.pop(0)
        for a, b in nbrs(i, j):
            if seen[a, b]:
                continue
            dot = _rotor_dot(rotors[i, j], rotors[a, b])
            if abs(dot) < 1e-9:
                ambiguous.append(((i, j), (a, b)))
            if dot < 0:
                rotors[a, b] = -rotors[a, b]
            seen[a, b] = True
            queue.append((a, b))
    return RotorField(x1=x1, x2=x2, rotors=rotors, ambiguous=ambiguous)


def _branch_align(A: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Shift the rotation bivector (coeff triple) by whole turns in its own
    plane to land on the branch nearest ``ref``."""
    theta = np.linalg.norm(A)
    if theta < 1e-14:
        return A
    ahat = A / theta
    best = A
    best_d = np.linalg.norm(A - ref)
    for k in (-1, 1):
        cand = ahat * (theta + 2.0 * math.pi * k)
        dd = np.linalg.norm(cand - ref)
        if dd < best_d:
            best, best_d = cand, dd
    return best


@dataclass
class BivectorField:
    """Rotation bivector field A (coeff triples) with branch continuity."""
    x1: np.ndarray
    x2: np.ndarray
    A: np.ndarray                # (n1, n2, 3) coefficients on (e12, e13, e23)
    degenerate: list = field(default_factory=list)

    def bivector(self, i, j) -> Multivector:
        return Multivector.bivector(self.A[i, j])


def bivector_field_A(rf: RotorField, periodic=(False, False)) -> BivectorField:
    """Pointwise rotation bivectors of a sign-continuized rotor field,
    branch-adjusted along the grid so the field stays continuous (the
    continuity requirement overrides the principal theta in [0, pi] form)."""
    n1, n2 = rf.rotors.shape
    A = np.zeros((n1, n2, 3))
    degenerate = []
    logs = np.empty((n1, n2), dtype=object)
    for i in range(n1):
        for j in range(n2):
            a, flag = ga3.rotor_log(rf.rotors[i, j], return_flag=True)
            logs[i, j] = a.bivector_coeffs
            if flag:
                degenerate.append((i, j))
    angles = np.array([[np.linalg.norm(logs[i, j]) for j in range(n2)]
                       for i in range(n1)])
    seed = np.unravel_index(np.argmin(angles), angles.shape)
    nbrs = _grid_neighbors(n1, n2, periodic)
    seen = np.zeros((n1, n2), dtype=bool)
    seen[seed] = True
    A[seed] = logs[seed]
    queue = [seed]
    while queue:
        i, j = queue.pop(0)
        for a, b in nbrs(i, j):
            if seen[a, b]:
                continue
            A[a, b] = _branch_align(logs[a, b], A[i, j])
            seen[a, b] = True
            queue.append((a, b))
    return BivectorField(x1=rf.x1, x2=rf.x2, A=A, degenerate=degenerate)


# -- rotor-route change of curvature ---------------------------------------

def _rotor_at(d: Deformation, coords) -> tuple[Multivector, PolarDecomposition, DeformationGradient]:
    F = deformation_gradient(d, coords)
    pol = polar_decompose(F)
    return pol.rotor, pol, F


def _rotation_rate_bivectors(d: Deformation, coords, steps, center_rotor):
    """Rotation-rate bivectors dA_i = -2 (dR/dX^i) R~ by central differences
    of the (sign-aligned) rotor field on a local five-point stencil.

    For a rotor field R = exp(-A/2) this is the derivative the decomposition
    needs; it coincides with the coordinate derivative of the bivector field
    A itself whenever the rotation plane is constant, and differs at
    O(|A|^2 dA) when the plane varies.
    """
    rrev = center_rotor.reverse()
    dA = []
    for axis in range(2):
        h = steps[axis]
        sides = []
        for s in (+1.0, -1.0):
            c = list(coords)
            c[axis] += s * h
            rot, _, _ = _rotor_at(d, tuple(c))
            dot = _rotor_dot(rot, center_rotor)
            if abs(dot) < 1e-9:
                raise BranchAmbiguityError(
                    "rotation jumps by ~pi across the stencil at %s" % (coords,))
            if dot < 0:
                rot = -rot
            sides.append(rot.c)
        dR = Multivector((sides[0] - sides[1]) / (2.0 * h))
        omega = (dR * rrev) * (-2.0)
        dA.append(omega.bivector_coeffs)     # exact bivector up to O(h^2)
    return dA


def curvature_change_rotor(d: Deformation, coords,
                           h_scale: Optional[float] = None) -> SurfaceTensor:
    """Change of curvature via the rotor decomposition:

        H(Y) = (U - G) B(Y) - Fbar( e3 . (Y . dA) )

    with e3 the rotated reference normal and Y . dA the rotation-rate
    bivector -2 (Y . dR) R~ of the rotor field, taken by central differences
    on a local five-point stencil of step ``h_scale * span`` per coordinate.
    """
    if h_scale is None:
        h_scale = d.reference.fd_scale
    steps = tuple(h_scale * s for s in d.reference.spans)
    rot_c, pol, F = _rotor_at(d, coords)
    B = curvature_tensor(d.reference, coords)
    dA = _rotation_rate_bivectors(d, coords, steps, rot_c)

    e3 = ga3.apply_rotor(rot_c, Multivector.vector(F.ref_frame.normal))
    C = F.ref_frame.ortho_coeffs
    term2 = np.empty((2, 2))
    for a in range(2):
        # Y . dA for Y = a-th orthonormal tangent vector
        YdA = Multivector.bivector(C[a, 0] * dA[0] + C[a, 1] * dA[1])
        v = ga3.inner(e3, YdA).vector_coeffs     # tangential to the spatial surface
        term2[:, a] = F.matrix.T @ F.sp_frame.components_of(v)
    H = (pol.stretch - np.eye(2)) @ B.components - term2
    return SurfaceTensor(components=H, frame=B.frame)


def rotor_term_magnitude(d: Deformation, coords,
                         h_scale: Optional[float] = None) -> float:
    """Max component magnitude of the rotation-gradient term of H alone."""
    if h_scale is None:
        h_scale = d.reference.fd_scale
    steps = tuple(h_scale * s for s in d.reference.spans)
    rot_c, pol, F = _rotor_at(d, coords)
    dA = _rotation_rate_bivectors(d, coords, steps, rot_c)
    e3 = ga3.apply_rotor(rot_c, Multivector.vector(F.ref_frame.normal))
    C = F.ref_frame.ortho_coeffs
    worst = 0.0
    for a in range(2):
        YdA = Multivector.bivector(C[a, 0] * dA[0] + C[a, 1] * dA[1])
        v = ga3.inner(e3, YdA).vector_coeffs
        worst = max(worst, float(np.max(np.abs(F.matrix.T @ F.sp_frame.components_of(v)))))
    return worst


# -- small-angle component formula -----------------------------------------

class SmallAngleAssumptionError(DeformationError):
    """Rotation has a normal-axis component too large for the tangential-
    axis decomposition A = theta_i e^i ^ e3."""


def _theta_components(d: Deformation, coords, A_coeffs, max_normal_frac):
    """Decompose A = theta_1 e^1^e3 + theta_2 e^2^e3 + residual about the
    normal; returns (theta_1, theta_2, residual)."""
    sp = frame_at(d.spatial, coords)

    def wedge(v, w):
        return np.array([v[0] * w[1] - v[1] * w[0],
                         v[0] * w[2] - v[2] * w[0],
                         v[1] * w[2] - v[2] * w[1]])

    n = sp.normal
    W = np.column_stack([wedge(sp.recip1, n), wedge(sp.recip2, n),
                         wedge(sp.ortho[0], sp.ortho[1])])
    th1, th2, resid = np.linalg.solve(W, A_coeffs)
    norm_A = np.linalg.norm(A_coeffs)
    if max_normal_frac is not None and norm_A > 1e-12:
        if abs(resid) > max_normal_frac * norm_A:
            raise SmallAngleAssumptionError(
                "normal-axis rotation component %.3g exceeds %.0f%% of |A| = %.3g"
                % (abs(resid), 100 * max_normal_frac, norm_A))
    return th1, th2, resid


def h_components_smallangle(d: Deformation, coords,
                            h_scale: Optional[float] = None,
                            max_normal_frac: float = 0.05):
    """Coordinate components H_ij = d_j(theta_i) - theta_k gamma^k_ji of the
    change of curvature, valid when the rotation bivector is dominated by
    its tangential-axis components.

    Returns (H 2x2, symmetry defect |d1 theta2 - d2 theta1|).
    """
    if h_scale is None:
        h_scale = d.reference.fd_scale
    steps = tuple(h_scale * s for s in d.reference.spans)
    rot_c, _, _ = _rotor_at(d, coords)
    A_c = ga3.rotor_log(rot_c).bivector_coeffs
    th_c = _theta_components(d, coords, A_c, max_normal_frac)

    dtheta = np.zeros((2, 2))   # dtheta[i, j] = d theta_i / d x^j
    for axis in range(2):
        h = steps[axis]
        th_side = []
        for s in (+1.0, -1.0):
            c = list(coords)
            c[axis] += s * h
            rot, _, _ = _rotor_at(d, tuple(c))
            if _rotor_dot(rot, rot_c) < 0:
                rot = -rot
            a = _branch_align(ga3.rotor_log(rot).bivector_coeffs, A_c)
            th_side.append(_theta_components(d, tuple(c), a, None))
        for i in range(2):
            dtheta[i, axis] = (th_side[0][i] - th_side[1][i]) / (2.0 * h)

    gam = christoffels(d.spatial, coords)
    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            H[i, j] = dtheta[i, j] - sum(
                th_c[k] * gam[k, j, i] for k in range(2))
    defect = abs(dtheta[1, 0] - dtheta[0, 1])
    return H, defect


# -- per-point bundle -------------------------------------------------------

@dataclass(frozen=True)
class KinematicState:
    """Everything the field tables need at one coordinate point."""
    coords: tuple
    gradient: DeformationGradient
    rotor: Multivector
    stretch: np.ndarray            # U
    strain: np.ndarray             # E
    curvature_ref: SurfaceTensor   # B
    curvature_sp: SurfaceTensor    # b
    h_classical: SurfaceTensor
    h_rotor: Optional[SurfaceTensor]
    rotation_bivector: np.ndarray  # A coefficients (e12, e13, e23)

    @property
    def principal_stretches(self):
        return principal_decomposition(self.stretch, self.gradient.ref_frame)

    @property
    def principal_curvatures(self):
        return self.curvature_sp.principal()

    @property
    def rotation_angle_axis(self):
        theta = float(np.linalg.norm(self.rotation_bivector))
        if theta < 1e-14:
            return 0.0, np.zeros(3)
        b12, b13, b23 = self.rotation_bivector / theta
        return theta, np.array([b23, -b13, b12])


def kinematic_state(d: Deformation, coords, rotor_route: bool = True,
                    h_scale: Optional[float] = None) -> KinematicState:
    F = deformation_gradient(d, coords)
    pol = polar_decompose(F)
    B = curvature_tensor(d.reference, coords)
    b = curvature_tensor(d.spatial, coords)
    Hc = SurfaceTensor(
        components=F.matrix.T @ b.components @ F.matrix - B.components,
        frame=B.frame)
    Hr = curvature_change_rotor(d, coords, h_scale=h_scale) if rotor_route else None
    return KinematicState(
        coords=tuple(coords), gradient=F, rotor=pol.rotor,
        stretch=pol.stretch, strain=strain(F),
        curvature_ref=B, curvature_sp=b,
        h_classical=Hc, h_rotor=Hr,
        rotation_bivector=ga3.rotor_log(pol.rotor).bivector_coeffs,
    )
