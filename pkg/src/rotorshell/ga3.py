"""Geometric algebra of 3D Euclidean space.

Multivectors are stored as 8 coefficients over the basis

    [1, e1, e2, e3, e12, e13, e23, e123]

of an orthonormal right-handed frame, with e_i e_i = 1 and
e_i e_j = -e_j e_i for i != j.  Rotors are normalized even multivectors;
``rotor_exp(A)`` returns exp(-A/2) for a rotation bivector A = theta*Ahat,
so that ``apply_rotor(rotor_exp((pi/2)*e12), e1) == e2`` (rotation in the
plane of Ahat carrying e1 toward e2 for Ahat = e12).
"""

from __future__ import annotations

import math

import numpy as np

BASIS_NAMES = ("1", "e1", "e2", "e3", "e12", "e13", "e23", "e123")

# blade index <-> bitmask over {e1, e2, e3}
_IDX_TO_MASK = (0b000, 0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111)
_MASK_TO_IDX = {m: i for i, m in enumerate(_IDX_TO_MASK)}

GRADES = tuple(bin(m).count("1") for m in _IDX_TO_MASK)
_GRADES_ARR = np.array(GRADES)

# reverse flips sign on grades 2 and 3
_REVERSE_SIGNS = np.array([1.0 if g in (0, 1) else -1.0 for g in GRADES])


def _blade_product(mask_a: int, mask_b: int) -> tuple[float, int]:
    """Product of two basis blades: (sign, result mask). Euclidean metric."""
    factors = [i for i in range(3) if mask_a & (1 << i)]
    sign = 1.0
    for j in range(3):
        if not mask_b & (1 << j):
            continue
        swaps = sum(1 for i in factors if i > j)
        if swaps % 2:
            sign = -sign
        if j in factors:
            factors.remove(j)
        else:
            factors.append(j)
    mask = 0
    for i in factors:
        mask |= 1 << i
    return sign, mask


def _build_tables():
    sign = np.zeros((8, 8))
    idx = np.zeros((8, 8), dtype=int)
    for i in range(8):
        for j in range(8):
            s, m = _blade_product(_IDX_TO_MASK[i], _IDX_TO_MASK[j])
            sign[i, j] = s
            idx[i, j] = _MASK_TO_IDX[m]
    return sign, idx

_MUL_SIGN, _MUL_IDX = _build_tables()


class Multivector:
    """Immutable 8-component element of the algebra."""

    __slots__ = ("c",)

    def __init__(self, coefficients):
        c = np.array(coefficients, dtype=float)  # copy, then freeze
        if c.shape != (8,):
            raise ValueError("need 8 coefficients, got shape %s" % (c.shape,))
        object.__setattr__(self, "c", c)
        c.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("Multivector is immutable")

    # -- constructors -------------------------------------------------
    @staticmethod
    def scalar(s: float) -> "Multivector":
        out = np.zeros(8)
        out[0] = s
        return Multivector(out)

    @staticmethod
    def vector(x, y=None, z=None) -> "Multivector":
        if y is None:
            x, y, z = np.asarray(x, dtype=float)
        out = np.zeros(8)
        out[1:4] = (x, y, z)
        return Multivector(out)

    @staticmethod
    def bivector(b12, b13=None, b23=None) -> "Multivector":
        if b13 is None:
            b12, b13, b23 = np.asarray(b12, dtype=float)
        out = np.zeros(8)
        out[4:7] = (b12, b13, b23)
        return Multivector(out)

    # -- views ---------------------------------------------------------
    @property
    def scalar_part(self) -> float:
        return float(self.c[0])

    @property
    def vector_coeffs(self) -> np.ndarray:
        return np.array(self.c[1:4])

    @property
    def bivector_coeffs(self) -> np.ndarray:
        """(b12, b13, b23)."""
        return np.array(self.c[4:7])

    @property
    def pseudoscalar_part(self) -> float:
        return float(self.c[7])

    def grade(self, k: int) -> "Multivector":
        return Multivector(np.where(_GRADES_ARR == k, self.c, 0.0))

    def grades(self, tol: float = 0.0) -> set:
        return {g for g, v in zip(GRADES, self.c) if abs(v) > tol}

    def reverse(self) -> "Multivector":
        return Multivector(self.c * _REVERSE_SIGNS)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.c, self.c)))

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        return Multivector(self.c + other.c)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return Multivector(self.c - other.c)

    def __rsub__(self, other):
        other = _coerce(other)
        return Multivector(other.c - self.c)

    def __neg__(self):
        return Multivector(-self.c)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Multivector(self.c * float(other))
        return geometric_product(self, _coerce(other))

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Multivector(self.c * float(other))
        return geometric_product(_coerce(other), self)

    def __truediv__(self, s):
        return Multivector(self.c / float(s))

    def __repr__(self):
        terms = [
            "%+g%s" % (v, "" if n == "1" else "*" + n)
            for v, n in zip(self.c, BASIS_NAMES)
            if abs(v) > 1e-14
        ]
        return "Multivector(%s)" % (" ".join(terms) or "0")

    def approx_equal(self, other, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.c - _coerce(other).c)) <= tol)


def _coerce(x) -> Multivector:
    if isinstance(x, Multivector):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Multivector.scalar(float(x))
    x = np.asarray(x, dtype=float)
    if x.shape == (3,):
        return Multivector.vector(x)
    if x.shape == (8,):
        return Multivector(x)
    raise TypeError("cannot interpret %r as a multivector" % (x,))


ONE = Multivector.scalar(1.0)
E1 = Multivector.vector(1.0, 0.0, 0.0)
E2 = Multivector.vector(0.0, 1.0, 0.0)
E3 = Multivector.vector(0.0, 0.0, 1.0)
E12 = Multivector.bivector(1.0, 0.0, 0.0)
E13 = Multivector.bivector(0.0, 1.0, 0.0)
E23 = Multivector.bivector(0.0, 0.0, 1.0)
I3 = Multivector(np.array([0.0, 0, 0, 0, 0, 0, 0, 1.0]))


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    a = _coerce(a)
    b = _coerce(b)
    out = np.zeros(8)
    ca, cb = a.c, b.c
    for i in range(8):
        ai = ca[i]
        if ai == 0.0:
            continue
        out[_MUL_IDX[i]] += ai * _MUL_SIGN[i] * cb
    return Multivector(out)


def _graded_product(a: Multivector, b: Multivector, keep) -> Multivector:
    """Sum over blade pairs, keeping terms where keep(ga, gb, gout) is true."""
    a = _coerce(a)
    b = _coerce(b)
    out = np.zeros(8)
    for i in range(8):
        ai = a.c[i]
        if ai == 0.0:
            continue
        for j in range(8):
            bj = b.c[j]
            if bj == 0.0:
                continue
            k = _MUL_IDX[i, j]
            if keep(GRADES[i], GRADES[j], GRADES[k]):
                out[k] += ai * bj * _MUL_SIGN[i, j]
    return Multivector(out)


def inner(a, b) -> Multivector:
    """Grade-lowering inner product: sum of <<a>_r <b>_s>_{|r-s|}, r,s >= 1."""
    return _graded_product(a, b, lambda r, s, g: r >= 1 and s >= 1 and g == abs(r - s))


def outer(a, b) -> Multivector:
    """Grade-raising outer product: sum of <<a>_r <b>_s>_{r+s}."""
    return _graded_product(a, b, lambda r, s, g: g == r + s)


def commutator(a, b) -> Multivector:
    a = _coerce(a)
    b = _coerce(b)
    return (geometric_product(a, b) - geometric_product(b, a)) * 0.5


def cross(a, b) -> Multivector:
    """Classical cross product of two vectors, as -I3 (a ^ b)."""
    a = _coerce(a)
    b = _coerce(b)
    if a.grades(1e-14) - {1} or b.grades(1e-14) - {1}:
        raise ValueError("cross product requires grade-1 (vector) inputs")
    return -geometric_product(I3, outer(a, b))


def rotor_exp(A) -> Multivector:
    """Rotor exp(-A/2) for a rotation bivector A = theta * Ahat.

    Returns cos(theta/2) - Ahat*sin(theta/2); the identity rotor for A = 0.
    """
    A = _coerce(A)
    if A.grades(1e-12) - {2}:
        raise ValueError("rotor_exp expects a pure bivector")
    bc = A.bivector_coeffs
    theta = float(np.linalg.norm(bc))
    if not np.isfinite(theta):
        raise ValueError("non-finite bivector")
    # sin(theta/2)/theta, smooth through theta = 0
    half_sinc = 0.5 * np.sinc(theta / (2.0 * np.pi))
    out = np.zeros(8)
    out[0] = math.cos(0.5 * theta)
    out[4:7] = -half_sinc * bc
    return Multivector(out)


def rotor_log(R, return_flag: bool = False):
    """Rotation bivector A = theta*Ahat with theta in [0, pi], rotor_exp(A) = +/-R.

    At theta = pi the plane returned is the one encoded by this rotor's sign;
    the opposite choice generates the same rotation.  ``return_flag=True``
    additionally returns True when within 1e-9 of that degeneracy.
    """
    R = _coerce(R)
    _check_rotor(R)
    s = R.scalar_part
    bc = R.bivector_coeffs
    if s < 0.0:  # -R is the same rotation; move to the principal branch
        s, bc = -s, -bc
    bnorm = float(np.linalg.norm(bc))
    theta = 2.0 * math.atan2(bnorm, s)
    if bnorm < 1e-300:
        A = Multivector.bivector(0.0, 0.0, 0.0)
    else:
        A = Multivector.bivector(-(theta / bnorm) * bc)
    if return_flag:
        return A, bool(abs(theta - math.pi) < 1e-9)
    return A


def _check_rotor(R: Multivector, tol: float = 1e-6):
    if R.grades(1e-9) - {0, 2}:
        raise ValueError("rotor must be an even multivector")
    n = R.norm()
    if abs(n - 1.0) > tol:
        raise ValueError("rotor is not normalized: |R| = %.3g" % n)


def apply_rotor(R, x):
    """Sandwich map x -> R x R~.  Accepts/returns a 3-array or a Multivector."""
    as_array = not isinstance(x, Multivector)
    xv = _coerce(x)
    out = geometric_product(geometric_product(R, xv), _coerce(R).reverse())
    if as_array:
        return out.vector_coeffs
    return out.grade(1)


def rotation_matrix(R) -> np.ndarray:
    """3x3 matrix of the rotation induced by rotor R (columns = images of e_i)."""
    return np.column_stack([apply_rotor(R, v) for v in (np.eye(3))])


def rotor_from_matrix(O) -> Multivector:
    """Rotor inducing the rotation matrix O, via the largest-diagonal branch.

    Stable for all angles including near pi, where the naive 1 + trace
    construction cancels.
    """
    O = np.asarray(O, dtype=float)
    if O.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    tr = O[0, 0] + O[1, 1] + O[2, 2]
    if tr > max(O[0, 0], O[1, 1], O[2, 2]):
        s = 2.0 * math.sqrt(1.0 + tr)
        w = 0.25 * s
        x = (O[2, 1] - O[1, 2]) / s
        y = (O[0, 2] - O[2, 0]) / s
        z = (O[1, 0] - O[0, 1]) / s
    elif O[0, 0] >= O[1, 1] and O[0, 0] >= O[2, 2]:
        s = 2.0 * math.sqrt(1.0 + O[0, 0] - O[1, 1] - O[2, 2])
        w = (O[2, 1] - O[1, 2]) / s
        x = 0.25 * s
        y = (O[0, 1] + O[1, 0]) / s
        z = (O[0, 2] + O[2, 0]) / s
    elif O[1, 1] >= O[2, 2]:
        s = 2.0 * math.sqrt(1.0 + O[1, 1] - O[0, 0] - O[2, 2])
        w = (O[0, 2] - O[2, 0]) / s
        x = (O[0, 1] + O[1, 0]) / s
        y = 0.25 * s
        z = (O[1, 2] + O[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + O[2, 2] - O[0, 0] - O[1, 1])
        w = (O[1, 0] - O[0, 1]) / s
        x = (O[0, 2] + O[2, 0]) / s
        y = (O[1, 2] + O[2, 1]) / s
        z = 0.25 * s
    # unit quaternion (w, x, y, z) about axis n -> rotor w - sin*(I3 n)
    out = np.zeros(8)
    out[0] = w
    out[4] = -z
    out[5] = y
    out[6] = -x
    r = Multivector(out)
    return r / r.norm()


def rotation_angle_axis(R) -> tuple[float, np.ndarray]:
    """(theta, unit axis) of the rotation of rotor R; axis is zero for theta=0."""
    A = rotor_log(R)
    bc = A.bivector_coeffs
    theta = float(np.linalg.norm(bc))
    if theta < 1e-300:
        return 0.0, np.zeros(3)
    b12, b13, b23 = bc / theta
    return theta, np.array([b23, -b13, b12])
