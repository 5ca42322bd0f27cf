import math

import numpy as np

from rotorshell.surface import Chart


def spec_cylinder(a=3.0, length=10.0):
    """Cylinder parameterized as X(z, phi) = (a cos phi, a sin phi, z)."""
    return Chart(
        position=lambda z, p: np.array([a * math.cos(p), a * math.sin(p), z]),
        d1=lambda z, p: np.array([0.0, 0.0, 1.0]),
        d2=lambda z, p: np.array([-a * math.sin(p), a * math.cos(p), 0.0]),
        d11=lambda z, p: np.zeros(3),
        d12=lambda z, p: np.zeros(3),
        d22=lambda z, p: np.array([-a * math.cos(p), -a * math.sin(p), 0.0]),
        domain=((0.0, length), (0.0, 2.0 * math.pi)),
        periodic=(False, True),
    )


def stretched_plane(lam1=1.0, lam2=1.0, lx=10.0, ly=10.0):
    """Plane chart whose coordinate frame is scaled by (lam1, lam2)."""
    return Chart(
        position=lambda u, v: np.array([lam1 * u, lam2 * v, 0.0]),
        d1=lambda u, v: np.array([lam1, 0.0, 0.0]),
        d2=lambda u, v: np.array([0.0, lam2, 0.0]),
        d11=lambda u, v: np.zeros(3),
        d12=lambda u, v: np.zeros(3),
        d22=lambda u, v: np.zeros(3),
        domain=((0.0, lx), (0.0, ly)),
    )


def bumpy_deformation_chart(base, amp, kx, ky, seed):
    """Smooth analytic perturbation of a chart along its normal direction,
    evaluated by finite differences (position only)."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    (lo1, hi1), (lo2, hi2) = base.domain
    s1, s2 = hi1 - lo1, hi2 - lo2

    def pos(x1, x2):
        from rotorshell.surface import frame_at
        f = frame_at(base, (x1, x2))
        w = amp * math.sin(kx * 2 * math.pi * (x1 - lo1) / s1 + phase[0]) \
            * math.cos(ky * 2 * math.pi * (x2 - lo2) / s2 + phase[1])
        return f.point + w * f.normal

    return Chart(position=pos, domain=base.domain, periodic=base.periodic)
