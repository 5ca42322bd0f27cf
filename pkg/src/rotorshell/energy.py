"""Shell strain-energy densities and closed-form magnitude estimators.

Units are fixed by construction: lengths mm, Young's modulus N/mm^2 (MPa),
energy densities N/mm (per unit reference area).  The stretching term is
proportional to the thickness h, the bending term to h^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Material:
    """Linear elastic shell material: E [MPa], nu [-], h [mm]."""
    youngs: float
    poisson: float
    thickness: float

    def __post_init__(self):
        if self.youngs <= 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.poisson <= 0.5:
            raise ValueError("Poisson ratio out of range (-1, 0.5]")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")


@dataclass(frozen=True)
class EnergyDensity:
    """Per-unit-reference-area strain energy split [N/mm]."""
    stretching: float
    bending: float

    @property
    def total(self) -> float:
        return self.stretching + self.bending


def trace_invariants(T) -> tuple[float, float]:
    """(tr(T^2), tr(T)^2) of a symmetric 2x2 tensor.

    For eigenvalues a1, a2 these are a1^2 + a2^2 and (a1 + a2)^2.
    """
    T = np.asarray(T, dtype=float)
    tr = T[0, 0] + T[1, 1]
    tr2 = T[0, 0] ** 2 + T[1, 1] ** 2 + 2.0 * T[0, 1] * T[1, 0]
    return float(tr2), float(tr * tr)


def koiter_density(strain, curvature_change, m: Material) -> EnergyDensity:
    """Energy density from the strain tensor E (dimensionless) and change of
    curvature H [1/mm], both symmetric 2x2 in the reference orthonormal frame:

        stretching = E h   / (2 (1-nu^2)) * [(1-nu) tr(E^2) + nu tr(E)^2]
        bending    = E h^3 / (24 (1-nu^2)) * [(1-nu) tr(H^2) + nu tr(H)^2]
    """
    return koiter_density_from_traces(
        *trace_invariants(strain), *trace_invariants(curvature_change), m)


def koiter_density_from_traces(trE2, trE_sq, trH2, trH_sq, m: Material) -> EnergyDensity:
    nu = m.poisson
    denom = 1.0 - nu * nu
    if denom == 0.0:
        raise ValueError("nu^2 = 1 makes the energy singular")
    stretch = m.youngs * m.thickness / (2.0 * denom) * ((1.0 - nu) * trE2 + nu * trE_sq)
    bend = m.youngs * m.thickness ** 3 / (24.0 * denom) * ((1.0 - nu) * trH2 + nu * trH_sq)
    return EnergyDensity(stretching=float(stretch), bending=float(bend))


@dataclass(frozen=True)
class ScalingParams:
    """Geometry entering the order-of-magnitude analysis of a pre-strained
    tube: radius a, unstrained length l0, strained length l (all mm)."""
    radius: float
    length_unstrained: float
    length_strained: float
    material: Material

    def __post_init__(self):
        if self.radius <= 0 or self.length_unstrained <= 0:
            raise ValueError("radius and unstrained length must be positive")
        if self.length_strained < self.length_unstrained:
            raise ValueError("pre-strain assumed tensile (l >= l0)")

    @property
    def prestretch(self) -> float:
        return self.length_strained / self.length_unstrained


def _round_sig(x: float, ndigits: int) -> float:
    if x == 0.0:
        return 0.0
    return round(x, ndigits - 1 - int(math.floor(math.log10(abs(x)))))


@dataclass(frozen=True)
class ScalingReport:
    """Order-of-magnitude estimates for the tube's energy split.

    The pre-stretch enters quoted to two significant figures (the analysis
    treats it as an order-one number, lambda ~ 1.3 for the reference
    geometry); ``lambda_exact`` keeps the raw ratio.
    """
    lambda_exact: float
    lambda_used: float
    theta1: float
    theta2: float
    dtheta: dict                  # estimates of d_j theta_i magnitudes [1/mm]
    trE2: float
    trE_sq: float
    trH2: float
    trH_sq: float
    stretch_density: float
    bend_density: float
    ratio: float                  # stretching / bending
    arctan_overestimate: bool     # straight-line angle beyond the tan~theta range
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_used,
            "lambda_exact": self.lambda_exact,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "dtheta": dict(self.dtheta),
            "trE2": self.trE2,
            "trE_sq": self.trE_sq,
            "trH2": self.trH2,
            "trH_sq": self.trH_sq,
            "stretch_density": self.stretch_density,
            "bend_density": self.bend_density,
            "ratio": self.ratio,
            "arctan_overestimate": self.arctan_overestimate,
            "notes": list(self.notes),
        }


def scaling_estimates(p: ScalingParams) -> ScalingReport:
    """Magnitude estimates for a pre-strained tube collapsing at mid-length.

    Rotation angles: theta1 ~ a/(l0/2) from a straight line between the
    clamped end and a fully collapsed centre (tan replaced by identity, an
    overestimate for very short tubes); theta2 ~ pi/4 where the wall turns
    over.  Their gradients set the change-of-curvature scale, dominated by
    d2(theta2) ~ 1/a, so tr(H^2) ~ (1/a)^2 regardless of l0/a.  Strain
    comes from the pre-stretch alone: eigenvalues of E are (lam^2-1)/2 and
    ~0, so tr(E^2) ~ tr(E)^2 ~ (lam^2-1)^2/4.
    """
    a = p.radius
    l0 = p.length_unstrained
    lam_exact = p.prestretch
    lam = _round_sig(lam_exact, 2)

    theta1 = a / (l0 / 2.0)
    theta2 = math.pi / 4.0
    dtheta = {
        "d1_theta1": 4.0 * a / l0 ** 2,
        "d1_theta2": math.pi / (2.0 * l0),
        "d2_theta1": math.pi / (2.0 * l0),
        "d2_theta2": 1.0 / a,
    }
    trE2 = (lam ** 2 - 1.0) ** 2 / 4.0
    trH2 = (1.0 / a) ** 2
    dens = koiter_density_from_traces(trE2, trE2, trH2, trH2, p.material)
    ratio = dens.stretching / dens.bending if dens.bending > 0 else math.inf
    overest = theta1 > math.tan(math.radians(30.0))
    notes = ()
    if overest:
        notes = ("theta1 straight-line estimate exceeds the ~30 degree range "
                 "where tan(theta) ~ theta; treat it as an overestimate",)
    return ScalingReport(
        lambda_exact=lam_exact, lambda_used=lam,
        theta1=theta1, theta2=theta2, dtheta=dtheta,
        trE2=trE2, trE_sq=trE2, trH2=trH2, trH_sq=trH2,
        stretch_density=dens.stretching, bend_density=dens.bending,
        ratio=ratio, arctan_overestimate=overest, notes=notes,
    )
