"""Named, reproducible scenarios wiring charts, deformations and the
measurement pipeline into field tables and summaries.

Every scenario produces a deterministic set of artifacts (CSV field tables,
a JSON summary, images for the stereo pipeline) from a parameter dict, a
grid resolution and a seed; reruns are byte-identical.
"""

from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kinematics as kin
from . import stereo as st
from . import tracks as tk
from .energy import Material, ScalingParams, koiter_density_from_traces, \
    scaling_estimates, trace_invariants
from .surface import Chart, cylinder_chart, plane_chart, sphere_chart
from .tracks import PolySurface

SCHEMA_VERSION = "1"

FIELD_COLUMNS = [
    "x1", "x2", "px", "py", "pz",
    "lambda1", "lambda2",
    "strain_dir1_x", "strain_dir1_y", "strain_dir1_z",
    "strain_dir2_x", "strain_dir2_y", "strain_dir2_z",
    "kappa1", "kappa2",
    "curv_dir1_x", "curv_dir1_y", "curv_dir1_z",
    "curv_dir2_x", "curv_dir2_y", "curv_dir2_z",
    "trE2", "trE_sq", "trH2", "trH_sq",
    "stretch_density", "bend_density",
    "theta", "axis_x", "axis_y", "axis_z",
]


class ScenarioError(ValueError):
    pass


@dataclass
class Artifact:
    name: str
    media_type: str
    text: Optional[str] = None
    data: Optional[bytes] = None

    def write_to(self, directory):
        import os
        path = os.path.join(directory, self.name)
        if self.text is not None:
            with open(path, "w", newline="") as fh:
                fh.write(self.text)
        else:
            with open(path, "wb") as fh:
                fh.write(self.data)
        return path

    def payload(self) -> dict:
        if self.text is not None:
            return {"name": self.name, "media_type": self.media_type,
                    "encoding": "text", "content": self.text}
        return {"name": self.name, "media_type": self.media_type,
                "encoding": "base64",
                "content": base64.b64encode(self.data).decode("ascii")}


@dataclass
class ScenarioResult:
    name: str
    summary: dict
    artifacts: list


@dataclass(frozen=True)
class ParamSpec:
    default: object
    doc: str


@dataclass(frozen=True)
class ScenarioDef:
    name: str
    description: str
    params: dict
    default_grid: tuple
    runner: Callable


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError("not JSON serializable: %r" % type(o))


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


# -- built-in geometry -------------------------------------------------------

def tube_squash_chart(radius: float, length_unstrained: float,
                      prestretch: float, collapse: float) -> Chart:
    """Axially pre-strained tube collapsing toward a two-lobe cross-section,
    r(x1, phi) = a (1 - c(x1) cos 2phi) with c = collapse * sin^2(pi x1/l0):
    clamped circular ends, maximal squash at mid-length.  A model of the
    observed deformation shape, not measured data."""
    a = float(radius)
    l0 = float(length_unstrained)
    lam = float(prestretch)
    c0 = float(collapse)
    if not abs(c0) < 1.0:   # negative c squashes the perpendicular lobe
        raise ScenarioError("collapse fraction magnitude must be < 1")

    def parts(u, w):
        phi = w / a
        c = c0 * math.sin(math.pi * u / l0) ** 2
        cp = c0 * (math.pi / l0) * math.sin(2.0 * math.pi * u / l0)
        cpp = 2.0 * c0 * (math.pi / l0) ** 2 * math.cos(2.0 * math.pi * u / l0)
        c2, s2 = math.cos(2.0 * phi), math.sin(2.0 * phi)
        r = a * (1.0 - c * c2)
        return (phi, r,
                -a * cp * c2, -a * cpp * c2,          # r_u, r_uu
                2.0 * a * c * s2, 4.0 * a * c * c2,   # r_phi, r_phiphi
                2.0 * a * cp * s2)                    # r_uphi

    def pos(u, w):
        phi, r, *_ = parts(u, w)
        return np.array([r * math.cos(phi), r * math.sin(phi), lam * u])

    def d1(u, w):
        phi, r, ru, *_ = parts(u, w)
        return np.array([ru * math.cos(phi), ru * math.sin(phi), lam])

    def d2(u, w):
        phi, r, ru, ruu, rp, rpp, rup = parts(u, w)
        cp_, sp_ = math.cos(phi), math.sin(phi)
        return np.array([rp * cp_ - r * sp_, rp * sp_ + r * cp_, 0.0]) / a

    def d11(u, w):
        phi, r, ru, ruu, *_ = parts(u, w)
        return np.array([ruu * math.cos(phi), ruu * math.sin(phi), 0.0])

    def d12(u, w):
        phi, r, ru, ruu, rp, rpp, rup = parts(u, w)
        cp_, sp_ = math.cos(phi), math.sin(phi)
        return np.array([rup * cp_ - ru * sp_, rup * sp_ + ru * cp_, 0.0]) / a

    def d22(u, w):
        phi, r, ru, ruu, rp, rpp, rup = parts(u, w)
        cp_, sp_ = math.cos(phi), math.sin(phi)
        return np.array([rpp * cp_ - 2.0 * rp * sp_ - r * cp_,
                         rpp * sp_ + 2.0 * rp * cp_ - r * sp_, 0.0]) / a ** 2

    return Chart(position=pos, d1=d1, d2=d2, d11=d11, d12=d12, d22=d22,
                 domain=((0.0, l0), (0.0, 2.0 * math.pi * a)),
                 periodic=(False, True), name="tube-squash")


def rolled_plate_chart(length: float, width: float, roll_radius: float) -> Chart:
    """Plate rolled isometrically around a cylinder of the given radius."""
    rho = float(roll_radius)

    def pos(u, v):
        return np.array([rho * math.sin(u / rho), v, rho * (1.0 - math.cos(u / rho))])

    def d1(u, v):
        return np.array([math.cos(u / rho), 0.0, math.sin(u / rho)])

    def d11(u, v):
        return np.array([-math.sin(u / rho) / rho, 0.0, math.cos(u / rho) / rho])

    zero = np.zeros(3)
    return Chart(position=pos, d1=d1, d2=lambda u, v: np.array([0.0, 1.0, 0.0]),
                 d11=d11, d12=lambda u, v: zero, d22=lambda u, v: zero,
                 domain=((0.0, length), (0.0, width)), name="rolled-plate")


def replica_rig(distance: Optional[float] = None, vergence_deg: float = 28.0,
                focal_length: float = 57.0, pixel_pitch: float = 0.017,
                resolution=(512, 256), tube_length: float = 25.0,
                k1=(0.05, 0.04), k2=(0.002, 0.001),
                p1=(2e-4, -1e-4), p2=(-1e-4, 2e-4)) -> list:
    """Two verged cameras along the tube axis, one object-space pixel.

    The default working distance makes one pixel correspond to 0.1 mm on
    the tube, so integer-pixel quantization is exactly the 0.1 mm jump
    scale.  The baseline is parallel to the tube axis, which makes the
    epipolar lines approximately horizontal in the images while the dot
    rows also run horizontally.
    """
    if distance is None:
        distance = 0.1 * focal_length / pixel_pitch
    half = math.radians(vergence_deg / 2.0)
    target = np.array([0.0, 0.0, tube_length / 2.0])
    w, h = resolution
    cams = []
    for i, s in enumerate((-1.0, +1.0)):
        center = target + distance * np.array([0.0, -math.cos(half),
                                               s * math.sin(half)])
        cams.append(st.look_at_camera(
            center=center, target=target, up=(1.0, 0.0, 0.0),
            focal_length=focal_length, pixel_pitch=pixel_pitch,
            principal_point=(w / 2.0, h / 2.0),
            k1=k1[i], k2=k2[i], p1=p1[i], p2=p2[i]))
    return cams


def dot_grid(axial_range, arc_range, spacing: float = 1.0):
    """Dot coordinates at the given spacing: rows along the tube axis."""
    x1s = np.arange(axial_range[0], axial_range[1] + 1e-9, spacing)
    x2s = np.arange(arc_range[0], arc_range[1] + 1e-9, spacing)
    return [(float(u), float(w)) for u in x1s for w in x2s]


# -- field tables ------------------------------------------------------------

def _interior(chart: Chart, x1s, x2s, i, j):
    ok = True
    if not chart.periodic[0]:
        ok &= 0 < i < len(x1s) - 1
    if not chart.periodic[1]:
        ok &= 0 < j < len(x2s) - 1
    return ok


def compute_fields(d: kin.Deformation, material: Material, n1: int, n2: int,
                   rotor_route: bool = True):
    """Evaluate the kinematic state over the grid.

    Returns (rows for the field CSV, summary stats dict).
    """
    chart = d.reference
    x1s, x2s = chart.grid(n1, n2)
    rows = []
    stretch_total = bend_total = area = 0.0
    trE2_sum = trH2_sum = 0.0
    route_diff = 0.0
    h_max = 0.0
    sym_defect = 0.0
    w1 = _quad_weights(x1s, chart.periodic[0])
    w2 = _quad_weights(x2s, chart.periodic[1])
    for i, u in enumerate(x1s):
        for j, w in enumerate(x2s):
            state = kin.kinematic_state(d, (u, w), rotor_route=rotor_route)
            E, H = state.strain, state.h_classical.components
            trE2, trE_sq = trace_invariants(E)
            trH2, trH_sq = trace_invariants(H)
            dens = koiter_density_from_traces(trE2, trE_sq, trH2, trH_sq, material)
            (l1, l2), (sv1, sv2) = state.principal_stretches
            (k1, k2), (cv1, cv2) = state.principal_curvatures
            theta, axis = state.rotation_angle_axis
            p = state.gradient.ref_frame.point
            rows.append([u, w, p[0], p[1], p[2], l1, l2, *sv1, *sv2,
                         k1, k2, *cv1, *cv2, trE2, trE_sq, trH2, trH_sq,
                         dens.stretching, dens.bending, theta, *axis])
            dA = math.sqrt(np.linalg.det(state.gradient.ref_frame.metric)) \
                * w1[i] * w2[j]
            area += dA
            stretch_total += dens.stretching * dA
            bend_total += dens.bending * dA
            trE2_sum += trE2 * dA
            trH2_sum += trH2 * dA
            h_max = max(h_max, float(np.max(np.abs(H))))
            sym_defect = max(sym_defect, abs(H[0, 1] - H[1, 0]))
            if rotor_route and _interior(chart, x1s, x2s, i, j):
                diff = np.max(np.abs(H - state.h_rotor.components))
                route_diff = max(route_diff, float(diff))
                sym_defect = max(sym_defect, abs(state.h_rotor.components[0, 1]
                                                 - state.h_rotor.components[1, 0]))
    stats = {
        "area": area,
        "stretch_energy": stretch_total,
        "bend_energy": bend_total,
        "energy_ratio": (stretch_total / bend_total if bend_total > 0 else None),
        "trE2_mean": trE2_sum / area,
        "trH2_mean": trH2_sum / area,
        "h_max": h_max,
        "h_symmetry_defect": sym_defect,
        "route_max_diff": route_diff if rotor_route else None,
    }
    return rows, stats


def _quad_weights(xs, periodic: bool):
    n = len(xs)
    if periodic:
        step = xs[1] - xs[0] if n > 1 else 1.0
        return np.full(n, step)
    w = np.zeros(n)
    if n == 1:
        return np.ones(1)
    w[0] = (xs[1] - xs[0]) / 2.0
    w[-1] = (xs[-1] - xs[-2]) / 2.0
    for i in range(1, n - 1):
        w[i] = (xs[i + 1] - xs[i - 1]) / 2.0
    return w


def fields_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("# schema=%s\n" % SCHEMA_VERSION)
    buf.write(",".join(FIELD_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(x) for x in r) + "\n")
    return buf.getvalue()


def _material_from(params) -> Material:
    return Material(youngs=params["youngs_modulus"], poisson=params["poisson"],
                    thickness=params["thickness"])


_MATERIAL_PARAMS = {
    "youngs_modulus": ParamSpec(1.0, "Young's modulus [MPa]"),
    "poisson": ParamSpec(0.5, "Poisson ratio [-]"),
    "thickness": ParamSpec(0.3, "wall thickness [mm]"),
}


def _run_field_scenario(name, deformation, material, grid, scaling=None,
                        extra_summary=None):
    n1, n2 = grid
    rows, stats = compute_fields(deformation, material, n1, n2)
    summary = {
        "scenario": name,
        "schema": SCHEMA_VERSION,
        "grid": [n1, n2],
        "fields": stats,
    }
    if scaling is not None:
        rep = scaling_estimates(scaling)
        summary["scaling"] = rep.to_dict()
        summary["scaling_vs_fields"] = {
            "trE2_ratio": stats["trE2_mean"] / rep.trE2 if rep.trE2 > 0 else None,
            "trH2_ratio": stats["trH2_mean"] / rep.trH2,
        }
    if extra_summary:
        summary.update(extra_summary)
    return ScenarioResult(
        name=name, summary=summary,
        artifacts=[
            Artifact("fields.csv", "text/csv", text=fields_csv(rows)),
            Artifact("summary.json", "application/json", text=_json_text(summary)),
        ])


# -- scenario runners --------------------------------------------------------

def _run_sphere_inflate(params, grid, seed):
    r0, r1 = params["radius_initial"], params["radius_final"]
    band = (params["colat_min"], params["colat_max"])
    d = kin.Deformation(sphere_chart(r0, band), sphere_chart(r1, band))
    rotor_term = max(
        kin.rotor_term_magnitude(d, c) for c in
        [(phi, th) for phi in np.linspace(0.3, 5.9, 5)
         for th in np.linspace(band[0] + 0.05, band[1] - 0.05, 4)])
    expected = (r1 - r0) / r0 ** 2
    return _run_field_scenario(
        "sphere-inflate", d, _material_from(params), grid,
        extra_summary={"rotor_term_max": rotor_term,
                       "h_analytic": expected})


def _run_plate_bend(params, grid, seed):
    L, W, rho = params["length"], params["width"], params["roll_radius"]
    if L / rho >= 2.0 * math.pi:
        raise ScenarioError("plate would overlap itself: length/roll_radius >= 2*pi")
    d = kin.Deformation(plane_chart(L, W), rolled_plate_chart(L, W, rho))
    return _run_field_scenario(
        "plate-bend", d, _material_from(params), grid,
        extra_summary={"h_analytic": 1.0 / rho})


def _run_tube_squash(params, grid, seed):
    a, l0, l = params["radius"], params["length_unstrained"], params["length_strained"]
    material = _material_from(params)
    ref_cfg = params["reference_chart"]
    sp_cfg = params["spatial_chart"]
    if (ref_cfg is None) != (sp_cfg is None):
        raise ScenarioError("expression charts must be given for both the "
                            "reference and the spatial configuration")
    if ref_cfg is not None:
        try:
            d = kin.Deformation(PolySurface.from_dict(ref_cfg),
                                PolySurface.from_dict(sp_cfg))
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError("invalid expression chart: %s" % e)
    else:
        d = kin.Deformation(
            cylinder_chart(a, l0),
            tube_squash_chart(a, l0, l / l0, params["collapse"]))
    scaling = ScalingParams(radius=a, length_unstrained=l0, length_strained=l,
                            material=material)
    return _run_field_scenario("tube-squash", d, material, grid, scaling=scaling)


def _run_stereo_synthetic(params, grid, seed):
    a, L = params["radius"], params["length"]
    tube = cylinder_chart(a, L)
    cams = replica_rig(vergence_deg=params["vergence_deg"],
                       focal_length=params["focal_length"],
                       pixel_pitch=params["pixel_pitch"],
                       tube_length=L)
    arc_half = math.radians(params["arc_deg"] / 2.0) * a
    margin = params["axial_margin"]
    # dots sit on the camera-facing side (-y): three-quarter turn from x2 = 0
    arc_center = 3.0 * math.pi * a / 2.0
    dots = dot_grid((margin, L - margin),
                    (arc_center - arc_half, arc_center + arc_half),
                    spacing=params["dot_spacing"])
    radius_px = params["dot_diameter"] / 2.0 / 0.1   # object pixel is 0.1 mm
    # painted disk ~ Gaussian with the disk's second moment (std = r/2)
    render = st.render_synthetic(cams, tube, dots, blob_sigma=radius_px / 2.0,
                                 normal_sign=-1.0)
    dets = [st.mexican_hat_detect(img, sigma=max(1.0, radius_px / math.sqrt(2.0)))
            for img in render.images]

    both = [k for k in range(len(dots))
            if render.visible[0][k] and render.visible[1][k]]
    if len(both) < 10:
        raise ScenarioError("fewer than 10 dots visible to both cameras")
    gt_pairs, det_of_dot = _ground_truth_pairs(render, dets, both)
    seeds = _seed_pairs(render, both, dots)

    pairing = st.pair_points(dets[0], dets[1], seeds, cams[0], cams[1],
                             radius=params["dot_spacing"] / 2.0 / 0.1,
                             epipolar_tol=params["epipolar_tol"])
    correct = sum(1 for p in pairing.pairs if p in gt_pairs)
    accuracy = correct / len(gt_pairs) if gt_pairs else 0.0

    rng = np.random.default_rng(seed)
    rows = []
    sq_exact = []
    sq_quant = []
    for (i, j) in pairing.pairs:
        p1 = (dets[0][i].u, dets[0][i].v)
        p2 = (dets[1][j].u, dets[1][j].v)
        rec, gap = st.triangulate(cams[0], cams[1], p1, p2)
        q1 = (round(p1[0]), round(p1[1]))
        q2 = (round(p2[0]), round(p2[1]))
        rec_q, _ = st.triangulate(cams[0], cams[1], q1, q2)
        dot_idx = _dot_of_pair(det_of_dot, i, j)
        if dot_idx is None:
            continue
        truth = tube.position(dots[dot_idx])
        err = float(np.linalg.norm(rec - truth))
        err_q = float(np.linalg.norm(rec_q - truth))
        sq_exact.append(err ** 2)
        sq_quant.append(err_q ** 2)
        rows.append([dots[dot_idx][0], dots[dot_idx][1], *truth, *rec, err,
                     *rec_q, err_q, gap])
    rms = math.sqrt(np.mean(sq_exact)) if sq_exact else math.inf
    rms_q = math.sqrt(np.mean(sq_quant)) if sq_quant else math.inf

    buf = io.StringIO()
    buf.write("# schema=%s\n" % SCHEMA_VERSION)
    buf.write("x1,x2,true_x,true_y,true_z,rec_x,rec_y,rec_z,err,"
              "recq_x,recq_y,recq_z,err_q,ray_gap\n")
    for r in rows:
        buf.write(",".join(_fmt(x) for x in r) + "\n")

    summary = {
        "scenario": "stereo-synthetic",
        "schema": SCHEMA_VERSION,
        "n_dots": len(dots),
        "n_visible_both": len(both),
        "n_detections": [len(d_) for d_ in dets],
        "n_pairs": len(pairing.pairs),
        "pairing_accuracy": accuracy,
        "rms_error_mm": rms,
        "rms_error_quantized_mm": rms_q,
        "object_pixel_mm": 0.1,
        "seed": seed,
    }
    artifacts = [
        Artifact("dots.csv", "text/csv", text=buf.getvalue()),
        Artifact("summary.json", "application/json", text=_json_text(summary)),
        Artifact("cameras.json", "application/json",
                 text=_json_text([c.to_dict() for c in cams])),
    ]
    for k, img in enumerate(render.images):
        bio = io.BytesIO()
        q = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)
        bio.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        bio.write(q.tobytes())
        artifacts.append(Artifact("camera%d.pgm" % (k + 1), "image/x-portable-graymap",
                                  data=bio.getvalue()))
    return ScenarioResult(name="stereo-synthetic", summary=summary,
                          artifacts=artifacts)


def _ground_truth_pairs(render, dets, both):
    """(det1 index, det2 index) for every dot seen by both cameras, matching
    detections to the nearest projected centre."""
    det_of_dot = {}
    for cam_idx in range(2):
        pts = np.array([[dd.u, dd.v] for dd in dets[cam_idx]]).reshape(-1, 2)
        for k in both:
            proj = render.projections[cam_idx][k]
            d2 = np.sum((pts - np.asarray(proj)) ** 2, axis=1)
            j = int(np.argmin(d2))
            if d2[j] < 4.0:
                det_of_dot.setdefault(k, {})[cam_idx] = j
    pairs = set()
    for k, m in det_of_dot.items():
        if 0 in m and 1 in m:
            pairs.add((m[0], m[1]))
    return pairs, det_of_dot


def _dot_of_pair(det_of_dot, i, j):
    for k, m in det_of_dot.items():
        if m.get(0) == i and m.get(1) == j:
            return k
    return None


def _seed_pairs(render, both, dots):
    """Ten projected correspondences spread over the patch: the visible dots
    nearest to ten fixed anchor fractions of the coordinate ranges."""
    coords = np.array([dots[k] for k in both])
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    anchors = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 0.5),
               (0.5, 0.0), (0.5, 1.0), (0.0, 0.5), (1.0, 0.5), (0.25, 0.25)]
    seeds = []
    used = set()
    for fx, fy in anchors:
        target = lo + np.array([fx, fy]) * (hi - lo)
        order = np.argsort(np.sum((coords - target) ** 2, axis=1))
        for o in order:
            k = both[int(o)]
            if k not in used:
                used.add(k)
                seeds.append((render.projections[0][k], render.projections[1][k]))
                break
    return seeds


def _run_tracks_replay(params, grid, seed):
    a, l0, l = params["radius"], params["length_unstrained"], params["length_strained"]
    lam = l / l0
    c0 = params["collapse"]
    freq = params["frequency"]
    dt = params["sample_dt"]
    n_samples = int(round(params["duration"] / dt))
    material = _material_from(params)
    quantum = params["position_quantum"]

    ref_chart = cylinder_chart(a, l0)
    arc_half = math.radians(params["arc_deg"] / 2.0) * a
    arc_center = 3.0 * math.pi * a / 2.0
    margin = params["axial_margin"]
    dots = np.asarray(dot_grid((margin, l0 - margin),
                               (arc_center - arc_half, arc_center + arc_half),
                               spacing=params["dot_spacing"]))
    jitter = params["dot_jitter"]
    if jitter > 0:   # hand-drawn dots are only approximately on a grid;
        # the irregularity also decorrelates the quantization stair-steps
        dots = dots + np.random.default_rng(seed).uniform(
            -jitter, jitter, size=dots.shape)
    dots = [tuple(d) for d in dots]

    times = np.arange(n_samples) * dt
    collapse_t = c0 * np.sin(2.0 * math.pi * freq * times)
    charts = {}

    def chart_for(c):
        key = round(float(c), 12)
        if key not in charts:
            charts[key] = tube_squash_chart(a, l0, lam, key) if abs(key) > 1e-12 \
                else tube_squash_chart(a, l0, lam, 0.0)
        return charts[key]

    def quantize(p):
        return np.round(p / quantum) * quantum if quantum > 0 else p

    track_list = []
    for k, (u, w) in enumerate(dots):
        positions = np.array([quantize(chart_for(c).position((u, w)))
                              for c in collapse_t])
        track_list.append(tk.PointTrack(
            point_id="p%04d" % k,
            coords=(u, w), times=times, positions=positions,
            reference_position=quantize(ref_chart.position((u, w)))))

    t_star = 0.25 / freq     # peak collapse inside the window
    fits = [tk.fit_sinusoids(tr, n_terms=params["n_terms"]) for tr in track_list]
    fitted = tk.tracks_to_deformation(track_list, t_star, degree=params["degree"],
                                      fits=fits)
    truth = kin.Deformation(ref_chart,
                            tube_squash_chart(a, l0, lam,
                                              c0 * math.sin(2 * math.pi * freq * t_star)))

    n1, n2 = grid
    rows, stats = compute_fields(fitted, material, n1, n2)

    # compare fitted strain against the generating deformation, interior only
    (lo1, hi1), (lo2, hi2) = fitted.domain
    worst_rel = 0.0
    for u in np.linspace(lo1 + 0.2 * (hi1 - lo1), hi1 - 0.2 * (hi1 - lo1), 7):
        for w in np.linspace(lo2 + 0.2 * (hi2 - lo2), hi2 - 0.2 * (hi2 - lo2), 7):
            Ef = kin.strain(kin.deformation_gradient(fitted, (u, w)))
            Et = kin.strain(kin.deformation_gradient(truth, (u, w)))
            worst_rel = max(worst_rel, float(
                np.max(np.abs(Ef - Et)) / max(np.max(np.abs(Et)), 1e-9)))

    resid = float(np.max([f.residual_rms.max() for f in fits]))
    summary = {
        "scenario": "tracks-replay",
        "schema": SCHEMA_VERSION,
        "grid": [n1, n2],
        "n_tracks": len(track_list),
        "n_samples": n_samples,
        "snapshot_time": t_star,
        "fit_residual_rms_max": resid,
        "strain_max_rel_error": worst_rel,
        "fields": stats,
        "seed": seed,
    }
    artifacts = [
        Artifact("fields.csv", "text/csv", text=fields_csv(rows)),
        Artifact("summary.json", "application/json", text=_json_text(summary)),
    ]
    if params["emit_tracks"]:
        buf = io.StringIO()
        tk_path = io.StringIO()
        import csv as _csv
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(tk.TRACK_HEADER)
        for tr in track_list:
            for t, p in zip(tr.times, tr.positions):
                w.writerow([tr.point_id, _fmt(tr.coords[0]), _fmt(tr.coords[1]),
                            _fmt(t), _fmt(p[0]), _fmt(p[1]), _fmt(p[2])])
        wr = _csv.writer(tk_path, lineterminator="\n")
        wr.writerow(tk.REFERENCE_HEADER)
        for tr in track_list:
            p = tr.reference_position
            wr.writerow([tr.point_id, _fmt(tr.coords[0]), _fmt(tr.coords[1]),
                         _fmt(p[0]), _fmt(p[1]), _fmt(p[2])])
        artifacts.append(Artifact("tracks.csv", "text/csv", text=buf.getvalue()))
        artifacts.append(Artifact("tracks_reference.csv", "text/csv",
                                  text=tk_path.getvalue()))
    return ScenarioResult(name="tracks-replay", summary=summary,
                          artifacts=artifacts)


# -- registry ----------------------------------------------------------------

SCENARIOS = {
    "sphere-inflate": ScenarioDef(
        name="sphere-inflate",
        description="Inflate a sphere band; the rotation field stays the "
                    "identity and the whole change of curvature comes from "
                    "stretch acting on the initial curvature.",
        params={
            "radius_initial": ParamSpec(3.0, "initial radius [mm]"),
            "radius_final": ParamSpec(4.5, "inflated radius [mm]"),
            "colat_min": ParamSpec(math.pi / 3, "band colatitude start [rad]"),
            "colat_max": ParamSpec(2 * math.pi / 3, "band colatitude end [rad]"),
            **_MATERIAL_PARAMS,
        },
        default_grid=(50, 50),
        runner=_run_sphere_inflate),
    "plate-bend": ScenarioDef(
        name="plate-bend",
        description="Roll a flat plate onto a cylinder; zero reference "
                    "curvature, so the change of curvature is carried "
                    "entirely by the varying rotation field.",
        params={
            "length": ParamSpec(15.0, "plate length along the roll [mm]"),
            "width": ParamSpec(10.0, "plate width [mm]"),
            "roll_radius": ParamSpec(6.0, "roll radius [mm]"),
            **_MATERIAL_PARAMS,
        },
        default_grid=(50, 50),
        runner=_run_plate_bend),
    "tube-squash": ScenarioDef(
        name="tube-squash",
        description="Axially pre-strained tube collapsing toward a two-lobe "
                    "cross-section at mid-length; the direct-calculation "
                    "counterpart of the magnitude estimates.",
        params={
            "radius": ParamSpec(3.0, "tube radius [mm]"),
            "length_unstrained": ParamSpec(19.0, "unstrained length [mm]"),
            "length_strained": ParamSpec(25.0, "strained length [mm]"),
            "collapse": ParamSpec(0.3, "collapse fraction at mid-length [-]"),
            "reference_chart": ParamSpec(
                None, "expression chart (polynomial coefficients) replacing "
                      "the built-in reference tube; see the README format"),
            "spatial_chart": ParamSpec(
                None, "expression chart replacing the built-in squash map"),
            **_MATERIAL_PARAMS,
        },
        default_grid=(50, 50),
        runner=_run_tube_squash),
    "stereo-synthetic": ScenarioDef(
        name="stereo-synthetic",
        description="Render the dotted tube into two synthetic cameras, "
                    "detect, pair with ten seed correspondences, triangulate, "
                    "and score reconstruction against ground truth.",
        params={
            "radius": ParamSpec(3.0, "tube radius [mm]"),
            "length": ParamSpec(25.0, "tube length (strained) [mm]"),
            "dot_spacing": ParamSpec(1.0, "dot spacing on the surface [mm]"),
            "dot_diameter": ParamSpec(0.7, "dot diameter [mm]"),
            "arc_deg": ParamSpec(90.0, "azimuthal extent of the dot patch [deg]"),
            "axial_margin": ParamSpec(2.0, "axial margin before the first dot [mm]"),
            "vergence_deg": ParamSpec(28.0, "angle between the camera axes [deg]"),
            "focal_length": ParamSpec(57.0, "focal length [mm]"),
            "pixel_pitch": ParamSpec(0.017, "pixel pitch [mm/px]"),
            "epipolar_tol": ParamSpec(1.5, "epipolar consistency tolerance [px]"),
        },
        default_grid=(1, 1),
        runner=_run_stereo_synthetic),
    "tracks-replay": ScenarioDef(
        name="tracks-replay",
        description="Generate quantized point tracks from an oscillating "
                    "squash, smooth them with sinusoid fits, rebuild the "
                    "deformation by surface fitting, and compare against "
                    "the generating fields.",
        params={
            "radius": ParamSpec(3.0, "tube radius [mm]"),
            "length_unstrained": ParamSpec(19.0, "unstrained length [mm]"),
            "length_strained": ParamSpec(25.0, "strained length [mm]"),
            "collapse": ParamSpec(0.1, "peak collapse fraction (onset-scale) [-]"),
            "frequency": ParamSpec(500.0, "oscillation frequency [Hz]"),
            "sample_dt": ParamSpec(8e-5, "sampling interval [s]"),
            "duration": ParamSpec(0.04, "track duration [s]"),
            "position_quantum": ParamSpec(0.1, "position quantization [mm]"),
            "dot_spacing": ParamSpec(0.75, "dot spacing [mm]"),
            "dot_jitter": ParamSpec(0.2, "dot placement jitter [mm]"),
            "arc_deg": ParamSpec(90.0, "azimuthal extent of the patch [deg]"),
            "axial_margin": ParamSpec(1.5, "axial margin [mm]"),
            "n_terms": ParamSpec(8, "sinusoid terms per component"),
            "degree": ParamSpec(5, "surface polynomial degree"),
            "emit_tracks": ParamSpec(False, "include raw track CSVs"),
            **_MATERIAL_PARAMS,
        },
        default_grid=(21, 21),
        runner=_run_tracks_replay),
}


def list_scenarios() -> list:
    return sorted(SCENARIOS)


def describe_scenario(name: str) -> dict:
    sd = _lookup(name)
    return {
        "name": sd.name,
        "description": sd.description,
        "default_grid": list(sd.default_grid),
        "params": {k: {"default": v.default, "doc": v.doc}
                   for k, v in sorted(sd.params.items())},
    }


def _lookup(name: str) -> ScenarioDef:
    if name not in SCENARIOS:
        import difflib
        hint = difflib.get_close_matches(name, SCENARIOS, n=3)
        msg = "unknown scenario %r" % name
        if hint:
            msg += "; did you mean: %s" % ", ".join(hint)
        raise ScenarioError(msg)
    return SCENARIOS[name]


def run_scenario(name: str, params: Optional[dict] = None,
                 grid: Optional[tuple] = None, seed: int = 0) -> ScenarioResult:
    sd = _lookup(name)
    merged = {k: v.default for k, v in sd.params.items()}
    for k, v in (params or {}).items():
        if k not in sd.params:
            raise ScenarioError("unknown parameter %r for scenario %r "
                                "(known: %s)" % (k, name, ", ".join(sorted(sd.params))))
        merged[k] = v
    g = tuple(grid) if grid else sd.default_grid
    if len(g) != 2 or g[0] < 1 or g[1] < 1:
        raise ScenarioError("grid must be two positive integers")
    return sd.runner(merged, g, seed)
