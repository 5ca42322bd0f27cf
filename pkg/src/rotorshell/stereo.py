"""Synthetic stereo measurement: pinhole cameras with distortion, dot
detection on rasters, epipolar pairing, temporal association, and
triangulation.

Pixel coordinates are (u, v) with u along image width and v along height;
``raster.pixels[v, u]`` indexes intensity.  Camera poses are rotor +
translation placing the camera in the world; the camera frame is
(x right, y down, z forward along the line of sight).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from . import ga3
from .ga3 import Multivector


class StereoError(ValueError):
    pass


class DegenerateSeedsError(StereoError):
    pass


# -- camera model -----------------------------------------------------------

@dataclass(frozen=True)
class Camera:
    """Pinhole camera with radial (k1, k2) and tangential (p1, p2) distortion."""
    focal_length: float              # [mm]
    pixel_pitch: float               # [mm/px]
    principal_point: tuple           # (cx, cy) [px]
    skew: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    rotor: Multivector = ga3.ONE     # camera-to-world rotation
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))  # [mm]

    def __post_init__(self):
        if self.focal_length <= 0 or self.pixel_pitch <= 0:
            raise ValueError("focal length and pixel pitch must be positive")
        n = self.rotor.norm()
        if abs(n - 1.0) > 1e-9:
            raise ValueError("pose rotor must be normalized")
        object.__setattr__(self, "center", np.asarray(self.center, float))

    @property
    def axes(self) -> np.ndarray:
        """Columns: camera x, y, z axes in world coordinates."""
        return ga3.rotation_matrix(self.rotor)

    @property
    def fpx(self) -> float:
        return self.focal_length / self.pixel_pitch

    @property
    def K(self) -> np.ndarray:
        fx = self.fpx
        cx, cy = self.principal_point
        return np.array([[fx, fx * self.skew, cx], [0.0, fx, cy], [0.0, 0.0, 1.0]])

    def to_camera(self, p) -> np.ndarray:
        return self.axes.T @ (np.asarray(p, float) - self.center)

    def distort(self, x: float, y: float) -> tuple:
        r2 = x * x + y * y
        rad = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        xd = x * rad + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x)
        yd = y * rad + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y
        return xd, yd

    def undistort(self, xd: float, yd: float, iterations: int = 10) -> tuple:
        """Fixed-point inversion of the distortion map."""
        x, y = xd, yd
        for _ in range(iterations):
            r2 = x * x + y * y
            rad = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
            x = (xd - (2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x))) / rad
            y = (yd - (self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y)) / rad
        return x, y

    def project(self, p) -> tuple:
        """World point [mm] -> pixel (u, v).  Requires positive depth."""
        pc = self.to_camera(p)
        if pc[2] <= 1e-9:
            raise StereoError("point at or behind the camera plane (z = %.3g)" % pc[2])
        x, y = pc[0] / pc[2], pc[1] / pc[2]
        xd, yd = self.distort(x, y)
        fx = self.fpx
        cx, cy = self.principal_point
        return (fx * (xd + self.skew * yd) + cx, fx * yd + cy)

    def pixel_to_normalized(self, uv) -> tuple:
        """Pixel -> undistorted normalized image coordinates (x, y)."""
        u, v = float(uv[0]), float(uv[1])
        fx = self.fpx
        cx, cy = self.principal_point
        yd = (v - cy) / fx
        xd = (u - cx) / fx - self.skew * yd
        return self.undistort(xd, yd)

    def ideal_pixel(self, uv) -> np.ndarray:
        """Pixel -> distortion-free pixel coordinates (for epipolar algebra)."""
        x, y = self.pixel_to_normalized(uv)
        h = self.K @ np.array([x, y, 1.0])
        return h[:2]

    def ray(self, uv) -> tuple:
        """Pixel -> (origin, unit direction) of the viewing ray in world space."""
        x, y = self.pixel_to_normalized(uv)
        d = self.axes @ np.array([x, y, 1.0])
        return self.center, d / np.linalg.norm(d)

    def to_dict(self) -> dict:
        return {
            "focal_length": self.focal_length,
            "pixel_pitch": self.pixel_pitch,
            "principal_point": list(self.principal_point),
            "skew": self.skew,
            "k1": self.k1, "k2": self.k2, "p1": self.p1, "p2": self.p2,
            "rotor": self.rotor.c.tolist(),
            "center": self.center.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(
            focal_length=d["focal_length"], pixel_pitch=d["pixel_pitch"],
            principal_point=tuple(d["principal_point"]), skew=d.get("skew", 0.0),
            k1=d.get("k1", 0.0), k2=d.get("k2", 0.0),
            p1=d.get("p1", 0.0), p2=d.get("p2", 0.0),
            rotor=Multivector(np.asarray(d["rotor"], float)),
            center=np.asarray(d["center"], float))


def look_at_camera(center, target, up=(0.0, 0.0, 1.0), **kwargs) -> Camera:
    """Camera at ``center`` looking toward ``target`` (x right, y down)."""
    center = np.asarray(center, float)
    f = np.asarray(target, float) - center
    nf = np.linalg.norm(f)
    if nf < 1e-12:
        raise ValueError("camera center and target coincide")
    f = f / nf
    r = np.cross(f, np.asarray(up, float))
    nr = np.linalg.norm(r)
    if nr < 1e-12:
        raise ValueError("up vector parallel to the line of sight")
    r = r / nr
    d = np.cross(f, r)
    O = np.column_stack([r, d, f])
    return Camera(rotor=ga3.rotor_from_matrix(O), center=center, **kwargs)


# -- epipolar geometry ------------------------------------------------------

def fundamental_matrix(cam1: Camera, cam2: Camera) -> np.ndarray:
    """F with x2_ideal^T F x1_ideal = 0, on distortion-free pixel coords."""
    if np.linalg.norm(cam1.center - cam2.center) < 1e-9:
        raise StereoError("co-located cameras have no epipolar geometry")
    R = cam2.axes.T @ cam1.axes
    t = cam2.axes.T @ (cam1.center - cam2.center)
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    E = tx @ R
    K1i = np.linalg.inv(cam1.K)
    K2i = np.linalg.inv(cam2.K)
    return K2i.T @ E @ K1i


@dataclass(frozen=True)
class EpipolarLine:
    """Locus in image 2 of the viewing ray of a point in image 1.

    A straight homogeneous line (a, b, c) when both cameras are
    distortion-free; otherwise a polyline of the projected ray.
    """
    line: Optional[np.ndarray] = None        # (3,) with a^2 + b^2 = 1
    polyline: Optional[np.ndarray] = None    # (n, 2)

    def distance(self, uv) -> float:
        u, v = float(uv[0]), float(uv[1])
        if self.line is not None:
            a, b, c = self.line
            return abs(a * u + b * v + c)
        p = np.array([u, v])
        best = math.inf
        pts = self.polyline
        for i in range(len(pts) - 1):
            best = min(best, _point_segment_distance(p, pts[i], pts[i + 1]))
        return best


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = ab @ ab
    if denom < 1e-30:
        return float(np.linalg.norm(p - a))
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + s * ab)))


def epipolar_line(cam1: Camera, cam2: Camera, uv1, depth_range=(10.0, 1e4),
                  samples: int = 64) -> EpipolarLine:
    distortion_free = all(
        getattr(c, k) == 0.0 for c in (cam1, cam2) for k in ("k1", "k2", "p1", "p2"))
    if distortion_free:
        F = fundamental_matrix(cam1, cam2)
        l = F @ np.array([uv1[0], uv1[1], 1.0])
        n = math.hypot(l[0], l[1])
        if n < 1e-15:
            raise StereoError("degenerate epipolar line (point at the epipole)")
        return EpipolarLine(line=l / n)
    origin, direction = cam1.ray(uv1)
    depths = np.geomspace(depth_range[0], depth_range[1], samples)
    pts = []
    for s in depths:
        try:
            pts.append(cam2.project(origin + s * direction))
        except StereoError:
            continue
    if len(pts) < 2:
        raise StereoError("ray does not project into the second image")
    return EpipolarLine(polyline=np.asarray(pts))


def symmetric_epipolar_distance(cam1: Camera, cam2: Camera, uv1, uv2,
                                F: Optional[np.ndarray] = None) -> float:
    """Max of the two point-to-epipolar-line pixel distances, computed on
    distortion-corrected pixel coordinates."""
    if F is None:
        F = fundamental_matrix(cam1, cam2)
    x1 = np.append(cam1.ideal_pixel(uv1), 1.0)
    x2 = np.append(cam2.ideal_pixel(uv2), 1.0)
    l2 = F @ x1
    l1 = F.T @ x2
    d2 = abs(x2 @ l2) / math.hypot(l2[0], l2[1])
    d1 = abs(x1 @ l1) / math.hypot(l1[0], l1[1])
    return max(d1, d2)


def triangulate(cam1: Camera, cam2: Camera, uv1, uv2) -> tuple:
    """Midpoint of the shortest segment between the two viewing rays.

    Returns (point, gap); the gap (segment length, mm) is the quality
    metric.  Near-parallel rays raise.
    """
    o1, d1 = cam1.ray(uv1)
    o2, d2 = cam2.ray(uv2)
    c = d1 @ d2
    denom = 1.0 - c * c
    if denom < 1e-12:
        raise StereoError("viewing rays near parallel; triangulation unreliable")
    do = o2 - o1
    s1 = (do @ d1 - (do @ d2) * c) / denom
    s2 = -((do @ d2) - (do @ d1) * c) / denom
    p1 = o1 + s1 * d1
    p2 = o2 + s2 * d2
    return 0.5 * (p1 + p2), float(np.linalg.norm(p1 - p2))


# -- rasters and dot detection ----------------------------------------------

@dataclass
class ImageRaster:
    """Grayscale image, intensities in [0, 1]."""
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, float)
        if px.ndim != 2 or px.shape[0] <= 0 or px.shape[1] <= 0:
            raise ValueError("raster must be a non-empty 2D array")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def save_pgm(self, path):
        q = np.clip(np.round(self.pixels * 255.0), 0, 255).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (self.width, self.height))
            fh.write(q.tobytes())

    @staticmethod
    def load_pgm(path) -> "ImageRaster":
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(b"P5"):
            raise ValueError("not a binary PGM (P5) file")
        fields = []
        pos = 2
        while len(fields) < 3:
            while pos < len(data) and data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                while data[pos:pos + 1] not in (b"\n", b""):
                    pos += 1
                continue
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            fields.append(int(data[start:pos]))
        pos += 1  # single whitespace after maxval
        w, h, maxval = fields
        px = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
        return ImageRaster(px.reshape(h, w).astype(float) / float(maxval))


@dataclass(frozen=True)
class DotDetection:
    u: float
    v: float
    value: float


def mexican_hat_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    """(1/(pi s^4)) (1 - r^2/(2 s^2)) exp(-r^2/(2 s^2)), truncated at 4 s."""
    r = int(math.ceil(truncate * sigma))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    q = (xx * xx + yy * yy) / (2.0 * sigma * sigma)
    return (1.0 / (math.pi * sigma ** 4)) * (1.0 - q) * np.exp(-q)


def mexican_hat_detect(img: ImageRaster, sigma: float,
                       rel_threshold: float = 0.3,
                       abs_floor: float = 1e-6) -> list:
    """Convolve with the blob kernel sized to the expected dot radius and
    return sub-pixel peak locations (quadratic refinement on the 3x3
    neighbourhood), sorted by (v, u)."""
    if sigma < 1.0:
        raise ValueError("sigma must be >= 1 px")
    k = mexican_hat_kernel(sigma)
    if k.shape[0] >= min(img.height, img.width):
        raise ValueError("sigma too large for the image")
    resp = fftconvolve(img.pixels, k, mode="same")
    peak = float(resp.max(initial=0.0))
    thresh = max(abs_floor, rel_threshold * peak)
    if peak <= abs_floor:
        return []
    local_max = (resp == maximum_filter(resp, size=3)) & (resp > thresh)
    local_max[0, :] = local_max[-1, :] = False
    local_max[:, 0] = local_max[:, -1] = False
    out = []
    for v, u in np.argwhere(local_max):
        w = resp[v - 1:v + 2, u - 1:u + 2]
        gx = 0.5 * (w[1, 2] - w[1, 0])
        gy = 0.5 * (w[2, 1] - w[0, 1])
        hxx = w[1, 2] - 2.0 * w[1, 1] + w[1, 0]
        hyy = w[2, 1] - 2.0 * w[1, 1] + w[0, 1]
        hxy = 0.25 * (w[2, 2] - w[2, 0] - w[0, 2] + w[0, 0])
        det = hxx * hyy - hxy * hxy
        if det > 1e-18 and hxx < 0:   # proper maximum of the quadratic
            du = -(hyy * gx - hxy * gy) / det
            dv = -(hxx * gy - hxy * gx) / det
        else:
            du = dv = 0.0
        du = float(np.clip(du, -0.5, 0.5))
        dv = float(np.clip(dv, -0.5, 0.5))
        out.append(DotDetection(u=u + du, v=v + dv, value=float(w[1, 1])))
    out.sort(key=lambda dd: (dd.v, dd.u))
    return out


# -- pairing and tracking ---------------------------------------------------

def homography_from_pairs(pairs: Sequence) -> np.ndarray:
    """Projective transform image1 -> image2 from >= 4 point pairs, by the
    normalized direct linear solve."""
    if len(pairs) < 4:
        raise ValueError("need at least 4 correspondences")
    p1 = np.asarray([p[0] for p in pairs], float)
    p2 = np.asarray([p[1] for p in pairs], float)

    def normalize(pts):
        mu = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - mu, axis=1)), 1e-12)
        T = np.array([[scale, 0.0, -scale * mu[0]],
                      [0.0, scale, -scale * mu[1]],
                      [0.0, 0.0, 1.0]])
        return (pts - mu) * scale, T

    n1, T1 = normalize(p1)
    n2, T2 = normalize(p2)
    A = []
    for (x, y), (xp, yp) in zip(n1, n2):
        A.append([-x, -y, -1, 0, 0, 0, xp * x, xp * y, xp])
        A.append([0, 0, 0, -x, -y, -1, yp * x, yp * y, yp])
    A = np.asarray(A)
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-9 * s[0]:
        raise DegenerateSeedsError(
            "seed configuration degenerate (collinear or coincident points)")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(T2) @ Hn @ T1
    return H / H[2, 2]


def apply_homography(H: np.ndarray, uv) -> np.ndarray:
    h = H @ np.array([uv[0], uv[1], 1.0])
    return h[:2] / h[2]


@dataclass
class PairingResult:
    pairs: list                 # (index into det1, index into det2)
    unmatched1: list
    unmatched2: list
    rejected_epipolar: list     # candidate pairs that failed the line check


def pair_points(det1: Sequence[DotDetection], det2: Sequence[DotDetection],
                seeds: Sequence, cam1: Camera, cam2: Camera,
                radius: float = 5.0, epipolar_tol: float = 1.5) -> PairingResult:
    """Match detections across the two images.

    The seed correspondences fix a projective transform; detections from
    image 1 are mapped through it and matched to the nearest image-2
    detection within ``radius`` px (greedy by distance, one-to-one).  Every
    accepted pair must satisfy the epipolar constraint within
    ``epipolar_tol`` px.
    """
    if len(seeds) < 10:
        raise ValueError("need at least 10 seed pairs, got %d" % len(seeds))
    if not det1 or not det2:
        raise ValueError("detections must be non-empty")
    H = homography_from_pairs(seeds)
    F = fundamental_matrix(cam1, cam2)
    mapped = np.array([apply_homography(H, (d.u, d.v)) for d in det1])
    pts2 = np.array([[d.u, d.v] for d in det2])
    tree = cKDTree(pts2)
    cands = []
    for i, m in enumerate(mapped):
        for j in tree.query_ball_point(m, r=radius):
            cands.append((float(np.linalg.norm(m - pts2[j])), i, j))
    cands.sort()
    used1, used2 = set(), set()
    pairs, rejected = [], []
    for _, i, j in cands:
        if i in used1 or j in used2:
            continue
        d = symmetric_epipolar_distance(cam1, cam2, (det1[i].u, det1[i].v),
                                        (det2[j].u, det2[j].v), F=F)
        if d > epipolar_tol:
            rejected.append((i, j))
            continue
        used1.add(i)
        used2.add(j)
        pairs.append((i, j))
    pairs.sort()
    return PairingResult(
        pairs=pairs,
        unmatched1=[i for i in range(len(det1)) if i not in used1],
        unmatched2=[j for j in range(len(det2)) if j not in used2],
        rejected_epipolar=rejected)


@dataclass
class ImageTrack:
    track_id: int
    start_frame: int
    points: list                # [(u, v), ...] consecutive frames


def associate_over_time(frames: Sequence[Sequence], max_dist: float) -> list:
    """Link detections frame-to-frame by nearest neighbour within
    ``max_dist`` px.  Ambiguity (a track seeing two candidates, or two
    tracks claiming one detection) ends the tracks involved; the detections
    restart under new ids."""
    tracks: list[ImageTrack] = []
    active: list[int] = []
    for f_idx, dets in enumerate(frames):
        pts = np.array([[d.u, d.v] if isinstance(d, DotDetection) else
                        [d[0], d[1]] for d in dets]).reshape(-1, 2)
        claims: dict[int, list[int]] = {}
        if active and len(pts):
            tree = cKDTree(pts)
            for t_idx in active:
                hits = tree.query_ball_point(np.asarray(tracks[t_idx].points[-1]),
                                             r=max_dist)
                if len(hits) == 1:   # 0 or >= 2 candidates: this track ends
                    claims.setdefault(hits[0], []).append(t_idx)
        active = []
        consumed = set()
        for j, claimants in sorted(claims.items()):
            if len(claimants) == 1:   # contested detections restart instead
                tracks[claimants[0]].points.append(tuple(map(float, pts[j])))
                active.append(claimants[0])
                consumed.add(j)
        for j in range(len(pts)):
            if j not in consumed:
                tracks.append(ImageTrack(track_id=len(tracks), start_frame=f_idx,
                                         points=[tuple(map(float, pts[j]))]))
                active.append(len(tracks) - 1)
        active.sort()
    return tracks


# -- synthetic rendering ----------------------------------------------------

@dataclass
class RenderResult:
    images: list                 # one ImageRaster per camera
    visible: list                # per camera: list of bool per dot
    projections: list            # per camera: list of (u, v) or None


def render_synthetic(cams: Sequence[Camera], chart, dots: Sequence,
                     resolution=(512, 256), blob_sigma: float = 2.5,
                     amplitude: float = 0.9, normal_sign: float = 1.0,
                     background: float = 0.0) -> RenderResult:
    """Render Gaussian intensity blobs at the projections of surface dots.

    ``dots`` are (x1, x2) chart coordinates.  A dot is discarded for a
    camera when its surface normal (times ``normal_sign``) faces away from
    it -- the back-face approximation of self-occlusion.
    """
    from .surface import frame_at

    w, h = resolution
    images = [np.full((h, w), background) for _ in cams]
    visible = [[False] * len(dots) for _ in cams]
    projections = [[None] * len(dots) for _ in cams]
    reach = int(math.ceil(4.0 * blob_sigma))
    any_visible = False
    for d_idx, coords in enumerate(dots):
        fr = frame_at(chart, coords)
        n = normal_sign * fr.normal
        for c_idx, cam in enumerate(cams):
            if n @ (cam.center - fr.point) <= 0.0:
                continue
            try:
                u, v = cam.project(fr.point)
            except StereoError:
                continue
            projections[c_idx][d_idx] = (u, v)
            if not (-reach <= u < w + reach and -reach <= v < h + reach):
                continue
            visible[c_idx][d_idx] = True
            any_visible = True
            u0, v0 = int(math.floor(u)), int(math.floor(v))
            us = np.arange(max(0, u0 - reach), min(w, u0 + reach + 1))
            vs = np.arange(max(0, v0 - reach), min(h, v0 + reach + 1))
            if us.size == 0 or vs.size == 0:
                continue
            uu, vv = np.meshgrid(us, vs)
            blob = amplitude * np.exp(-((uu - u) ** 2 + (vv - v) ** 2)
                                      / (2.0 * blob_sigma ** 2))
            images[c_idx][vs[0]:vs[-1] + 1, us[0]:us[-1] + 1] += blob
    if not any_visible:
        raise StereoError("no dots visible to any camera")
    return RenderResult(
        images=[ImageRaster(np.clip(img, 0.0, 1.0)) for img in images],
        visible=visible, projections=projections)


# -- JSON interchange -------------------------------------------------------

def save_cameras(path, cams: Sequence[Camera]):
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in cams], fh, indent=2)
        fh.write("\n")


def load_cameras(path) -> list:
    with open(path) as fh:
        return [Camera.from_dict(d) for d in json.load(fh)]


def save_detections(path, dets: Sequence[DotDetection]):
    with open(path, "w") as fh:
        json.dump([{"u": d.u, "v": d.v, "value": d.value} for d in dets],
                  fh, indent=2)
        fh.write("\n")


def load_detections(path) -> list:
    with open(path) as fh:
        return [DotDetection(**d) for d in json.load(fh)]
