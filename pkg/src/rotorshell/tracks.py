"""Point-track post-processing.

Tracked material points carry a time series of 3D positions plus their
surface coordinate labels and an unstrained reference position.  Temporal
smoothing fits a sum of sines per position component (the oscillations are
quasi-steady, so a small number of terms suffices and the smooth fit is what
makes time derivatives usable).  A 2D polynomial surface fit over the
coordinate labels then turns a snapshot of smoothed positions into a chart
with exact analytic derivatives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from .surface import Chart


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class PointTrack:
    """One material point: coordinate labels, reference position, and a
    uniformly sampled position time series."""
    point_id: str
    coords: tuple              # (x1, x2) labels
    times: np.ndarray          # [s], strictly increasing
    positions: np.ndarray      # (n, 3) [mm]
    reference_position: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, float)
        p = np.asarray(self.positions, float)
        if t.ndim != 1 or p.shape != (t.size, 3):
            raise ValueError("times (n,) and positions (n,3) required")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)


# -- temporal smoothing -----------------------------------------------------

@dataclass
class SinusoidFit:
    """Per-component sum-of-sines fit about the sample mean:

        x_c(t) = mean_c + sum_i A_ci sin(w_ci t [+ phi_ci])

    Phases are present only when fitted (off by default; the plain form is
    the baseline and absorbs phase imperfectly through its free
    frequencies).
    """
    mean: np.ndarray           # (3,)
    amplitudes: np.ndarray     # (3, n_terms) [mm]
    frequencies: np.ndarray    # (3, n_terms) [rad/s]
    phases: Optional[np.ndarray]
    residual_rms: np.ndarray   # (3,)

    def evaluate(self, t, derivative: int = 0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, float))
        out = np.zeros((t.size, 3))
        for c in range(3):
            ph = self.phases[c] if self.phases is not None else np.zeros_like(self.frequencies[c])
            arg = np.outer(t, self.frequencies[c]) + ph
            w_pow = self.frequencies[c] ** derivative
            quarter = derivative % 4
            wave = np.sin(arg + quarter * (math.pi / 2.0))
            out[:, c] = (wave * (self.amplitudes[c] * w_pow)).sum(axis=1)
            if derivative == 0:
                out[:, c] += self.mean[c]
        return out if out.shape[0] > 1 else out[0]

    def to_dict(self) -> dict:
        d = {
            "mean": self.mean.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "frequencies": self.frequencies.tolist(),
            "residual_rms": self.residual_rms.tolist(),
        }
        if self.phases is not None:
            d["phases"] = self.phases.tolist()
        return d

    @staticmethod
    def from_dict(d: dict) -> "SinusoidFit":
        return SinusoidFit(
            mean=np.asarray(d["mean"], float),
            amplitudes=np.asarray(d["amplitudes"], float),
            frequencies=np.asarray(d["frequencies"], float),
            phases=np.asarray(d["phases"], float) if "phases" in d else None,
            residual_rms=np.asarray(d["residual_rms"], float),
        )


def _spectral_peaks(t: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    """Initial angular frequencies: the n largest periodogram peaks of the
    demeaned signal, parabolic-refined; ties broken by descending power then
    ascending frequency."""
    dt = t[1] - t[0]
    yd = y - y.mean()
    spec = np.abs(np.fft.rfft(yd)) ** 2
    freqs = np.fft.rfftfreq(t.size, dt)
    cands = []
    for i in range(1, spec.size - 1):
        if spec[i] > spec[i - 1] and spec[i] >= spec[i + 1]:
            denom = spec[i - 1] - 2.0 * spec[i] + spec[i + 1]
            delta = 0.0 if denom == 0 else 0.5 * (spec[i - 1] - spec[i + 1]) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
            cands.append((-spec[i], freqs[i] + delta * (freqs[1] - freqs[0])))
    cands.sort()
    picked = [f for _, f in cands[:n]]
    if len(picked) < n:
        # not enough true peaks: fill from the highest remaining bins
        order = np.argsort(-spec[1:]) + 1
        for i in order:
            f = freqs[i]
            if all(abs(f - p) > 1e-12 for p in picked):
                picked.append(f)
            if len(picked) == n:
                break
    return 2.0 * math.pi * np.asarray(sorted(picked[:n]))


def _design(t: np.ndarray, omegas: np.ndarray, with_phases: bool) -> np.ndarray:
    cols = [np.sin(w * t) for w in omegas]
    if with_phases:
        cols += [np.cos(w * t) for w in omegas]
    return np.column_stack(cols)


def _solve_amplitudes(t, yd, omegas, with_phases):
    M = _design(t, omegas, with_phases)
    coef, *_ = np.linalg.lstsq(M, yd, rcond=None)
    resid = yd - M @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


def fit_sinusoid_component(t: np.ndarray, y: np.ndarray, n_terms: int,
                           with_phases: bool = False, sweeps: int = 2):
    """Fit mean + sum of A_i sin(w_i t [+ phi_i]) to one signal component.

    Frequencies start at the spectral peaks and are refined one at a time by
    bounded 1D minimization of the full least-squares residual, alternating
    with the linear amplitude solve.  Negligible-amplitude terms are not
    refined (their frequency is unidentifiable anyway).
    """
    mean = float(y.mean())
    yd = y - mean
    scale = float(np.sqrt(np.mean(yd ** 2)))
    if scale < 1e-12:
        zeros = np.zeros(n_terms)
        return mean, zeros, _spectral_peaks(t, y, n_terms), (zeros if with_phases else None), 0.0

    omegas = _spectral_peaks(t, y, n_terms)
    dw = 2.0 * math.pi / (t[-1] - t[0])     # one FFT bin, angular
    coef, rms = _solve_amplitudes(t, yd, omegas, with_phases)
    for _ in range(sweeps):
        for i in range(n_terms):
            amp_i = math.hypot(coef[i], coef[n_terms + i]) if with_phases else abs(coef[i])
            if amp_i < 1e-6 * scale:
                continue

            def cost(w):
                trial = omegas.copy()
                trial[i] = w
                return _solve_amplitudes(t, yd, trial, with_phases)[1]

            res = minimize_scalar(cost, bounds=(max(omegas[i] - dw, 1e-9), omegas[i] + dw),
                                  method="bounded", options={"xatol": dw * 1e-4})
            if res.fun < rms:
                omegas[i] = float(res.x)
        coef, rms = _solve_amplitudes(t, yd, omegas, with_phases)

    if with_phases:
        a_sin, a_cos = coef[:n_terms], coef[n_terms:]
        amps = np.hypot(a_sin, a_cos)
        phases = np.arctan2(a_cos, a_sin)
        return mean, amps, omegas, phases, rms
    return mean, coef.copy(), omegas, None, rms


def fit_sinusoids(track: PointTrack, n_terms: int = 8,
                  with_phases: bool = False, sweeps: int = 2) -> SinusoidFit:
    """Smooth a track's position time series, one fit per component."""
    t = track.times
    if t.size < 16 * n_terms:
        raise FitError("need at least %d samples for %d terms, got %d"
                       % (16 * n_terms, n_terms, t.size))
    means, amps, oms, phs, rms = [], [], [], [], []
    for c in range(3):
        m, a, w, p, r = fit_sinusoid_component(
            t, track.positions[:, c], n_terms, with_phases, sweeps)
        means.append(m)
        amps.append(a)
        oms.append(w)
        phs.append(p)
        rms.append(r)
    return SinusoidFit(
        mean=np.array(means),
        amplitudes=np.array(amps),
        frequencies=np.array(oms),
        phases=(np.array(phs) if with_phases else None),
        residual_rms=np.array(rms),
    )


# -- polynomial surface fitting ---------------------------------------------

def _total_degree_powers(degree: int):
    return [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]


class PolySurface(Chart):
    """Chart backed by per-component 2D polynomials (total degree bound).

    Coordinates are affinely normalized to [-1, 1]^2 internally for
    conditioning; derivatives are exact polynomial derivatives.
    """

    def __init__(self, coeffs, domain, degree: int, residual_rms=0.0):
        # coeffs: (3, degree+1, degree+1) matrices in normalized coords
        self.coeffs = np.asarray(coeffs, float)
        self.degree = int(degree)
        self.residual_rms = residual_rms
        (lo1, hi1), (lo2, hi2) = domain
        self._mid = np.array([(lo1 + hi1) / 2.0, (lo2 + hi2) / 2.0])
        self._half = np.array([(hi1 - lo1) / 2.0, (hi2 - lo2) / 2.0])
        self._dc = [np.array([npoly.polyder(c, axis=ax) for c in self.coeffs])
                    for ax in (0, 1)]
        self._ddc = [[np.array([npoly.polyder(c, axis=a2) for c in self._dc[a1]])
                      for a2 in (0, 1)] for a1 in (0, 1)]
        super().__init__(
            position=self._pos,
            d1=lambda x1, x2: self._deriv((x1, x2), 0),
            d2=lambda x1, x2: self._deriv((x1, x2), 1),
            d11=lambda x1, x2: self._deriv2((x1, x2), 0, 0),
            d12=lambda x1, x2: self._deriv2((x1, x2), 0, 1),
            d22=lambda x1, x2: self._deriv2((x1, x2), 1, 1),
            domain=domain, name="poly-surface(deg=%d)" % degree)

    def _norm(self, coords):
        return (np.asarray(coords, float) - self._mid) / self._half

    def _pos(self, x1, x2):
        u, v = self._norm((x1, x2))
        return np.array([npoly.polyval2d(u, v, c) for c in self.coeffs])

    def _deriv(self, coords, axis):
        u, v = self._norm(coords)
        scale = 1.0 / self._half[axis]
        return scale * np.array([npoly.polyval2d(u, v, c) for c in self._dc[axis]])

    def _deriv2(self, coords, a1, a2):
        u, v = self._norm(coords)
        scale = 1.0 / (self._half[a1] * self._half[a2])
        return scale * np.array([npoly.polyval2d(u, v, c) for c in self._ddc[a1][a2]])

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "domain": [list(self.domain[0]), list(self.domain[1])],
            "coeffs": self.coeffs.tolist(),
            "residual_rms": (self.residual_rms.tolist()
                             if isinstance(self.residual_rms, np.ndarray)
                             else self.residual_rms),
        }

    @staticmethod
    def from_dict(d: dict) -> "PolySurface":
        return PolySurface(np.asarray(d["coeffs"], float),
                           tuple(tuple(x) for x in d["domain"]),
                           d["degree"], d.get("residual_rms", 0.0))


def fit_surface(points: Sequence, degree: int = 4,
                max_condition: float = 1e8) -> PolySurface:
    """Least-squares 2D polynomial surface through (x1, x2, position) samples.

    Each spatial component is fitted independently; the returned chart has
    exact analytic first and second derivatives.
    """
    pts = [(float(p[0]), float(p[1]), np.asarray(p[2], float)) for p in points]
    powers = _total_degree_powers(degree)
    if len(pts) < len(powers):
        raise FitError("need >= %d points for degree %d, got %d"
                       % (len(powers), degree, len(pts)))
    xy = np.array([[p[0], p[1]] for p in pts])
    pos = np.array([p[2] for p in pts])
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    if np.any(hi - lo <= 0):
        raise FitError("surface coordinates are degenerate (zero spread)")
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    uv = (xy - mid) / half
    M = np.column_stack([uv[:, 0] ** i * uv[:, 1] ** j for i, j in powers])
    cond = np.linalg.cond(M)
    if cond > max_condition:
        raise FitError("design matrix ill conditioned (cond = %.3g); "
                       "spread the coordinates or lower the degree" % cond)
    coeffs = np.zeros((3, degree + 1, degree + 1))
    resid = np.zeros(3)
    for c in range(3):
        sol, *_ = np.linalg.lstsq(M, pos[:, c], rcond=None)
        for (i, j), v in zip(powers, sol):
            coeffs[c, i, j] = v
        resid[c] = float(np.sqrt(np.mean((M @ sol - pos[:, c]) ** 2)))
    return PolySurface(coeffs, ((lo[0], hi[0]), (lo[1], hi[1])), degree,
                       residual_rms=resid)


def tracks_to_deformation(tracks: Sequence[PointTrack], t: float,
                          degree: int = 4, fits: Optional[Sequence[SinusoidFit]] = None,
                          n_terms: int = 8, with_phases: bool = False):
    """Snapshot the smoothed tracks at time t, fit spatial and reference
    polynomial surfaces over the shared coordinate labels, and return the
    resulting Deformation."""
    from .kinematics import Deformation   # local import, avoids cycle

    if fits is None:
        fits = [fit_sinusoids(tr, n_terms=n_terms, with_phases=with_phases)
                for tr in tracks]
    spatial_pts = []
    ref_pts = []
    for tr, f in zip(tracks, fits):
        if tr.reference_position is None:
            raise FitError("track %s has no reference position" % tr.point_id)
        spatial_pts.append((tr.coords[0], tr.coords[1], f.evaluate(t)))
        ref_pts.append((tr.coords[0], tr.coords[1], tr.reference_position))
    sp = fit_surface(spatial_pts, degree=degree)
    # share the spatial fit's coordinate box so both charts are one Deformation
    ref = fit_surface(ref_pts, degree=degree)
    if not np.allclose(ref.domain, sp.domain):
        raise FitError("track coordinate labels disagree between states")
    return Deformation(reference=ref, spatial=sp)


# -- CSV interchange --------------------------------------------------------

TRACK_HEADER = ["id", "x1", "x2", "t", "px", "py", "pz"]
REFERENCE_HEADER = ["id", "x1", "x2", "px", "py", "pz"]


def save_tracks(path, tracks: Sequence[PointTrack]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for tr in tracks:
            for t, p in zip(tr.times, tr.positions):
                w.writerow([tr.point_id, _fmt(tr.coords[0]), _fmt(tr.coords[1]),
                            _fmt(t), _fmt(p[0]), _fmt(p[1]), _fmt(p[2])])


def save_reference(path, tracks: Sequence[PointTrack]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REFERENCE_HEADER)
        for tr in tracks:
            p = tr.reference_position
            if p is None:
                raise FitError("track %s has no reference position" % tr.point_id)
            w.writerow([tr.point_id, _fmt(tr.coords[0]), _fmt(tr.coords[1]),
                        _fmt(p[0]), _fmt(p[1]), _fmt(p[2])])


def load_tracks(track_path, reference_path=None) -> list:
    """Read tracks (and optionally their reference positions) from CSV."""
    rows = {}
    with open(track_path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != TRACK_HEADER:
            raise FitError("unexpected track header %s" % header)
        for rec in r:
            pid = rec[0]
            entry = rows.setdefault(pid, {"coords": (float(rec[1]), float(rec[2])),
                                          "samples": []})
            entry["samples"].append([float(x) for x in rec[3:7]])
    refs = {}
    if reference_path is not None:
        with open(reference_path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header != REFERENCE_HEADER:
                raise FitError("unexpected reference header %s" % header)
            for rec in r:
                refs[rec[0]] = np.array([float(x) for x in rec[3:6]])
    out = []
    for pid, entry in rows.items():
        samples = np.array(sorted(entry["samples"], key=lambda s: s[0]))
        out.append(PointTrack(
            point_id=pid, coords=entry["coords"],
            times=samples[:, 0], positions=samples[:, 1:4],
            reference_position=refs.get(pid)))
    out.sort(key=lambda tr: tr.point_id)
    return out


def _fmt(x: float) -> str:
    return format(float(x), ".12g")
