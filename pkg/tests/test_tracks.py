import json
import math

import numpy as np
import pytest

from rotorshell import tracks as tk
from rotorshell.kinematics import (Deformation, curvature_change_classical,
                                   deformation_gradient, strain)
from rotorshell.scenarios import dot_grid, tube_squash_chart
from rotorshell.surface import curvature_tensor, cylinder_chart

DT = 8e-5   # 12.5 kHz


def make_track(times, positions, coords=(0.0, 0.0), pid="p", ref=None):
    return tk.PointTrack(point_id=pid, coords=coords, times=times,
                         positions=positions, reference_position=ref)


class TestSinusoidFit:
    def test_single_tone_recovery(self):
        t = np.arange(0, 0.1, DT)
        y = 2.0 * np.sin(2 * np.pi * 500.0 * t)
        tr = make_track(t, np.column_stack([y, 0 * y, 0 * y]))
        fit = tk.fit_sinusoids(tr, n_terms=8)
        i = int(np.argmax(np.abs(fit.amplitudes[0])))
        A = abs(fit.amplitudes[0][i])
        f = fit.frequencies[0][i] / (2 * np.pi)
        assert abs(A - 2.0) / 2.0 < 0.01
        assert abs(f - 500.0) / 500.0 < 0.01

    def test_constant_track(self):
        t = np.arange(0, 0.1, DT)
        tr = make_track(t, np.full((t.size, 3), 7.5))
        fit = tk.fit_sinusoids(tr, n_terms=8)
        assert np.max(np.abs(fit.amplitudes)) == 0.0
        assert np.max(fit.residual_rms) == 0.0
        assert np.allclose(fit.evaluate(0.0123), [7.5, 7.5, 7.5])

    def test_eight_tone_quantized(self):
        freqs = np.array([123., 217., 305., 411., 502., 613., 727., 883.])
        amps = np.array([0.9, 0.5, 0.45, 0.3, 1.2, 0.25, 0.15, 0.35])
        t = np.arange(0, 0.1, DT)
        truth = sum(a * np.sin(2 * np.pi * f * t) for a, f in zip(amps, freqs)) + 12.0
        meas = np.round(truth / 0.1) * 0.1    # 0.1 mm quantization
        tr = make_track(t, np.column_stack([meas, 0 * t, 0 * t]))
        fit = tk.fit_sinusoids(tr, n_terms=8)
        assert fit.residual_rms[0] < 0.05
        smoothed = fit.evaluate(t)[:, 0]
        assert np.max(np.abs(smoothed - truth)) < 0.05

    def test_smoothing_necessary_for_derivatives(self):
        # spec'd benchmark: differentiating the fit beats finite-differencing
        # the raw quantized samples by an order of magnitude
        freqs = np.array([123., 217., 305., 411., 502., 613., 727., 883.])
        amps = np.array([0.9, 0.5, 0.45, 0.3, 1.2, 0.25, 0.15, 0.35])
        t = np.arange(0, 0.1, DT)
        truth = sum(a * np.sin(2 * np.pi * f * t) for a, f in zip(amps, freqs))
        true_deriv = sum(a * 2 * np.pi * f * np.cos(2 * np.pi * f * t)
                         for a, f in zip(amps, freqs))
        meas = np.round(truth / 0.1) * 0.1
        tr = make_track(t, np.column_stack([meas, 0 * t, 0 * t]))
        fit = tk.fit_sinusoids(tr, n_terms=8)
        fd = np.gradient(meas, t)
        e_fd = np.sqrt(np.mean((fd - true_deriv) ** 2))
        e_fit = np.sqrt(np.mean((fit.evaluate(t, derivative=1)[:, 0]
                                 - true_deriv) ** 2))
        assert e_fd >= 10.0 * e_fit

    def test_requires_enough_samples(self):
        t = np.arange(0, 100 * DT, DT)
        tr = make_track(t, np.zeros((t.size, 3)))
        with pytest.raises(tk.FitError):
            tk.fit_sinusoids(tr, n_terms=8)

    def test_phase_mode_handles_cosine(self):
        t = np.arange(0, 0.1, DT)
        y = 1.5 * np.cos(2 * np.pi * 400.0 * t)
        tr = make_track(t, np.column_stack([y, 0 * t, 0 * t]))
        fit = tk.fit_sinusoids(tr, n_terms=4, with_phases=True)
        assert fit.residual_rms[0] < 1e-6

    def test_json_round_trip(self):
        t = np.arange(0, 0.1, DT)
        y = np.sin(2 * np.pi * 300.0 * t)
        fit = tk.fit_sinusoids(make_track(t, np.column_stack([y, y, y])),
                               n_terms=4)
        back = tk.SinusoidFit.from_dict(json.loads(json.dumps(fit.to_dict())))
        assert np.allclose(back.evaluate(0.0312), fit.evaluate(0.0312))

    def test_timestamps_must_increase(self):
        t = np.array([0.0, 1e-4, 1e-4, 3e-4])
        with pytest.raises(ValueError):
            make_track(t, np.zeros((4, 3)))


class TestFitSurface:
    def test_plane_exact_and_flat(self):
        pts = [(u, v, np.array([u, v, 0.3 * u - 0.1 * v]))
               for u in np.linspace(0, 10, 8) for v in np.linspace(0, 5, 7)]
        ps = tk.fit_surface(pts, degree=2)
        assert np.max(ps.residual_rms) < 1e-12
        T = curvature_tensor(ps, (5.0, 2.5))
        assert np.max(np.abs(T.components)) < 1e-10

    def test_cylinder_sector_curvature(self):
        a = 3.0
        pts = []
        for u in np.linspace(0, 10, 12):
            for s in np.linspace(-a * np.pi / 4, a * np.pi / 4, 14):
                phi = s / a
                pts.append((u, s, np.array([a * math.cos(phi),
                                            a * math.sin(phi), u])))
        ps = tk.fit_surface(pts, degree=4)
        (k1, k2), _ = curvature_tensor(ps, (5.0, 0.0)).principal()
        assert abs(k1 - 1.0 / 3.0) / (1.0 / 3.0) < 0.02
        assert abs(k2) < 0.01

    def test_polynomial_recovered_exactly(self):
        def poly(u, v):
            return np.array([1 + u + 0.5 * v + 0.25 * u * v,
                             2 - u ** 2 + v,
                             0.1 * u ** 3 - v ** 2 + u * v])
        pts = [(u, v, poly(u, v)) for u in np.linspace(-2, 2, 9)
               for v in np.linspace(-1, 3, 8)]
        ps = tk.fit_surface(pts, degree=3)
        for u in np.linspace(-2, 2, 9):
            for v in np.linspace(-1, 3, 9):
                assert np.max(np.abs(ps.position((u, v)) - poly(u, v))) < 1e-9

    def test_residual_decreases_with_degree(self):
        a = 3.0
        pts = []
        for u in np.linspace(0, 10, 11):
            for s in np.linspace(-a * np.pi / 3, a * np.pi / 3, 13):
                phi = s / a
                pts.append((u, s, np.array([a * math.cos(phi),
                                            a * math.sin(phi), u])))
        resid = [np.max(tk.fit_surface(pts, degree=d).residual_rms)
                 for d in (1, 2, 3, 4, 5)]
        assert all(r2 <= r1 + 1e-14 for r1, r2 in zip(resid, resid[1:]))

    def test_affine_relabeling_invariance(self):
        def poly(u, v):
            return np.array([1 + u + 0.5 * v, 2 - u ** 2 + v,
                             0.1 * u ** 3 - v ** 2 + u * v])
        grid = [(u, v) for u in np.linspace(-2, 2, 9)
                for v in np.linspace(-1, 3, 8)]
        s1 = tk.fit_surface([(u, v, poly(u, v)) for u, v in grid], degree=3)
        s2 = tk.fit_surface([(3 * u + 7, 2 * v + 1, poly(u, v))
                             for u, v in grid], degree=3)
        (p1, q1), _ = curvature_tensor(s1, (0.5, 0.5)).principal()
        (p2, q2), _ = curvature_tensor(s2, (3 * 0.5 + 7, 2 * 0.5 + 1)).principal()
        assert abs(p1 - p2) < 1e-6 and abs(q1 - q2) < 1e-6

    def test_too_few_points(self):
        pts = [(0.0, 0.0, np.zeros(3)), (1.0, 0.0, np.zeros(3)),
               (0.0, 1.0, np.zeros(3))]
        with pytest.raises(tk.FitError):
            tk.fit_surface(pts, degree=2)

    def test_degenerate_coordinates(self):
        pts = [(float(i), 0.0, np.array([i, 0.0, 0.0])) for i in range(12)]
        with pytest.raises(tk.FitError):
            tk.fit_surface(pts, degree=2)


def synthetic_tracks(c0=0.1, n_frames=240, freq=500.0, quantum=0.0,
                     spacing=0.75, arc_deg=80.0):
    a, l0, lam = 3.0, 19.0, 25.0 / 19.0
    ref = cylinder_chart(a, l0)
    arc_half = math.radians(arc_deg / 2.0) * a
    center = 3 * math.pi * a / 2.0
    dots = dot_grid((1.5, l0 - 1.5), (center - arc_half, center + arc_half),
                    spacing)
    times = np.arange(n_frames) * DT
    collapse = c0 * np.sin(2 * np.pi * freq * times)
    charts = {c: tube_squash_chart(a, l0, lam, c) for c in np.unique(collapse)}

    def q(p):
        return np.round(p / quantum) * quantum if quantum > 0 else p

    out = []
    for k, (u, w) in enumerate(dots):
        pos = np.array([q(charts[c].position((u, w))) for c in collapse])
        out.append(tk.PointTrack(point_id="p%03d" % k, coords=(u, w),
                                 times=times, positions=pos,
                                 reference_position=q(ref.position((u, w)))))
    truth_peak = Deformation(ref, tube_squash_chart(a, l0, lam, c0))
    return out, truth_peak


class TestTracksToDeformation:
    def test_identity_motion(self):
        # tracks that never move, spatial = reference: E and H vanish
        a, l0 = 3.0, 19.0
        ref = cylinder_chart(a, l0)
        arc_half = math.radians(40.0) * a
        center = 3 * math.pi * a / 2.0
        dots = dot_grid((1.5, l0 - 1.5), (center - arc_half, center + arc_half), 0.75)
        times = np.arange(200) * DT
        trks = [tk.PointTrack(point_id=str(k), coords=(u, w), times=times,
                              positions=np.tile(ref.position((u, w)), (200, 1)),
                              reference_position=ref.position((u, w)))
                for k, (u, w) in enumerate(dots)]
        d = tk.tracks_to_deformation(trks, t=0.008, degree=4, n_terms=4)
        coords = (9.0, center)
        E = strain(deformation_gradient(d, coords))
        H = curvature_change_classical(d, coords).components
        assert np.max(np.abs(E)) < 1e-8
        assert np.max(np.abs(H)) < 1e-6

    def test_recovers_analytic_strain_field(self):
        trks, truth = synthetic_tracks(c0=0.1, quantum=0.0)
        d = tk.tracks_to_deformation(trks, t=0.25 / 500.0, degree=5, n_terms=4)
        (lo1, hi1), (lo2, hi2) = d.domain
        worst = 0.0
        for u in np.linspace(lo1 + 0.2 * (hi1 - lo1), hi1 - 0.2 * (hi1 - lo1), 6):
            for w in np.linspace(lo2 + 0.2 * (hi2 - lo2), hi2 - 0.2 * (hi2 - lo2), 6):
                Ef = strain(deformation_gradient(d, (u, w)))
                Et = strain(deformation_gradient(truth, (u, w)))
                worst = max(worst, float(np.max(np.abs(Ef - Et))
                                         / np.max(np.abs(Et))))
        assert worst < 0.05

    def test_prestrain_dominates_first_principal(self):
        # axial tension ~ lam, azimuthal stretch near 1
        trks, _ = synthetic_tracks(c0=0.08, quantum=0.1)
        d = tk.tracks_to_deformation(trks, t=0.25 / 500.0, degree=4, n_terms=4)
        from rotorshell.kinematics import polar_decompose
        from rotorshell.surface import principal_decomposition
        (lo1, hi1), (lo2, hi2) = d.domain
        coords = (0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2))
        F = deformation_gradient(d, coords)
        pol = polar_decompose(F)
        (l1, l2), (v1, v2) = principal_decomposition(pol.stretch, F.ref_frame)
        assert abs(l1 - 25.0 / 19.0) < 0.08
        assert abs(l2 - 1.0) < 0.1
        axial = np.array([0.0, 0.0, 1.0])
        assert abs(v1 @ axial) > 0.95

    def test_missing_reference_rejected(self):
        t = np.arange(200) * DT
        tr = tk.PointTrack(point_id="x", coords=(0.0, 0.0), times=t,
                           positions=np.zeros((200, 3)))
        with pytest.raises(tk.FitError):
            tk.tracks_to_deformation([tr], t=0.001, n_terms=4)


class TestCsvInterchange:
    def test_round_trip(self, tmp_path):
        t = np.arange(0, 0.02, DT)
        rng = np.random.default_rng(0)
        trks = []
        for k in range(3):
            pos = rng.normal(size=(t.size, 3))
            trks.append(tk.PointTrack(point_id="p%d" % k,
                                      coords=(float(k), 2.0 * k),
                                      times=t, positions=pos,
                                      reference_position=rng.normal(size=3)))
        tp = tmp_path / "tracks.csv"
        rp = tmp_path / "ref.csv"
        tk.save_tracks(tp, trks)
        tk.save_reference(rp, trks)
        back = tk.load_tracks(tp, rp)
        assert len(back) == 3
        for a, b in zip(sorted(trks, key=lambda x: x.point_id), back):
            assert a.point_id == b.point_id
            assert np.allclose(a.positions, b.positions)
            assert np.allclose(a.times, b.times)
            assert np.allclose(a.reference_position, b.reference_position)
            assert a.coords == b.coords

    def test_headers_are_stable(self, tmp_path):
        # interchange format: id,x1,x2,t,px,py,pz / id,x1,x2,px,py,pz
        t = np.arange(0, 0.02, DT)
        tr = tk.PointTrack(point_id="p", coords=(0.0, 1.0), times=t,
                           positions=np.zeros((t.size, 3)),
                           reference_position=np.zeros(3))
        tp = tmp_path / "t.csv"
        rp = tmp_path / "r.csv"
        tk.save_tracks(tp, [tr])
        tk.save_reference(rp, [tr])
        assert tp.read_text().splitlines()[0] == "id,x1,x2,t,px,py,pz"
        assert rp.read_text().splitlines()[0] == "id,x1,x2,px,py,pz"
