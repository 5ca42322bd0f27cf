import math

import numpy as np
import pytest

from rotorshell import stereo as st
from rotorshell.scenarios import dot_grid, replica_rig
from rotorshell.surface import cylinder_chart, plane_chart


def clean_camera(**kw):
    args = dict(focal_length=57.0, pixel_pitch=0.017,
                principal_point=(256.0, 128.0))
    args.update(kw)
    return st.Camera(**args)


def clean_pair(baseline=200.0, depth=380.0):
    c1 = st.look_at_camera(center=(-baseline / 2, -depth, 0.0), target=(0, 0, 0),
                           focal_length=57.0, pixel_pitch=0.017,
                           principal_point=(256.0, 128.0))
    c2 = st.look_at_camera(center=(baseline / 2, -depth, 0.0), target=(0, 0, 0),
                           focal_length=57.0, pixel_pitch=0.017,
                           principal_point=(256.0, 128.0))
    return c1, c2


class TestProjection:
    def test_optical_axis_hits_principal_point(self):
        cam = st.look_at_camera(center=(0, 0, 400.0), target=(0, 0, 0),
                                up=(0, 1, 0), focal_length=57.0,
                                pixel_pitch=0.017, principal_point=(256.0, 128.0))
        assert np.allclose(cam.project((0, 0, 0)), (256.0, 128.0), atol=1e-12)

    def test_hand_computed_pinhole(self):
        cam = clean_camera()
        u, v = cam.project((10.0, -4.0, 100.0))
        fx = 57.0 / 0.017
        assert np.isclose(u, fx * 10.0 / 100.0 + 256.0)
        assert np.isclose(v, fx * (-4.0) / 100.0 + 128.0)

    def test_depth_doubling_halves_offset(self):
        cam = clean_camera()
        u1, _ = cam.project((5.0, 0.0, 200.0))
        u2, _ = cam.project((5.0, 0.0, 400.0))
        assert np.isclose(u1 - 256.0, 2.0 * (u2 - 256.0))

    def test_point_behind_camera(self):
        with pytest.raises(st.StereoError):
            clean_camera().project((0.0, 0.0, -5.0))

    def test_skew_enters_u_only(self):
        cam = clean_camera(skew=0.05)
        u0, v0 = clean_camera().project((3.0, 2.0, 100.0))
        u1, v1 = cam.project((3.0, 2.0, 100.0))
        assert v0 == v1 and u1 != u0


class TestDistortion:
    @pytest.mark.parametrize("k1", [-0.1, -0.02, 0.05, 0.1])
    def test_round_trip(self, k1):
        cam = clean_camera(k1=k1, k2=0.01, p1=1e-3, p2=-5e-4)
        for x, y in ((0.0, 0.0), (0.1, -0.05), (0.25, 0.2), (-0.3, 0.1)):
            xd, yd = cam.distort(x, y)
            xu, yu = cam.undistort(xd, yd)
            # 1e-6 px equivalent
            assert math.hypot(xu - x, yu - y) * cam.fpx < 1e-6

    def test_pixel_normalized_round_trip(self):
        cam = clean_camera(k1=0.05, k2=0.002, p1=2e-4, p2=-1e-4, skew=0.01)
        x, y = 0.08, -0.06
        xd, yd = cam.distort(x, y)
        u = cam.fpx * (xd + cam.skew * yd) + 256.0
        v = cam.fpx * yd + 128.0
        assert np.allclose(cam.pixel_to_normalized((u, v)), (x, y), atol=1e-10)


class TestEpipolarGeometry:
    def test_projection_lies_on_line(self):
        c1, c2 = clean_pair()
        p = np.array([1.2, -0.5, 3.0])
        line = st.epipolar_line(c1, c2, c1.project(p))
        assert line.distance(c2.project(p)) < 1e-9

    def test_replica_lines_approximately_horizontal(self):
        cams = replica_rig(k1=(0, 0), k2=(0, 0), p1=(0, 0), p2=(0, 0))
        for px in ((150.0, 100.0), (256.0, 128.0), (380.0, 160.0)):
            line = st.epipolar_line(cams[0], cams[1], px)
            a, b, _ = line.line
            assert abs(a) < 0.05 * abs(b)

    def test_epipole_is_image_of_other_center(self):
        c1, c2 = clean_pair()
        F = st.fundamental_matrix(c1, c2)
        # left null space of F = epipole in image 2 = projection of center 1
        _, _, vt = np.linalg.svd(F.T)
        e2 = vt[-1]
        e2 = e2[:2] / e2[2]
        assert np.allclose(e2, c2.project(c1.center + 0.0), atol=1e-6)

    def test_distorted_uses_polyline(self):
        cams = replica_rig()
        p = np.array([1.0, 0.3, 14.0])
        line = st.epipolar_line(cams[0], cams[1], cams[0].project(p),
                                depth_range=(200.0, 600.0))
        assert line.line is None and line.polyline is not None
        assert line.distance(cams[1].project(p)) < 0.05

    def test_symmetric_distance_zero_for_true_pairs(self):
        cams = replica_rig()
        p = np.array([-0.8, 0.6, 9.0])
        d = st.symmetric_epipolar_distance(cams[0], cams[1],
                                           cams[0].project(p),
                                           cams[1].project(p))
        assert d < 1e-7

    def test_colocated_cameras_rejected(self):
        c = clean_camera()
        with pytest.raises(st.StereoError):
            st.fundamental_matrix(c, c)


class TestTriangulation:
    def test_exact_round_trip(self):
        cams = replica_rig()
        for p in ([1.2, -0.5, 3.0], [-2.0, 1.0, 20.0], [0.0, -2.9, 12.5]):
            rec, gap = st.triangulate(cams[0], cams[1],
                                      cams[0].project(p), cams[1].project(p))
            assert np.linalg.norm(rec - np.asarray(p)) < 1e-9
            assert gap < 1e-9

    def test_quantized_error_bound(self):
        # integer-pixel rounding is the 0.1 mm object-space jump scale
        cams = replica_rig()
        tube = cylinder_chart(3.0, 25.0)
        rng = np.random.default_rng(3)
        errs = []
        for _ in range(200):
            coords = (rng.uniform(2, 23), rng.uniform(10.5, 17.8))
            p = tube.position(coords)
            q1 = np.round(cams[0].project(p))
            q2 = np.round(cams[1].project(p))
            rec, _ = st.triangulate(cams[0], cams[1], q1, q2)
            errs.append(np.linalg.norm(rec - p))
        rms = float(np.sqrt(np.mean(np.square(errs))))
        assert rms <= 0.15

    def test_symmetry_plane(self):
        c1, c2 = clean_pair()
        # cameras mirror-symmetric about x = 0; a point on that plane
        # reconstructs onto it even with quantization-free pixels
        p = np.array([0.0, 1.3, 7.0])
        rec, _ = st.triangulate(c1, c2, c1.project(p), c2.project(p))
        assert abs(rec[0]) < 1e-9

    def test_parallel_rays_rejected(self):
        c1 = clean_camera()
        c2 = st.Camera(focal_length=57.0, pixel_pitch=0.017,
                       principal_point=(256.0, 128.0),
                       center=np.array([0.0, 0.0, -50.0]))
        with pytest.raises(st.StereoError):
            st.triangulate(c1, c2, (256.0, 128.0), (256.0, 128.0))


class TestMexicanHat:
    def test_kernel_formula(self):
        k = st.mexican_hat_kernel(2.0)
        r = k.shape[0] // 2
        s = 2.0
        for (x, y) in ((0, 0), (1, 2), (3, -1)):
            q = (x * x + y * y) / (2 * s * s)
            expected = (1 / (math.pi * s ** 4)) * (1 - q) * math.exp(-q)
            assert np.isclose(k[r + y, r + x], expected, atol=1e-15)

    def test_single_dot_subpixel(self):
        img = np.zeros((64, 64))
        uu, vv = np.meshgrid(np.arange(64), np.arange(64))
        u0, v0 = 31.3, 22.7
        img += 0.9 * np.exp(-((uu - u0) ** 2 + (vv - v0) ** 2) / (2 * 2.5 ** 2))
        dets = st.mexican_hat_detect(st.ImageRaster(img), sigma=2.5)
        assert len(dets) == 1
        assert math.hypot(dets[0].u - u0, dets[0].v - v0) < 0.25

    def test_blank_image(self):
        assert st.mexican_hat_detect(st.ImageRaster(np.zeros((64, 64))),
                                     sigma=3.0) == []

    def test_replica_dot_grid_all_found(self):
        # 1 mm spacing, 0.7 mm diameter at 0.1 mm/px: 10 px pitch, 3.5 px radius
        img = np.zeros((256, 512))
        uu, vv = np.meshgrid(np.arange(512), np.arange(256))
        centers = [(60.0 + 10.0 * i, 48.0 + 10.0 * j)
                   for i in range(40) for j in range(16)]
        for (cu, cv) in centers:
            img += 0.9 * np.exp(-((uu - cu) ** 2 + (vv - cv) ** 2) / (2 * 1.75 ** 2))
        dets = st.mexican_hat_detect(st.ImageRaster(np.clip(img, 0, 1)), sigma=3.5)
        assert len(dets) == len(centers)   # all found, no duplicates
        got = {(round(d.u), round(d.v)) for d in dets}
        assert got == {(int(cu), int(cv)) for cu, cv in centers}

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            st.mexican_hat_detect(st.ImageRaster(np.zeros((32, 32))), sigma=0.5)
        with pytest.raises(ValueError):
            st.mexican_hat_detect(st.ImageRaster(np.zeros((16, 16))), sigma=4.0)


def render_and_detect(arc_deg=90.0):
    tube = cylinder_chart(3.0, 25.0)
    cams = replica_rig()
    arc_half = math.radians(arc_deg / 2.0) * 3.0
    center = 3 * math.pi * 3.0 / 2.0
    dots = dot_grid((2.0, 23.0), (center - arc_half, center + arc_half), 1.0)
    render = st.render_synthetic(cams, tube, dots, blob_sigma=1.75,
                                 normal_sign=-1.0)
    dets = [st.mexican_hat_detect(img, sigma=2.5) for img in render.images]
    return tube, cams, dots, render, dets


def ground_truth_map(render, dets, n_dots):
    mapping = [{}, {}]
    for ci in range(2):
        pts = np.array([[d.u, d.v] for d in dets[ci]])
        for k in range(n_dots):
            if not render.visible[ci][k]:
                continue
            d2 = np.sum((pts - np.asarray(render.projections[ci][k])) ** 2, axis=1)
            j = int(np.argmin(d2))
            if d2[j] < 4.0:
                mapping[ci][k] = j
    return mapping


class TestPairing:
    def test_ground_truth_pairs_recovered(self):
        tube, cams, dots, render, dets = render_and_detect()
        mapping = ground_truth_map(render, dets, len(dots))
        seeds = []
        for k in sorted(mapping[0]):
            if k in mapping[1] and len(seeds) < 10 and k % 13 == 0:
                seeds.append(((dets[0][mapping[0][k]].u, dets[0][mapping[0][k]].v),
                              (dets[1][mapping[1][k]].u, dets[1][mapping[1][k]].v)))
        while len(seeds) < 10:
            k = sorted(set(mapping[0]) & set(mapping[1]))[len(seeds) * 7 % 50]
            seeds.append(((dets[0][mapping[0][k]].u, dets[0][mapping[0][k]].v),
                          (dets[1][mapping[1][k]].u, dets[1][mapping[1][k]].v)))
        res = st.pair_points(dets[0], dets[1], seeds, cams[0], cams[1],
                             radius=5.0, epipolar_tol=1.5)
        truth = {(mapping[0][k], mapping[1][k])
                 for k in set(mapping[0]) & set(mapping[1])}
        assert set(res.pairs) == truth

    def test_seeds_only(self):
        # shallow scene: projective pairing assumes small depth relief
        c1, c2 = clean_pair()
        rng = np.random.default_rng(5)
        pts3d = np.column_stack([rng.uniform(-3, 3, 10),
                                 rng.uniform(-0.2, 0.2, 10),
                                 rng.uniform(-3, 3, 10)])
        d1 = [st.DotDetection(*c1.project(p), 1.0) for p in pts3d]
        d2 = [st.DotDetection(*c2.project(p), 1.0) for p in pts3d]
        seeds = [((a.u, a.v), (b.u, b.v)) for a, b in zip(d1, d2)]
        res = st.pair_points(d1, d2, seeds, c1, c2, radius=5.0)
        assert res.pairs == [(i, i) for i in range(10)]

    def test_spurious_detection_fails_epipolar_check(self):
        c1, c2 = clean_pair()
        rng = np.random.default_rng(6)
        pts3d = np.column_stack([rng.uniform(-3, 3, 11),
                                 rng.uniform(-0.2, 0.2, 11),
                                 rng.uniform(-3, 3, 11)])
        d1 = [st.DotDetection(*c1.project(p), 1.0) for p in pts3d]
        d2 = [st.DotDetection(*c2.project(p), 1.0) for p in pts3d[:10]]
        # competitor for the 11th point: near the homography image but
        # pushed off the (horizontal) epipolar line
        u, v = c2.project(pts3d[10])
        d2.append(st.DotDetection(u, v + 4.0, 1.0))
        seeds = [((d1[i].u, d1[i].v), (d2[i].u, d2[i].v)) for i in range(10)]
        res = st.pair_points(d1, d2, seeds, c1, c2, radius=6.0,
                             epipolar_tol=1.5)
        assert (10, 10) in res.rejected_epipolar
        assert 10 in res.unmatched1 and 10 in res.unmatched2

    def test_collinear_seeds_rejected(self):
        c1, c2 = clean_pair()
        d1 = [st.DotDetection(100.0 + 10 * i, 100.0, 1.0) for i in range(10)]
        d2 = [st.DotDetection(105.0 + 10 * i, 100.0, 1.0) for i in range(10)]
        seeds = [((a.u, a.v), (b.u, b.v)) for a, b in zip(d1, d2)]
        with pytest.raises(st.DegenerateSeedsError):
            st.pair_points(d1, d2, seeds, c1, c2)

    def test_needs_ten_seeds(self):
        c1, c2 = clean_pair()
        d = [st.DotDetection(100.0, 100.0, 1.0)]
        with pytest.raises(ValueError):
            st.pair_points(d, d, [((0, 0), (0, 0))] * 9, c1, c2)

    def test_epipolar_consistency_of_accepted_pairs(self):
        tube, cams, dots, render, dets = render_and_detect()
        mapping = ground_truth_map(render, dets, len(dots))
        common = sorted(set(mapping[0]) & set(mapping[1]))
        seeds = [((dets[0][mapping[0][k]].u, dets[0][mapping[0][k]].v),
                  (dets[1][mapping[1][k]].u, dets[1][mapping[1][k]].v))
                 for k in common[::len(common) // 10][:10]]
        res = st.pair_points(dets[0], dets[1], seeds, cams[0], cams[1],
                             radius=5.0, epipolar_tol=1.5)
        for i, j in res.pairs:
            d = st.symmetric_epipolar_distance(
                cams[0], cams[1], (dets[0][i].u, dets[0][i].v),
                (dets[1][j].u, dets[1][j].v))
            assert d < 1.5


class TestAssociation:
    def test_static_points(self):
        frames = [[(10.0, 10.0), (40.0, 40.0)] for _ in range(10)]
        trks = st.associate_over_time(frames, max_dist=3.0)
        assert len(trks) == 2
        assert all(len(t.points) == 10 for t in trks)

    def test_slow_sinusoid_unbroken(self):
        frames = []
        for k in range(25):
            s = math.sin(0.3 * k)
            frames.append([(10.0 + 0.5 * s, 10.0), (40.0 - 0.5 * s, 40.0)])
        trks = st.associate_over_time(frames, max_dist=3.0)
        assert len(trks) == 2
        assert all(len(t.points) == 25 for t in trks)

    def test_crossing_points_split(self):
        frames = []
        for k in range(11):
            x = float(k)
            frames.append([(x, 10.0), (10.0 - x, 10.0)])
        trks = st.associate_over_time(frames, max_dist=2.0)
        lengths = sorted(len(t.points) for t in trks)
        assert len(trks) > 2                       # the originals broke
        assert max(lengths) < 11                   # nobody survived the cross
        starts = {t.start_frame for t in trks}
        assert 0 in starts and len(starts) > 1


class TestRendering:
    def test_plate_fully_visible(self):
        plate = plane_chart(20.0, 10.0)
        c1 = st.look_at_camera(center=(10.0, 5.0, 300.0), target=(10.0, 5.0, 0.0),
                               up=(0, 1, 0), focal_length=57.0, pixel_pitch=0.017,
                               principal_point=(256.0, 128.0))
        c2 = st.look_at_camera(center=(40.0, 5.0, 300.0), target=(10.0, 5.0, 0.0),
                               up=(0, 1, 0), focal_length=57.0, pixel_pitch=0.017,
                               principal_point=(256.0, 128.0))
        dots = [(u, v) for u in np.linspace(6, 14, 5) for v in np.linspace(3, 7, 4)]
        render = st.render_synthetic([c1, c2], plate, dots, blob_sigma=1.75)
        assert all(all(vis) for vis in render.visible)

    def test_cylinder_backface_discarded(self):
        tube = cylinder_chart(3.0, 25.0)
        cams = replica_rig()
        near = (12.0, 3 * math.pi * 3.0 / 2.0)    # camera side
        far = (12.0, math.pi * 3.0 / 2.0)         # opposite side
        render = st.render_synthetic(cams, tube, [near, far], blob_sigma=1.75,
                                     normal_sign=-1.0)
        assert render.visible[0][0] and render.visible[1][0]
        assert not render.visible[0][1] and not render.visible[1][1]

    def test_render_detect_close_the_loop(self):
        tube, cams, dots, render, dets = render_and_detect(arc_deg=60.0)
        for ci in range(2):
            pts = np.array([[d.u, d.v] for d in dets[ci]])
            for k in range(len(dots)):
                if not render.visible[ci][k]:
                    continue
                proj = np.asarray(render.projections[ci][k])
                assert np.min(np.linalg.norm(pts - proj, axis=1)) < 0.25

    def test_end_to_end_reconstruction(self):
        tube, cams, dots, render, dets = render_and_detect()
        mapping = ground_truth_map(render, dets, len(dots))
        errs = []
        for k in sorted(set(mapping[0]) & set(mapping[1])):
            p1 = dets[0][mapping[0][k]]
            p2 = dets[1][mapping[1][k]]
            rec, _ = st.triangulate(cams[0], cams[1], (p1.u, p1.v), (p2.u, p2.v))
            errs.append(np.linalg.norm(rec - tube.position(dots[k])))
        rms = float(np.sqrt(np.mean(np.square(errs))))
        assert rms < 0.05

    def test_nothing_visible_raises(self):
        tube = cylinder_chart(3.0, 25.0)
        cams = replica_rig()
        far = [(12.0, math.pi * 3.0 / 2.0)]
        with pytest.raises(st.StereoError):
            st.render_synthetic(cams, tube, far, blob_sigma=1.75,
                                normal_sign=-1.0)


class TestInterchange:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = st.ImageRaster(rng.uniform(0, 1, size=(37, 53)))
        path = tmp_path / "img.pgm"
        img.save_pgm(path)
        back = st.ImageRaster.load_pgm(path)
        assert back.pixels.shape == (37, 53)
        assert np.max(np.abs(back.pixels - img.pixels)) <= 0.5 / 255 + 1e-12

    def test_camera_json_round_trip(self, tmp_path):
        cams = replica_rig()
        path = tmp_path / "cams.json"
        st.save_cameras(path, cams)
        back = st.load_cameras(path)
        p = np.array([1.0, -0.5, 12.0])
        for a, b in zip(cams, back):
            assert np.allclose(a.project(p), b.project(p), atol=1e-12)

    def test_detections_json_round_trip(self, tmp_path):
        dets = [st.DotDetection(1.25, 3.5, 0.7), st.DotDetection(10.0, 2.0, 0.4)]
        path = tmp_path / "dets.json"
        st.save_detections(path, dets)
        assert st.load_detections(path) == dets
