"""Depth-view rendering: projection geometry and depth encoding."""
import numpy as np
import pytest

from spectrees.views import (
    IMAGE_SIZE,
    N_VIEWS,
    SIDE_AZIMUTHS,
    TRUNK_SLAB,
    render_depth_views,
    save_depth_views,
)

from conftest import make_segment


def lit(img):
    rows, cols = np.nonzero(img)
    return rows, cols


class TestLayout:
    def test_stack_shape_and_dtype(self):
        seg = make_segment(x=[0.0, 1.0], y=[0.0, 1.0], z=[2.0, 5.0])
        views = render_depth_views(seg)
        assert views.shape == (N_VIEWS, IMAGE_SIZE, IMAGE_SIZE)
        assert views.dtype == np.uint8
        assert len(SIDE_AZIMUTHS) == 4 and N_VIEWS == 7

    def test_single_point_centers_every_view(self):
        seg = make_segment(x=[0.0], y=[0.0], z=[1.2])  # inside the trunk slab
        views = render_depth_views(seg)
        for k in range(N_VIEWS):
            rows, cols = lit(views[k])
            assert len(rows) == 1
            assert (rows[0], cols[0]) == (128, 128)
            assert views[k][rows[0], cols[0]] == 255

    def test_vertical_line_is_single_column_side_on(self):
        n = 50
        seg = make_segment(x=np.zeros(n), y=np.zeros(n), z=np.linspace(0, 10, n))
        views = render_depth_views(seg)
        for k in range(4):
            rows, cols = lit(views[k])
            assert set(cols.tolist()) == {128}
            assert len(set(rows.tolist())) > 20
        rows, cols = lit(views[4])  # top view collapses the line to one pixel
        assert len(rows) == 1 and (rows[0], cols[0]) == (128, 128)

    def test_horizontal_line_seen_end_on_at_90_degrees(self):
        n = 30
        seg = make_segment(x=np.linspace(-3, 3, n), y=np.zeros(n),
                           z=np.full(n, 4.0))
        views = render_depth_views(seg)
        assert len(lit(views[0])[0]) > 10   # broadside at azimuth 0
        assert len(lit(views[2])[0]) == 1   # end-on at azimuth 90


class TestDepthEncoding:
    def test_nearest_255_farthest_1_background_0(self):
        # view 0 looks along +y: depth is the rotated y coordinate
        seg = make_segment(x=[-1.0, 1.0], y=[0.0, 5.0], z=[0.0, 0.0])
        img = render_depth_views(seg)[0]
        assert img[128, 13] == 255   # near point
        assert img[128, 242] == 1    # far point
        assert np.count_nonzero(img) == 2

    def test_pixel_keeps_nearest_point(self):
        seg = make_segment(x=[0.0, 0.0, 1.0], y=[0.0, 5.0, 5.0],
                           z=[0.0, 0.0, 0.0])
        img = render_depth_views(seg)[0]
        rows, cols = lit(img)
        assert img[128, cols.min()] == 255  # stacked pixel shows the near point
        assert img[128, cols.max()] == 1

    def test_top_and_bottom_views_invert_depth(self):
        seg = make_segment(x=[-1.0, 1.0], y=[0.0, 0.0], z=[0.0, 10.0])
        views = render_depth_views(seg)
        top, bottom = views[4], views[5]
        assert top[128, 242] == 255 and top[128, 13] == 1     # high point near
        assert bottom[128, 13] == 255 and bottom[128, 242] == 1

    def test_constant_depth_view_is_all_255(self):
        seg = make_segment(x=[-1.0, 0.0, 1.0], y=[0.0, 0.0, 0.0],
                           z=[2.0, 3.0, 4.0])
        img = render_depth_views(seg)[0]  # depth (y) identical for all points
        vals = img[img > 0]
        assert (vals == 255).all()


class TestFraming:
    def test_margin_and_isotropic_scale(self):
        xs, zs = np.meshgrid(np.linspace(0, 20, 41), np.linspace(0, 10, 21))
        seg = make_segment(x=xs.ravel(), y=np.zeros(xs.size), z=zs.ravel())
        img = render_depth_views(seg)[0]
        rows, cols = lit(img)
        width = cols.max() - cols.min()
        height = rows.max() - rows.min()
        assert cols.min() >= 12 and cols.max() <= 243  # 5% margin each side
        assert width == 229                            # fills 90% of the frame
        assert height == 115                           # isotropic: half the width
        assert width / height == pytest.approx(2.0, abs=0.02)

    def test_translation_invariance(self):
        x = np.array([0.0, 2.0, 4.0])
        y = np.array([0.0, 1.0, 3.0])
        z = np.array([1.0, 5.0, 9.0])
        a = render_depth_views(make_segment(x=x, y=y, z=z))
        b = render_depth_views(make_segment(x=x + 1000.0, y=y - 250.0, z=z))
        # world z enters the trunk-slab rule, so only compare the z-free views
        for k in (0, 1, 2, 3, 4, 5):
            np.testing.assert_array_equal(a[k], b[k])


class TestTrunkView:
    def test_slab_bounds_inclusive(self):
        seg = make_segment(x=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
                           y=np.zeros(6),
                           z=[0.5, 1.0, 1.25, 1.5, 2.0, 5.0])
        views = render_depth_views(seg)
        assert np.count_nonzero(views[6]) == 3   # z = 1.0, 1.25, 1.5
        assert np.count_nonzero(views[0]) == 6

    def test_empty_slab_gives_blank_view(self):
        seg = make_segment(x=[0.0, 1.0], y=[0.0, 0.0], z=[3.0, 8.0])
        views = render_depth_views(seg)
        assert not views[6].any()
        assert views[:6].any(axis=(1, 2)).all()


class TestConeSilhouette:
    def test_base_width_matches_cone_angle(self):
        from spectrees.synth import generate_labeled_segments
        from test_synth import cone15

        segs, _ = generate_labeled_segments(per_class=1, seed=4,
                                            archetypes=[cone15()], density=100.0)
        s = segs[0]
        img = render_depth_views(s)[0]
        rows, cols = lit(img)
        width = cols.max() - cols.min()
        height = rows.max() - rows.min()
        # generator cone: radius 1.8 m, apex 15 m, base 5.25 m
        expected = height * (2 * 1.8) / (s.z.max() - s.z.min())
        assert abs(width - expected) <= 2.0
        # apex row is narrow, base row is wide
        top_cols = cols[rows == rows.min()]
        base_cols = cols[rows == rows.max() - 2]
        assert top_cols.max() - top_cols.min() <= 6
        assert base_cols.max() - base_cols.min() >= width * 0.5


class TestSave:
    def test_png_round_trip(self, tmp_path):
        from PIL import Image

        seg = make_segment(x=[0.0, 1.0, 2.0], y=[0.0, 1.0, 0.5],
                           z=[1.2, 4.0, 7.0], segment_id=42)
        paths = save_depth_views(tmp_path, seg)
        views = render_depth_views(seg)
        assert [p.name for p in paths] == [f"seg42_view{k}.png" for k in range(7)]
        for k, p in enumerate(paths):
            back = np.asarray(Image.open(p))
            assert back.shape == (IMAGE_SIZE, IMAGE_SIZE)
            np.testing.assert_array_equal(back, views[k])
