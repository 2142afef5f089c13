import datetime as dt

import numpy as np
import pytest
from PIL import Image

from marauder.ingest import SensorEvent
from marauder.raster import (
    FloorplanLayout, MissingCoordinates, OutOfCanvas, RenderStyle, active_set, dump_layout,
    load_layout, render_frame, render_heatmap, render_window, scale_coord, shape_offsets,
)
from marauder.windowing import make_window

T0 = dt.datetime(2010, 1, 4, 9, 0)
MOTION = (0, 255, 0)


def ev(sid, status=1, i=0, kind=None, value=None):
    from marauder.ingest import sensor_kind
    return SensorEvent(sid, kind or sensor_kind(sid), status, value, T0 + dt.timedelta(seconds=i), "A")


def win(events):
    return make_window(events, 0, len(events))


@pytest.fixture
def layout():
    return FloorplanLayout(860, 760, {"M001": (430, 380), "M002": (0, 0), "M003": (859, 759),
                                      "D001": (440, 380), "T001": (100, 600)}, "Black", 64)


def test_scale_coord(layout):
    assert scale_coord((430, 380), layout) == (32, 32)
    assert scale_coord((0, 0), layout) == (0, 0)
    assert scale_coord((859, 759), layout) == (63, 63)
    with pytest.raises(OutOfCanvas):
        scale_coord((860, 0), layout)


def test_layout_rejects_out_of_canvas():
    with pytest.raises(OutOfCanvas):
        FloorplanLayout(10, 10, {"M001": (10, 3)})


def test_active_set_persistence():
    w = win([ev("M001", 1, 0)] + [ev("M002", 0, i) for i in range(1, 60)])
    style = RenderStyle()
    for t in (0, 30, 59):
        assert active_set(w, t, style) == {"M001": ("Motion", 1.0)}


def test_active_set_linear_fading():
    w = win([ev("M001", 1, 0)] + [ev("M002", 0, i) for i in range(1, 60)])
    assert active_set(w, 30, RenderStyle(fading="Linear", alpha_min=0.2)) == {"M001": ("Motion", 0.5)}


def test_active_set_retrigger_resets_recency():
    evs = [ev("M002", 0, i) for i in range(60)]
    evs[0] = ev("M001", 1, 0)
    evs[20] = ev("M001", 1, 20)
    w = win(evs)
    [(sid, (_, inten))] = active_set(w, 25, RenderStyle(fading="Linear", alpha_min=0.2)).items()
    assert sid == "M001" and abs(inten - (1 - 5 / 60)) < 1e-15


def test_temperature_always_active():
    w = win([ev("T001", 0, 0, kind="Temperature", value=21.5), ev("M001", 0, 1)])
    assert set(active_set(w, 1, RenderStyle())) == {"T001"}


def test_empty_black_frame(layout):
    assert not render_frame({}, layout, RenderStyle()).any()


def test_single_circle_geometry(layout):
    f = render_frame({"M001": ("Motion", 1.0)}, layout, RenderStyle("Circle", 2))
    assert f.shape == (3, 64, 64)
    assert np.allclose(f[:, 32, 32], np.array(MOTION) / 255)
    ys, xs = np.nonzero(f.any(axis=0))
    assert np.max(np.maximum(np.abs(ys - 32), np.abs(xs - 32))) <= 2
    assert len(ys) == len(shape_offsets("Circle", 2)) == 13


def test_square_and_footprint_sizes(layout):
    sq = render_frame({"M001": ("Motion", 1.0)}, layout, RenderStyle("Square", 2))
    assert sq.any(axis=0).sum() == 25
    fp = render_frame({"M001": ("Motion", 1.0)}, layout, RenderStyle("Footprint", 2))
    assert fp.any(axis=0).sum() == 22  # 3+5+5+3+0+3+3 stencil cells


def test_spot_clipped_at_border(layout):
    f = render_frame({"M002": ("Motion", 1.0)}, layout, RenderStyle("Square", 2))
    assert f.any(axis=0).sum() == 9


def test_overlap_last_drawn_wins(layout):
    # M001 at (32,32) and D001 at (32,32)+: D001 sorts first, so M001 is on top.
    f = render_frame({"M001": ("Motion", 1.0), "D001": ("Door", 1.0)}, layout, RenderStyle("Circle", 2))
    cx, _ = scale_coord((440, 380), layout)
    assert cx == 32
    assert np.allclose(f[:, 32, 32], np.array(MOTION) / 255)


def test_missing_coordinates(layout):
    with pytest.raises(MissingCoordinates):
        render_frame({"M999": ("Motion", 1.0)}, layout, RenderStyle())
    with pytest.raises(MissingCoordinates):
        layout.validate_sensors(["M001", "M999"])


def test_window_k_spots(layout):
    evs = [ev("M001", 1, 0), ev("M001", 0, 1), ev("M003", 1, 2), ev("M002", 1, 3), ev("M002", 0, 4)]
    frames = render_window(win(evs), layout, RenderStyle("Circle", 1))
    assert frames.shape == (5, 3, 64, 64)
    last = frames[-1].any(axis=0)
    for x, y in [(32, 32), (63, 63), (0, 0)]:
        assert last[y, x]


def test_all_off_window_is_background(layout):
    frames = render_window(win([ev("M001", 0, i) for i in range(6)]), layout, RenderStyle())
    assert not frames.any()


def test_render_deterministic(layout):
    w = win([ev("M001", 1, 0), ev("D001", 1, 1), ev("M003", 1, 2)])
    a = render_window(w, layout, RenderStyle(fading="Linear"))
    b = render_window(w, layout, RenderStyle(fading="Linear"))
    assert a.tobytes() == b.tobytes()


def test_background_independence(layout):
    active = {"M001": ("Motion", 0.6), "M003": ("Motion", 1.0)}
    black = render_frame(active, layout, RenderStyle())
    white = render_frame(active, layout.with_(background="White"), RenderStyle())
    spots = black.any(axis=0)
    assert np.array_equal(black[:, spots], white[:, spots])
    assert np.all(white[:, ~spots] == 1.0)


def test_floorplan_background_nearest(tmp_path, layout):
    img = np.zeros((4, 8, 3), dtype=np.uint8)
    img[:, 4:] = 255
    Image.fromarray(img).save(tmp_path / "fp.png")
    lay = layout.with_(background="FloorplanImage", background_image=str(tmp_path / "fp.png"), R=16)
    f = render_frame({}, lay, RenderStyle())
    assert np.all(f[:, :, :8] == 0) and np.all(f[:, :, 8:] == 1)


def test_layout_file_round_trip(tmp_path, layout):
    path = tmp_path / "home.yaml"
    dump_layout(layout, path)
    back = load_layout(path)
    assert back.coords == layout.coords and back.R == 64 and back.background == "Black"
    path.write_text("canvas: [100, 50]\nresolution: 32\nbackground: white\nsensors:\n  M001: [10, 20]\n")
    lay = load_layout(path)
    assert (lay.canvas_w, lay.canvas_h, lay.R, lay.background) == (100, 50, 32, "White")


def test_heatmap_normalization(layout):
    evs = [ev("M001", 1, i) for i in range(10)] + [ev("M003", 1, i) for i in range(5)] + [ev("M002", 0, 1)]
    f = render_heatmap(evs, layout, RenderStyle("Circle", 1))
    assert np.allclose(f[:, 32, 32], np.array(MOTION) / 255 * 1.0)
    assert np.allclose(f[:, 63, 63], np.array(MOTION) / 255 * 0.5)
    assert not f[:, 0, 0].any()


def test_heatmap_single_sensor(layout):
    f = render_heatmap([ev("M001", 1, i) for i in range(5)], layout, RenderStyle("Circle", 1))
    assert np.allclose(f[:, 32, 32], np.array(MOTION) / 255)
    assert f.any(axis=0).sum() == 5


def test_style_validation():
    with pytest.raises(ValueError):
        RenderStyle(shape="Star")
    with pytest.raises(ValueError):
        RenderStyle(palette=(("Motion", (1, 2, 3)), ("Door", (1, 2, 3))))
