from pathlib import Path

import numpy as np
import pytest

from wganlab import nets
from wganlab.data import Rng
from wganlab.runlog import TrainRecord
from wganlab.viz import FigureOverlay, LevelSetGrid, level_set_grid, render_figure, write_run_artifacts

from conftest import linear_critic

GOLDEN = Path(__file__).parent / "golden"


def constant_critic(value=0.7):
    c = nets.init_mlp(Rng(0), "critic", 4)
    arrays = [np.zeros_like(a) for a in c.arrays()]
    arrays[-1] = np.array([value])
    return c.with_arrays(arrays)


def parse_ppm(blob):
    magic, dims, maxval, rest = blob.split(b"\n", 3)
    w, h = (int(v) for v in dims.split())
    assert magic == b"P6" and maxval == b"255"
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)


def test_constant_critic_grid():
    g = level_set_grid(constant_critic(), (-2, 2, -2, 2), (5, 4))
    assert g.values.shape == (4, 5)
    assert np.all(g.values == 0.7)


def test_linear_grid_columns():
    # f(x) = x1 via the ReLU construction; x = 0 sits on a kink but relu(0) = 0 is exact
    g = level_set_grid(linear_critic(1.0, 0.0), (-1, 1, -1, 1), (3, 3))
    np.testing.assert_array_equal(g.values, [[-1, 0, 1]] * 3)


def test_two_by_two_hits_corners():
    critic = linear_critic(1.0, 10.0)
    g = level_set_grid(critic, (-1, 3, -2, 5), (2, 2))
    corners = np.array([[-1, -2], [3, -2], [-1, 5], [3, 5]], dtype=float)
    np.testing.assert_array_equal(g.values.ravel(), nets.evaluate(critic, corners).ravel())


def test_grid_recomputable():
    critic = nets.init_mlp(Rng(5), "critic", 32)
    g = level_set_grid(critic, (-2, 2, -2, 2), (40, 30))
    assert g.values.tobytes() == level_set_grid(critic, (-2, 2, -2, 2), (40, 30)).values.tobytes()
    rng = np.random.default_rng(0)
    for _ in range(100):
        i, j = rng.integers(30), rng.integers(40)
        pt = np.array([[g.xs[j], g.ys[i]]])
        # BLAS sums a single row in a different order than a batch, so allow ulp-level drift
        assert g.values[i, j] == pytest.approx(nets.evaluate(critic, pt)[0, 0], rel=1e-12, abs=1e-14)


def test_degenerate_frames_rejected():
    with pytest.raises(ValueError):
        level_set_grid(constant_critic(), (1, 1, 0, 1), (4, 4))
    with pytest.raises(ValueError):
        level_set_grid(constant_critic(), (0, 1, 0, 1), (1, 4))


def test_constant_grid_renders_mid_gray():
    g = LevelSetGrid((-1, 1, -1, 1), (6, 4), np.full((4, 6), 3.0))
    img = parse_ppm(render_figure(g, FigureOverlay()))
    assert img.shape == (4, 6, 3)
    assert np.all(img == 128)


def test_center_penalty_point_is_red_block():
    g = LevelSetGrid((-1, 1, -1, 1), (9, 9), np.zeros((9, 9)))
    img = parse_ppm(render_figure(g, FigureOverlay(penalty_points=[[0.0, 0.0]])))
    red = np.all(img == [255, 0, 0], axis=2)
    assert red.sum() == 9
    assert np.all(red[3:6, 3:6])


def test_bright_is_high_and_y_points_up():
    g = LevelSetGrid((-1, 1, -1, 1), (3, 3), np.array([[0.0, 0, 0], [0, 0, 0], [1, 1, 1]]))
    img = parse_ppm(render_figure(g))
    # the largest y row (values 1) is the top image row
    assert np.all(img[0] == 255) and np.all(img[2] == 0)


def test_points_outside_are_clipped():
    g = LevelSetGrid((-1, 1, -1, 1), (8, 8), np.zeros((8, 8)))
    img = parse_ppm(render_figure(g, FigureOverlay(training_points=[[5.0, 5.0]], generated_points=[[1.0, 1.0]])))
    assert not np.any(np.all(img == [255, 255, 0], axis=2))
    # a corner point splats a clipped 2x2 block
    assert np.all(img[0:2, 6:8] == [0, 255, 0]) and np.all(img == [0, 255, 0], axis=2).sum() == 4


def golden_figure() -> bytes:
    critic = linear_critic(0.8, -0.6, bias=0.25)
    grid = level_set_grid(critic, (-2, 2, -2, 2), (32, 24))
    overlay = FigureOverlay(
        training_points=[[-1.5, -1.0], [0.5, 1.5]],
        generated_points=[[1.0, -0.5], [-0.25, 0.75]],
        penalty_points=[[0.0, 0.0], [1.9, 1.9]],
    )
    return render_figure(grid, overlay)


def test_golden_pixmap():
    blob = golden_figure()
    assert blob == (GOLDEN / "linear_critic.ppm").read_bytes()
    assert blob == golden_figure()
    img = parse_ppm(blob)
    # hand check: f = 0.8x - 0.6y + 0.25 spans [-2.55, 3.05] on the box; top-left
    # corner (-2, 2) is the minimum (black), bottom-right (2, -2) the maximum (white)
    assert np.all(img[0, 0] == 0) and np.all(img[23, 31] == 255)
    # (0, 0) maps to column round(0.5 * 31) = 16 and row 23 - round(0.5 * 23) = 11
    assert np.all(img[10:13, 15:18] == [255, 0, 0])


def test_write_run_artifacts(tmp_path):
    records = [TrainRecord(1, 0.5, 0.1), TrainRecord(2, 0.25, 0.0, emd=0.3)]
    manifest = write_run_artifacts(records, {}, tmp_path)
    assert [name for name, _ in manifest] == ["log.csv"]
    assert (tmp_path / "manifest.txt").read_text() == f"log.csv\t{(tmp_path / 'log.csv').stat().st_size}\n"

    figs = {it: golden_figure() for it in (500, 2500, 5000, 10000)}
    out = tmp_path / "run"
    write_run_artifacts(records, figs, out)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert {f"levelset_{i}.ppm" for i in figs} <= set(first)
    write_run_artifacts(records, figs, out)
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}


def test_write_run_artifacts_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_run_artifacts([], {}, blocker / "sub")
