import numpy as np
import pytest
from PIL import Image

from anomkit.errors import ConfigError, DataError
from anomkit.render import LINE_COLOR, save_class_f1_chart, save_plot
from anomkit.synth import BaseSignalConfig, generate_base


def _line_rgb() -> np.ndarray:
    return np.array(
        [int(LINE_COLOR[i : i + 2], 16) for i in (1, 3, 5)], dtype=float
    ) / 255.0


def color_simplex_fraction(path) -> float:
    """Fraction of pixels inside the {white, black, line-color} blend triangle.

    Any filled/highlighted region would introduce hues outside this
    simplex (matplotlib's default shading colors are not blends of the
    line color with white/black).
    """
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=float) / 255.0
    pixels = arr.reshape(-1, 3)
    white = np.ones(3)
    basis = np.stack([np.zeros(3) - white, _line_rgb() - white], axis=1)  # 3x2
    coeffs, *_ = np.linalg.lstsq(basis, (pixels - white).T, rcond=None)
    coeffs = np.clip(coeffs, 0.0, 1.0)
    totals = coeffs.sum(axis=0)
    coeffs /= np.maximum(totals, 1.0)
    recon = white[None, :] + (basis @ coeffs).T
    residual = np.linalg.norm(pixels - recon, axis=1)
    return float(np.mean(residual < 0.1))


@pytest.fixture(scope="module")
def series():
    return generate_base(BaseSignalConfig(), 2024)


class TestSavePlot:
    def test_exact_pixel_dimensions(self, series, tmp_path):
        path = save_plot(series, tmp_path / "plot.png")
        with Image.open(path) as img:
            assert img.size == (805, 124)

    def test_custom_dimensions(self, series, tmp_path):
        path = save_plot(series, tmp_path / "plot.png", width_px=400, height_px=300)
        with Image.open(path) as img:
            assert img.size == (400, 300)

    def test_no_fill_colors(self, series, tmp_path):
        spiky = series.copy()
        spiky[300:303] = 8.0  # steep strokes must still classify as line pixels
        path = save_plot(spiky, tmp_path / "plot.png")
        assert color_simplex_fraction(path) == 1.0

    def test_deterministic_bytes(self, series, tmp_path):
        a = save_plot(series, tmp_path / "a.png")
        b = save_plot(series, tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()

    def test_svg_supported_and_deterministic(self, series, tmp_path):
        a = save_plot(series, tmp_path / "a.svg", fmt="svg")
        b = save_plot(series, tmp_path / "b.svg", fmt="svg")
        text = a.read_text()
        assert text.startswith("<?xml")
        assert a.read_bytes() == b.read_bytes()

    def test_bad_format_rejected(self, series, tmp_path):
        with pytest.raises(ConfigError):
            save_plot(series, tmp_path / "a.bmp", fmt="bmp")

    def test_bad_series_rejected(self, tmp_path):
        with pytest.raises(DataError):
            save_plot([1.0], tmp_path / "a.png")

    def test_unwritable_path_is_data_error(self, series, tmp_path):
        with pytest.raises(DataError):
            save_plot(series, tmp_path / "missing" / "nested" / "a.png")


class TestReportChart:
    def test_chart_written(self, tmp_path):
        path = save_class_f1_chart(["trend", "seasonal"], [0.8, 0.6], tmp_path / "f1.png")
        with Image.open(path) as img:
            assert img.size[0] > 0
