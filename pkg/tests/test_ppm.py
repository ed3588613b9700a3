"""Image export helpers: normalization and the binary P6 container."""

import numpy as np
import pytest

from skelact.errors import UsageError
from skelact.ppm import channels_to_rgb, heat_to_yellow, normalize_bytes, write_ppm


def test_normalize_maps_extremes_to_byte_range():
    out = normalize_bytes(np.array([[-2.0, 0.0], [2.0, 1.0]]))
    assert out.dtype == np.uint8
    assert out[0, 0] == 0 and out[1, 0] == 255
    assert out[0, 1] == 128  # midpoint rounds to nearest


def test_normalize_constant_array_is_black():
    assert not np.any(normalize_bytes(np.full((4, 4), 7.5)))


def test_channels_share_one_range():
    img = np.zeros((3, 1, 2), dtype=np.float32)
    img[0] = [[0.0, 10.0]]          # channel 0 spans the global range
    img[1] = [[5.0, 5.0]]           # mid grey, not per-channel black
    rgb = channels_to_rgb(img)
    assert rgb.shape == (1, 2, 3)
    assert rgb[0, 1, 0] == 255
    assert rgb[0, 0, 1] == 128 and rgb[0, 1, 1] == 128
    with pytest.raises(UsageError):
        channels_to_rgb(np.zeros((4, 2, 2)))


def test_heat_map_is_yellow_ramp():
    heat = heat_to_yellow(np.array([[0.0, 1.0], [2.0, 4.0]]))
    assert heat.shape == (2, 2, 3)
    assert not np.any(heat[..., 2])                 # no blue anywhere
    assert np.array_equal(heat[..., 0], heat[..., 1])
    assert heat[1, 1, 0] == 255 and heat[0, 0, 0] == 0
    with pytest.raises(UsageError):
        heat_to_yellow(np.zeros((2, 2, 2)))


def test_write_ppm_layout(tmp_path):
    pixels = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    path = tmp_path / "img.ppm"
    write_ppm(path, pixels)
    blob = path.read_bytes()
    assert blob == b"P6\n3 2\n255\n" + pixels.tobytes()
    with pytest.raises(UsageError):
        write_ppm(path, pixels.astype(np.float32))
    with pytest.raises(UsageError):
        write_ppm(path, pixels[..., :2])
