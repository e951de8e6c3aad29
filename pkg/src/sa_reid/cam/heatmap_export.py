from pathlib import Path
from typing import Literal, Union

import numpy as np
import pandas as pd

from sa_reid.attention import AttentionMap
from sa_reid.cam.class_activation_maps import Cam
from sa_reid.exceptions import ConfigurationError, NonFiniteError
from sa_reid.numerics import Tensor
from sa_reid.dataset._netpbm import read_netpbm, write_netpbm

CONSTANT_MAP_GRAY = 128


def _write_csv(values: Tensor, file_path: Path) -> None:
    pd.DataFrame(values).to_csv(file_path, header=False, index=False, float_format="%.17g")


def cam_to_pgm_pixels(values: Tensor) -> np.ndarray:
    """Affine min-max normalisation to 0..255; a constant map becomes mid-gray."""
    low, high = values.min(), values.max()
    if high == low:
        return np.full(values.shape, CONSTANT_MAP_GRAY, dtype=np.uint8)
    return np.rint((values - low) / (high - low) * 255.0).astype(np.uint8)


def heatmap_export(cam: Cam, file_path: Union[str, Path], format: Literal["csv", "pgm"] = "csv") -> Path:
    """
    Write a class activation map to disk.

    Parameters
    ----------
    cam : Cam
        The map to export.
    file_path : str or Path
        Destination file.
    format : {'csv', 'pgm'}, default: 'csv'
        'csv' writes one row per map row at full precision, 'pgm' writes an 8-bit binary (P5) image.
    """
    file_path = Path(file_path)
    values = cam.values
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"Cannot export a class activation map with non-finite values to '{file_path}'.")
    if format == "csv":
        _write_csv(values, file_path)
    elif format == "pgm":
        write_netpbm(cam_to_pgm_pixels(values), file_path)
    else:
        raise ConfigurationError(f"Unknown heatmap format '{format}', expected 'csv' or 'pgm'.")
    return file_path


def attention_map_export(attention: AttentionMap, file_path: Union[str, Path]) -> Path:
    """Write the attention weights p as a full-precision CSV."""
    file_path = Path(file_path)
    _write_csv(attention.p, file_path)
    return file_path


def read_cam_csv(file_path: Union[str, Path]) -> Tensor:
    return pd.read_csv(file_path, header=None, float_precision="round_trip").to_numpy(dtype=np.float64)


def read_pgm(file_path: Union[str, Path]) -> np.ndarray:
    """Parse an 8-bit binary PGM (P5) file into a (height, width) uint8 array."""
    return read_netpbm(file_path, magic=b"P5")
