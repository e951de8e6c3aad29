import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from natsort import natsorted
from tqdm import tqdm

from sa_reid.dataset.toy_data import SPLITS, Sample
from sa_reid.exceptions import ParseError, SaReidError
from sa_reid.numerics import Tensor
from sa_reid.dataset._netpbm import read_netpbm, write_netpbm

SAMPLE_FILE_NAME_PATTERN = re.compile(r"^id_(\d+)_cam_(\d+)_(\d+)\.ppm$")


def parse_sample_filename(file_name: str) -> Tuple[int, int, int]:
    """
    Returns the identity, camera and image index encoded in a sample file name.

    Parameters
    ----------
    file_name : str
        The file name (e.g. 'id_3_cam_1_0.ppm' -> (3, 1, 0)).
    """
    match = SAMPLE_FILE_NAME_PATTERN.match(Path(file_name).name)
    if match is None:
        raise ParseError(f"Malformed sample file name '{file_name}', expected 'id_<identity>_cam_<camera>_<n>.ppm'.")
    identity, camera, image_index = (int(group) for group in match.groups())
    return identity, camera, image_index


def write_ppm(image: Tensor, file_path: Union[str, Path]) -> Path:
    """Write a 3xHxW image in [0, 1] as an 8-bit binary PPM (P6)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise SaReidError(f"Expected an image of shape (3, H, W) for '{file_path}', got {image.shape}.")
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return write_netpbm(pixels.transpose(1, 2, 0), file_path)


def read_ppm(file_path: Union[str, Path]) -> Tensor:
    """Read a binary PPM (P6) with maximum value 255 into a 3xHxW float image in [0, 1]."""
    pixels = read_netpbm(file_path, magic=b"P6")
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def export_dir(samples: List[Sample], folder_path: Union[str, Path], verbose: bool = False) -> Path:
    """
    Write samples to the on-disk layout read by ``load_dir``: one PPM per sample in ``<split>/``.

    Existing files with the same names are overwritten.
    """
    folder_path = Path(folder_path)
    for split in SPLITS:
        (folder_path / split).mkdir(parents=True, exist_ok=True)
    for sample in tqdm(samples, desc="Exporting", unit="image", disable=not verbose):
        write_ppm(sample.image, folder_path / sample.split / sample.file_name)
    return folder_path


def load_dir(folder_path: Union[str, Path], splits: Tuple[str, ...] = SPLITS, verbose: bool = False) -> List[Sample]:
    """
    Load a dataset directory with ``train/``, ``query/`` and ``gallery/`` subdirectories of PPM images.

    Parameters
    ----------
    folder_path : str or Path
        The dataset root.
    splits : tuple of str, default: ("train", "query", "gallery")
        The splits to load; each of them must exist and hold at least one image.
    verbose : bool, default: False

    Returns
    -------
    list of Sample
        Samples in split order, naturally sorted by file name within a split.
    """
    folder_path = Path(folder_path)
    if not folder_path.is_dir():
        raise SaReidError(f"The dataset folder '{folder_path}' does not exist.")
    samples = []
    for split in splits:
        split_path = folder_path / split
        if not split_path.is_dir():
            raise SaReidError(f"The '{split}' split folder is missing from '{folder_path}'.")
        file_paths = natsorted(split_path.glob("*.ppm"))
        if not len(file_paths):
            raise SaReidError(f"No .ppm files found in '{split_path}'.")
        for file_path in tqdm(file_paths, desc=f"Loading {split}", unit="image", disable=not verbose):
            identity, camera, image_index = parse_sample_filename(file_path.name)
            samples.append(
                Sample(
                    image=read_ppm(file_path),
                    identity=identity,
                    camera=camera,
                    split=split,
                    image_index=image_index,
                )
            )
    return samples
