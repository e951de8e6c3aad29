"""Synthetic cross-camera re-identification benchmark.

Every identity is four colored geometric patches, one per horizontal body zone. Camera 1 blanks the
``occluded_zone`` so that the most discriminative patch is missing from that view, and every camera adds
its own small tint.
"""
from dataclasses import dataclass
from typing import List, Literal, Tuple

import numpy as np
from tqdm import tqdm

from sa_reid.exceptions import ConfigurationError
from sa_reid.numerics import Tensor

Split = Literal["train", "query", "gallery"]
SPLITS = ("train", "query", "gallery")

NUM_ZONES = 4
BACKGROUND = 0.5
OCCLUDING_CAMERA = 1
PATCH_SHAPES = ("rectangle", "ellipse", "triangle", "stripes")


@dataclass(frozen=True)
class Sample:
    image: Tensor
    identity: int
    camera: int
    split: Split
    image_index: int = 0

    @property
    def file_name(self) -> str:
        return f"id_{self.identity}_cam_{self.camera}_{self.image_index}.ppm"


@dataclass(frozen=True)
class ToySpec:
    """
    Parameters of the synthetic benchmark.

    Attributes
    ----------
    num_identities : int
        Number of identities; the first ``round(train_fraction * num_identities)`` are training identities.
    images_per_identity_per_camera : int
        At least 2 so that every query keeps gallery images of its identity.
    num_cameras : int
        At least 2. Camera 1 is the occluding view.
    image_height, image_width : int
        Image size; the height must hold the four body zones.
    noise_std : float
        Standard deviation of the Gaussian pixel noise, applied before clipping to [0, 1].
    occluded_zone : int
        The body zone (0 to 3) camera 1 blanks to background gray.
    hue_shift : float
        Per-camera tint; camera c adds ``c * hue_shift * (+1, 0, -1)`` to the RGB channels.
    train_fraction : float
        Fraction of identities used for training; the others form the query and gallery sets.
    seed : int
    """

    num_identities: int = 20
    images_per_identity_per_camera: int = 4
    num_cameras: int = 2
    image_height: int = 64
    image_width: int = 32
    noise_std: float = 0.02
    occluded_zone: int = 1
    hue_shift: float = 0.04
    train_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_cameras < 2:
            raise ConfigurationError(f"At least 2 cameras are required, got {self.num_cameras}.")
        if self.images_per_identity_per_camera < 2:
            raise ConfigurationError(
                f"'images_per_identity_per_camera' must be at least 2, got {self.images_per_identity_per_camera}."
            )
        if self.image_height < 2 * NUM_ZONES or self.image_width < 4:
            raise ConfigurationError(f"Image size {self.image_height}x{self.image_width} is too small for the zones.")
        if not 0 <= self.occluded_zone < NUM_ZONES:
            raise ConfigurationError(
                f"The occlusion zone {self.occluded_zone} lies outside the image (zones 0 to {NUM_ZONES - 1})."
            )
        if self.noise_std < 0:
            raise ConfigurationError(f"'noise_std' must be non-negative, got {self.noise_std}.")
        num_train = self.num_train_identities
        if not 1 <= num_train < self.num_identities:
            raise ConfigurationError(
                f"'train_fraction'={self.train_fraction} leaves {num_train} of {self.num_identities} identities "
                "for training; both the training and the test sets need at least one identity."
            )

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return (3, self.image_height, self.image_width)

    @property
    def num_train_identities(self) -> int:
        return int(round(self.train_fraction * self.num_identities))


def zone_bounds(spec: ToySpec, zone: int) -> Tuple[int, int]:
    """Rows [start, stop) of a body zone."""
    return zone * spec.image_height // NUM_ZONES, (zone + 1) * spec.image_height // NUM_ZONES


def occlusion_region(spec: ToySpec) -> Tuple[slice, slice]:
    """Row and column slices blanked by the occluding camera."""
    start, stop = zone_bounds(spec, spec.occluded_zone)
    return slice(start, stop), slice(0, spec.image_width)


def camera_tint(spec: ToySpec, camera: int) -> Tensor:
    return camera * spec.hue_shift * np.array([1.0, 0.0, -1.0])


def _patch_mask(shape: str, height: int, width: int) -> np.ndarray:
    rows, cols = np.mgrid[0:height, 0:width]
    # normalised coordinates in [-1, 1]
    y = (rows + 0.5) / height * 2.0 - 1.0
    x = (cols + 0.5) / width * 2.0 - 1.0
    if shape == "rectangle":
        return np.ones((height, width), dtype=bool)
    if shape == "ellipse":
        return x**2 + y**2 <= 1.0
    if shape == "triangle":
        return np.abs(x) <= (y + 1.0) / 2.0
    return (rows // max(height // 4, 1)) % 2 == 0


def identity_template(spec: ToySpec, identity: int) -> Tensor:
    """Noise-free camera-0 rendering of an identity: colored patches on a gray background."""
    rng = np.random.default_rng([spec.seed, identity])
    image = np.full(spec.image_shape, BACKGROUND)
    margin_x = max(spec.image_width // 8, 1)
    for zone in range(NUM_ZONES):
        start, stop = zone_bounds(spec, zone)
        margin_y = max((stop - start) // 8, 1)
        color = rng.uniform(0.1, 0.9, size=3)
        shape = PATCH_SHAPES[rng.integers(len(PATCH_SHAPES))]
        rows = slice(start + margin_y, stop - margin_y)
        cols = slice(margin_x, spec.image_width - margin_x)
        mask = _patch_mask(shape, rows.stop - rows.start, cols.stop - cols.start)
        patch = image[:, rows, cols]
        patch[:, mask] = color[:, np.newaxis]
    return image


def render(spec: ToySpec, identity: int, camera: int, image_index: int) -> Tensor:
    """Render one camera view of an identity, noise included."""
    image = identity_template(spec, identity)
    if camera == OCCLUDING_CAMERA:
        rows, cols = occlusion_region(spec)
        image[:, rows, cols] = BACKGROUND
    image = image + camera_tint(spec, camera)[:, np.newaxis, np.newaxis]
    if spec.noise_std > 0:
        rng = np.random.default_rng([spec.seed, identity, camera, image_index])
        image = image + rng.normal(0.0, spec.noise_std, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def sample_split(spec: ToySpec, identity: int, image_index: int) -> Split:
    """Training identities go to 'train'; for test identities image 0 of every camera is a query."""
    if identity < spec.num_train_identities:
        return "train"
    return "query" if image_index == 0 else "gallery"


def generate_toy(spec: ToySpec, verbose: bool = False) -> List[Sample]:
    """
    Generate the full benchmark, deterministically from ``spec.seed``.

    Parameters
    ----------
    spec : ToySpec
    verbose : bool, default: False
        Show a progress bar over the identities.

    Returns
    -------
    list of Sample
        Ordered by identity, camera and image index.
    """
    samples = []
    for identity in tqdm(range(spec.num_identities), desc="Generating", unit="identity", disable=not verbose):
        for camera in range(spec.num_cameras):
            for image_index in range(spec.images_per_identity_per_camera):
                samples.append(
                    Sample(
                        image=render(spec, identity, camera, image_index),
                        identity=identity,
                        camera=camera,
                        split=sample_split(spec, identity, image_index),
                        image_index=image_index,
                    )
                )
    return samples


def select_split(samples: List[Sample], split: Split) -> List[Sample]:
    return [sample for sample in samples if sample.split == split]
