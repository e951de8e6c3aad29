from typing import Tuple

import numpy as np

from sa_reid.numerics import Tensor

FLIP_PROBABILITY = 0.5
ERASE_PROBABILITY = 0.5
ERASE_AREA_RANGE = (0.02, 0.4)
ERASE_ASPECT_RANGE = (0.3, 3.33)
ERASE_ATTEMPTS = 100


def random_erase(
    image: Tensor,
    rng: np.random.Generator,
    area_range: Tuple[float, float] = ERASE_AREA_RANGE,
    aspect_range: Tuple[float, float] = ERASE_ASPECT_RANGE,
) -> Tensor:
    """
    Fill one random rectangle of ``image`` with uniform noise.

    The rectangle area is drawn as a fraction ``area_range`` of the image and its height/width ratio from
    ``aspect_range``. Draws that do not fit are retried; the image is returned unchanged after
    ``ERASE_ATTEMPTS`` failures.
    """
    num_channels, height, width = image.shape
    for _ in range(ERASE_ATTEMPTS):
        target_area = rng.uniform(*area_range) * height * width
        aspect = rng.uniform(*aspect_range)
        erase_height = int(round(np.sqrt(target_area * aspect)))
        erase_width = int(round(np.sqrt(target_area / aspect)))
        if 1 <= erase_height < height and 1 <= erase_width < width:
            top = rng.integers(0, height - erase_height + 1)
            left = rng.integers(0, width - erase_width + 1)
            erased = image.copy()
            erased[:, top : top + erase_height, left : left + erase_width] = rng.random(
                (num_channels, erase_height, erase_width)
            )
            return erased
    return image.copy()


def augment(image: Tensor, rng: np.random.Generator) -> Tensor:
    """Random horizontal flip, then random erasing, each with probability 0.5. Deterministic given ``rng``."""
    augmented = np.array(image, dtype=np.float64)
    if rng.random() < FLIP_PROBABILITY:
        augmented = augmented[:, :, ::-1].copy()
    if rng.random() < ERASE_PROBABILITY:
        augmented = random_erase(augmented, rng)
    return augmented
