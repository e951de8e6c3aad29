from .toy_data import (
    NUM_ZONES,
    SPLITS,
    Sample,
    ToySpec,
    camera_tint,
    generate_toy,
    identity_template,
    occlusion_region,
    render,
    select_split,
    zone_bounds,
)
from .augmentation import augment, random_erase
from .directory_io import export_dir, load_dir, parse_sample_filename, read_ppm, write_ppm
