from .class_activation_maps import Cam, cam_full_fc, cam_gap, cam_sa, logits_from_cam
from .heatmap_export import attention_map_export, cam_to_pgm_pixels, heatmap_export, read_cam_csv, read_pgm
