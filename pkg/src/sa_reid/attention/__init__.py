from .spatial_attention import MAX_JACOBIAN_SIDE, AttentionMap, sa_backward, sa_forward, sa_jacobian
from .pooling import gap_backward, gap_forward, stripe_bounds, stripe_pool, stripe_pool_backward
