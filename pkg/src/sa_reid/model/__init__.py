from .model_config import ModelConfig, StageConfig
from .params import Params, check_params, init_params, kaiming_bound, parameter_shapes, zeros_like_params
from .checkpoint import (
    ARCHITECTURE_PREFIX,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    architecture_tensors,
    check_architecture,
    load_checkpoint,
    save_checkpoint,
)
from .network import (
    BRANCHES,
    ForwardRecord,
    Losses,
    backward,
    extract_embedding,
    forward_train,
    stage_feature_maps,
    total_loss,
)
from .optimizer import sgd_step
from .training import (
    LOSS_LOG_COLUMNS,
    TrainingConfig,
    TrainingResult,
    build_label_map,
    classification_accuracy,
    predict_class,
    train,
    two_phase_lr_schedule,
)
