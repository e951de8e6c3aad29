from .gradient_check import (
    GRADCHECK_LAYERS,
    GradcheckConfig,
    assert_gradients_pass,
    check_end_to_end,
    check_layer,
    numerical_gradient,
    relative_error,
    run_gradient_checks,
    tiny_model_config,
)
from ._config_utils import PathsConfig, RunConfig, load_run_config, read_key_value_file
