from .checkpoint import load_checkpoint, save_checkpoint
from .core import (
    ARCHS,
    ModelParams,
    ModelSpec,
    attention_maps,
    backward,
    forward,
    forward_batch,
    init_params,
    logit_input_gradient,
    loss_and_grads,
    loss_soft_ce,
    predict_proba,
)
from .layers import softmax
from .train import TrainConfig, train, train_arrays, write_loss_history
