from .config import METHODS, STRATEGIES, TrainConfig
from .optim import OptimizerState, poly_lr, sgd_momentum_step, step, total_loss
from .trainer import METRICS_COLUMNS, SegmentationTrainer, WrapSampler, fit
