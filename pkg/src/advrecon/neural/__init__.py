from .checkpoint import checkpoint_load, checkpoint_save
from .network import (
    Adam,
    Mlp,
    MlpReconstructor,
    PerturbationGenerator,
    hinge_penalty,
    orthogonality_gap,
    parseval_penalty,
    reconstruct,
)
from .training import (
    AdvTrainConfig,
    BaselineConfig,
    BaselineVariant,
    OptimizerSettings,
    TrainHistory,
    adv_train,
    generator_objective,
    reconstruction_loss,
    train_baseline,
)

__all__ = [
    "Adam", "Mlp", "MlpReconstructor", "PerturbationGenerator", "hinge_penalty", "orthogonality_gap",
    "parseval_penalty", "reconstruct", "checkpoint_load", "checkpoint_save", "AdvTrainConfig",
    "BaselineConfig", "BaselineVariant", "OptimizerSettings", "TrainHistory", "adv_train",
    "generator_objective", "reconstruction_loss", "train_baseline",
]
