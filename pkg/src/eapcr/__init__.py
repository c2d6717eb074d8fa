"""Feature extraction for data without fixed feature-relation patterns.

The extractor embeds tokenized features, forms tanh bilinear attention over
the embeddings, convolves the attention map twice (raw and under a designed
permutation of rows and columns), and adds a residual path from the embedding
means. Companion pieces: a small autodiff engine, baselines, dataset tools,
a training harness, and dependence analyses.
"""

from .autodiff import Tape, Tensor, backward, parameter
from .encoding import (
    FeatureDictionary,
    FeatureSchema,
    FeatureSpec,
    TargetSpec,
    build_dictionary,
    discretize,
    encode,
    encode_images,
    encode_rows,
    image_dictionary,
)
from .harness import DataBundle, RunRecord, TrainConfig, evaluate, run_experiment, train_model
from .metrics import classification_metrics, regression_metrics
from .model import (
    AttentionConfig,
    CnnConfig,
    ConvSpec,
    MlpConfig,
    Model,
    build_eacr,
    build_eapcr,
    build_mlp,
    build_model,
    build_plain_cnn,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .optim import Adam, Sgd, make_optimizer, zero_grads
from .permutation import (
    PermutationSpec,
    designed_permutation,
    identity_permutation,
    min_adjacent_separation,
    random_permutation,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AttentionConfig",
    "CnnConfig",
    "ConvSpec",
    "DataBundle",
    "FeatureDictionary",
    "FeatureSchema",
    "FeatureSpec",
    "MlpConfig",
    "Model",
    "PermutationSpec",
    "RunRecord",
    "Sgd",
    "Tape",
    "TargetSpec",
    "Tensor",
    "TrainConfig",
    "backward",
    "build_dictionary",
    "build_eacr",
    "build_eapcr",
    "build_mlp",
    "build_model",
    "build_plain_cnn",
    "classification_metrics",
    "designed_permutation",
    "discretize",
    "encode",
    "encode_images",
    "encode_rows",
    "evaluate",
    "identity_permutation",
    "image_dictionary",
    "load_checkpoint",
    "make_optimizer",
    "min_adjacent_separation",
    "param_count",
    "parameter",
    "random_permutation",
    "regression_metrics",
    "run_experiment",
    "save_checkpoint",
    "train_model",
    "zero_grads",
]
