"""fairvec: weight-space model editing with task vectors and subgroup
fairness evaluation, with a built-in synthetic-data toy lab."""

__version__ = "0.1.0"

from .ckpt import Checkpoint, Dtype, Tensor, read_checkpoint, tensor_names, write_checkpoint
from .arith import (
    TaskVector,
    WeightedVector,
    add,
    apply,
    diff,
    inject,
    merge,
    negate,
    scale,
    vector_cosine,
    vector_norm,
)
from .metrics import (
    GroupReport,
    PredictionRecord,
    accuracy_parity_gap,
    binarize,
    dpd,
    eod,
    evaluate,
    group_accuracy,
    selection_rate,
)
from .corpus import CorpusSpec, Example, gen_corpus
from .toymodel import Hyper, LoraAdapter, ToyModel, grad_check, init_model, predict, train, train_lora, train_subgroup
from .sweep import (
    INJECT_GRID,
    MERGE_GRID,
    SweepConfig,
    SweepResult,
    inject_sweep,
    lambda_sweep,
    select_lambda,
    worst_subgroups,
)
