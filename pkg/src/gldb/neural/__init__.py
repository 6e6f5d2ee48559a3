from .model import (
    Fusion,
    GraphBatch,
    GraphLinkModel,
    ModelConfig,
    Reduce,
    RowGrad,
    balanced_bce,
    embed_nodes,
    fuse,
    gat_forward,
    init_params,
    score_link,
)
from .optim import AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check
