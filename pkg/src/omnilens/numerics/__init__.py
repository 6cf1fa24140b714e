from omnilens.numerics.tensor import (
    Tensor,
    add,
    amax,
    backward,
    broadcast_to,
    clip,
    concat,
    div,
    exp,
    gelu,
    get_dtype,
    getitem,
    l2_normalize,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    precision,
    relu,
    reshape,
    set_precision,
    softmax,
    sub,
    transpose,
    tsum,
)
from omnilens.numerics.module import LayerNorm, Linear, Module, Parameter, trunc_normal
from omnilens.numerics.optim import AdamW, warmup_cosine
from omnilens.numerics.gradcheck import check_gradients, finite_diff_grad, max_relative_error
from omnilens.numerics.checkpoint import load_checkpoint, save_checkpoint
