"""Dense numerical core with reverse-mode automatic differentiation."""
from .gradcheck import check_gradients, numeric_grad, relative_error
from .nn import MLP, Linear, Module, glorot, zeros
from .optim import AdamW
from .tensor import (
    COSINE_EPS,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    cosine,
    cosine_matrix,
    cosine_np,
    current_tape,
    div,
    elu,
    exp,
    get_dtype,
    getitem,
    leaky_relu,
    log,
    log_softmax,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    norm,
    parameter,
    power,
    precision,
    relu,
    reshape,
    set_dtype,
    sigmoid,
    softmax,
    softmax_rows,
    sqrt,
    stack,
    sub,
    swapaxes,
    take_rows,
    tanh,
    tsum,
    weighted_softmax,
)

__all__ = [name for name in dir() if not name.startswith("_")]
