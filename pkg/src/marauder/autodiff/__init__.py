"""Minimal numpy tensor engine with reverse-mode autodiff."""

from .gradcheck import grad_check, numeric_grad, analytic_grad, relative_error
from .optim import SGD, Adam
from .tensor import (
    AutodiffError, DetachedTensor, IndexOutOfRange, NonFiniteInput, ShapeMismatch, Tensor,
    add, avgpool2d, backward, concat, conv2d, cross_entropy, div, exp, index, linear, log,
    log_softmax, lstm_cell, matmul, maxpool2d, mean, mul, neg, relu, reshape, sigmoid,
    softmax, stack, sub, tanh, transpose, tsum,
)
