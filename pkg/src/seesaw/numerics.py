"""Dense float64 primitives shared by the losses, heads and trainer.

Everything here accepts either a single vector or a batch of row vectors;
batched inputs are normalised row by row.
"""
import numpy as np

EPS = 1e-12


class ShapeError(ValueError):
    """Raised when operand dimensions do not line up."""


class DegenerateNormError(ValueError):
    """Raised when differentiating through the normalisation of a ~zero vector."""


def as_float_array(a, ndim=None, name="array"):
    arr = np.asarray(a, dtype=np.float64)
    if ndim is not None and arr.ndim not in np.atleast_1d(ndim):
        raise ShapeError(f"{name} must have ndim in {ndim}, got shape {arr.shape}")
    return arr


def matvec(W, x):
    """Matrix-vector product ``W @ x`` with an explicit dimension check."""
    W = as_float_array(W, 2, "W")
    x = as_float_array(x, 1, "x")
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply {W.shape} matrix by length-{x.shape[0]} vector")
    return W @ x


def l2_normalize(v):
    """Return ``(unit, norm)`` along the last axis.

    Vectors whose norm is at most ``EPS`` map to the zero vector with norm 0
    instead of raising, so a vanishing feature never aborts a forward pass.
    """
    v = as_float_array(v, (1, 2), "v")
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    safe = norm > EPS
    unit = np.where(safe, v / np.where(safe, norm, 1.0), 0.0)
    norm = np.where(safe, norm, 0.0)
    if v.ndim == 1:
        return unit, float(norm[0])
    return unit, norm[:, 0]


def l2_normalize_backward(v, grad_unit):
    """Pull ``dL/d(v/|v|)`` back to ``dL/dv`` through ``(I - u u^T) / |v|``."""
    v = as_float_array(v, (1, 2), "v")
    grad_unit = as_float_array(grad_unit, (1, 2), "grad_unit")
    if v.shape != grad_unit.shape:
        raise ShapeError(f"shape mismatch {v.shape} vs {grad_unit.shape}")
    unit, norm = l2_normalize(v)
    norm = np.atleast_1d(norm)
    if np.any(norm <= EPS):
        raise DegenerateNormError("cannot differentiate l2_normalize at a zero-norm vector")
    radial = np.sum(unit * grad_unit, axis=-1, keepdims=True)
    if v.ndim == 1:
        return (grad_unit - radial * unit) / norm[0]
    return (grad_unit - radial * unit) / norm[:, None]


def logsumexp(z):
    """Stable ``log(sum(exp(z)))`` over the last axis."""
    z = as_float_array(z, (1, 2), "z")
    m = np.max(z, axis=-1, keepdims=True)
    out = m + np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True))
    return out[..., 0] if z.ndim == 2 else float(out[0])


def softmax(z):
    """Softmax over the last axis with max-subtraction."""
    z = as_float_array(z, (1, 2), "z")
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z):
    z = as_float_array(z, (1, 2), "z")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
