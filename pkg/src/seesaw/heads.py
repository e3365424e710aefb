"""Linear classification heads, plain or cosine-normalised with temperature."""
from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, as_float_array, l2_normalize, l2_normalize_backward, softmax

FOREGROUND = 0
BACKGROUND = 1


@dataclass
class LinearHead:
    """``z = W x + b`` or, when ``normalized``, ``z = tau * (W/|W_rows|)(x/|x|) + b``.

    Weights are stored raw; normalisation happens on every evaluation.
    """

    W: np.ndarray
    b: np.ndarray
    tau: float = 20.0
    normalized: bool = False
    name: str = "cls"

    def __post_init__(self):
        self.W = as_float_array(self.W, 2, "W").copy()
        self.b = as_float_array(self.b, 1, "b").copy()
        if self.b.shape[0] != self.W.shape[0]:
            raise ShapeError(f"bias has {self.b.shape[0]} entries for {self.W.shape[0]} classes")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def init(cls, num_classes, feature_dim, rng=None, std=0.01, **kwargs):
        """Gaussian(0, std) weights, zero bias."""
        rng = np.random.default_rng(rng)
        W = rng.normal(0.0, std, size=(num_classes, feature_dim))
        return cls(W, np.zeros(num_classes), **kwargs)

    @property
    def num_classes(self):
        return self.W.shape[0]

    @property
    def feature_dim(self):
        return self.W.shape[1]

    def copy(self):
        return LinearHead(self.W.copy(), self.b.copy(), self.tau, self.normalized, self.name)

    def forward(self, x):
        return linear_forward(self, x)

    def backward(self, x, grad_z, need_input_grad=True):
        return linear_backward(self, x, grad_z, need_input_grad)

    def predict_proba(self, x):
        return softmax(self.forward(x))


def _check_features(head, x):
    x = as_float_array(x, (1, 2), "x")
    if x.shape[-1] != head.feature_dim:
        raise ShapeError(f"expected {head.feature_dim} features, got {x.shape[-1]}")
    return x


def linear_forward(head, x):
    """Logits for one feature vector or a ``(batch, feature_dim)`` matrix."""
    x = _check_features(head, x)
    if not head.normalized:
        return x @ head.W.T + head.b
    W_unit, _ = l2_normalize(head.W)
    x_unit, _ = l2_normalize(x)
    return head.tau * (x_unit @ W_unit.T) + head.b


def linear_backward(head, x, grad_z, need_input_grad=True):
    """Return ``(grad_W, grad_b, grad_x)`` given ``dL/dz``.

    Batched ``grad_z`` is summed over the batch for ``grad_W``/``grad_b``.
    Raises ``DegenerateNormError`` on zero-norm weight rows or features when
    the head is normalised. With ``need_input_grad=False`` no input gradient
    is formed (``grad_x`` is None), so zero-norm features are allowed.
    """
    x = _check_features(head, x)
    grad_z = as_float_array(grad_z, (1, 2), "grad_z")
    if grad_z.shape[:-1] != x.shape[:-1] or grad_z.shape[-1] != head.num_classes:
        raise ShapeError(f"grad_z shape {grad_z.shape} incompatible with x {x.shape}")
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    g2 = grad_z[None, :] if single else grad_z
    grad_b = g2.sum(axis=0)
    grad_x = None
    if not head.normalized:
        grad_W = g2.T @ x2
        if need_input_grad:
            grad_x = g2 @ head.W
    else:
        W_unit, _ = l2_normalize(head.W)
        x_unit, _ = l2_normalize(x2)
        grad_W = l2_normalize_backward(head.W, head.tau * (g2.T @ x_unit))
        if need_input_grad:
            grad_x = l2_normalize_backward(x2, head.tau * (g2 @ W_unit))
    if grad_x is not None and single:
        grad_x = grad_x[0]
    return grad_W, grad_b, grad_x


def objectness_head(feature_dim, tau=20.0, rng=None, std=0.01):
    """Two-way (foreground, background) normalised head."""
    return LinearHead.init(2, feature_dim, rng=rng, std=std, tau=tau, normalized=True, name="obj")


def foreground_probability(head, x):
    if head.num_classes != 2:
        raise ShapeError("objectness head must have exactly two outputs")
    return softmax(head.forward(x))[..., FOREGROUND]


def detection_score(sigma_class, sigma_obj_fg):
    """Per-class detection probability: class probability times foreground probability."""
    sigma_class = as_float_array(sigma_class, (1, 2), "sigma_class")
    fg = np.asarray(sigma_obj_fg, dtype=np.float64)
    if np.any(fg < 0) or np.any(fg > 1):
        raise ValueError("foreground probability must lie in [0, 1]")
    if sigma_class.ndim == 2 and fg.ndim == 1:
        fg = fg[:, None]
    return sigma_class * fg


def spatial_normalized_forward(W, b, tau, X):
    """Normalised 1x1 convolution over an ``(H, W, channels)`` feature map.

    Returns an ``(H, W, num_classes)`` grid of logits; every location is
    handled exactly like ``linear_forward`` on a normalised head.
    """
    X = as_float_array(X, 3, "X")
    head = LinearHead(W, b, tau=tau, normalized=True)
    if X.shape[2] != head.feature_dim:
        raise ShapeError(f"map has {X.shape[2]} channels, weights expect {head.feature_dim}")
    h, w, ch = X.shape
    return linear_forward(head, X.reshape(h * w, ch)).reshape(h, w, head.num_classes)


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def dump_heads(heads, fh):
    for head in heads:
        fh.write(
            f"head {head.name} {head.num_classes} {head.feature_dim} "
            f"{head.tau!r} {'true' if head.normalized else 'false'}\n"
        )
        for row in head.W:
            fh.write(_fmt(row) + "\n")
        fh.write(_fmt(head.b) + "\n")


def save_checkpoint(path, *heads):
    with open(path, "w", newline="\n") as fh:
        dump_heads(heads, fh)


def parse_heads(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    heads, pos = [], 0
    while pos < len(lines):
        parts = lines[pos].split()
        if len(parts) != 6 or parts[0] != "head":
            raise ValueError(f"expected a head header, got {lines[pos]!r}")
        _, name, c, d, tau, normalized = parts
        c, d = int(c), int(d)
        if normalized not in ("true", "false"):
            raise ValueError(f"normalized flag must be true/false, got {normalized!r}")
        if pos + c + 1 >= len(lines):
            raise ValueError(f"truncated checkpoint for head {name!r}")
        W = np.array([[float(v) for v in lines[pos + 1 + k].split()] for k in range(c)])
        b = np.array([float(v) for v in lines[pos + 1 + c].split()])
        if W.shape != (c, d) or b.shape != (c,):
            raise ValueError(f"head {name!r}: parameter shapes do not match header")
        heads.append(LinearHead(W, b, tau=float(tau), normalized=normalized == "true", name=name))
        pos += c + 2
    return heads


def load_checkpoint(path):
    with open(path) as fh:
        return parse_heads(fh.read())
