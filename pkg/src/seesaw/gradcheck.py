"""Central finite-difference checks of every analytic gradient in the package."""
import numpy as np

from .heads import LinearHead, linear_backward, linear_forward
from .losses import ClassCounts, SeesawConfig, ce_loss, loss_with_factors, seesaw_factors, seesaw_loss
from .numerics import l2_normalize, l2_normalize_backward


def numerical_gradient(f, x, h=1e-5):
    """Central differences of scalar ``f`` at every entry of array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for k in range(flat.shape[0]):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)
        flat[k] = orig - h
        fm = f(x)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """``|a - n| / max(|a|, |n|)`` in the 2-norm; 0 when both vanish."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def _random_logits(rng):
    c = int(rng.integers(2, 11))
    return rng.normal(0.0, 2.0, size=c), int(rng.integers(0, c))


def check_l2_normalize_backward(trials, rng, h=1e-5):
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 9))
        v = rng.normal(size=d) * rng.uniform(0.1, 10.0)
        g = rng.normal(size=d)
        num = numerical_gradient(lambda u: float(g @ l2_normalize(u)[0]), v, h)
        worst = max(worst, relative_error(l2_normalize_backward(v, g), num))
    return worst


def check_ce_loss(trials, rng, h=1e-5):
    worst = 0.0
    for _ in range(trials):
        z, y = _random_logits(rng)
        num = numerical_gradient(lambda u: ce_loss(u, y).loss, z, h)
        worst = max(worst, relative_error(ce_loss(z, y).grad_logits, num))
    return worst


def check_seesaw_loss(trials, rng, h=1e-5):
    """Factors are frozen at their forward value before differencing."""
    worst = 0.0
    for _ in range(trials):
        z, y = _random_logits(rng)
        counts = ClassCounts(rng.uniform(1.0, 1000.0, size=z.shape[0]))
        cfg = SeesawConfig(p=rng.uniform(0, 2), q=rng.uniform(0, 3))
        S = seesaw_factors(z, y, counts, cfg).S
        num = numerical_gradient(lambda u: loss_with_factors(u, y, S).loss, z, h)
        worst = max(worst, relative_error(seesaw_loss(z, y, counts, cfg).grad_logits, num))
    return worst


def check_linear_backward(trials, rng, normalized, h=1e-5):
    worst = 0.0
    for _ in range(trials):
        c, d = int(rng.integers(2, 7)), int(rng.integers(1, 7))
        W, b, x = rng.normal(size=(c, d)), rng.normal(size=c), rng.normal(size=d)
        g = rng.normal(size=c)
        tau = rng.uniform(1.0, 30.0)

        def f(W_, b_, x_):
            return float(g @ linear_forward(LinearHead(W_, b_, tau, normalized), x_))

        gW, gb, gx = linear_backward(LinearHead(W, b, tau, normalized), x, g)
        analytic = np.concatenate([gW.ravel(), gb, gx])
        numeric = np.concatenate([
            numerical_gradient(lambda u: f(u, b, x), W, h).ravel(),
            numerical_gradient(lambda u: f(W, u, x), b, h),
            numerical_gradient(lambda u: f(W, b, u), x, h),
        ])
        worst = max(worst, relative_error(analytic, numeric))
    return worst


SUITES = {
    "l2_normalize_backward": check_l2_normalize_backward,
    "ce_loss": check_ce_loss,
    "seesaw_loss": check_seesaw_loss,
    "linear_backward[plain]": lambda t, r, h=1e-5: check_linear_backward(t, r, False, h),
    "linear_backward[normalized]": lambda t, r, h=1e-5: check_linear_backward(t, r, True, h),
}


def run_gradcheck(trials=200, h=1e-5, seed=0):
    """Max relative error per suite, each with its own seeded generator."""
    return {name: fn(trials, np.random.default_rng([seed, k]), h) for k, (name, fn) in enumerate(SUITES.items())}
