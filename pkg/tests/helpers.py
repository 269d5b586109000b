import numpy as np

from drumscribe import tensor as T
from drumscribe.tensor import Tensor, gradient_check


def model_gradient_errors(model, x, y, step=1e-5):
    """Relative error of every parameter's tape gradient against finite differences."""
    xt = Tensor(x, dtype=np.float64)
    return gradient_check(lambda: T.cross_entropy_from_logits(model(xt), y), model.parameters(), step)


def jitter_params(model, seed, scale=0.3):
    """Move a float64 model away from its symmetric init so every gradient is informative."""
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data += scale * rng.standard_normal(p.shape)
    return model
