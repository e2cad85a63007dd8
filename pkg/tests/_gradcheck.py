"""Finite-difference check of the masking network's hand-written gradients."""

import numpy as np

from ancbench.masknet import MasknetConfig, backward, forward, init_params


def gradcheck_config(seed: int) -> MasknetConfig:
    """Smallest configuration that exercises every parameter kind."""
    return MasknetConfig(signal_len_m=128, q=2, kernel_k=16, channels_c=4, layers_fullband=2,
                         layers_subband=1, ssm_state_dim=2, conv_width=4,
                         mask_mode=("sigmoid", "linear")[seed % 2])


def worst_relative_errors(seed: int, h: float = 1e-4) -> dict[str, float]:
    """Per parameter array: max |analytic - fd| / max |fd| over every entry."""
    cfg = gradcheck_config(seed)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed=seed)
    # move off the symmetric initialisation so every path carries gradient
    params = params.unflatten(params.flatten() + 0.05 * rng.standard_normal(params.size()))
    x = rng.standard_normal(cfg.signal_len_m)
    upstream = rng.standard_normal(cfg.signal_len_m)
    analytic = backward(params, cfg, x, upstream).params

    def loss(p):
        return float(np.dot(upstream, forward(p, cfg, x).samples))

    errors = {}
    for name in params:
        base = params[name]
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = params.copy(), params.copy()
            plus.arrays[name][idx] += h
            minus.arrays[name][idx] -= h
            fd[idx] = (loss(plus) - loss(minus)) / (2 * h)
        scale = max(float(np.max(np.abs(fd))), 1e-8)
        errors[name] = float(np.max(np.abs(analytic[name] - fd))) / scale
    return errors
