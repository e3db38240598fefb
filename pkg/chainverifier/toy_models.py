"""Small adversarial chains built from plain callables.

Each factory can be referenced from a run config as an ``external`` model,
e.g. ``factory: chainverifier.toy_models:frozen_chain``.
"""

import numpy as np

from chainverifier.chains import normal_logpdf
from chainverifier.control_model import CallableModel


def _normal_sampler(n: int):
    return lambda x, rng: rng.standard_normal(n)


def _normal_log_density(x, w) -> float:
    return float(normal_logpdf(np.asarray(w, dtype=float)))


def frozen_chain(n: int = 1) -> CallableModel:
    """step(x, w) = x: the control is ignored, nothing but x is reachable from x."""
    return CallableModel(
        n=n,
        p=n,
        step_fn=lambda x, w, xp=np: x + 0.0 * w,
        sampler_fn=_normal_sampler(n),
        log_density_fn=_normal_log_density,
        name="frozen",
        supports_autodiff=True,
    )


def flip_chain(noise: float = 0.0) -> CallableModel:
    """step(x, w) = -x + noise * w on R with w uniform on [-1, 1].

    With noise 0 the chain alternates exactly between x0 and -x0.
    """

    def log_density(x, w) -> float:
        return float(np.log(0.5)) if abs(float(np.asarray(w).reshape(-1)[0])) <= 1.0 else -np.inf

    return CallableModel(
        n=1,
        p=1,
        step_fn=lambda x, w, xp=np: -x + noise * w,
        sampler_fn=lambda x, rng: rng.uniform(-1.0, 1.0, 1),
        log_density_fn=log_density,
        name="flip" if noise == 0.0 else "noisy-flip",
        supports_autodiff=True,
    )


def noisy_flip_chain(noise: float = 0.01) -> CallableModel:
    """flip_chain with a small noise term, so the chain is not confined to {x0, -x0}."""
    return flip_chain(noise)


def drift_chain(n: int = 1) -> CallableModel:
    """step(x, w) = x + 1 + 0 * w: no fixed point exists."""
    return CallableModel(
        n=n,
        p=n,
        step_fn=lambda x, w, xp=np: x + 1.0 + 0.0 * w,
        sampler_fn=_normal_sampler(n),
        log_density_fn=_normal_log_density,
        name="drift",
        supports_autodiff=True,
    )
