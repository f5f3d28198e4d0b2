"""Seed handling: one env var overrides every stochastic choice in the package."""
from __future__ import annotations

import os

DEFAULT_SEED = 0x5EED


def resolve_seed(default: int | None = None) -> int:
    """Return the seed to use, honoring the BLENDFORGE_SEED override."""
    env = os.environ.get("BLENDFORGE_SEED")
    if env is not None:
        return int(env, 0)
    return DEFAULT_SEED if default is None else default
