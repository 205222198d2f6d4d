"""Named PCG64 substreams derived from a single seed.

Every random choice in the package flows through one of these streams, so
corpus layout, batch order, dropout masks, and random summaries can be
reproduced or resumed independently of each other.  Stream states are
plain dicts of ints, safe to serialize as JSON inside checkpoints.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = ["STREAMS", "RngHub", "stream_rng"]

# stream name -> child index under the base seed
STREAMS = {
    "corpus": 0,
    "init": 1,
    "sampling": 2,
    "dropout": 3,
    "random-summary": 4,
}


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """A fresh generator for one named stream of a base seed."""
    try:
        idx = STREAMS[name]
    except KeyError:
        raise ConfigError(f"unknown rng stream {name!r}, expected one of {sorted(STREAMS)}") from None
    return np.random.default_rng([seed, idx])


class RngHub:
    """All named streams for one base seed, with checkpointable state."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.streams = {name: stream_rng(self.seed, name) for name in STREAMS}

    def __getitem__(self, name: str) -> np.random.Generator:
        try:
            return self.streams[name]
        except KeyError:
            raise ConfigError(
                f"unknown rng stream {name!r}, expected one of {sorted(STREAMS)}"
            ) from None

    def state(self) -> dict:
        return {
            "seed": self.seed,
            "streams": {name: g.bit_generator.state for name, g in self.streams.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngHub":
        hub = cls(state["seed"])
        for name, s in state["streams"].items():
            hub.streams[name].bit_generator.state = s
        return hub
