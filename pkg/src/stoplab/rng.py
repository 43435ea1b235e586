"""Counter-based random streams.

Every random quantity in a simulation is drawn from a Philox generator keyed
by (base seed, channel, replication, particle).  A stream's output therefore
depends only on its key, never on how many particles exist, which worker
evaluates it, or in what order streams are consumed.  Re-running any cell of
an experiment from its recorded seeds reproduces bit-identical draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Channel tags for the sub-streams hanging off one base seed.
CH_NOISE = 0
CH_INIT = 1
CH_COMMON = 2
CH_POLICY = 3
CH_SEARCH = 4
CH_PROJECTION = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for (seed, *key).

    Identical arguments always produce an identical stream; distinct keys
    produce statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Seeds:
    """The three base seeds of a simulation (64-bit unsigned)."""

    common: int
    idio: int
    policy: int

    def __post_init__(self):
        for name in ("common", "idio", "policy"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"seed {name}={v} outside [0, 2^64)")

    @classmethod
    def from_master(cls, master: int) -> "Seeds":
        """Derive the three base seeds from one master seed."""
        children = np.random.SeedSequence(int(master)).spawn(3)
        vals = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
        return cls(common=vals[0], idio=vals[1], policy=vals[2])

    def to_dict(self) -> dict:
        return {"common": self.common, "idio": self.idio, "policy": self.policy}

    @classmethod
    def from_dict(cls, d: dict) -> "Seeds":
        return cls(common=int(d["common"]), idio=int(d["idio"]), policy=int(d["policy"]))
