from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LevelGeometry:
    """Portfolio sizes ``N_l = N0 * M**l`` for levels ``l = 0..K``."""

    M: int = 5
    N0: int = 5
    K: int = 1

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")
        if int(self.N0) != self.N0 or self.N0 < 1:
            raise ValueError(f"N0 must be an integer >= 1, got {self.N0}")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError(f"K must be an integer >= 0, got {self.K}")

    def size(self, level: int) -> int:
        if level < 0:
            raise ValueError("level must be >= 0")
        return self.N0 * self.M**level

    @property
    def sizes(self) -> list:
        return [self.size(l) for l in range(self.K + 1)]

    @property
    def levels(self) -> range:
        return range(self.K + 1)
