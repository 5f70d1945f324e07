"""Occupancy bitmask codec.

Spot 1 is the most significant bit: ``bitmask = sum(b_i * 2**(n - i))``.
"""

from __future__ import annotations

import operator
from collections.abc import Sequence
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import DomainError, RangeError

MAX_SPOTS = 64
WIRE_FIELD = "parking_status"


def encode_status(bits: Sequence[bool]) -> int:
    n = len(bits)
    if not 1 <= n <= MAX_SPOTS:
        raise RangeError(f"bit vector length must be in 1..{MAX_SPOTS}, got {n}")
    value = 0
    for b in bits:
        value = (value << 1) | (1 if b else 0)
    return value


def decode_status(bitmask: int, n_spots: int) -> tuple[bool, ...]:
    if not 1 <= n_spots <= MAX_SPOTS:
        raise RangeError(f"n_spots must be in 1..{MAX_SPOTS}, got {n_spots}")
    if isinstance(bitmask, bool):
        raise RangeError(f"bitmask must be an integer, got {bitmask!r}")
    try:
        bitmask = operator.index(bitmask)
    except TypeError:
        raise RangeError(f"bitmask must be an integer, got {bitmask!r}") from None
    if bitmask < 0 or bitmask >= 1 << n_spots:
        raise RangeError(f"bitmask {bitmask} does not fit {n_spots} spots (must be < 2**{n_spots})")
    return tuple(bool((bitmask >> (n_spots - i)) & 1) for i in range(1, n_spots + 1))


def bits_to_string(bits: Sequence[bool]) -> str:
    return "".join("1" if b else "0" for b in bits)


def string_to_bits(text: str) -> tuple[bool, ...]:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise RangeError(f"expected a string of 0/1 characters, got {text!r}")
    return tuple(c == "1" for c in text)


@dataclass(frozen=True)
class ParkingStatus:
    """Occupancy of a whole lot at one instant."""

    n_spots: int
    bitmask: int
    timestamp: datetime

    def __post_init__(self):
        decode_status(self.bitmask, self.n_spots)
        object.__setattr__(self, "bitmask", operator.index(self.bitmask))
        if self.timestamp.tzinfo is None:
            raise DomainError("timestamp must be timezone-aware")

    @classmethod
    def from_bits(cls, bits: Sequence[bool], timestamp: datetime | None = None) -> "ParkingStatus":
        ts = timestamp or datetime.now(timezone.utc)
        return cls(len(bits), encode_status(bits), ts)

    @property
    def bits(self) -> tuple[bool, ...]:
        return decode_status(self.bitmask, self.n_spots)

    @property
    def occupied_count(self) -> int:
        return bin(self.bitmask).count("1")

    @property
    def free_count(self) -> int:
        return self.n_spots - self.occupied_count

    def is_occupied(self, spot_id: int) -> bool:
        if not 1 <= spot_id <= self.n_spots:
            raise RangeError(f"spot {spot_id} not in 1..{self.n_spots}")
        return bool((self.bitmask >> (self.n_spots - spot_id)) & 1)


def summarize(status: ParkingStatus) -> dict[str, int]:
    occupied = status.occupied_count
    return {"occupied_count": occupied, "free_count": status.n_spots - occupied}
