"""Integer resource vectors used for node capacity and service requests."""

from __future__ import annotations

from dataclasses import dataclass

DIMENSIONS = ("cpu_millis", "memory_bytes", "disk_bytes")


@dataclass(frozen=True)
class ResourceVector:
    """A quantity of cluster resources in three fixed dimensions.

    Components are non-negative integers (millicores, bytes, bytes) so that
    capacity accounting is exact; no float drift can accumulate over long
    simulations.
    """

    cpu_millis: int = 0
    memory_bytes: int = 0
    disk_bytes: int = 0

    def __post_init__(self):
        for dim in DIMENSIONS:
            value = getattr(self, dim)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{dim} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"{dim} must be >= 0, got {value}")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.cpu_millis + other.cpu_millis,
            self.memory_bytes + other.memory_bytes,
            self.disk_bytes + other.disk_bytes,
        )

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # Going negative in any component raises (via __post_init__).
        return ResourceVector(
            self.cpu_millis - other.cpu_millis,
            self.memory_bytes - other.memory_bytes,
            self.disk_bytes - other.disk_bytes,
        )

    def covers(self, request: "ResourceVector") -> bool:
        """True when every component of ``request`` fits inside this vector."""
        return (
            self.cpu_millis >= request.cpu_millis
            and self.memory_bytes >= request.memory_bytes
            and self.disk_bytes >= request.disk_bytes
        )

    def dominant_share(self, capacity: "ResourceVector") -> float:
        """Largest component-wise ratio of self over ``capacity``.

        Dimensions with zero capacity and zero usage are skipped; nonzero
        usage against zero capacity is an error.
        """
        share = 0.0
        for dim in DIMENSIONS:
            used = getattr(self, dim)
            cap = getattr(capacity, dim)
            if cap == 0:
                if used:
                    raise ValueError(f"nonzero {dim} against zero capacity")
                continue
            share = max(share, used / cap)
        return share

    def is_zero(self) -> bool:
        return self.cpu_millis == 0 and self.memory_bytes == 0 and self.disk_bytes == 0

    def to_payload(self) -> dict:
        return {"cpu": self.cpu_millis, "mem": self.memory_bytes, "disk": self.disk_bytes}

    @classmethod
    def from_payload(cls, payload: dict) -> "ResourceVector":
        return cls(payload["cpu"], payload["mem"], payload["disk"])


ZERO = ResourceVector()


def sum_vectors(vectors) -> ResourceVector:
    total = ZERO
    for vec in vectors:
        total = total + vec
    return total
