"""Layer connectivity rules for the TripleNet block family.

All functions are pure.  Layer indices are 1-based within a block; index 0
denotes the block input.  Three schemes exist:

* dense     — every layer consumes the block input plus all earlier layers.
* harmonic  — odd layers chain to their predecessor only; even layers reach
              back by power-of-two hops (n - 2^i for i in 1..5, while the hop
              fits).  A hop of exactly n lands on the block input.
* residual  — handled structurally by the graph builder (identity add), no
              link set needed here.

Even harmonic layers are "reserved": their outputs are re-read much later,
so they emit floor(1.7 x growth) channels instead of the growth rate.
"""

from __future__ import annotations

from dataclasses import dataclass

# Largest power-of-two hop an even harmonic layer may take (2^5 = 32).
# Kept literal even for blocks deeper than 32.
MAX_SKIP_EXPONENT = 5

# Reserved (even) harmonic layers widen by this factor; widths are floored
# to integers via exact 17/10 arithmetic.
RESERVE_NUMERATOR = 17
RESERVE_DENOMINATOR = 10


@dataclass(frozen=True)
class LinkSet:
    """Source layers feeding one layer of a block."""

    layer_index: int
    sources: tuple[int, ...]

    def __post_init__(self):
        if self.layer_index < 1:
            raise ValueError(f"layer_index must be >= 1, got {self.layer_index}")
        if not self.sources:
            raise ValueError(f"layer {self.layer_index} has no sources")
        if any(s < 0 or s >= self.layer_index for s in self.sources):
            raise ValueError(
                f"layer {self.layer_index} sources must lie in [0, {self.layer_index}), "
                f"got {self.sources}")
        if list(self.sources) != sorted(set(self.sources)):
            raise ValueError(f"sources must be strictly increasing, got {self.sources}")


def dense_links(n: int) -> LinkSet:
    """Dense scheme: layer n consumes the block input and every earlier layer."""
    if n < 1:
        raise ValueError(f"layer index must be >= 1, got {n}")
    return LinkSet(n, tuple(range(n)))


def harmonic_links(n: int) -> LinkSet:
    """Harmonic scheme: odd n -> {n-1}; even n -> {n - 2^i : 1 <= i <= 5, 2^i <= n}."""
    if n < 1:
        raise ValueError(f"layer index must be >= 1, got {n}")
    if n % 2 == 1:
        return LinkSet(n, (n - 1,))
    sources = {n - 2 ** i for i in range(1, MAX_SKIP_EXPONENT + 1) if 2 ** i <= n}
    return LinkSet(n, tuple(sorted(sources)))


def layer_width(n: int, scheme: str, growth: int) -> int:
    """Output channel count of layer n under the given scheme and growth rate."""
    if growth < 1:
        raise ValueError(f"growth rate must be >= 1, got {growth}")
    if scheme == "dense":
        return growth
    if scheme == "harmonic":
        if n % 2 == 0:
            return growth * RESERVE_NUMERATOR // RESERVE_DENOMINATOR
        return growth
    raise ValueError(f"unknown scheme {scheme!r}")


def block_output_members(scheme: str, depth: int) -> tuple[int, ...]:
    """Layer indices (0 = block input) whose outputs concatenate into the block output.

    Dense blocks keep everything.  Harmonic blocks keep the block input, the
    reserved (even) layers, and the final layer.
    """
    if depth < 1:
        raise ValueError(f"block depth must be >= 1, got {depth}")
    if scheme == "dense":
        return tuple(range(depth + 1))
    if scheme == "harmonic":
        members = {0, depth} | {i for i in range(2, depth + 1, 2)}
        return tuple(sorted(members))
    raise ValueError(f"unknown scheme {scheme!r}")
