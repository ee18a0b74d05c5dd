"""Shared helpers for deterministic text output."""


def fmt17(value) -> str:
    """Format a number with 17 significant digits (lossless for float64).

    Negative zero is canonicalized to "0" so that value-level identities
    (for example antisymmetry under argument swap) survive textual
    round trips byte for byte.
    """
    x = float(value)
    if x == 0.0:
        x = 0.0
    return format(x, ".17g")
