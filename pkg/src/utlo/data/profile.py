"""Per-class training counts for exponentially long-tailed datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class LongTailProfile:
    """Class counts sorted from head (index 0) to tail.

    ``rho`` is the nominal imbalance ratio the profile was built with; the
    realized ratio ``class_counts[0] / class_counts[-1]`` can differ from it
    only by floor rounding.
    """

    class_counts: tuple
    rho: float
    few_shot_classes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.class_counts)
        object.__setattr__(self, "class_counts", counts)
        object.__setattr__(self, "few_shot_classes", frozenset(int(c) for c in self.few_shot_classes))
        if len(counts) < 2:
            raise ProfileError("a profile needs at least two classes")
        if any(c < 1 for c in counts):
            raise ProfileError(f"class counts must be positive: {counts}")
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise ProfileError(f"class counts must be non-increasing: {counts}")
        if not self.few_shot_classes:
            raise ProfileError("few-shot class set is empty")
        if not self.few_shot_classes <= set(range(len(counts))):
            raise ProfileError(f"few-shot classes {sorted(self.few_shot_classes)} out of range")

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def total(self) -> int:
        return sum(self.class_counts)

    @property
    def realized_rho(self) -> float:
        return self.class_counts[0] / self.class_counts[-1]

    def summary(self) -> str:
        lines = [
            f"classes: {self.num_classes}",
            f"counts: {list(self.class_counts)}",
            f"total: {self.total:,}",
            f"rho: {self.rho:g} (realized {self.realized_rho:.4g})",
            f"few-shot classes: {sorted(self.few_shot_classes)}",
        ]
        return "\n".join(lines)


def few_shot_by_fraction(num_classes: int, fraction: float) -> frozenset:
    """The ceil(fraction * C) highest class indices."""
    if not 0 < fraction <= 1:
        raise ProfileError(f"few-shot fraction must be in (0, 1], got {fraction}")
    k = max(1, math.ceil(fraction * num_classes - 1e-9))
    return frozenset(range(num_classes - k, num_classes))


def few_shot_by_threshold(counts, threshold: int = 50) -> frozenset:
    """Classes with fewer than ``threshold`` training images."""
    return frozenset(c for c, n in enumerate(counts) if n < threshold)


def make_exponential_profile(
    num_classes: int,
    n_max: int,
    rho: float,
    few_shot_fraction: float = 0.4,
    few_shot_rule: str = "fraction",
    few_shot_threshold: int = 50,
) -> LongTailProfile:
    """n_c = floor(n_max * rho^(-c / (C - 1))) for c = 0..C-1.

    With C=10 and n_max=5000 this gives totals of 12,406 (rho=100) and
    13,996 (rho=50).
    """
    if num_classes < 2:
        raise ProfileError(f"need at least 2 classes, got {num_classes}")
    if n_max < 1:
        raise ProfileError(f"n_max must be >= 1, got {n_max}")
    if rho < 1:
        raise ProfileError(f"rho must be >= 1, got {rho}")
    if n_max / rho < 1:
        raise ProfileError(f"tail class would be empty (n_max={n_max}, rho={rho})")
    # tiny epsilon so exact products such as 5000 * 0.01 do not floor to 49
    counts = [
        math.floor(n_max * rho ** (-c / (num_classes - 1)) + 1e-9) for c in range(num_classes)
    ]
    if few_shot_rule == "fraction":
        few = few_shot_by_fraction(num_classes, few_shot_fraction)
    elif few_shot_rule == "threshold":
        few = few_shot_by_threshold(counts, few_shot_threshold)
        if not few:
            raise ProfileError(f"no class has fewer than {few_shot_threshold} images")
    else:
        raise ProfileError(f"unknown few-shot rule {few_shot_rule!r}")
    return LongTailProfile(tuple(counts), float(rho), few)


def balanced_profile(total: int, num_classes: int, few_shot_classes) -> LongTailProfile:
    """Equal counts summing to ``total``; the remainder goes to the first classes."""
    if total < num_classes:
        raise ProfileError(f"total {total} too small for {num_classes} classes")
    base, rem = divmod(total, num_classes)
    counts = [base + (1 if c < rem else 0) for c in range(num_classes)]
    return LongTailProfile(tuple(counts), 1.0, frozenset(few_shot_classes))
