"""Step-size sequences for the fast (Q) and slow (index) iterates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

DECREASING = "decreasing"
CONSTANT = "constant"
KINDS = (DECREASING, CONSTANT)


@dataclass(frozen=True)
class StepSchedule:
    """Fast gain ``a(n)`` and slow gain ``b(n)``.

    For ``kind="decreasing"``::

        a(n) = C / ceil(n / 500)
        b(n) = C' / (1 + ceil(n log n / 500)) * 1{n mod N == 0}

    with the count clamped to 1 for ``a`` and ``0 log 0 = 1 log 1 = 0``.
    ``kind="constant"`` returns ``a_const`` and ``b_const`` for every ``n``.
    """

    kind: str = DECREASING
    C: float = 0.3
    C_prime: float = 1.0
    N: int = 1
    a_const: float = 0.02
    b_const: float = 0.005

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def kind_code(self) -> int:
        return KINDS.index(self.kind)

    def to_dict(self) -> dict:
        return asdict(self)


def a_of(schedule: StepSchedule, n: int) -> float:
    if schedule.kind == CONSTANT:
        return schedule.a_const
    m = max(int(n), 1)
    return schedule.C / ((m + 499) // 500)


def b_of(schedule: StepSchedule, n: int) -> float:
    if schedule.kind == CONSTANT:
        return schedule.b_const
    n = int(n)
    if n % schedule.N != 0:
        return 0.0
    nlogn = n * math.log(n) if n > 1 else 0.0
    return schedule.C_prime / (1 + math.ceil(nlogn / 500))
