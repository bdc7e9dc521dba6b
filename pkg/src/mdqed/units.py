"""Physical constants used throughout the package.

Everything defaults to natural units (hbar = eps0 = mu0 = c = 1).  The
constants are carried symbolically through every formula so that a caller can
switch to SI or any other consistent system by passing a different
:class:`UnitsConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class UnitsConfig:
    hbar: float = 1.0
    eps0: float = 1.0
    mu0: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "eps0", "mu0", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


NATURAL = UnitsConfig()
