"""Model parameters for u_t - Lap u = -u^-p."""

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Exponent p > 1 and spatial dimension n.

    The scaling exponent alpha = 2/(p+1) is always recomputed from p, never
    stored, so the two can not drift apart.
    """

    p: float
    n: int

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValidationError(f"p > 1 required, got p={self.p}")
        if self.n not in (1, 2, 3):
            raise ValidationError(f"spatial dimension must be 1, 2 or 3, got {self.n}")

    @property
    def alpha(self) -> float:
        return 2.0 / (self.p + 1.0)
