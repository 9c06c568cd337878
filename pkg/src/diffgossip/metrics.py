"""Run-level measurements: message rates, collusion error, step scaling."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class RmsError(NamedTuple):
    value: float
    skipped: int  # (i, j) pairs left out because r[i, j] == 0


def average_rms_error(r, r_hat) -> RmsError:
    """Mean over rows i of sqrt(mean_j ((r_ij - r_hat_ij) / r_ij)^2).

    ``r`` holds estimates under collusion, ``r_hat`` the collusion-free ones.
    Pairs with r_ij == 0 have no relative error; they are dropped from the
    inner mean and counted in ``skipped``.  Rows with nothing left are
    dropped from the outer mean.
    """
    r = np.asarray(r, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    if r.shape != r_hat.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {r_hat.shape}")
    if r.ndim == 1:
        r, r_hat = r[None, :], r_hat[None, :]
    valid = r != 0
    if not valid.any():
        raise ValueError("every reference estimate is 0; relative error undefined")
    rel = np.divide(r - r_hat, r, out=np.zeros_like(r), where=valid)
    per_row_n = valid.sum(axis=1)
    rows = per_row_n > 0
    inner = (rel**2).sum(axis=1)[rows] / per_row_n[rows]
    return RmsError(float(np.sqrt(inner).mean()), int((~valid).sum()))


@dataclass(frozen=True)
class ScalingFit:
    c: float
    verdict: bool
    bound: tuple[float, ...]


def scaling_fit(ns: Sequence[int], steps: Sequence[float]) -> ScalingFit:
    """Fit steps = c * (log2 N)^2 at the smallest N; check the bound holds at the rest."""
    if len(ns) != len(steps):
        raise ValueError("ns and steps must have equal length")
    if len(ns) < 3:
        raise ValueError("scaling fit needs at least 3 measured sizes")
    order = np.argsort(ns)
    ns = np.asarray(ns, dtype=float)[order]
    steps = np.asarray(steps, dtype=float)[order]
    log_sq = np.log2(ns) ** 2
    c = steps[0] / log_sq[0]
    bound = c * log_sq
    # relative slack absorbs float noise in c * log_sq
    verdict = bool(np.all(steps[1:] <= bound[1:] * (1 + 1e-12)))
    return ScalingFit(float(c), verdict, tuple(float(b) for b in bound))


@dataclass
class MetricsReport:
    n: int
    steps_to_converge: int
    messages_total: int
    converged: bool = True
    avg_rms_error: float | None = None
    rms_skipped: int | None = None
    max_abs_error: float | None = None
    psi_trace: list[float] | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("n", "steps_to_converge", "messages_total"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def messages_per_node_per_step(self) -> float:
        if self.steps_to_converge == 0:
            return 0.0
        return self.messages_total / (self.n * self.steps_to_converge)

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("psi_trace")
        row["messages_per_node_per_step"] = self.messages_per_node_per_step
        return row
