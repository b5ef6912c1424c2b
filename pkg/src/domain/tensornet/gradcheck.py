"""Central finite-difference gradient oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ConfigError

Array = npt.NDArray[np.float64]
LossFn = Callable[[list[Array]], tuple[float, list[Array]]]

DENOMINATOR_FLOOR = 1e-8
# One-sided slopes further apart than this (relative) mark a kink inside [t-h, t+h].
KINK_TOLERANCE = 1e-2
KINK_FLOOR = 1e-2


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing analytic and numerical gradients."""

    passed: bool
    max_rel_error: float
    checked: int
    worst: Optional[tuple[int, int]] = None
    diagnostic: Optional[str] = None
    skipped: int = 0


def is_kink(forward_slope: float, backward_slope: float) -> bool:
    """True when the loss is not differentiable within one step of the point.

    A smooth loss has one-sided slopes that differ by about step * f''; a
    ReLU input within a step of zero makes them differ by the jump itself.
    """
    scale = max(abs(forward_slope), abs(backward_slope), KINK_FLOOR)
    return abs(forward_slope - backward_slope) > KINK_TOLERANCE * scale


def finite_diff_check(
    loss_fn: LossFn,
    params: Sequence[Array],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare `loss_fn`'s analytic gradients against (f(t+h) - f(t-h)) / 2h.

    `loss_fn` maps a parameter list to (loss, gradients in the same order).
    The relative error per coordinate is |a - b| / max(|a|, |b|, 1e-8).
    Coordinates whose one-sided slopes disagree sit on a kink (typically a
    ReLU input within `step` of zero); they are counted in `skipped` instead
    of being compared.
    """
    if step <= 0:
        raise ConfigError("finite-difference step must be positive")
    base = [np.array(param, dtype=np.float64, copy=True) for param in params]
    value, analytic = loss_fn(base)
    if not np.isfinite(value):
        return GradCheckReport(False, float("inf"), 0, diagnostic="loss is not finite at the base point")

    max_error = 0.0
    worst: Optional[tuple[int, int]] = None
    checked = 0
    skipped = 0
    for p_index, param in enumerate(base):
        flat = param.reshape(-1)
        expected = np.asarray(analytic[p_index]).reshape(-1)
        for coord in range(flat.size):
            original = flat[coord]
            flat[coord] = original + step
            plus, _ = loss_fn(base)
            flat[coord] = original - step
            minus, _ = loss_fn(base)
            flat[coord] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                return GradCheckReport(
                    False,
                    float("inf"),
                    checked,
                    worst=(p_index, coord),
                    diagnostic="loss is not finite at a perturbed point",
                    skipped=skipped,
                )
            if is_kink((plus - value) / step, (value - minus) / step):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * step)
            a = float(expected[coord])
            denom = max(abs(a), abs(numeric), DENOMINATOR_FLOOR)
            error = abs(a - numeric) / denom
            checked += 1
            if error > max_error:
                max_error, worst = error, (p_index, coord)
    if checked == 0 and skipped:
        return GradCheckReport(
            False, max_error, 0, diagnostic="every coordinate sits on a kink", skipped=skipped
        )
    return GradCheckReport(max_error < tol, max_error, checked, worst=worst, skipped=skipped)
