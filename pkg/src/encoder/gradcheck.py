"""
Finite-difference verification of autograd gradients.

The analytic gradient of a scalar loss closure is compared to central
differences on a seeded sample of parameter coordinates.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Mapping, Tuple, Union

import numpy as np
import torch
from torch import nn

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import NumericalError
from model.models import GradcheckReport
from utils.seeding import derive_rng

MIN_COORDINATES = 200
# denominator floors: a fraction of the largest sampled gradient, and an absolute one
SCALE_FLOOR = 1e-3
ABSOLUTE_FLOOR = 1e-5


def _named(params: Union[nn.Module, Mapping[str, torch.Tensor]]) -> List[Tuple[str, torch.Tensor]]:
    items = params.named_parameters() if isinstance(params, nn.Module) else params.items()
    return [(name, p) for name, p in items if p.requires_grad]


def _evaluate(loss_fn: Callable[[], torch.Tensor]) -> float:
    with torch.no_grad():
        value = float(loss_fn())
    if not np.isfinite(value):
        raise NumericalError(f"loss is not finite ({value})")
    return value


def gradcheck(
    params: Union[nn.Module, Mapping[str, torch.Tensor]],
    loss_fn: Callable[[], torch.Tensor],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    coordinates: int = MIN_COORDINATES,
    seed: int = 0,
) -> GradcheckReport:
    """
    Relative error ``|a - n| / max(|a|, |n|, 1e-3 * g_max, 1e-5)`` per sampled
    coordinate, where ``g_max`` is the largest analytic or numeric magnitude over
    the sample. The floors keep central-difference roundoff on near-zero
    gradients from counting as a relative error.

    Samples ``coordinates`` positions uniformly without replacement over all
    trainable parameters (every position when there are fewer). Parameters are
    restored exactly after each perturbation.
    """
    named = _named(params)
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NumericalError(f"loss is not finite ({loss.item()})")
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    analytic: Dict[str, torch.Tensor] = {
        name: (torch.zeros_like(p) if g is None else g.detach()) for (name, p), g in zip(named, grads)
    }

    sizes = np.array([p.numel() for _, p in named])
    total = int(sizes.sum())
    rng = derive_rng(seed, "gradcheck")
    picks = np.sort(rng.choice(total, size=min(coordinates, total), replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    checked: List[Tuple[str, float, float]] = []
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, p = named[k]
        i = int(flat - offsets[k])
        view = p.data.view(-1)
        original = view[i].item()
        view[i] = original + epsilon
        f_plus = _evaluate(loss_fn)
        view[i] = original - epsilon
        f_minus = _evaluate(loss_fn)
        view[i] = original

        numeric = (f_plus - f_minus) / (2 * epsilon)
        checked.append((name, float(analytic[name].view(-1)[i]), numeric))

    scale = max((max(abs(a), abs(n)) for _, a, n in checked), default=0.0)
    floor = max(SCALE_FLOOR * scale, ABSOLUTE_FLOOR)
    worst, worst_name = 0.0, None
    for name, a, numeric in checked:
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err > worst:
            worst, worst_name = err, name

    report = GradcheckReport(
        max_relative_error=worst,
        offending_parameter=worst_name if worst > tolerance else None,
        coordinates_checked=len(picks),
        tolerance=tolerance,
        passed=worst <= tolerance,
    )
    log.info("Gradient check", **report.model_dump())
    return report
