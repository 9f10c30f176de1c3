from __future__ import annotations

from typing import Dict, Iterable, Optional, Tuple

import torch
from torch import nn

from logger import GLOBAL_LOGGER as log
from exception.custom_exception import NumericalError
from model.models import OptimizerAlgorithm, OptimizerConfig


class AdamW(torch.optim.Optimizer):
    """
    Adam with decoupled weight decay.

    Args:
        params: iterable of parameters or parameter groups.
        lr: learning rate.
        betas: decay rates of the first and second moment averages.
        eps: added to the denominator.
        weight_decay: decoupled decay, applied as ``p *= 1 - lr * weight_decay``.
    """

    def __init__(self, params, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        if lr <= 0:
            raise ValueError(f"invalid learning rate {lr}")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ValueError(f"invalid betas {betas}")
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                state = self.state[p]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)

                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
                state["step"] += 1
                exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)

                if group["weight_decay"] != 0:
                    p.mul_(1 - group["lr"] * group["weight_decay"])

                bias_correction1 = 1 - beta1 ** state["step"]
                bias_correction2 = 1 - beta2 ** state["step"]
                denom = (exp_avg_sq.sqrt() / bias_correction2 ** 0.5).add_(group["eps"])
                p.addcdiv_(exp_avg, denom, value=-group["lr"] / bias_correction1)
        return loss


class OptimizerState:
    """
    Optimizer plus the bookkeeping around one update: finite-gradient check,
    global-norm clipping and the step counter.
    """

    def __init__(self, named_params: Iterable[Tuple[str, nn.Parameter]], cfg: OptimizerConfig):
        self.cfg = cfg
        self.named_params = [(n, p) for n, p in named_params if p.requires_grad]
        params = [p for _, p in self.named_params]
        if cfg.algorithm == OptimizerAlgorithm.SGD:
            self.optimizer: torch.optim.Optimizer = torch.optim.SGD(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
        else:
            self.optimizer = AdamW(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
        self.step_count = 0

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=True)

    def moments(self) -> Dict[str, Tuple[torch.Tensor, torch.Tensor]]:
        """First and second moment estimates by parameter name (AdamW only)."""
        out = {}
        for name, p in self.named_params:
            state = self.optimizer.state.get(p, {})
            if "exp_avg" in state:
                out[name] = (state["exp_avg"], state["exp_avg_sq"])
        return out

    def step(self) -> Optional[float]:
        """Apply one update from the gradients currently stored on the parameters."""
        for name, p in self.named_params:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NumericalError(f"non-finite gradient in parameter {name}")
        grad_norm = None
        if self.cfg.clip_norm is not None:
            grad_norm = float(torch.nn.utils.clip_grad_norm_([p for _, p in self.named_params], self.cfg.clip_norm))
        self.optimizer.step()
        self.step_count += 1
        return grad_norm


def build_optimizer(model: nn.Module, cfg: OptimizerConfig) -> OptimizerState:
    state = OptimizerState(model.named_parameters(), cfg)
    log.info("Optimizer ready", algorithm=cfg.algorithm.value, lr=cfg.lr, weight_decay=cfg.weight_decay,
             clip_norm=cfg.clip_norm)
    return state
