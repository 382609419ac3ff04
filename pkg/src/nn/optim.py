"""Adam による更新"""
from __future__ import annotations

from typing import Iterable, List, Sequence

import torch
from torch import Tensor

from src.errors import ShapeError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class AdamState:
    """
    torch.optim.Adam のラッパー

    ステップ数と一次・二次モーメントを保持する。学習率はステップごとに指定できる。
    """

    def __init__(self, params: Iterable[torch.nn.Parameter], lr: float = 1e-4):
        self.params: List[torch.nn.Parameter] = list(params)
        self.optimizer = torch.optim.Adam(
            self.params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS, foreach=False
        )

    @property
    def step_count(self) -> int:
        steps = [int(s["step"]) for s in self.optimizer.state.values() if "step" in s]
        return max(steps, default=0)

    def set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def step(self, lr: float) -> None:
        """各パラメータの .grad を使って1ステップ更新する"""
        self.set_lr(lr)
        self.optimizer.step()

    def state_dict(self) -> dict:
        return self.optimizer.state_dict()

    def load_state_dict(self, state: dict) -> None:
        self.optimizer.load_state_dict(state)


def adam_step(
    params: Sequence[torch.nn.Parameter], grads: Sequence[Tensor], state: AdamState, lr: float
) -> Sequence[torch.nn.Parameter]:
    """
    勾配を明示して Adam を1ステップ進める

    Raises:
        ShapeError: 勾配の形状がパラメータと一致しない
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if tuple(p.shape) != tuple(g.shape):
            raise ShapeError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
        p.grad = g.detach().to(dtype=p.dtype).clone()
    state.step(lr)
    return params
