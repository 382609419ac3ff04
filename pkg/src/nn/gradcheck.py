"""
勾配チェック

解析的勾配と中心差分（h=1e-5、倍精度）を比較し、結果をレポートとして返す。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import torch
from torch import Tensor

from src.config.settings import GRAD_CHECK_TOL

FD_STEP = 1e-5
# 相対誤差の分母の下限
REL_DENOM_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    n_checked: int
    worst: Optional[Tuple[int, int]] = None  # (入力番号, 要素番号)
    analytic: List[Tensor] = field(default_factory=list)
    numeric: List[Tensor] = field(default_factory=list)


def _scalarize(out, weights: List[Tensor]) -> Tensor:
    outs = out if isinstance(out, (tuple, list)) else (out,)
    total = torch.zeros((), dtype=torch.float64)
    for o, w in zip(outs, weights):
        total = total + (o * w).sum()
    return total


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tol: float = GRAD_CHECK_TOL,
    h: float = FD_STEP,
    seed: int = 0,
) -> GradCheckReport:
    """
    op(*inputs) の勾配を有限差分で検証する

    出力は固定シードの乱数重みとの内積でスカラー化する。requires_grad が
    立っている入力だけを検査する。

    Args:
        op: テンソルまたはテンソルのタプルを返す関数
        inputs: 倍精度テンソル
        tol: 最大相対誤差の許容値
    """
    inputs = [
        t.detach().to(torch.float64).contiguous().requires_grad_(t.requires_grad) for t in inputs
    ]
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        outputs = op(*inputs)
    outputs = outputs if isinstance(outputs, (tuple, list)) else (outputs,)
    weights = [torch.randn(o.shape, generator=gen, dtype=torch.float64) for o in outputs]

    checked = [i for i, t in enumerate(inputs) if t.requires_grad]
    loss = _scalarize(op(*inputs), weights)
    grads = torch.autograd.grad(loss, [inputs[i] for i in checked], allow_unused=True)

    max_err = 0.0
    worst = None
    n_checked = 0
    analytic_all, numeric_all = [], []
    for i, g in zip(checked, grads):
        x = inputs[i]
        analytic = torch.zeros_like(x) if g is None else g.detach()
        numeric = torch.zeros_like(x)
        flat = x.data.view(-1)
        for j in range(flat.numel()):
            orig = flat[j].item()
            with torch.no_grad():
                flat[j] = orig + h
                f_plus = _scalarize(op(*inputs), weights).item()
                flat[j] = orig - h
                f_minus = _scalarize(op(*inputs), weights).item()
                flat[j] = orig
            numeric.view(-1)[j] = (f_plus - f_minus) / (2 * h)
        a, n = analytic.view(-1), numeric.view(-1)
        rel = (a - n).abs() / torch.clamp(torch.maximum(a.abs(), n.abs()), min=REL_DENOM_FLOOR)
        n_checked += rel.numel()
        if rel.numel():
            j = int(torch.argmax(rel))
            if rel[j].item() > max_err:
                max_err = rel[j].item()
                worst = (i, j)
        analytic_all.append(analytic)
        numeric_all.append(numeric)
    return GradCheckReport(
        passed=max_err < tol,
        max_rel_error=max_err,
        n_checked=n_checked,
        worst=worst,
        analytic=analytic_all,
        numeric=numeric_all,
    )
