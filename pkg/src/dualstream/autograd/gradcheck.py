"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_input: list[float] = field(default_factory=list)
    checked: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "per_input": self.per_input,
            "checked": self.checked,
            "passed": self.passed,
        }


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    # floor keeps vanishing gradients from turning round-off into large ratios
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray | Tensor],
    wrt: Optional[Sequence[Tensor]] = None,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    seed: int = 0,
    max_coords: Optional[int] = None,
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` with central differences.

    ``fn(*inputs)`` may return any shape; it is reduced to a scalar by a
    fixed random projection.  Arrays in ``inputs`` become float64 tensors
    requiring grad.  ``wrt`` adds tensors (e.g. model parameters, already
    float64) that ``fn`` closes over.  ``max_coords`` samples at most that
    many coordinates per checked tensor.
    """
    rng = np.random.default_rng(seed)
    tensors = [
        x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
        for x in inputs
    ]
    targets = [t for t in tensors if t.requires_grad] + list(wrt or [])
    for t in targets:
        if t.data.dtype != np.float64:
            raise TypeError("gradient checks need float64 tensors")
        t.requires_grad = True
        t.grad = None

    out = fn(*tensors)
    proj = rng.standard_normal(out.shape)

    def scalar() -> float:
        return float((fn(*tensors).data * proj).sum())

    out.backward(proj.astype(out.dtype))
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in targets]

    per_input, checked = [], 0
    for t, grad in zip(targets, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar()
            flat[i] = orig - h
            fm = scalar()
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            worst = max(worst, relative_error(float(grad.reshape(-1)[i]), numeric))
            checked += 1
        per_input.append(worst)
    return GradCheckReport(max(per_input, default=0.0), tolerance, per_input, checked)
