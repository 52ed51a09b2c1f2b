"""Finite-difference validation of analytic gradients.

``finite_diff_check`` re-evaluates a forward closure under central
perturbations of each parameter entry and compares against the gradients
produced by ``backward()``. It is report-only: callers inspect
``GradCheckReport.passed``. The relative error per parameter tensor is

    max|analytic - fd|  /  max(max|analytic|, max|fd|, floor)

with a tiny floor so identically-zero gradients compare cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .tensor import Tensor


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    entries_checked: int
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def __str__(self) -> str:
        lines = [f"finite-diff check (h={self.step:g}, tol={self.tolerance:g})"]
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            lines.append(f"  {c.name:<28s} rel_err={c.max_rel_err:.3e} "
                         f"({c.entries_checked} entries) {status}")
        return "\n".join(lines)


def finite_diff_check(loss_fn, params, h: float = 1e-5, tol: float = 1e-4,
                      max_entries: int | None = None,
                      names=None) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn()`` against central FD.

    ``loss_fn`` must rebuild the forward graph from the current parameter
    data on every call and return a scalar Tensor. ``max_entries`` caps the
    perturbed entries per tensor (a deterministic subset is drawn when the
    tensor is larger).
    """
    params = list(params)
    if names is None:
        names = [f"param{i}{list(p.shape)}" for i, p in enumerate(params)]

    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward(params=params)
    analytic = [p.grad.copy() for p in params]

    report = GradCheckReport(tolerance=tol, step=h)
    for pi, (p, name) in enumerate(zip(params, names)):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            gen = rng.stream(0, "gradcheck-subset", pi)
            entries = np.sort(gen.choice(n, size=max_entries, replace=False))
        else:
            entries = np.arange(n)
        fd = np.zeros(len(entries), dtype=np.float64)
        for out_i, i in enumerate(entries):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn().item()
            flat[i] = orig - h
            f_minus = loss_fn().item()
            flat[i] = orig
            fd[out_i] = (f_plus - f_minus) / (2.0 * h)
        ana = analytic[pi].reshape(-1)[entries].astype(np.float64)
        scale = max(np.abs(ana).max(initial=0.0),
                    np.abs(fd).max(initial=0.0), 1e-12)
        rel = float(np.abs(ana - fd).max(initial=0.0) / scale)
        report.checks.append(
            ParamCheck(name=name, max_rel_err=rel,
                       entries_checked=len(entries), passed=rel < tol))
    return report
