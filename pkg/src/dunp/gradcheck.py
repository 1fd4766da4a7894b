"""Finite-difference verification of the backward pass.

``grad_check`` compares analytic gradients against central differences,
(f(x + h) - f(x - h)) / 2h, on a random sample of coordinates per
parameter.  Relative error per coordinate is
``|a - n| / max(|a|, |n|, 1.0)``; the 1.0 floor keeps finite-difference
noise around zero gradients from dominating.  Checks require float64
parameters; float32 rounding would swamp h = 1e-5.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, backward
from .errors import ConfigurationError


@dataclass
class ParamCheck:
    name: str
    n_coords: int
    max_rel_err: float


@dataclass
class GradCheckReport:
    tol: float
    entries: list = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def format(self) -> str:
        lines = [f"{e.name}: max rel err {e.max_rel_err:.3e} over {e.n_coords} coords"
                 for e in self.entries]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: max rel err {self.max_rel_err:.3e} "
                     f"(tol {self.tol:.1e}) -> {verdict}")
        return "\n".join(lines)


def grad_check(f, params, tol: float = 1e-4, h: float = 1e-5,
               samples_per_param: int = 10, rng=None) -> GradCheckReport:
    """Check d f() / d p for every named parameter.

    f is a zero-argument callable returning a scalar Tensor; it must be
    deterministic in the parameter values (fresh forward per call).
    params is an iterable of (name, Tensor) pairs.
    """
    params = list(params)
    for name, p in params:
        if p.data.dtype != np.float64:
            raise ConfigurationError(
                f"grad_check requires float64 parameters, {name} is {p.data.dtype}")
    rng = rng or np.random.default_rng(0)

    for _, p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params}

    report = GradCheckReport(tol=tol)
    for name, p in params:
        flat = p.data.reshape(-1)
        n = min(samples_per_param, flat.size)
        coords = rng.choice(flat.size, size=n, replace=False)
        worst = 0.0
        for c in coords:
            keep = flat[c]
            flat[c] = keep + h
            up = f().item()
            flat[c] = keep - h
            down = f().item()
            flat[c] = keep
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            worst = max(worst, rel)
        report.entries.append(ParamCheck(name=name, n_coords=n, max_rel_err=worst))
    return report
