"""Central finite-difference verification of the reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import nll_loss
from .model import Model


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    tolerance: float
    n_checked: int
    passed: bool

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"grad check {verdict}: max rel err {self.max_rel_err:.3e} "
                f"at {self.worst_param} (tol {self.tolerance:.1e}, "
                f"{self.n_checked} elements)")


def grad_check(model: Model, x: np.ndarray, labels: np.ndarray,
               h: float = 1e-5, tolerance: float | None = None,
               floor: float = 1e-10) -> GradCheckReport:
    """Compare model.backward against central differences of the loss.

    The difference quotient is evaluated on a float64 twin of the model so
    the oracle is accurate regardless of the model's working precision.
    Elements where both sides sit below `floor` count as agreeing (a path
    that never reaches the output has a legitimately zero gradient).
    """
    if tolerance is None:
        tolerance = 1e-6 if model.dtype == np.float64 else 1e-3
    x = np.asarray(x)
    labels = np.asarray(labels)

    probs = model.forward(x, train=True)
    model.backward(labels)
    analytic = {k: v.astype(np.float64) for k, v in model.grads().items()}

    twin = Model(model.L, model.M, model.architecture, seed=model.seed,
                 dtype=np.float64)
    twin.set_params({k: v.astype(np.float64) for k, v in model.params().items()})
    tparams = twin.params()

    def loss_at() -> float:
        return nll_loss(twin.forward(x), labels)

    max_err, worst, n = 0.0, "", 0
    for name, arr in tparams.items():
        ga = analytic[name]
        flat = arr.reshape(-1)
        gflat = ga.reshape(-1)
        for idx in range(flat.size):
            n += 1
            keep = flat[idx]
            step = h * max(1.0, abs(keep))
            flat[idx] = keep + step
            lp = loss_at()
            flat[idx] = keep - step
            lm = loss_at()
            flat[idx] = keep
            fd = (lp - lm) / (2.0 * step)
            bw = gflat[idx]
            denom = max(abs(fd), abs(bw))
            if denom <= floor:
                continue
            err = abs(fd - bw) / denom
            if err > max_err:
                max_err, worst = err, f"{name}[{idx}]"
    return GradCheckReport(max_rel_err=max_err, worst_param=worst,
                           tolerance=tolerance, n_checked=n,
                           passed=max_err < tolerance)
