"""Thin wrapper around scipy's L-BFGS-B that records the accepted-step trace."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


class NonFiniteObjective(Exception):
    def __init__(self, x_best, f_best):
        super().__init__("objective became non-finite")
        self.x_best = x_best
        self.f_best = f_best


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    trace: list
    iterations: int
    converged: bool
    message: str


def minimize_lbfgs(fun_and_grad, x0, bounds=None, ftol=1e-9, maxiter=2000, gtol=1e-10):
    """Minimize ``fun_and_grad(x) -> (f, g)`` with L-BFGS-B.

    ``trace`` holds the objective at the start point and at every accepted
    iterate. L-BFGS-B only accepts steps satisfying a sufficient-decrease
    condition, so the trace is non-increasing.

    Raises :class:`NonFiniteObjective` (carrying the best point seen) as soon
    as the objective or its gradient is not finite.
    """
    x0 = np.asarray(x0, dtype=float)
    best = {"x": x0.copy(), "f": np.inf}

    def wrapped(x):
        f, g = fun_and_grad(x)
        f = float(f)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise NonFiniteObjective(best["x"].copy(), best["f"])
        if f < best["f"]:
            best["x"] = x.copy()
            best["f"] = f
        return f, np.asarray(g, dtype=float)

    f0, _ = wrapped(x0)
    trace = [f0]

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))

    res = minimize(wrapped, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   callback=callback,
                   options={"maxiter": maxiter, "ftol": ftol, "gtol": gtol, "maxcor": 20})
    x, f = res.x, float(res.fun)
    if best["f"] < f:
        x, f = best["x"], best["f"]
    return MinimizeResult(x=np.asarray(x), fun=f, trace=trace, iterations=int(res.nit),
                          converged=bool(res.success), message=str(res.message))
