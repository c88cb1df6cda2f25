"""Feasibility bisection for parameters entering a program nonlinearly."""

from __future__ import annotations

from dataclasses import dataclass, field

from .solve import SolveReport, solve


class BisectionError(RuntimeError):
    pass


@dataclass
class BisectionResult:
    threshold: float
    lo: float
    hi: float
    evaluations: list = field(default_factory=list)  # (param, feasible, report)

    @property
    def bracket(self):
        return (self.lo, self.hi)


def margin_feasible(report: SolveReport, margin_tol=1e-7) -> bool:
    """Classify a margin-form solve: the program maximises the smallest
    eigenvalue slack t, so feasibility of the underlying problem is t* >= 0
    up to tolerance."""
    if report.status != "optimal":
        raise BisectionError(f"margin solve not optimal: {report.status} "
                             f"({report.note})")
    return report.primal_objective >= -margin_tol


def feasibility_bisection(builder, lo, hi, direction="feasible-above",
                          tol=1e-4, classify=None, tolerances=None,
                          jitter=1e-9, max_retries=3) -> BisectionResult:
    """Locate the feasibility transition of ``builder(param)`` in [lo, hi].

    ``direction`` states which side of the transition is feasible (the
    caller asserts monotonicity).  Points where the solver fails are
    re-solved at slightly perturbed parameters and excluded from the
    bracket if they keep failing.  The returned threshold is the boundary
    of the infeasible side, conservative for the reported bound.
    """
    if direction not in ("feasible-above", "feasible-below"):
        raise ValueError(f"bad direction {direction!r}")
    classify = classify or margin_feasible
    evaluations = []

    def check(param):
        p = param
        for k in range(max_retries + 1):
            report = solve(builder(p), tolerances=tolerances)
            try:
                verdict = classify(report)
            except BisectionError:
                verdict = None
            evaluations.append((p, verdict, report))
            if verdict is not None:
                return verdict
            width = max(abs(hi - lo), 1.0)
            p = param + (k + 1) * jitter * width
        raise BisectionError(f"persistent numerical failure near {param}")

    if hi < lo:
        raise BisectionError(f"empty range [{lo}, {hi}]")
    flo = check(lo)
    if hi == lo:
        return BisectionResult(lo, lo, hi, evaluations)
    fhi = check(hi)
    want_above = direction == "feasible-above"
    if flo == fhi:
        raise BisectionError(
            f"no feasibility transition bracketed in [{lo}, {hi}] "
            f"(both {'feasible' if flo else 'infeasible'})")
    if want_above and (flo or not fhi):
        raise BisectionError("range endpoints contradict direction")
    if not want_above and (fhi or not flo):
        raise BisectionError("range endpoints contradict direction")
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = check(mid)
        if fm == (True if want_above else False):
            b = mid
        else:
            a = mid
    # a is the last point on the lo-side of the transition
    threshold = a if want_above else b
    return BisectionResult(threshold, a, b, evaluations)
