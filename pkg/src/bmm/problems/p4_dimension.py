"""Operational dimension of state-preparation devices.

An ensemble of d-dimensional states is r-simulable when classical mixing
of states supported on rank-r subspaces reproduces it.  The relaxation
fixes the ensemble states as blocks of the moment matrix, keeps the mixed
support projector as a trace-r variable, and either maximises the
visibility (linear families) or brackets the threshold of a nonlinear
noise parameter by feasibility bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..algebra import RewriteRuleSet, SymbolTable, Word
from ..linalg import fourier_basis, ketbra, phase_damping_apply
from ..moment import (MomentRelaxation, SymmetryElement, ThetaMap,
                      model_consistency_check)
from ..sdp.bisect import feasibility_bisection, margin_feasible
from ..sdp.solve import solve


@dataclass
class OperationalDimSpec:
    states: list                 # ensemble density matrices (d x d)
    r: int
    level: int = 1

    @property
    def d(self) -> int:
        return int(np.asarray(self.states[0]).shape[0])

    def __post_init__(self):
        d = self.d
        for s in self.states:
            s = np.asarray(s)
            if s.shape != (d, d):
                raise ValueError("ensemble states must share one dimension")
        if not 1 <= self.r <= d:
            raise ValueError(f"rank {self.r} outside 1..{d}")


def _base(spec_m, d, level):
    """Symbols and monomials for m preparations in dimension d."""
    tab = SymbolTable()
    tab.declare("P", kind="projector", idempotent=True,
                absorbs=frozenset(f"s{x}" for x in range(spec_m)))
    for x in range(spec_m):
        tab.declare(f"s{x}", kind="state", idempotent=True)
    rules = RewriteRuleSet(tab)
    from ..algebra import generate_monomials
    words = generate_monomials(["P"] + [f"s{x}" for x in range(spec_m)],
                               level, rules)
    return tab, rules, words


def _perm_unitary(d, perm):
    u = np.zeros((d, d))
    for i, j in enumerate(perm):
        u[j, i] = 1.0
    return u


def isotropic_symmetry(d):
    """Permutations of the d-1 computational labels fix the uniform state."""
    elems = []
    perms = [list(range(d)), list(range(d))]
    if d >= 3:
        perms[0][0], perms[0][1] = 1, 0                  # transposition
        cyc = list(range(1, d - 1)) + [0] + [d - 1]
        perms[1] = cyc                                    # (d-1)-cycle
    for perm in perms:
        smap = {f"s{x}": f"s{perm[x]}" for x in range(d - 1)}
        smap[f"s{d-1}"] = f"s{d-1}"
        smap["P"] = "P"
        elems.append(SymmetryElement(smap, _perm_unitary(d, perm)))
    return elems


def damping_symmetry(d):
    """The clock unitary shifts Fourier labels cyclically and commutes with
    phase damping."""
    w = np.exp(2j * np.pi / d)
    u = np.diag([w ** j for j in range(d)])
    smap = {f"s{x}": f"s{(x + 1) % d}" for x in range(d)}
    smap["P"] = "P"
    return [SymmetryElement(smap, u)]


def build_relaxation(states, r, level=1, fixed_affine=None, margin=False,
                     name="opdim", symmetry=None):
    """Moment relaxation with ensemble blocks fixed (optionally affine in a
    named scalar) and tr(support) = r.

    With ``margin`` the objective is the smallest eigenvalue slack of the
    full matrix, so feasibility is the sign of the optimum.
    """
    states = [np.asarray(s, dtype=complex) for s in states]
    m = len(states)
    d = states[0].shape[0]
    tab, rules, words = _base(m, d, level)
    relax = MomentRelaxation(words, rules, ThetaMap.identity(d), name=name)
    for x, rho in enumerate(states):
        aff = None
        if fixed_affine is not None and fixed_affine[x]:
            aff = fixed_affine[x]
        relax.fix_class(Word((f"s{x}",)), rho, mat_affine=aff)
    if symmetry:
        relax.symmetrize(symmetry)
    relax.add_trace_eq(Word(("P",)), float(r), "support trace")
    if margin:
        t = relax.free_scalar("t")
        relax.set_objective([("scalar", "t", 1.0)], sense="max")
        return relax, t
    return relax


def _attach_margin(low, tname="t"):
    """Subtract t * identity from the main cone so that the objective max t
    is the smallest eigenvalue of the moment matrix."""
    idx = low.scalar(tname)
    cone = low.cone_mat
    for p in range(cone.size):
        cone.add_term(p, p, idx, -1.0)


def p4_feasible(spec: OperationalDimSpec, tolerances=None, margin_tol=1e-7,
                symmetry=None):
    """Margin-form feasibility of r-dimensional simulation of the ensemble."""
    relax, _ = build_relaxation(spec.states, spec.r, spec.level, margin=True,
                                symmetry=symmetry)
    low = relax.lower()
    _attach_margin(low)
    report = low.solve(tolerances=tolerances)
    if report.status != "optimal":
        return report, None
    return report, bool(report.primal_objective >= -margin_tol)


def isotropic_ensemble(d):
    """First d-1 computational states plus the uniform superposition."""
    states = [ketbra(np.eye(d)[:, x]) for x in range(d - 1)]
    phi = np.ones(d) / np.sqrt(d)
    states.append(ketbra(phi))
    return states


def p4_visibility_bound(d, r, level=1, tolerances=None, return_report=False,
                        symmetrize=True):
    """Largest visibility v such that the isotropic-noise ensemble stays
    r-simulable; v enters the fixed blocks linearly and is the objective."""
    states = isotropic_ensemble(d)
    m = len(states)
    eye = np.eye(d, dtype=complex) / d
    tab, rules, words = _base(m, d, level)
    relax = MomentRelaxation(words, rules, ThetaMap.identity(d),
                             name="opdim-vis")
    relax.free_scalar("v", lo=0.0, hi=1.0)
    for x, rho in enumerate(states):
        relax.fix_class(Word((f"s{x}",)), eye,
                        mat_affine={"v": rho - eye})
    if symmetrize:
        relax.symmetrize(isotropic_symmetry(d))
    relax.add_trace_eq(Word(("P",)), float(r), "support trace")
    relax.set_objective([("scalar", "v", 1.0)], sense="max")
    report = relax.lower().solve(tolerances=tolerances)
    if return_report:
        return report
    if report.status != "optimal":
        raise RuntimeError(f"visibility solve failed: {report.status} "
                           f"({report.note})")
    return report.primal_objective


def damping_ensemble(d, gamma):
    """Fourier basis of dimension d through the phase-damping channel."""
    return [phase_damping_apply(f, gamma) for f in fourier_basis(d)]


def p4_damping_threshold(d, r, level=1, tol=1e-4, tolerances=None,
                         return_result=False, symmetrize=True):
    """Lower bound on the critical damping: the largest gamma for which
    r-simulation of the damped Fourier ensemble is infeasible."""
    if not 1 <= r < d:
        raise ValueError("rank must satisfy 1 <= r < d")

    def builder(gamma):
        relax, _ = build_relaxation(
            damping_ensemble(d, gamma), r, level, margin=True,
            name="opdim-damp",
            symmetry=damping_symmetry(d) if symmetrize else None)
        low = relax.lower()
        _attach_margin(low)
        return low.prog

    result = feasibility_bisection(builder, 0.0, 1.0,
                                   direction="feasible-above", tol=tol,
                                   tolerances=tolerances)
    return result if return_result else result.threshold


def simulation_model_check(states, r, assignment_support, assignment_states,
                           level=1):
    """Verify an explicit (projector, states) model against the relaxation."""
    relax = build_relaxation(states, r, level)
    assignment = {"P": assignment_support}
    for x, s in enumerate(assignment_states):
        assignment[f"s{x}"] = s
    return model_consistency_check(relax, assignment)
