"""Entanglement dimensionality: Schmidt number and GME dimension.

The bipartite test looks for a trace-r support operator dominating the
state on one side; its optimal trace equals d times the singlet fraction,
which the primal Choi program cross-checks.  The multipartite test uses
one support operator per bipartition with the trace budget shared.  For
permutation-invariant states with a fixed occupation profile the variables
collapse per bipartition size and the big cone splits into occupation-type
sectors.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..linalg import ketbra, partial_trace
from ..sdp.program import ConicProgram, HermitianVariable
from ..sdp.solve import SolveReport, solve

MARGIN_TOL = 1e-7


def bipartitions(n: int) -> list[tuple]:
    """All bipartition representatives P with |P| <= n/2; for even splits
    the lexicographically smaller side is kept."""
    out = []
    for k in range(1, n // 2 + 1):
        for P in combinations(range(n), k):
            if 2 * k == n:
                comp = tuple(sorted(set(range(n)) - set(P)))
                if comp < P:
                    continue
            out.append(P)
    return out


# -- bipartite case ----------------------------------------------------------


def schmidt_support_trace(rho, dims, tolerances=None) -> SolveReport:
    """min tr(S) subject to S (x) 1 >= rho; equals d_A * singlet fraction."""
    da, db = dims
    rho = np.asarray(rho, dtype=complex)
    prog = ConicProgram()
    S = HermitianVariable(prog, "support", da)
    cone = prog.add_cone("dominates", da * db, "complex")
    for a in range(da):
        for b in range(a, da):
            terms = S.entry_terms(a, b)
            for k in range(db):
                for c, v in terms:
                    cone.add_term(a * db + k, b * db + k, c, v)
    for i in range(da * db):
        for j in range(i, da * db):
            if rho[i, j] != 0:
                cone.add_const(i, j, -rho[i, j])
    prog.set_objective(S.trace_terms(), sense="min")
    return solve(prog, tolerances=tolerances)


def singlet_fraction(rho, d=None, tolerances=None, cross_check=True):
    """Maximal overlap with the maximally entangled state over local
    channels: the Choi program max tr(rho eta), tr_B eta = 1/d, eta >= 0.

    With ``cross_check`` the dominating-support program is solved as well
    and the two values are required to agree within solver precision.
    """
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    if d is None:
        d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValueError("singlet fraction needs equal local dimensions")
    prog = ConicProgram()
    eta = HermitianVariable(prog, "eta", n)
    cone = prog.add_cone("eta-psd", n, "complex")
    eta.add_to_cone(cone)
    # tr_B eta = 1/d
    for a in range(d):
        for b in range(a, d):
            terms = []
            for k in range(d):
                terms.extend(eta.entry_terms(a * d + k, b * d + k))
            want = (1.0 / d) if a == b else 0.0
            re = [(c, np.real(v)) for c, v in terms]
            im = [(c, np.imag(v)) for c, v in terms]
            prog.add_eq(re, want, f"trB[{a}{b}]re")
            if a != b:
                prog.add_eq(im, 0.0, f"trB[{a}{b}]im")
    obj = {}
    for i in range(n):
        for j in range(n):
            if rho[j, i] == 0:
                continue
            for c, v in eta.entry_terms(i, j):
                val = np.real(rho[j, i] * v)
                obj[c] = obj.get(c, 0.0) + val
    prog.set_objective(list(obj.items()), sense="max")
    rep = solve(prog, tolerances=tolerances)
    if rep.status != "optimal":
        raise RuntimeError(f"singlet fraction solve failed: {rep.status}")
    sf = rep.primal_objective
    if cross_check:
        dual = schmidt_support_trace(rho, (d, d), tolerances)
        if dual.status != "optimal":
            raise RuntimeError("support-trace cross-check failed")
        if abs(dual.primal_objective / d - sf) > 5e-6:
            raise RuntimeError(
                f"singlet-fraction duality gap: {sf} vs "
                f"{dual.primal_objective / d}")
    return sf


def p3_bipartite_feasible(rho, d_a, d_b, r, tolerances=None):
    """Feasibility of a trace-r dominating support: Schmidt number witness.

    Returns (feasible, report); the report's optimal value is the minimal
    support trace, so the verdict is its comparison against r.
    """
    rep = schmidt_support_trace(rho, (d_a, d_b), tolerances)
    if rep.status != "optimal":
        return None, rep
    return bool(rep.primal_objective <= r + 1e-7), rep


# -- multipartite case -------------------------------------------------------


def _digits(idx, n, d):
    out = []
    for _ in range(n):
        out.append(idx % d)
        idx //= d
    return tuple(reversed(out))


def _type_of(digs, d):
    cnt = [0] * d
    for x in digs:
        cnt[x] += 1
    return tuple(cnt)


class _GmeProgram:
    """Shared assembly for the GME-dimension programs.

    Variables: one support operator per bipartition (or per size when
    ``collapse_sizes``), optionally restricted to occupation-type-diagonal
    sparsity; the dominating constraint is emitted either as one cone or
    per occupation sector when the data allow it.
    """

    def __init__(self, n, d, r, sectored=False, collapse_sizes=False):
        self.n, self.d, self.r = n, d, int(r)
        self.sectored = sectored
        self.collapse = collapse_sizes
        self.parts = bipartitions(n)
        self.prog = ConicProgram()
        self.vars = {}
        if collapse_sizes:
            sizes = sorted({len(P) for P in self.parts})
            for s in sizes:
                self.vars[s] = self._make_var(f"support{s}", s)
        else:
            for P in self.parts:
                self.vars[P] = self._make_var(f"support{P}", len(P))

    def _make_var(self, name, s):
        ds = self.d ** s
        mask = None
        if self.sectored:
            digs = [_digits(i, s, self.d) for i in range(ds)]
            types = [_type_of(g, self.d) for g in digs]
            mask = [[types[a] == types[b] for b in range(ds)]
                    for a in range(ds)]
        return HermitianVariable(self.prog, name, ds, mask=mask)

    def var_of(self, P):
        return self.vars[len(P) if self.collapse else P]

    def trace_budget(self):
        terms = []
        for P in self.parts:
            terms.extend(self.var_of(P).trace_terms())
        self.prog.add_ineq(terms, float(self.r), "trace budget")

    def support_box(self):
        """0 <= support <= (1/r) tr(support) per bipartition."""
        for key, var in self.vars.items():
            mult = 1
            lo = self.prog.add_cone(f"lo[{key}]", var.n, "complex")
            var.add_to_cone(lo)
            hi = self.prog.add_cone(f"hi[{key}]", var.n, "complex")
            var.add_to_cone(hi, coeff=-1.0)
            tt = var.trace_terms(1.0 / self.r)
            for a in range(var.n):
                for c, v in tt:
                    hi.add_term(a, a, c, v)
            del mult

    def dominate(self, const_matrix, extra_scalar=None):
        """sum_P support_P (x) 1 + const (+ scalar terms) >= 0 cone(s).

        ``const_matrix``: dict coord->matrix plus "const" for the constant
        part (all in the global d^n space).
        """
        n, d = self.n, self.d
        D = d ** n
        digs = [_digits(i, n, d) for i in range(D)]
        if self.sectored:
            types = {}
            for i, g in enumerate(digs):
                types.setdefault(_type_of(g, d), []).append(i)
            sectors = list(types.values())
        else:
            sectors = [list(range(D))]
        for si, idxs in enumerate(sectors):
            cone = self.prog.add_cone(f"dom{si}", len(idxs), "complex")
            pos = {g: k for k, g in enumerate(idxs)}
            for k1, I in enumerate(idxs):
                for k2 in range(k1, len(idxs)):
                    J = idxs[k2]
                    gi, gj = digs[I], digs[J]
                    for P in self.parts:
                        if any(gi[t] != gj[t] for t in range(n)
                               if t not in P):
                            continue
                        var = self.var_of(P)
                        ia = sum(gi[t] * d ** (len(P) - 1 - ti)
                                 for ti, t in enumerate(P))
                        ja = sum(gj[t] * d ** (len(P) - 1 - ti)
                                 for ti, t in enumerate(P))
                        for c, v in var.entry_terms(ia, ja):
                            cone.add_term(k1, k2, c, v)
                    cm = const_matrix.get("const")
                    if cm is not None and cm[I, J] != 0:
                        cone.add_const(k1, k2, cm[I, J])
                    for name, mat in const_matrix.items():
                        if name == "const":
                            continue
                        if mat[I, J] != 0:
                            cone.add_term(k1, k2, self.prog.scalar_index(name),
                                          mat[I, J])
            if extra_scalar is not None:
                name, coeff = extra_scalar
                for k1 in range(len(idxs)):
                    cone.add_term(k1, k1, self.prog.scalar_index(name), coeff)


def _is_type_diagonal(rho, n, d):
    D = d ** n
    digs = [_digits(i, n, d) for i in range(D)]
    types = [_type_of(g, d) for g in digs]
    for i in range(D):
        for j in range(D):
            if types[i] != types[j] and abs(rho[i, j]) > 1e-12:
                return False
    return True


def _is_perm_invariant(rho, n, d):
    D = d ** n
    rho = np.asarray(rho)
    for swap in [(0, t) for t in range(1, n)]:
        perm = np.arange(D)
        for i in range(D):
            g = list(_digits(i, n, d))
            g[swap[0]], g[swap[1]] = g[swap[1]], g[swap[0]]
            j = 0
            for x in g:
                j = j * d + x
            perm[i] = j
        if not np.allclose(rho, rho[np.ix_(perm, perm)], atol=1e-12):
            return False
    return True


def p3_gme_feasible(rho, n, d, r, tolerances=None, symmetrize="auto",
                    margin_tol=MARGIN_TOL):
    """Margin-form feasibility of GME dimension at most r.

    Returns (feasible, report); infeasible means the GME dimension
    exceeds r.
    """
    rho = np.asarray(rho, dtype=complex)
    sym = _choose_symmetry(rho, n, d, symmetrize)
    gp = _GmeProgram(n, d, r, sectored=sym["sectored"],
                     collapse_sizes=sym["collapse"])
    t = gp.prog.add_scalar("t")
    gp.trace_budget()
    gp.support_box()
    gp.dominate({"const": -rho}, extra_scalar=("t", -1.0))
    gp.prog.set_objective([(t, 1.0)], sense="max")
    rep = solve(gp.prog, tolerances=tolerances)
    if rep.status != "optimal":
        return None, rep
    return bool(rep.primal_objective >= -margin_tol), rep


def _choose_symmetry(rho, n, d, symmetrize):
    if symmetrize == "none" or symmetrize is False:
        return {"sectored": False, "collapse": False}
    if symmetrize == "full":
        return {"sectored": True, "collapse": True}
    D = d ** n
    heavy = D > 700
    if not heavy:
        return {"sectored": False, "collapse": False}
    sect = _is_type_diagonal(rho, n, d)
    coll = sect and _is_perm_invariant(rho, n, d)
    if not (sect and coll):
        raise RuntimeError(
            f"instance of dimension {D} needs type-diagonal permutation "
            "symmetry to be tractable")
    return {"sectored": True, "collapse": True}


def p3_critical_visibility(psi, n, d, r, tolerances=None, symmetrize="auto"):
    """Largest v with the isotropic mixture of psi still passing the
    GME-dimension-r relaxation (an upper bound on the critical
    visibility)."""
    psi = np.asarray(psi, dtype=complex).ravel()
    D = d ** n
    proj = ketbra(psi)
    sym = _choose_symmetry(proj, n, d, symmetrize)
    gp = _GmeProgram(n, d, r, sectored=sym["sectored"],
                     collapse_sizes=sym["collapse"])
    v = gp.prog.add_scalar("v")
    gp.prog.add_ineq([(v, 1.0)], 1.0, "v<=1")
    gp.prog.add_ineq([(v, -1.0)], 0.0, "v>=0")
    gp.trace_budget()
    gp.support_box()
    # sum support (x) 1 - v (proj - 1/D) - 1/D >= 0
    gp.dominate({"const": -np.eye(D) / D, "v": -(proj - np.eye(D) / D)})
    gp.prog.set_objective([(v, 1.0)], sense="max")
    rep = solve(gp.prog, tolerances=tolerances)
    if rep.status != "optimal":
        raise RuntimeError(f"visibility solve failed: {rep.status} "
                           f"({rep.note})")
    return rep.primal_objective


# -- fidelity criteria -------------------------------------------------------


def fidelity_criterion_bound(psi, n, d, r) -> float:
    """max over bipartitions of the top-r eigenvalue mass of the reduced
    target state."""
    psi = np.asarray(psi, dtype=complex).ravel()
    proj = ketbra(psi)
    dims = [d] * n
    best = 0.0
    for P in bipartitions(n):
        red = partial_trace(proj, dims, keep=list(P))
        w = np.sort(np.linalg.eigvalsh(red))[::-1]
        best = max(best, float(np.sum(w[:r])))
    return min(best, 1.0)


def fidelity_visibility(psi, n, d, r) -> float:
    """Visibility at which the isotropic mixture saturates the fidelity
    criterion (linear equation in v)."""
    bound = fidelity_criterion_bound(psi, n, d, r)
    dn = float(d) ** n
    v = (bound - 1.0 / dn) / (1.0 - 1.0 / dn)
    return float(min(max(v, 0.0), 1.0))
