"""Uncertainty relations for almost-anticommuting binary observables.

Bounds beta = sup_rho sum_i <O_i>^2 over +-1-valued qubit observables whose
anticommutators are norm-bounded on the edges of a graph.  Squared
expectations enter linearly through a scalar extension: each observable
gets a partner symbol T_i standing for <O_i> O_i.

The default "moment" level uses state-prefixed words {1, rho, rho O_i,
rho T_i}.  Because the partner contractions T_i T_i = <T_i> 1 and
T_i O_i = O_i T_i = <O_i> 1 are operator identities, the corresponding
state moments tie linearly to the extension scalars, which is what makes
the squared-expectation structure visible to the relaxation.  The
"extended" level adds the bare operators and the partner products
T_j O_j O_i along edges; it reproduces the same bounds at a higher cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..algebra import RewriteRuleSet, SymbolTable, Word, _class_closure, \
    word_sort_key
from ..moment import MomentRelaxation, ThetaMap, model_consistency_check


@dataclass
class UncertaintySpec:
    n: int
    eta: float | dict = 0.0
    edges: list | None = None      # default: the n-cycle
    dim: int = 2
    level: str = "moment"          # "moment" | "extended"

    def edge_list(self):
        if self.edges is not None:
            return [tuple(e) for e in self.edges]
        n = self.n
        return [(i, (i + 1) % n) for i in range(n)]

    def eta_of(self, i, j) -> float:
        if isinstance(self.eta, dict):
            return float(self.eta.get((i, j), self.eta.get((j, i), 0.0)))
        return float(self.eta)


def _symbols(spec: UncertaintySpec):
    tab = SymbolTable()
    tab.declare("rho", kind="state", idempotent=True)
    for i in range(spec.n):
        tab.declare(f"O{i}", kind="involutive-observable", involutive=True)
    for i in range(spec.n):
        tab.declare(f"T{i}", kind="generic-hermitian")
    return tab


def build_relaxation(spec: UncertaintySpec) -> MomentRelaxation:
    tab = _symbols(spec)
    rules = RewriteRuleSet(tab)
    n, d = spec.n, spec.dim
    words = [Word(), Word(("rho",))]
    for i in range(n):
        words.append(Word(("rho", f"O{i}")))
    for i in range(n):
        words.append(Word(("rho", f"T{i}")))
    if spec.level == "extended":
        for i in range(n):
            words.append(Word((f"O{i}",)))
        for i in range(n):
            words.append(Word((f"T{i}",)))
        seen = set(words)
        for i, j in spec.edge_list():
            for a, b in ((i, j), (j, i)):
                w = Word((f"T{b}", f"O{b}", f"O{a}"))
                if w not in seen:
                    words.append(w)
                    seen.add(w)
    elif spec.level != "moment":
        raise ValueError(f"unknown level {spec.level!r}")
    relax = MomentRelaxation(words, rules,
                             ThetaMap.identity(d, real_field=True),
                             name="uncertainty")
    relax.add_trace_eq(Word(("rho",)), 1.0, "unit trace")

    # cyclic-canonical lookup for words present only up to trace rotation
    cycmap = {}
    for w in relax.classes:
        seen, _ = _class_closure(w, rules, "trace")
        if seen is None:
            continue
        cyc = min(seen, key=lambda x: word_sort_key(x, tab))
        cycmap.setdefault(cyc, w)

    def present(word):
        seen, _ = _class_closure(word, rules, "trace")
        if seen is None:
            return None
        cyc = min(seen, key=lambda x: word_sort_key(x, tab))
        return cycmap.get(cyc)

    def tie_trace(word, target_terms, label):
        wa = present(word)
        if wa is None:
            return False
        terms = relax.trace_terms(wa) + \
            [(w, a, b, -c) for (w, a, b, c) in target_terms]
        relax.add_linear(terms, 0.0, "eq", label)
        return True

    for i in range(n):
        s_terms = relax.trace_terms(Word(("rho", f"T{i}")))
        t_terms = relax.trace_terms(Word(("rho", f"O{i}")))
        # operator identities T_i T_i = <T_i> 1, T_i O_i = O_i T_i = <O_i> 1
        # contract inside state moments
        tie_trace(Word(("rho", f"T{i}", f"T{i}")), s_terms, f"contract TT{i}")
        tie_trace(Word(("rho", f"T{i}", f"O{i}")), t_terms, f"contract TO{i}")
        tie_trace(Word(("rho", f"O{i}", f"T{i}")), t_terms, f"contract OT{i}")
        # |<O_i>| <= 1 bounds the partner scalar
        relax.add_linear(s_terms, 1.0, "le", f"extnorm T{i}")
        if spec.level == "extended":
            w_ot = Word((f"O{i}", f"T{i}"))
            w_tt = Word((f"T{i}", f"T{i}"))
            for a in range(d):
                for b in range(d):
                    terms = [(w_ot, a, b, 1.0)]
                    if a == b:
                        terms += [(w, p, q, -c) for (w, p, q, c) in t_terms]
                    relax.add_linear(terms, 0.0, "eq", f"sx O{i}[{a}{b}]")
            for a in range(d):
                for b in range(a, d):
                    terms = [(w_tt, a, b, 1.0)]
                    if a == b:
                        terms += [(w, p, q, -c) for (w, p, q, c) in s_terms]
                    relax.add_linear(terms, 0.0, "eq", f"sx T{i}[{a}{b}]")

    ident = Word()
    for i, j in spec.edge_list():
        eta = spec.eta_of(i, j)
        s_i = relax.trace_terms(Word(("rho", f"T{i}")))
        s_j = relax.trace_terms(Word(("rho", f"T{j}")))
        # state moments of the bounded anticommutators; the partner versions
        # scale with |t| <= 1 and |t_i t_j| <= (s_i + s_j)/2
        for wa, wb, svs, const in [
            (Word(("rho", f"O{i}", f"O{j}")), Word(("rho", f"O{j}", f"O{i}")),
             [], eta),
            (Word(("rho", f"O{i}", f"T{j}")), Word(("rho", f"T{j}", f"O{i}")),
             [s_j], 0.5 * eta),
            (Word(("rho", f"O{j}", f"T{i}")), Word(("rho", f"T{i}", f"O{j}")),
             [s_i], 0.5 * eta),
            (Word(("rho", f"T{i}", f"T{j}")), Word(("rho", f"T{j}", f"T{i}")),
             [s_i, s_j], 0.0),
        ]:
            ca, cb = present(wa), present(wb)
            if ca is None or cb is None:
                continue
            for sgn in (1.0, -1.0):
                terms = [(w, a, b, sgn * c) for (w, a, b, c) in
                         relax.trace_terms(ca) + relax.trace_terms(cb)]
                for sv in svs:
                    terms += [(w, a, b, -0.5 * eta * c)
                              for (w, a, b, c) in sv]
                relax.add_linear(terms, const, "le", f"ac[{i}{j}]")
        if spec.level == "extended":
            wij = Word((f"O{i}", f"O{j}"))
            wji = Word((f"O{j}", f"O{i}"))
            relax.add_localising(f"anticomm+[{i}{j}]",
                                 [(eta, ident), (-1.0, wij), (-1.0, wji)],
                                 monomials=[ident])
            relax.add_localising(f"anticomm-[{i}{j}]",
                                 [(eta, ident), (1.0, wij), (1.0, wji)],
                                 monomials=[ident])
    relax.add_cyclic_trace_ties()
    obj = []
    for i in range(n):
        obj += relax.trace_terms(Word(("rho", f"T{i}")))
    relax.set_objective(obj, sense="max")
    return relax


def p5_beta(spec: UncertaintySpec, tolerances=None, return_report=False):
    """Upper bound on beta_n(eta)."""
    relax = build_relaxation(spec)
    report = relax.lower().solve(tolerances=tolerances)
    if return_report:
        return report
    if report.status != "optimal":
        raise RuntimeError(f"uncertainty solve failed: {report.status} "
                           f"({report.note})")
    return report.primal_objective


def p5_entanglement_witness_bound(spec_a: UncertaintySpec,
                                  spec_b: UncertaintySpec,
                                  tolerances=None) -> float:
    """Separable bound sqrt(beta_A beta_B) for sum_i <A_i x B_i>."""
    ba = p5_beta(spec_a, tolerances)
    bb = p5_beta(spec_b, tolerances)
    return float(np.sqrt(ba * bb))


# -- explicit models and lower bounds ---------------------------------------

_PAULI = (np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
          np.array([[0.0, -1.0j], [1.0j, 0.0]]),
          np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex))


def bloch_model(axes, bloch):
    """Qubit observables n_i . sigma and the state (1 + b . sigma) / 2."""
    axes = np.asarray(axes, dtype=float)
    bloch = np.asarray(bloch, dtype=float)
    obs = [sum(n[k] * _PAULI[k] for k in range(3)) for n in axes]
    rho = 0.5 * (np.eye(2, dtype=complex) +
                 sum(bloch[k] * _PAULI[k] for k in range(3)))
    return obs, rho


def model_value(axes, bloch):
    axes = np.asarray(axes, dtype=float)
    bloch = np.asarray(bloch, dtype=float)
    return float(np.sum((axes @ bloch) ** 2))


def even_cycle_model(n):
    """The alternating X/Z assignment saturating beta = n/2 on even cycles."""
    axes = np.array([(1.0, 0.0, 0.0) if i % 2 == 0 else (0.0, 0.0, 1.0)
                     for i in range(n)])
    bloch = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    return axes, bloch


def verify_model(spec: UncertaintySpec, axes, bloch):
    """Feasibility report of an explicit model against the relaxation."""
    obs, rho = bloch_model(axes, bloch)
    assignment = {"rho": rho}
    for i, o in enumerate(obs):
        assignment[f"O{i}"] = o
        assignment[f"T{i}"] = float(np.trace(rho @ o).real) * o
    relax = build_relaxation(spec)
    return model_consistency_check(relax, assignment)


def _repair(axes, spec: UncertaintySpec, sweeps=80):
    """Gauss-Seidel projection of unit axes onto the edge constraints."""
    axes = np.asarray(axes, dtype=float).copy()
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    edges = spec.edge_list()
    for _ in range(sweeps):
        worst = 0.0
        for i, j in edges:
            bound = spec.eta_of(i, j) / 2.0
            dot = float(axes[i] @ axes[j])
            target = np.clip(dot, -bound, bound)
            if abs(dot - target) <= 1e-13:
                continue
            worst = max(worst, abs(dot) - bound)
            axes[j] = axes[j] + (target - dot) * axes[i]
            axes[j] /= np.linalg.norm(axes[j])
        if worst <= 1e-13:
            break
    return axes


def best_bloch(axes):
    """Optimal state direction for fixed axes: top eigenvector of the
    frame matrix sum_i n_i n_i^T."""
    m = sum(np.outer(n, n) for n in np.asarray(axes, dtype=float))
    w, v = np.linalg.eigh(m)
    return v[:, -1]


def seesaw_lower_bound(spec: UncertaintySpec, restarts=20, iterations=200,
                       seed=0, require_feasible=True):
    """Best feasible-model value from alternating local search.

    Axes are optimised under the anticommutator bounds, projected exactly
    onto the constraint set, and the state step is the closed-form top
    eigenvector of the frame matrix; the final model is re-verified
    against the relaxation.
    """
    from scipy.optimize import minimize

    n = spec.n
    edges = spec.edge_list()
    rng = np.random.default_rng(seed)

    def unpack(z):
        m = z.reshape(n, 3)
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    best = (0.0, None)
    for _ in range(max(1, restarts)):
        z0 = rng.normal(size=3 * n)
        if restarts == 0:
            axes = _repair(unpack(z0), spec)
            b = best_bloch(axes)
            val = model_value(axes, b)
            if val > best[0]:
                best = (val, (axes, b))
            break

        def neg_value(z):
            axes = unpack(z)
            return -model_value(axes, best_bloch(axes))

        cons = []
        for i, j in edges:
            eta = spec.eta_of(i, j)

            def make(i=i, j=j, eta=eta):
                def g(z):
                    axes = unpack(z)
                    return eta / 2.0 - abs(float(axes[i] @ axes[j]))
                return g
            cons.append({"type": "ineq", "fun": make()})
        res = minimize(neg_value, z0, constraints=cons, method="SLSQP",
                       options={"maxiter": iterations, "ftol": 1e-14})
        axes = _repair(unpack(res.x), spec)
        b = best_bloch(axes)
        val = model_value(axes, b)
        if val > best[0]:
            best = (val, (axes, b))
    if best[1] is None:
        return 0.0
    if require_feasible:
        chk = verify_model(spec, *best[1])
        if chk["min_eig"] < -1e-9 or chk["max_violation"] > 1e-7:
            raise RuntimeError(f"see-saw model failed verification: {chk}")
    return best[0]
