"""Interior-point solution of conic programs via cvxopt's conelp.

The lowering embeds every complex hermitian cone as a real symmetric one of
twice the order.  A custom KKT solver assembles the Schur complement from
the sparse per-coordinate coefficient matrices, which keeps large block
cones tractable; the stock cvxopt factorisation remains available as a
fallback and for cross-checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from cvxopt import matrix as cvxmat
from cvxopt import solvers, spmatrix

from .program import ConicProgram, ProgramError

DEFAULT_TOLERANCES = {"feastol": 1e-8, "abstol": 1e-8, "reltol": 1e-8,
                      "maxiters": 200}

_EXCEPTION = object()


@dataclass
class SolveReport:
    status: str                      # optimal | infeasible | numerical-failure
    primal_objective: float | None = None
    dual_objective: float | None = None
    gap: float | None = None
    max_primal_residual: float | None = None
    iterations: int = 0
    wall_time: float = 0.0
    x: np.ndarray | None = None
    certificate: dict | None = None
    note: str = ""

    @property
    def value(self):
        return self.primal_objective


class _Lowered:
    """cvxopt data for a program plus index bookkeeping.

    ``ridge`` relaxes every PSD cone to S(x) + ridge*I >= 0, restoring
    strict feasibility for problems whose feasible set has empty interior.

    A light presolve substitutes single-coordinate equality rows into the
    cones, pins entries forced by saturated two-by-two minors, and turns
    the null space of constant singular principal submatrices into
    equality rows.  These steps recover solvable geometry for relaxations
    whose feasible set has no interior.
    """

    NULL_TOL = 1e-13

    def __init__(self, prog: ConicProgram, ridge: float = 0.0,
                 presolve: bool = True):
        self.prog = prog
        self.ridge = float(ridge)
        n = prog.n
        self.nl = len(prog.ineq_rows)
        self.sdims = [c.embedded_size for c in prog.cones]
        offs = [self.nl]
        for m in self.sdims:
            offs.append(offs[-1] + m * m)
        self.offsets = offs
        # per cone: complex upper-triangle entry-affine maps
        # (p, q) -> [const complex, {coord: complex coeff}]
        self.entries: list[dict] = []
        for cone in prog.cones:
            ent: dict[tuple, list] = {}
            for coord, p, q, v in zip(cone.coord, cone.pos_p, cone.pos_q,
                                      cone.value):
                s = ent.setdefault((p, q), [0.0 + 0.0j, {}])
                c = int(coord)
                s[1][c] = s[1].get(c, 0.0) + complex(v)
            for (p, q), v in cone.const.items():
                s = ent.setdefault((p, q), [0.0 + 0.0j, {}])
                s[0] += complex(v)
            for s in ent.values():
                s[1] = {c: v for c, v in s[1].items() if v != 0.0}
            self.entries.append(ent)
        self.eq = []
        self._eq_seen = {}
        for r in prog.eq_rows:
            self._push_eq(r.coords, r.values, r.rhs)
        if presolve:
            self._presolve()
        self._assemble()

    def _push_eq(self, coords, values, rhs):
        coords = np.asarray(coords, dtype=int)
        values = np.asarray(values, dtype=float)
        keep = np.abs(values) > 1e-14
        coords, values = coords[keep], values[keep]
        if coords.size == 0:
            return False
        order = np.argsort(coords)
        coords, values = coords[order], values[order]
        scale = values[0]
        key = (tuple(coords.tolist()),
               tuple(round(v / scale, 12) for v in values),
               round(rhs / scale, 12))
        if key in self._eq_seen:
            return False
        self._eq_seen[key] = True
        self.eq.append((coords, values, float(rhs)))
        return True

    # -- presolve ------------------------------------------------------------

    def _presolve(self):
        for _ in range(8):
            changed = self._substitute_pins()
            changed |= self._pin_saturated_entries()
            changed |= self._propagate_null_pairs()
            changed |= self._propagate_null_rows()
            if not changed:
                return

    def _current_pins(self):
        pins = {}
        for coords, values, rhs in self.eq:
            if coords.size == 1:
                pins[int(coords[0])] = rhs / values[0]
        return pins

    def _fold_pins_into_rows(self, pins):
        """Eliminate pinned coordinates from multi-coordinate rows; rows that
        become consistent tautologies are dropped, inconsistent ones kept
        verbatim so the solver can certify infeasibility."""
        out = []
        seen = {}
        for coords, values, rhs in self.eq:
            if coords.size <= 1:
                out.append((coords, values, rhs))
                continue
            mask = np.array([int(c) in pins for c in coords])
            if not mask.any():
                out.append((coords, values, rhs))
                continue
            rhs2 = rhs - sum(values[i] * pins[int(coords[i])]
                             for i in range(len(coords)) if mask[i])
            coords2, values2 = coords[~mask], values[~mask]
            if coords2.size == 0:
                if abs(rhs2) > 1e-9:
                    out.append((coords, values, rhs))   # genuinely inconsistent
                continue
            out.append((coords2, values2, float(rhs2)))
        self.eq = []
        self._eq_seen = {}
        for coords, values, rhs in out:
            self._push_eq(coords, values, rhs)

    def _propagate_null_pairs(self):
        """Two-by-two constant singular minors force range conditions."""
        changed = False
        for k, cone in enumerate(self.prog.cones):
            ent = self.entries[k]
            size = cone.size
            diag = self._const_diagonals(ent, size)
            for (p, q), s in list(ent.items()):
                if p == q or s[1] or p not in diag or q not in diag:
                    continue
                c = s[0]
                cpp, cqq = diag[p], diag[q]
                scale = max(1.0, cpp, cqq, abs(c))
                det = cpp * cqq - abs(c) ** 2
                if abs(det) > self.NULL_TOL * scale * scale or \
                        cpp < -1e-12 or cqq < -1e-12:
                    continue
                # null vector of [[cpp, c], [conj(c), cqq]]
                if cpp >= cqq and cpp > 1e-12:
                    v = np.array([-c / cpp, 1.0])
                elif cqq > 1e-12:
                    v = np.array([1.0, -np.conj(c) / cqq])
                else:
                    continue
                v /= np.linalg.norm(v)
                if self._emit_null_row(ent, size, [p, q], v):
                    changed = True
        return changed

    def _emit_null_row(self, ent, size, J, v):
        changed = False
        inJ = set(J)
        for outp in range(size):
            if outp in inJ:
                continue
            acc = {}
            rhs = 0.0 + 0.0j
            for i, q in enumerate(J):
                if abs(v[i]) < 1e-14:
                    continue
                if outp <= q:
                    s = ent.get((outp, q))
                    conj = False
                else:
                    s = ent.get((q, outp))
                    conj = True
                if s is None:
                    continue
                c0 = np.conj(s[0]) if conj else s[0]
                rhs -= c0 * v[i]
                for c, coeff in s[1].items():
                    cc = np.conj(coeff) if conj else coeff
                    acc[c] = acc.get(c, 0.0) + cc * v[i]
            if not acc:
                continue
            coords = np.array(sorted(acc))
            for part in ("real", "imag"):
                values = np.array([getattr(acc[c], part) for c in coords])
                r = getattr(rhs, part)
                if np.max(np.abs(values)) < 1e-12:
                    continue
                if self._push_eq(coords, values, r):
                    changed = True
        return changed

    def _substitute_pins(self):
        pins = self._current_pins()
        if not pins:
            return False
        changed = False
        for ent in self.entries:
            for s in ent.values():
                hit = [c for c in s[1] if c in pins]
                for c in hit:
                    s[0] += s[1].pop(c) * pins[c]
                    changed = True
        nrows = len(self.eq)
        self._fold_pins_into_rows(pins)
        if len(self.eq) != nrows:
            changed = True
        return changed

    def _const_diagonals(self, ent, size):
        diag = {}
        for p in range(size):
            s = ent.get((p, p))
            if s is None:
                diag[p] = 0.0
            elif not s[1]:
                diag[p] = s[0].real
        return diag

    def _pin_saturated_entries(self):
        """If |const| of an off-diagonal entry saturates sqrt(cpp*cqq) and
        every free direction is tangent to that circle, the free part
        vanishes for every member of the cone."""
        changed = False
        for k, cone in enumerate(self.prog.cones):
            ent = self.entries[k]
            diag = self._const_diagonals(ent, cone.size)
            for (p, q), s in ent.items():
                if p == q or not s[1] or p not in diag or q not in diag:
                    continue
                c0 = s[0]
                bound2 = diag[p] * diag[q]
                if abs(c0) < 1e-12 or                         abs(abs(c0) ** 2 - bound2) > 1e-12 * max(1.0, bound2):
                    continue
                if any(abs((np.conj(c0) * coeff).real) > 1e-12
                       for coeff in s[1].values()):
                    continue
                re_t = [(c, coeff.real) for c, coeff in s[1].items()
                        if abs(coeff.real) > 1e-14]
                im_t = [(c, coeff.imag) for c, coeff in s[1].items()
                        if abs(coeff.imag) > 1e-14]
                for terms in (re_t, im_t):
                    if terms:
                        coords = np.array([c for c, _ in terms])
                        values = np.array([v for _, v in terms])
                        if self._push_eq(coords, values, 0.0):
                            changed = True
        return changed

    def _propagate_null_rows(self):
        """Constant singular principal submatrices force range conditions
        on every row crossing them."""
        changed = False
        for k, cone in enumerate(self.prog.cones):
            ent = self.entries[k]
            size = cone.size
            diag = self._const_diagonals(ent, size)
            J = set(diag)
            stable = False
            while not stable:
                stable = True
                for p in list(J):
                    for q in J:
                        s = ent.get((min(p, q), max(p, q)))
                        if s is not None and s[1]:
                            J.discard(p)
                            stable = False
                            break
            J = sorted(J)
            if len(J) < 2:
                continue
            C = np.zeros((len(J), len(J)), dtype=complex)
            for i, p in enumerate(J):
                for j2 in range(i, len(J)):
                    q = J[j2]
                    s = ent.get((p, q))
                    val = 0.0 if s is None else s[0]
                    C[i, j2] = val
                    C[j2, i] = np.conj(val)
            w, V = np.linalg.eigh(C)
            scale = max(1.0, float(np.abs(C).max()))
            if w[0] < -1e-9 * scale:
                continue    # infeasible constant block; let the solver report
            nulls = [V[:, i] for i in range(len(w))
                     if abs(w[i]) <= self.NULL_TOL * scale]
            if not nulls:
                continue
            inJ = set(J)
            outside = [p for p in range(size) if p not in inJ]
            for v in nulls:
                for p in outside:
                    acc = {}
                    rhs = 0.0 + 0.0j
                    for i, q in enumerate(J):
                        if abs(v[i]) < 1e-14:
                            continue
                        if p <= q:
                            s = ent.get((p, q))
                            conj = False
                        else:
                            s = ent.get((q, p))
                            conj = True
                        if s is None:
                            continue
                        c0 = np.conj(s[0]) if conj else s[0]
                        rhs -= c0 * v[i]
                        for c, coeff in s[1].items():
                            cc = np.conj(coeff) if conj else coeff
                            acc[c] = acc.get(c, 0.0) + cc * v[i]
                    if not acc:
                        continue
                    coords = np.array(sorted(acc))
                    for part in ("real", "imag"):
                        values = np.array([getattr(acc[c], part)
                                           for c in coords])
                        r = getattr(rhs, part)
                        if np.max(np.abs(values)) < 1e-12:
                            continue
                        if self._push_eq(coords, values, r):
                            changed = True
        return changed

    def _rank_filter_eq(self):
        """Drop linearly dependent equality rows (greedy pivoted Gram).

        Presolve-derived rows can overlap with encoder rows; dependent rows
        are consistent by construction and their residuals are re-checked
        on the original program after solving.
        """
        m = len(self.eq)
        if m <= 1:
            return
        rows = []
        for coords, values, rhs in self.eq:
            nrm = np.linalg.norm(values)
            rows.append((coords, values / nrm, rhs / nrm))
        G = np.zeros((m, m))
        for i in range(m):
            ci, vi = rows[i][0], rows[i][1]
            di = dict(zip(ci.tolist(), vi))
            for j in range(i, m):
                cj, vj = rows[j][0], rows[j][1]
                s = 0.0
                for c, v in zip(cj.tolist(), vj):
                    w = di.get(c)
                    if w is not None:
                        s += w * v
                G[i, j] = G[j, i] = s
        keep = []
        L = np.zeros((m, m))
        for i in range(m):
            if keep:
                v = sla.solve_triangular(L[:len(keep), :len(keep)],
                                         G[keep, i], lower=True,
                                         check_finite=False)
                res = G[i, i] - v @ v
            else:
                v = np.zeros(0)
                res = G[i, i]
            if res > 1e-12:
                k = len(keep)
                L[k, :k] = v
                L[k, k] = np.sqrt(res)
                keep.append(i)
        if len(keep) != m:
            self.eq = [self.eq[i] for i in keep]

    # -- assembly ------------------------------------------------------------

    def _assemble(self):
        self._rank_filter_eq()
        prog = self.prog
        n = prog.n
        rows, cols, vals = [], [], []
        hrows, hvals = [], []
        for i, r in enumerate(prog.ineq_rows):
            for c, v in zip(r.coords, r.values):
                rows.append(i)
                cols.append(int(c))
                vals.append(float(v))
            hrows.append(i)
            hvals.append(r.rhs)
        self.cone_coeffs = []
        for k, cone in enumerate(self.prog.cones):
            ent = self.entries[k]
            base = self.offsets[k]
            m = self.sdims[k]
            emit = _emit_complex if cone.field == "complex" else _emit_real
            per: dict[int, dict] = {}
            for (p, q), (const, coeffs) in ent.items():
                if const != 0.0:
                    for pos, rv in emit(p, q, const, cone.size):
                        hrows.append(int(base + pos))
                        hvals.append(float(rv))
                for c, v in coeffs.items():
                    d = per.setdefault(int(c), {})
                    for pos, rv in emit(p, q, v, cone.size):
                        rows.append(int(base + pos))
                        cols.append(int(c))
                        vals.append(float(-rv))
                        d[pos] = d.get(pos, 0.0) + rv
            if self.ridge:
                for a in range(m):
                    hrows.append(int(base + a * m + a))
                    hvals.append(self.ridge)
            self.cone_coeffs.append(per)
        total = self.offsets[-1]
        self.G = spmatrix(vals, rows, cols, (total, n)) if vals else \
            spmatrix([], [], [], (total, n))
        h = np.zeros(total)
        for r, v in zip(hrows, hvals):
            h[r] += v
        self.h = cvxmat(h)
        arows, acols, avals = [], [], []
        for i, (coords, values, rhs) in enumerate(self.eq):
            for c, v in zip(coords, values):
                arows.append(i)
                acols.append(int(c))
                avals.append(float(v))
        self.A = spmatrix(avals, arows, acols, (len(self.eq), n))
        self.b = cvxmat(np.array([r[2] for r in self.eq]))
        sign = -1.0 if prog.sense == "max" else 1.0
        cobj = np.zeros(n)
        for c, v in prog.obj.items():
            cobj[c] = sign * v
        self.c = cvxmat(cobj)
        self.sign = sign
        self.dims = {"l": self.nl, "q": [], "s": self.sdims}


def _emit_complex(p, q, v, nsz):
    re, im = float(np.real(v)), float(np.imag(v))
    out = []
    if p == q:
        if re != 0.0:
            out += [(p * 2 * nsz + p, re),
                    ((nsz + p) * 2 * nsz + nsz + p, re)]
        return out
    if re != 0.0:
        for a, b in ((p, q), (q, p), (nsz + p, nsz + q), (nsz + q, nsz + p)):
            out.append((b * 2 * nsz + a, re))
    if im != 0.0:
        # S = X + iY embedded as [[X, -Y], [Y, X]]; Y[p,q] = im, Y[q,p] = -im
        for a, b, s in ((p, nsz + q, -im), (q, nsz + p, im),
                        (nsz + p, q, im), (nsz + q, p, -im)):
            out.append((b * 2 * nsz + a, s))
    return out


def _emit_real(p, q, v, nsz):
    re = float(np.real(v))
    if re == 0.0:
        return []
    if p == q:
        return [(p * nsz + p, re)]
    return [(q * nsz + p, re), (p * nsz + q, re)]


class _FastKKT:
    """Schur-complement KKT factorisation using the sparse coefficient
    structure; eliminates the cone block, then solves [[H, A'], [A, 0]]."""

    def __init__(self, low: _Lowered):
        self.low = low
        prog = low.prog
        n = prog.n
        self.n = n
        self.nl = low.nl
        if self.nl:
            rows, cols, vals = [], [], []
            for i, r in enumerate(prog.ineq_rows):
                rows.extend([i] * len(r.coords))
                cols.extend(int(c) for c in r.coords)
                vals.extend(float(v) for v in r.values)
            self.Gl = sp.csr_matrix((vals, (rows, cols)), shape=(self.nl, n))
        else:
            self.Gl = None
        if low.eq:
            rows, cols, vals = [], [], []
            for i, (coords, values, _) in enumerate(low.eq):
                rows.extend([i] * len(coords))
                cols.extend(int(c) for c in coords)
                vals.extend(float(v) for v in values)
            self.A = sp.csr_matrix((vals, (rows, cols)),
                                   shape=(len(low.eq), n))
        else:
            self.A = None
        self.p = 0 if self.A is None else self.A.shape[0]
        # per cone: per-coord sparse matrices and flattened gather arrays
        self.cones = []
        for k, per in enumerate(low.cone_coeffs):
            m = low.sdims[k]
            coords = sorted(per)
            mats, g_flat, g_j, g_v = {}, [], [], []
            for j in coords:
                items = [(pos, rv) for pos, rv in per[j].items() if rv != 0.0]
                if not items:
                    continue
                pos = np.array([it[0] for it in items])
                rv = np.array([it[1] for it in items])
                rr, cc = pos % m, pos // m
                mats[j] = sp.csr_matrix((rv, (rr, cc)), shape=(m, m))
                g_flat.append(rr * m + cc)     # row-major for ndarray.ravel()
                g_j.append(np.full(len(items), j))
                g_v.append(rv)
            if mats:
                self.cones.append((k, m, mats,
                                   np.concatenate(g_flat),
                                   np.concatenate(g_j),
                                   np.concatenate(g_v)))

    def __call__(self, W):
        low = self.low
        n = self.n
        ds = np.array(W["d"]).ravel() if self.nl else None
        H = np.zeros((n, n))
        if self.nl:
            dinv2 = 1.0 / (ds * ds)
            H += (self.Gl.T @ sp.diags(dinv2) @ self.Gl).toarray()
        uis = []
        for k, m, mats, g_flat, g_j, g_v in self.cones:
            r = np.array(W["r"][k])
            u = r @ r.T
            ui = np.linalg.inv(u)
            ui = 0.5 * (ui + ui.T)
            uis.append(ui)
            for i, Ei in mats.items():
                t = ui @ (Ei @ ui)            # congruence with sparse middle
                contrib = t.ravel()[g_flat] * g_v
                np.add.at(H[i], g_j, contrib)
        rtis = [np.array(W["rti"][k]) for k, *_ in self.cones]

        factor = self._factor(H)

        def solve(x, y, z):
            bx = np.array(x).ravel().copy()
            by = np.array(y).ravel().copy() if self.p else np.zeros(0)
            bz = np.array(z).ravel().copy()
            rhs = bx.copy()
            if self.nl:
                rhs += self.Gl.T @ (dinv2 * bz[:self.nl])
            wzs = []
            for (k, m, mats, g_flat, g_j, g_v), ui in zip(self.cones, uis):
                base = low.offsets[k]
                Z = bz[base:base + m * m].reshape(m, m, order="F")
                Wz = ui @ Z @ ui
                wzs.append(Wz)
                # G' contribution: cone columns of G are -E_j
                np.add.at(rhs, g_j, -(Wz.ravel()[g_flat] * g_v))
            ux, uy = factor(rhs, by)
            if self.nl:
                # 'l' rows of G carry +coefficients, cone rows carry -E
                z[:self.nl] = cvxmat((self.Gl @ ux - bz[:self.nl]) / ds)
            for idx, ((k, m, mats, g_flat, g_j, g_v), ui) in \
                    enumerate(zip(self.cones, uis)):
                base = low.offsets[k]
                gx = np.zeros(m * m)
                np.add.at(gx, g_flat, ux[g_j] * g_v)
                V = -gx.reshape(m, m) - \
                    bz[base:base + m * m].reshape(m, m, order="F")
                rti = rtis[idx]
                out = rti.T @ V @ rti        # W^-T applied to (G ux - bz)
                z[base:base + m * m] = cvxmat(out.ravel(order="F"))
            x[:] = cvxmat(ux)
            if self.p:
                y[:] = cvxmat(uy)

        return solve

    def _factor(self, H):
        p = self.p
        try:
            Hf = sla.cho_factor(H, lower=True, check_finite=False)
            if p:
                AH = sla.cho_solve(Hf, self.A.toarray().T, check_finite=False)
                S = self.A @ AH
                Sf = sla.cho_factor(0.5 * (S + S.T), lower=True,
                                    check_finite=False)

                def solve_chol(rhs, by):
                    t1 = sla.cho_solve(Hf, rhs, check_finite=False)
                    uy = sla.cho_solve(Sf, self.A @ t1 - by, check_finite=False)
                    ux = sla.cho_solve(Hf, rhs - self.A.T @ uy,
                                       check_finite=False)
                    return ux, uy
                return solve_chol

            def solve_h(rhs, by):
                return sla.cho_solve(Hf, rhs, check_finite=False), np.zeros(0)
            return solve_h
        except np.linalg.LinAlgError:
            pass
        # bordered fallback when H is singular
        n = self.n
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        if p:
            Aa = self.A.toarray()
            K[n:, :n] = Aa
            K[:n, n:] = Aa.T
        lu = sla.lu_factor(K, check_finite=False)

        def solve_lu(rhs, by):
            sol = sla.lu_solve(lu, np.concatenate([rhs, by]),
                               check_finite=False)
            return sol[:n], sol[n:]
        return solve_lu


def _merge_tols(tolerances) -> dict:
    t = dict(DEFAULT_TOLERANCES)
    if tolerances:
        t.update(tolerances)
    return t


def solve(prog: ConicProgram, tolerances=None, kkt="auto",
          verbose=False) -> SolveReport:
    """Solve a conic program.

    Returns status optimal / infeasible / numerical-failure; infeasible
    reports always carry a validated improving-ray certificate.  Ambiguous
    solver outcomes are retried once with 10x tighter settings.
    """
    tols = _merge_tols(tolerances)
    t0 = time.time()
    lowered = {}

    def get_low(ridge):
        if ridge not in lowered:
            lowered[ridge] = _Lowered(prog, ridge)
        return lowered[ridge]

    try:
        low0 = get_low(0.0)
    except ProgramError as exc:
        return SolveReport(status="numerical-failure", note=f"lowering: {exc}",
                           wall_time=time.time() - t0)
    use_fast = kkt == "fast" or (
        kkt == "auto" and (max(low0.sdims, default=0) >= 80 or prog.n >= 600))

    def attempt(low, tt, fast):
        opts = {"show_progress": verbose, "maxiters": int(tt["maxiters"]),
                "feastol": tt["feastol"], "abstol": tt["abstol"],
                "reltol": tt["reltol"]}
        kwargs = {"kktsolver": _FastKKT(low)} if fast else {}
        try:
            sol = solvers.conelp(low.c, low.G, low.h, dims=low.dims,
                                 A=low.A, b=low.b, options=opts, **kwargs)
        except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
            return _EXCEPTION, str(exc)
        return _interpret(prog, low, sol, tt, time.time() - t0), None

    def run(low, tt):
        rep, err = attempt(low, tt, use_fast)
        if rep is _EXCEPTION and use_fast:
            rep, err = attempt(low, tt, False)
        if rep is _EXCEPTION:
            return SolveReport(status="numerical-failure",
                               note=f"solver exception: {err}",
                               wall_time=time.time() - t0)
        return rep

    tighter = dict(tols)
    for key in ("feastol", "abstol", "reltol"):
        tighter[key] = tols[key] * 0.1
    ladder = [(0.0, tols), (1e-9, tols), (1e-9, tighter)]
    report = None
    for ridge, tt in ladder:
        rep = run(get_low(ridge), tt)
        if rep.status != "numerical-failure":
            if ridge:
                rep.note = (rep.note + "; " if rep.note else "") + \
                    f"solved with cone ridge {ridge:g}"
            return rep
        if report is None:
            report = rep
        else:
            report.note = report.note or rep.note
    return report


def _interpret(prog, low: _Lowered, sol, tols, wall) -> SolveReport:
    status = sol["status"]
    if status == "optimal":
        x = np.array(sol["x"]).ravel()
        pobj = low.sign * float(sol["primal objective"]) + prog.obj_const
        dobj = low.sign * float(sol["dual objective"]) + prog.obj_const
        res = prog.residuals(x)
        return SolveReport(status="optimal", primal_objective=pobj,
                           dual_objective=dobj, gap=abs(pobj - dobj),
                           max_primal_residual=res["max"],
                           iterations=sol["iterations"], wall_time=wall, x=x)
    if status == "primal infeasible":
        z = np.array(sol["z"]).ravel()
        y = np.array(sol["y"]).ravel() if sol["y"] is not None else np.zeros(0)
        ok, viol, res = _check_infeasibility_certificate(low, z, y, tols)
        if ok:
            return SolveReport(status="infeasible", iterations=sol["iterations"],
                               wall_time=wall,
                               certificate={"z": z, "y": y, "violation": viol,
                                            "residual": res})
        return SolveReport(status="numerical-failure",
                           note=f"uncertified infeasibility (res={res:.2e})",
                           iterations=sol["iterations"], wall_time=wall)
    if status == "dual infeasible":
        return SolveReport(status="numerical-failure",
                           note="dual infeasible (objective unbounded)",
                           iterations=sol["iterations"], wall_time=wall)
    # 'unknown': accept when the final iterate meets the tolerances anyway
    if sol.get("x") is not None:
        gap = sol["gap"]
        pinf = sol["primal infeasibility"]
        dinf = sol["dual infeasibility"]
        rel = sol["relative gap"]
        if pinf is not None and dinf is not None and \
                max(pinf, dinf) < 10 * tols["feastol"] and \
                ((gap is not None and gap < 10 * tols["abstol"]) or
                 (rel is not None and rel < 10 * tols["reltol"])):
            x = np.array(sol["x"]).ravel()
            pobj = low.sign * float(sol["primal objective"]) + prog.obj_const
            dobj = low.sign * float(sol["dual objective"]) + prog.obj_const
            res = prog.residuals(x)
            return SolveReport(status="optimal", primal_objective=pobj,
                               dual_objective=dobj, gap=abs(pobj - dobj),
                               max_primal_residual=res["max"],
                               iterations=sol["iterations"], wall_time=wall,
                               x=x, note="accepted near-tolerance iterate")
    return SolveReport(status="numerical-failure", note="solver returned unknown",
                       iterations=sol["iterations"], wall_time=wall)


def _check_infeasibility_certificate(low: _Lowered, z, y, tols):
    """Validate a conelp improving ray: -h'z - b'y = 1, G'z + A'y ~ 0,
    z in the dual cone."""
    viol = -(np.array(low.h).ravel() @ z + np.array(low.b).ravel() @ y)
    Gt = _sp_to_scipy(low.G).T
    At = _sp_to_scipy(low.A).T
    res = float(np.max(np.abs(Gt @ z + At @ y))) if low.prog.n else 0.0
    coneneg = 0.0
    if low.nl:
        coneneg = max(coneneg, max(0.0, -float(z[:low.nl].min())))
    for k, m in enumerate(low.sdims):
        base = low.offsets[k]
        Z = z[base:base + m * m].reshape(m, m, order="F")
        w = np.linalg.eigvalsh(0.5 * (Z + Z.T))
        coneneg = max(coneneg, max(0.0, -float(w.min())))
    res = max(res, coneneg)
    ok = viol >= 10 * tols["feastol"] and res <= 0.01 * max(viol, 1e-30)
    return ok, float(viol), float(res)


def _sp_to_scipy(m) -> sp.csr_matrix:
    return sp.csr_matrix((np.array(m.V).ravel(),
                          (np.array(m.I).ravel(), np.array(m.J).ravel())),
                         shape=m.size)
