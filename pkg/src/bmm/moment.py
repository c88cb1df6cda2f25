"""Block moment matrix assembly and constraint attachment.

A relaxation is built from a monomial list, a rewrite rule set and a
compression map.  Each equivalence class of blocks gets one matrix variable
(or a fixed value when the rules force one); the assembled matrix, extra
linear rows, localising matrices and block-positivity constraints lower to
a single conic program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (RewriteRuleSet, Word, _class_closure, block_key,
                      class_is_self_adjoint, normalize, word_sort_key)
from .linalg import partial_transpose
from .sdp.program import ConicProgram


class MomentError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaMap:
    """Completely positive compression defining the block shape.

    identity(n): blocks are full n x n operators.
    subspace_compress(d): blocks are (d x d corner, traced remainder) pairs.
    trace(): blocks are scalars.
    """

    kind: str
    dim: int | None = None
    real_field: bool = False

    @classmethod
    def identity(cls, n, real_field=False):
        return cls("identity", int(n), real_field)

    @classmethod
    def subspace_compress(cls, d):
        return cls("subspace", int(d))

    @classmethod
    def trace(cls):
        return cls("trace", None)

    @property
    def mat_dim(self) -> int:
        return self.dim if self.kind in ("identity", "subspace") else 0

    @property
    def has_scalar_slot(self) -> bool:
        return self.kind in ("subspace", "trace")

    @property
    def block_dim(self) -> int:
        if self.kind == "identity":
            return self.dim
        if self.kind == "subspace":
            return self.dim + 1
        return 1

    def apply(self, op: np.ndarray, isometry=None):
        """Numeric action on a model-space operator; returns (matrix, scalar)
        with either part possibly None."""
        op = np.asarray(op, dtype=complex)
        if self.kind == "identity":
            if op.shape != (self.dim, self.dim):
                raise MomentError(f"operator shape {op.shape} != block dim "
                                  f"{self.dim}")
            return op, None
        if self.kind == "subspace":
            v = np.eye(op.shape[0], self.dim) if isometry is None else \
                np.asarray(isometry, dtype=complex)
            corner = v.conj().T @ op @ v
            return corner, complex(np.trace(op) - np.trace(corner))
        return None, complex(np.trace(op))


@dataclass
class ClassTransform:
    """value(class) = U @ maybe-adjoint(value(rep)) @ U^dagger."""

    unitary: np.ndarray | None = None   # None means identity matrix
    take_adjoint: bool = False

    def compose_after(self, other: "ClassTransform") -> "ClassTransform":
        """The transform applying ``other`` first, then ``self``.

        Conjugation commutes with the adjoint, (U X U+)+ = U X+ U+, so the
        unitaries multiply and the adjoint flags add modulo two.
        """
        if other.unitary is None:
            u2 = self.unitary
        elif self.unitary is None:
            u2 = other.unitary
        else:
            u2 = self.unitary @ other.unitary
        return ClassTransform(u2, self.take_adjoint ^ other.take_adjoint)

    def inverse(self) -> "ClassTransform":
        u = None if self.unitary is None else self.unitary.conj().T
        return ClassTransform(u, self.take_adjoint)


@dataclass
class BlockClass:
    word: Word
    hermitian: bool
    fixed_mat: np.ndarray | None = None
    fixed_mat_affine: dict = field(default_factory=dict)   # scalar -> matrix
    fixed_scal: complex | None = None
    fixed_scal_affine: dict = field(default_factory=dict)
    scal_free: bool = False          # compression identity block: free slot
    orbit_rep: Word | None = None
    transform: ClassTransform | None = None

    @property
    def is_fixed(self):
        return self.fixed_mat is not None or self.fixed_scal is not None or \
            bool(self.fixed_scal_affine)


@dataclass(frozen=True)
class SymmetryElement:
    """A relabelling of symbols with the matching block-space conjugation."""

    symbol_map: dict
    unitary: np.ndarray | None = None


@dataclass(frozen=True)
class _Oriented:
    word: object            # class representative or None for zero
    adjoint: bool = False
    scalar: complex = 1.0

    @property
    def is_zero(self):
        return self.word is None


class MomentRelaxation:
    """A block moment matrix with attached constraints and objective."""

    def __init__(self, monomials, rules: RewriteRuleSet, theta: ThetaMap,
                 name="bmm"):
        self.name = name
        self.rules = rules
        self.table = rules.table
        self.theta = theta
        mono = list(monomials)
        if len(set(mono)) != len(mono):
            raise MomentError("monomial list contains duplicates")
        self.monomials = mono
        self.index = {w: i for i, w in enumerate(mono)}
        self.classes: dict[Word, BlockClass] = {}
        self.placements: dict[tuple, _Oriented] = {}
        self._linear_rows = []      # (terms, rhs, sense, label)
        self._psd_combos = []
        self._objective = None
        self._free_scalars = {}     # name -> (lo, hi)
        self._symmetrized = False
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        kind = self.theta.kind
        for i, u in enumerate(self.monomials):
            for j in range(i, len(self.monomials)):
                v = self.monomials[j]
                key = block_key(u, v, self.rules, kind)
                if not key.is_zero:
                    self._register(key.word)
                self.placements[(i, j)] = _Oriented(key.word, key.adjoint,
                                                    key.scalar)
        ident = normalize(Word(), self.rules).word
        if ident in self.classes:
            cls = self.classes[ident]
            if kind == "identity":
                cls.fixed_mat = np.eye(self.theta.dim, dtype=complex)
            elif kind == "subspace":
                cls.fixed_mat = np.eye(self.theta.dim, dtype=complex)
                cls.scal_free = True
            # trace map: the identity class stays free (encoders pin it).

    def _register(self, word: Word):
        if word not in self.classes:
            herm = class_is_self_adjoint(word, self.rules, self.theta.kind)
            self.classes[word] = BlockClass(word, herm)

    def resolve_word(self, w) -> _Oriented:
        """Oriented class reference for an arbitrary word (scalar included)."""
        if not isinstance(w, Word):
            w = Word(tuple(w))
        key = block_key(w, Word(), self.rules, self.theta.kind)
        if key.is_zero:
            return _Oriented(None)
        if key.word not in self.classes:
            raise MomentError(f"class {key.word!r} absent from the moment "
                              "matrix")
        return _Oriented(key.word, key.adjoint, key.scalar)

    def has_class_for(self, w) -> bool:
        if not isinstance(w, Word):
            w = Word(tuple(w))
        key = block_key(w, Word(), self.rules, self.theta.kind)
        return key.is_zero or key.word in self.classes

    # -- fixing and constraints --------------------------------------------

    def fix_class(self, w, mat=None, scal=None, mat_affine=None,
                  scal_affine=None):
        """Pin a class to a constant, optionally affine in named scalars."""
        ref = self.resolve_word(w)
        if ref.is_zero:
            raise MomentError("cannot fix the zero class")
        if ref.adjoint or ref.scalar != 1.0:
            raise MomentError("fix the canonical orientation of the class")
        cls = self.classes[ref.word]
        if cls.orbit_rep is not None:
            raise MomentError("cannot fix a symmetrised non-representative")
        mat = None if mat is None else np.asarray(mat, dtype=complex)
        if cls.is_fixed:
            same = (mat is not None and cls.fixed_mat is not None
                    and cls.fixed_mat.shape == mat.shape
                    and np.allclose(cls.fixed_mat, mat, atol=1e-12)
                    and not mat_affine and not cls.fixed_mat_affine)
            if not same:
                raise MomentError(
                    f"class {ref.word!r} forced to two different constants")
            return
        n = self.theta.mat_dim
        if n:
            if mat is None or mat.shape != (n, n):
                raise MomentError(f"fixed value for {ref.word!r} must be "
                                  f"{n}x{n}")
            cls.fixed_mat = mat
            cls.fixed_mat_affine = {k: np.asarray(v, dtype=complex)
                                    for k, v in (mat_affine or {}).items()}
        if self.theta.has_scalar_slot:
            if scal is None and not scal_affine:
                if self.theta.kind == "trace":
                    raise MomentError("trace-map fix needs a scalar value")
                scal = 0.0
            cls.fixed_scal = None if scal is None else complex(scal)
            cls.fixed_scal_affine = {k: complex(v)
                                     for k, v in (scal_affine or {}).items()}

    def free_scalar(self, name, lo=None, hi=None):
        if name not in self._free_scalars:
            self._free_scalars[name] = (lo, hi)
        return name

    def add_linear(self, terms, rhs=0.0, sense="eq", label=""):
        """Linear constraint over block entries and named scalars.

        ``terms``: (word, a, b, coeff) for entry (a, b) of the block of
        ``word`` (use 'scal' for the compression slot), or
        ("scalar", name, coeff).
        """
        self._linear_rows.append((list(terms), complex(rhs), sense, label))

    def add_trace_eq(self, w, rhs, label=""):
        self.add_linear(self.trace_terms(w), rhs, "eq",
                        label or f"tr[{w!r}]")

    def add_cyclic_trace_ties(self):
        """Equate full block traces along cyclic word families.

        The compressions used here satisfy tr(Theta(abc)) = tr(Theta(cab)),
        so classes sharing a trace cycle carry equal traces even though the
        blocks differ.  No-op for the trace map, whose classes already merge
        cyclically.
        """
        if self.theta.kind == "trace":
            return 0
        groups: dict[Word, list] = {}
        for w in self.classes:
            seen, _ = _class_closure(w, self.rules, "trace")
            if seen is None:
                continue
            cyc = min(seen, key=lambda x: word_sort_key(x, self.table))
            groups.setdefault(cyc, []).append(w)
        added = 0
        for cyc, members in groups.items():
            if len(members) < 2:
                continue
            members = sorted(members,
                             key=lambda x: word_sort_key(x, self.table))
            w0 = members[0]
            for wk in members[1:]:
                terms = self.trace_terms(w0) + \
                    [(w, a, b, -c) for (w, a, b, c) in self.trace_terms(wk)]
                self.add_linear(terms, 0.0, "eq",
                                f"cyctr[{w0!r}~{wk!r}]")
                added += 1
        return added

    def add_block_eq(self, combo, const=None, label="", include_scal=True,
                     scal_const=0.0):
        """Entrywise  sum coeff * Theta(word) == const  for a hermitian
        combination; emits upper-triangle rows only."""
        d = self.theta.mat_dim
        cm = None if const is None else np.asarray(const, dtype=complex)
        for a in range(d):
            for b in range(a, d):
                rhs = 0.0 if cm is None else cm[a, b]
                terms = [(w, a, b, coeff) for coeff, w in combo]
                self.add_linear(terms, rhs, "eq", f"{label}[{a},{b}]")
        if self.theta.has_scalar_slot and include_scal:
            terms = [(w, "scal", "scal", coeff) for coeff, w in combo]
            self.add_linear(terms, scal_const, "eq", f"{label}[scal]")

    def trace_terms(self, w, coeff=1.0):
        """Terms for coeff * tr(full block of w), scalar slot included."""
        terms = [(w, a, a, coeff) for a in range(self.theta.mat_dim)]
        if self.theta.has_scalar_slot:
            terms.append((w, "scal", "scal", coeff))
        return terms

    def add_block_psd(self, name, combo, const=None, entry_map=None,
                      include_scal=True):
        """Constrain  const + sum coeff * Theta(word)  to be PSD.

        ``combo``: list of (coeff, word).  ``entry_map``: optional
        ('pt', (dA, dB), 'A'|'B') partial transpose of the matrix part.
        For compression maps the scalar slots obey the same combination
        unless ``include_scal`` is false.
        """
        oriented = []
        for coeff, w in combo:
            ref = self.resolve_word(w)
            if ref.is_zero:
                continue
            oriented.append(_Oriented(ref.word, ref.adjoint,
                                      complex(coeff) * ref.scalar))
        self._psd_combos.append(
            ("combo", name, oriented, const, entry_map, include_scal))

    def add_localising(self, name, poly, monomials=None, order=0):
        """Localising matrix for the hermitian polynomial sum c_k w_k.

        Every block Theta(u* g v) over the chosen monomials must reduce to
        classes already present, else this raises (meaning the order K or
        K_g must change).
        """
        if monomials is None:
            monomials = [w for w in self.monomials
                         if len(w.factors) <= order]
        mono = list(monomials)
        entries = {}
        for i, u in enumerate(mono):
            for j in range(i, len(mono)):
                v = mono[j]
                cell = []
                for coeff, g in poly:
                    w = u.adjoint(self.table) * g * v
                    nf = normalize(w, self.rules)
                    if nf.is_zero:
                        continue
                    ref = self.resolve_word(nf.word)
                    if ref.is_zero:
                        continue
                    cell.append(_Oriented(ref.word, ref.adjoint,
                                          complex(coeff) * nf.coeff *
                                          ref.scalar))
                entries[(i, j)] = cell
        self._psd_combos.append(("localising", name, (len(mono), entries),
                                 None, None, True))

    def functional_terms(self, terms):
        """Term list for  sum_i tr(F_i Theta(w_i)).

        ``terms``: list of (word, F) with F of matrix-part size, or of
        block_dim size to include the scalar slot on its last diagonal
        element.
        """
        out = []
        n = self.theta.mat_dim
        for w, F in terms:
            F = np.asarray(F, dtype=complex)
            scal_coeff = None
            if self.theta.has_scalar_slot and F.shape == (n + 1, n + 1):
                scal_coeff = F[n, n]
                F = F[:n, :n]
            elif F.shape != (n, n):
                raise MomentError(f"bad functional coefficient shape "
                                  f"{F.shape}")
            for a in range(n):
                for b in range(n):
                    if F[a, b] != 0:
                        out.append((w, b, a, F[a, b]))   # tr(FB) uses B[b,a]
            if scal_coeff:
                out.append((w, "scal", "scal", scal_coeff))
        return out

    def set_objective(self, terms, const=0.0, sense="max"):
        self._objective = (list(terms), float(const), sense)

    # -- symmetrisation ----------------------------------------------------

    def symmetrize(self, elements):
        """Identify block classes along symmetry orbits.

        Each element maps symbols to symbols and conjugates block values by
        its unitary; the caller is responsible for instance-data
        invariance.  Call before adding constraints that reference
        collapsed classes and before any ``fix_class`` beyond the built-in
        identity block.
        """
        if self._symmetrized:
            raise MomentError("already symmetrised")
        self._symmetrized = True
        root = {w: w for w in self.classes}
        T = {w: ClassTransform() for w in self.classes}

        def findroot(w):
            while root[w] != w:
                w = root[w]
            return w

        def path_transform(w):
            # value(w) = T[w](value(parent)), so climbing the tree composes
            # with the parent transform applied first
            t = T[w]
            p = root[w]
            while root[p] != p:
                t = t.compose_after(T[p])
                p = root[p]
            return t

        changed = True
        guard = 0
        while changed:
            changed = False
            guard += 1
            if guard > 500:
                raise MomentError("symmetrisation did not stabilise")
            for g in elements:
                u = None if g.unitary is None else \
                    np.asarray(g.unitary, dtype=complex)
                for w in list(self.classes):
                    img = Word(tuple(g.symbol_map.get(f, f)
                                     for f in w.factors))
                    nf = normalize(img, self.rules)
                    if nf.is_zero or abs(nf.coeff - 1.0) > 1e-12:
                        raise MomentError(
                            f"symmetry image of {w!r} reduces with a scalar")
                    key = block_key(nf.word, Word(), self.rules,
                                    self.theta.kind)
                    w2 = key.word
                    if w2 not in self.classes:
                        raise MomentError(
                            f"symmetry image class {w2!r} not in matrix")
                    if self.classes[w].hermitian != self.classes[w2].hermitian:
                        raise MomentError("symmetry mixes hermitian and "
                                          "general classes")
                    cw, cw2 = self.classes[w], self.classes[w2]
                    if cw.is_fixed or cw2.is_fixed:
                        if not (cw.is_fixed and cw2.is_fixed):
                            raise MomentError(
                                "symmetry links a fixed class to a free one")
                        self._check_fixed_consistency(cw, cw2, u, key.adjoint)
                        continue
                    # value(w2) = (U value(w) U+)^(adjoint?)
                    #           = U (value(w))^(adjoint?) U+
                    t_img = ClassTransform(u, key.adjoint)
                    r1, r2 = findroot(w), findroot(w2)
                    if r1 == r2:
                        continue
                    t1 = path_transform(w)
                    t2 = path_transform(w2)
                    rel = t2.inverse().compose_after(
                        t_img.compose_after(t1))     # value(r2) = rel(value(r1))
                    if word_sort_key(r1, self.table) <= \
                            word_sort_key(r2, self.table):
                        root[r2] = r1
                        T[r2] = rel
                    else:
                        root[r1] = r2
                        T[r1] = rel.inverse()
                    changed = True
        for w, cls in self.classes.items():
            r = findroot(w)
            if r == w:
                continue
            if cls.is_fixed or self.classes[r].is_fixed:
                raise MomentError("symmetry orbit touches a fixed class")
            cls.orbit_rep = r
            cls.transform = path_transform(w)

    def _check_fixed_consistency(self, cw, cw2, u, adjoint):
        """Fixed classes in one orbit must carry values related by the
        group conjugation (the instance-data invariance condition)."""
        def xf(mat):
            out = mat if u is None else u @ mat @ u.conj().T
            return out.conj().T if adjoint else out
        val = xf(cw.fixed_mat)
        if not np.allclose(val, cw2.fixed_mat, atol=1e-10):
            raise MomentError("symmetry maps fixed classes inconsistently")
        keys = set(cw.fixed_mat_affine) | set(cw2.fixed_mat_affine)
        for k in keys:
            a = cw.fixed_mat_affine.get(k)
            b = cw2.fixed_mat_affine.get(k)
            if a is None or b is None or not np.allclose(xf(a), b,
                                                         atol=1e-10):
                raise MomentError("symmetry maps affine fixed parts "
                                  "inconsistently")

    def lower(self) -> "LoweredRelaxation":
        return LoweredRelaxation(self)


class LoweredRelaxation:
    """Coordinate allocation and the conic program for a relaxation."""

    def __init__(self, relax: MomentRelaxation):
        self.relax = relax
        self.prog = ConicProgram()
        th = relax.theta
        self._scalars = {}
        for name, (lo, hi) in relax._free_scalars.items():
            idx = self.prog.add_scalar(name)
            self._scalars[name] = idx
            if lo is not None:
                self.prog.add_ineq([(idx, -1.0)], -lo, f"{name}>={lo}")
            if hi is not None:
                self.prog.add_ineq([(idx, 1.0)], hi, f"{name}<={hi}")
        self._layout = {}
        self._dperp = {}
        for w, cls in sorted(relax.classes.items(),
                             key=lambda kv: word_sort_key(kv[0], relax.table)):
            if cls.scal_free:
                idx = self.prog.add_scalar(f"dperp:{w!r}")
                self._dperp[w] = idx
                self.prog.add_ineq([(idx, -1.0)], 0.0, "dperp>=0")
            if cls.is_fixed or cls.orbit_rep is not None:
                continue
            self._alloc(w, cls)
        n = len(relax.monomials)
        d = th.mat_dim
        self.cone_mat = None
        self.cone_scal = None
        field = "real" if th.real_field else "complex"
        if d:
            self.cone_mat = self.prog.add_cone(f"{relax.name}:mat", n * d,
                                               field)
        if th.has_scalar_slot:
            self.cone_scal = self.prog.add_cone(f"{relax.name}:scal", n,
                                                field)
        self._emit_gamma()
        for terms, rhs, sense, label in relax._linear_rows:
            self._emit_linear(terms, rhs, sense, label)
        for combo in relax._psd_combos:
            self._emit_psd(*combo)
        if relax._objective is not None:
            terms, const, sense = relax._objective
            c0, acc = self._terms_to_affine(terms)
            if abs(c0.imag) > 1e-9 or any(abs(v.imag) > 1e-9
                                          for v in acc.values()):
                raise MomentError("objective has a nonvanishing imaginary "
                                  "part")
            self.prog.set_objective([(c, v.real) for c, v in acc.items()],
                                    const + c0.real, sense)

    # ---- coordinates -----------------------------------------------------

    def _alloc(self, w, cls):
        th = self.relax.theta
        d = th.mat_dim
        real = th.real_field
        layout = {}
        count = 0

        def take(k):
            nonlocal count
            c = count
            count += k
            return c

        if d:
            if cls.hermitian:
                for a in range(d):
                    layout[(a, a)] = ("re", take(1))
                for a in range(d):
                    for b in range(a + 1, d):
                        layout[(a, b)] = ("c", take(1 if real else 2))
            else:
                for a in range(d):
                    for b in range(d):
                        layout[(a, b)] = ("c", take(1 if real else 2))
        if th.has_scalar_slot:
            layout["scal"] = ("re", take(1)) if cls.hermitian else \
                ("c", take(1 if real else 2))
        start = self.prog.add_coords(count, f"cls:{w!r}")
        self._layout[w] = (start, layout, cls.hermitian)

    def scalar(self, name) -> int:
        return self._scalars[name]

    def _entry_terms(self, w, a, b):
        """(const, [(coord, complex coeff)]) for class-entry (a, b)."""
        relax = self.relax
        cls = relax.classes[w]
        real = relax.theta.real_field
        if cls.orbit_rep is not None:
            return self._transformed_entry(cls, a, b)
        if a == "scal" and cls.scal_free:
            return 0.0, [(self._dperp[w], 1.0)]
        if cls.is_fixed:
            if a == "scal":
                const = cls.fixed_scal if cls.fixed_scal is not None else 0.0
                terms = [(self._scalars[nm], c)
                         for nm, c in cls.fixed_scal_affine.items()]
                return complex(const), terms
            const = cls.fixed_mat[a, b]
            terms = [(self._scalars[nm], m[a, b])
                     for nm, m in cls.fixed_mat_affine.items()
                     if m[a, b] != 0]
            return complex(const), terms
        start, layout, herm = self._layout[w]
        if a == "scal":
            kind, off = layout["scal"]
        else:
            if herm and a > b:
                const, terms = self._entry_terms(w, b, a)
                return np.conj(const), [(c, np.conj(v)) for c, v in terms]
            kind, off = layout[(a, b)]
        off += start
        if kind == "re" or real:
            return 0.0, [(off, 1.0)]
        return 0.0, [(off, 1.0), (off + 1, 1j)]

    def _transformed_entry(self, cls, a, b):
        rep = cls.orbit_rep
        t = cls.transform
        u = t.unitary
        d = self.relax.theta.mat_dim

        def rep_entry(s, tt):
            if t.take_adjoint:
                c0, terms = self._entry_terms(rep, tt, s)
                return np.conj(c0), [(c, np.conj(v)) for c, v in terms]
            return self._entry_terms(rep, s, tt)

        if a == "scal":
            return rep_entry("scal", "scal")
        const = 0.0
        acc = {}
        if u is None:
            c0, terms = rep_entry(a, b)
            return c0, terms
        for s in range(d):
            uas = u[a, s]
            if uas == 0:
                continue
            for tt in range(d):
                ubt = u[b, tt]
                if ubt == 0:
                    continue
                coeff = uas * np.conj(ubt)
                c0, terms = rep_entry(s, tt)
                const += coeff * c0
                for c, v in terms:
                    acc[c] = acc.get(c, 0.0) + coeff * v
        return const, sorted(acc.items())

    def _oriented_entry(self, ref: _Oriented, a, b):
        """Entry (a, b) of the block an oriented reference holds."""
        if ref.is_zero:
            return 0.0, []
        if ref.adjoint:
            if a == "scal":
                const, terms = self._entry_terms(ref.word, "scal", "scal")
            else:
                const, terms = self._entry_terms(ref.word, b, a)
            const = np.conj(const)
            terms = [(c, np.conj(v)) for c, v in terms]
        else:
            const, terms = self._entry_terms(ref.word, a, b)
        s = ref.scalar
        return s * const, [(c, s * v) for c, v in terms]

    # ---- emission --------------------------------------------------------

    def _emit_gamma(self):
        relax = self.relax
        th = relax.theta
        d = th.mat_dim
        for (i, j), ref in relax.placements.items():
            if ref.is_zero:
                continue
            if d:
                for a in range(d):
                    brange = range(a, d) if i == j else range(d)
                    for b in brange:
                        const, terms = self._oriented_entry(ref, a, b)
                        p, q = i * d + a, j * d + b
                        if const != 0:
                            self.cone_mat.add_const(p, q, const)
                        for c, v in terms:
                            if v != 0:
                                self.cone_mat.add_term(p, q, c, v)
            if th.has_scalar_slot:
                const, terms = self._oriented_entry(ref, "scal", "scal")
                if const != 0:
                    self.cone_scal.add_const(i, j, const)
                for c, v in terms:
                    if v != 0:
                        self.cone_scal.add_term(i, j, c, v)

    def _terms_to_affine(self, terms):
        const = complex(0.0)
        acc = {}
        for term in terms:
            if term[0] == "scalar":
                _, name, coeff = term
                idx = self._scalars[name]
                acc[idx] = acc.get(idx, 0.0) + complex(coeff)
                continue
            w, a, b, coeff = term
            ref = self.relax.resolve_word(w)
            c0, tt = self._oriented_entry(ref, a, b)
            const += complex(coeff) * c0
            for c, v in tt:
                acc[c] = acc.get(c, 0.0) + complex(coeff) * v
        return const, acc

    def _emit_linear(self, terms, rhs, sense, label):
        const, acc = self._terms_to_affine(terms)
        lhs_re = [(c, v.real) for c, v in acc.items() if v.real != 0]
        lhs_im = [(c, v.imag) for c, v in acc.items() if v.imag != 0]
        r = complex(rhs) - const
        if sense == "eq":
            self.prog.add_eq(lhs_re, r.real, label)
            if lhs_im or abs(r.imag) > 1e-12:
                self.prog.add_eq(lhs_im, r.imag, label + ":im")
            return
        if lhs_im or abs(r.imag) > 1e-12:
            raise MomentError(f"complex inequality {label!r}")
        if sense == "le":
            self.prog.add_ineq(lhs_re, r.real, label)
        elif sense == "ge":
            self.prog.add_ineq([(c, -v) for c, v in lhs_re], -r.real, label)
        else:
            raise MomentError(f"bad sense {sense!r}")

    def _emit_psd(self, kind, name, payload, const, entry_map, include_scal):
        th = self.relax.theta
        d = th.mat_dim
        field = "real" if th.real_field else "complex"
        if kind == "localising":
            m, entries = payload
            if d:
                cone = self.prog.add_cone(name, m * d, field)
            scone = self.prog.add_cone(f"{name}:scal", m, field) \
                if th.has_scalar_slot else None
            for (i, j), cell in entries.items():
                for ref in cell:
                    if d:
                        for a in range(d):
                            brange = range(a, d) if i == j else range(d)
                            for b in brange:
                                c0, tt = self._oriented_entry(ref, a, b)
                                p, q = i * d + a, j * d + b
                                if c0 != 0:
                                    cone.add_const(p, q, c0)
                                for c, v in tt:
                                    if v != 0:
                                        cone.add_term(p, q, c, v)
                    if scone is not None:
                        c0, tt = self._oriented_entry(ref, "scal", "scal")
                        if c0 != 0:
                            scone.add_const(i, j, c0)
                        for c, v in tt:
                            if v != 0:
                                scone.add_term(i, j, c, v)
            return
        oriented = payload
        perm = None
        if entry_map is not None and entry_map[0] == "pt":
            _, dims, sub = entry_map
            E = np.arange(d * d).reshape(d, d)
            perm = partial_transpose(E, dims, sub).real.astype(int)
        cone = self.prog.add_cone(name, d, field)
        if const is not None:
            cm = np.asarray(const, dtype=complex)
            for a in range(d):
                for b in range(a, d):
                    if cm[a, b] != 0:
                        cone.add_const(a, b, cm[a, b])
        for a in range(d):
            for b in range(a, d):
                if perm is None:
                    sa, sb = a, b
                else:
                    sa, sb = divmod(int(perm[a, b]), d)
                for ref in oriented:
                    c0, tt = self._oriented_entry(ref, sa, sb)
                    if c0 != 0:
                        cone.add_const(a, b, c0)
                    for c, v in tt:
                        if v != 0:
                            cone.add_term(a, b, c, v)
        if th.has_scalar_slot and include_scal:
            scone = self.prog.add_cone(f"{name}:scal", 1, field)
            for ref in oriented:
                c0, tt = self._oriented_entry(ref, "scal", "scal")
                if c0 != 0:
                    scone.add_const(0, 0, c0)
                for c, v in tt:
                    if v != 0:
                        scone.add_term(0, 0, c, v)

    # ---- solution access ---------------------------------------------------

    def solve(self, tolerances=None, **kw):
        from .sdp.solve import solve as _solve
        return _solve(self.prog, tolerances=tolerances, **kw)

    def block_value(self, x, w):
        """Numeric (matrix, scalar) block value of a word from a solution."""
        ref = self.relax.resolve_word(w)
        d = self.relax.theta.mat_dim
        out = np.zeros((d, d), dtype=complex)
        for a in range(d):
            for b in range(d):
                c0, terms = self._oriented_entry(ref, a, b)
                out[a, b] = c0 + sum(v * x[c] for c, v in terms)
        scal = None
        if self.relax.theta.has_scalar_slot:
            c0, terms = self._oriented_entry(ref, "scal", "scal")
            scal = c0 + sum(v * x[c] for c, v in terms)
        return out, scal

    def gamma_value(self, x):
        """The full moment matrix (matrix part, scalar part) at a solution."""
        relax = self.relax
        d = relax.theta.mat_dim
        n = len(relax.monomials)
        G = np.zeros((n * d, n * d), dtype=complex) if d else None
        S = np.zeros((n, n), dtype=complex) if relax.theta.has_scalar_slot \
            else None
        for (i, j), ref in relax.placements.items():
            if G is not None:
                blk = np.zeros((d, d), dtype=complex)
                if not ref.is_zero:
                    for a in range(d):
                        for b in range(d):
                            c0, terms = self._oriented_entry(ref, a, b)
                            blk[a, b] = c0 + sum(v * x[c] for c, v in terms)
                G[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
                if i != j:
                    G[j * d:(j + 1) * d, i * d:(i + 1) * d] = blk.conj().T
            if S is not None:
                val = 0.0
                if not ref.is_zero:
                    c0, terms = self._oriented_entry(ref, "scal", "scal")
                    val = c0 + sum(v * x[c] for c, v in terms)
                S[i, j] = val
                if i != j:
                    S[j, i] = np.conj(val)
        return G, S


def model_consistency_check(relax: MomentRelaxation, assignment: dict,
                            isometry=None, scalar_values=None) -> dict:
    """Evaluate an explicit operator model against the relaxation.

    Builds the numeric moment matrix from the assignment, verifies each
    placement against its reduced class (catching rewrite inconsistencies),
    checks fixed blocks, and reports the minimum eigenvalue together with
    the largest constraint violation.
    """
    th = relax.theta
    mats = {k: np.asarray(v, dtype=complex) for k, v in assignment.items()}
    dim_model = next(iter(mats.values())).shape[0] if mats else \
        (th.mat_dim or 1)
    scalar_values = dict(scalar_values or {})

    def word_op(w):
        out = np.eye(dim_model, dtype=complex)
        for f in w.factors:
            if f not in mats:
                raise MomentError(f"assignment missing symbol {f!r}")
            out = out @ mats[f]
        return out

    cache = {}

    def theta_of(w):
        if w not in cache:
            cache[w] = th.apply(word_op(w), isometry)
        return cache[w]

    n = len(relax.monomials)
    d = th.mat_dim
    G = np.zeros((n * d, n * d), dtype=complex) if d else None
    S = np.zeros((n, n), dtype=complex) if th.has_scalar_slot else None
    mismatch = 0.0
    for (i, j), ref in relax.placements.items():
        u, v = relax.monomials[i], relax.monomials[j]
        dm, dsc = th.apply(word_op(u) @ word_op(v).conj().T, isometry)
        if ref.is_zero:
            if dm is not None:
                mismatch = max(mismatch, float(np.max(np.abs(dm))))
            if dsc is not None:
                mismatch = max(mismatch, abs(dsc))
        else:
            rm, rs = theta_of(ref.word)
            if dm is not None:
                via = ref.scalar * (rm.conj().T if ref.adjoint else rm)
                mismatch = max(mismatch, float(np.max(np.abs(dm - via))))
            if dsc is not None and rs is not None:
                via = ref.scalar * (np.conj(rs) if ref.adjoint else rs)
                mismatch = max(mismatch, abs(dsc - via))
        if G is not None:
            G[i * d:(i + 1) * d, j * d:(j + 1) * d] = dm
            if i != j:
                G[j * d:(j + 1) * d, i * d:(i + 1) * d] = dm.conj().T
        if S is not None:
            S[i, j] = dsc
            if i != j:
                S[j, i] = np.conj(dsc)
    eigs = []
    if G is not None:
        eigs.append(np.linalg.eigvalsh(0.5 * (G + G.conj().T)).min())
    if S is not None:
        eigs.append(np.linalg.eigvalsh(0.5 * (S + S.conj().T)).min())
    min_eig = float(min(eigs)) if eigs else 0.0

    viol = 0.0
    for w, cls in relax.classes.items():
        if not cls.is_fixed and not cls.scal_free:
            continue
        m, s = theta_of(w)
        if cls.fixed_mat is not None and m is not None:
            want = cls.fixed_mat.astype(complex).copy()
            for nm, mat in cls.fixed_mat_affine.items():
                want = want + scalar_values.get(nm, 0.0) * mat
            viol = max(viol, float(np.max(np.abs(m - want))))
        if cls.fixed_scal is not None and s is not None and not cls.scal_free:
            want = cls.fixed_scal + sum(
                scalar_values.get(nm, 0.0) * c
                for nm, c in cls.fixed_scal_affine.items())
            viol = max(viol, abs(s - want))

    def entry_value(ref: _Oriented, a, b):
        if ref.is_zero:
            return 0.0
        m, s = theta_of(ref.word)
        raw = s if a == "scal" else (m[b, a] if ref.adjoint else m[a, b])
        if ref.adjoint:
            raw = np.conj(raw)
        return ref.scalar * raw

    for terms, rhs, sense, label in relax._linear_rows:
        tot = complex(0.0)
        for term in terms:
            if term[0] == "scalar":
                _, nm, coeff = term
                tot += complex(coeff) * scalar_values.get(nm, 0.0)
                continue
            w, a, b, coeff = term
            ref = relax.resolve_word(w)
            tot += complex(coeff) * entry_value(ref, a, b)
        diff = tot - complex(rhs)
        if sense == "eq":
            viol = max(viol, abs(diff))
        elif sense == "le":
            viol = max(viol, max(0.0, diff.real), abs(diff.imag))
        else:
            viol = max(viol, max(0.0, -diff.real), abs(diff.imag))
    for combo in relax._psd_combos:
        kind = combo[0]
        if kind != "combo":
            continue
        _, name, oriented, const, entry_map, _ = combo
        mat = np.zeros((d, d), dtype=complex) if d else None
        if mat is None:
            continue
        if const is not None:
            mat += np.asarray(const, dtype=complex)
        for ref in oriented:
            m, s = theta_of(ref.word)
            blk = ref.scalar * (m.conj().T if ref.adjoint else m)
            mat += blk
        if entry_map is not None and entry_map[0] == "pt":
            _, dims, sub = entry_map
            mat = partial_transpose(mat, dims, sub)
        w = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min()
        viol = max(viol, max(0.0, -float(w)))
    return {"min_eig": min_eig, "max_violation": float(viol),
            "max_placement_mismatch": float(mismatch)}
