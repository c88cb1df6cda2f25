"""Abstract operator symbols, words and rewriting to canonical form.

Monomials over a set of declared operator symbols are reduced by the
algebraic rules the symbols carry (projector orthogonality, idempotence,
involution, absorption) together with commutation between disjoint
subsystems or explicitly commuting families.  Equal matrix blocks of a
moment matrix are recognised by reducing words to a shared canonical
representative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SYMBOL_KINDS = (
    "state",
    "projector",
    "povm-element",
    "involutive-observable",
    "generic-hermitian",
    "generic",
)

_HERMITIAN_KINDS = {"state", "projector", "povm-element", "involutive-observable",
                    "generic-hermitian"}


class AlgebraError(ValueError):
    """Raised for malformed symbols, words or rule sets."""


@dataclass(frozen=True)
class OperatorSymbol:
    """A declared abstract operator.

    ``indices`` conventionally holds ``(setting, outcome)`` for measurement
    operators and is empty otherwise.  ``absorbs`` lists symbol ids X with
    ``self X = X self = X``.
    """

    id: str
    name: str
    kind: str = "generic-hermitian"
    subsystems: frozenset = frozenset()
    indices: tuple = ()
    hermitian: bool = True
    idempotent: bool = False
    involutive: bool = False
    absorbs: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise AlgebraError(f"unknown symbol kind {self.kind!r}")
        if self.idempotent and self.involutive:
            raise AlgebraError(
                f"symbol {self.name!r}: idempotent and involutive are exclusive")
        if self.kind in _HERMITIAN_KINDS and not self.hermitian:
            raise AlgebraError(
                f"symbol {self.name!r}: kind {self.kind!r} implies hermitian")


class SymbolTable:
    """Registry of symbols; declaration order fixes the canonical sort order."""

    def __init__(self):
        self._by_id: dict[str, OperatorSymbol] = {}
        self._rank: dict[str, int] = {}

    def declare(self, id, name=None, **kwargs) -> OperatorSymbol:
        name = name if name is not None else id
        if id in self._by_id:
            raise AlgebraError(f"duplicate symbol id {id!r}")
        if any(s.name == name for s in self._by_id.values()):
            raise AlgebraError(f"duplicate symbol name {name!r}")
        sym = OperatorSymbol(id=id, name=name, **kwargs)
        self._by_id[id] = sym
        self._rank[id] = len(self._rank)
        return sym

    def __getitem__(self, id) -> OperatorSymbol:
        return self._by_id[id]

    def __contains__(self, id):
        return id in self._by_id

    def __iter__(self):
        return iter(self._by_id.values())

    def rank(self, id) -> int:
        return self._rank[id]

    def sort_key(self, id):
        sym = self._by_id[id]
        return (tuple(sorted(sym.subsystems)), self._rank[id])


@dataclass(frozen=True)
class Word:
    """Ordered product of symbol ids; the empty word is the identity."""

    factors: tuple = ()

    def __len__(self):
        return len(self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def is_identity(self) -> bool:
        return not self.factors

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.factors + other.factors)

    def adjoint(self, table: SymbolTable) -> "Word":
        for f in self.factors:
            if not table[f].hermitian:
                raise AlgebraError(f"adjoint of non-hermitian symbol {f!r} unsupported")
        return Word(tuple(reversed(self.factors)))

    def __repr__(self):
        return "1" if self.is_identity else "*".join(self.factors)


@dataclass(frozen=True)
class NormalForm:
    """Either zero or ``coeff * word`` with ``coeff != 0``."""

    coeff: complex
    word: Word

    @property
    def is_zero(self) -> bool:
        return self.coeff == 0


ZERO = NormalForm(0.0, Word())


@dataclass
class RewriteRuleSet:
    """Pair rewrite rules plus a commutation relation.

    Products of two adjacent symbols rewrite, in priority order, by
    absorption, orthogonality, idempotence/involution and finally explicit
    fixed-product rules; each rewrite strictly shortens the word.  Symbols
    on disjoint subsystems commute, as do members of ``commuting_families``.
    """

    table: SymbolTable
    orthogonal_families: list = field(default_factory=list)
    commuting_families: list = field(default_factory=list)
    extra_pair_rules: dict = field(default_factory=dict)
    max_steps: int = 10_000

    def __post_init__(self):
        self._pair: dict[tuple, tuple] = {}
        self._commuting_pairs: set[tuple] = set()
        for fam in self.commuting_families:
            fam = list(fam)
            for i, a in enumerate(fam):
                for b in fam[i + 1:]:
                    self._commuting_pairs.add((a, b))
                    self._commuting_pairs.add((b, a))
        # priority: absorption > orthogonality > idempotence/involution > extra
        for a, b in self.extra_pair_rules:
            coeff, repl = self.extra_pair_rules[(a, b)]
            if len(repl) >= 2:
                raise AlgebraError("fixed-product rules must strictly shorten words")
            self._add_rule(a, b, coeff, tuple(repl))
            # closure under adjoints (all symbols hermitian)
            ra, rb = b, a
            radj = tuple(reversed(repl))
            exist = self._pair.get((ra, rb))
            if exist is None:
                self._add_rule(ra, rb, complex(coeff).conjugate(), radj)
            elif exist != (complex(coeff).conjugate(), radj):
                raise AlgebraError(f"rule set not closed under adjoints at ({ra},{rb})")
        for sym in self.table:
            if sym.idempotent:
                self._add_rule(sym.id, sym.id, 1.0, (sym.id,), force=True)
            if sym.involutive:
                self._add_rule(sym.id, sym.id, 1.0, (), force=True)
            for x in sym.absorbs:
                self._add_rule(sym.id, x, 1.0, (x,), force=True)
                self._add_rule(x, sym.id, 1.0, (x,), force=True)
        for fam in self.orthogonal_families:
            fam = list(fam)
            for a in fam:
                for b in fam:
                    if a != b:
                        self._add_rule(a, b, 0.0, (), force=True)

    def _add_rule(self, a, b, coeff, repl, force=False):
        key = (a, b)
        if key in self._pair and not force:
            if self._pair[key] != (coeff, repl):
                raise AlgebraError(f"conflicting rules for pair {key}")
            return
        self._pair[key] = (complex(coeff), tuple(repl))

    def pair_rule(self, a, b):
        return self._pair.get((a, b))

    def commutes(self, a, b) -> bool:
        if (a, b) in self._commuting_pairs:
            return True
        sa, sb = self.table[a], self.table[b]
        return bool(sa.subsystems) and bool(sb.subsystems) and \
            not (sa.subsystems & sb.subsystems)


def _lex_min_order(ids, rules: RewriteRuleSet):
    """Lexicographically least representative of the commutation class."""
    key = rules.table.sort_key
    rem = list(ids)
    out = []
    while rem:
        best_i = None
        for i, s in enumerate(rem):
            if all(rules.commutes(s, t) for t in rem[:i]):
                if best_i is None or key(s) < key(rem[best_i]):
                    best_i = i
        out.append(rem.pop(best_i))
    return out


def normalize(w: Word, rules: RewriteRuleSet) -> NormalForm:
    """Exhaustively rewrite ``w``; deterministic fixed point or zero."""
    for f in w.factors:
        if f not in rules.table:
            raise AlgebraError(f"unregistered symbol {f!r}")
    coeff = complex(1.0)
    ids = list(w.factors)
    for _ in range(rules.max_steps):
        ids = _lex_min_order(ids, rules)
        changed = False
        i = 0
        while i < len(ids) - 1:
            rule = rules.pair_rule(ids[i], ids[i + 1])
            if rule is not None:
                rc, repl = rule
                if rc == 0:
                    return ZERO
                coeff *= rc
                ids[i:i + 2] = list(repl)
                changed = True
                break
            i += 1
        if not changed:
            return NormalForm(coeff, Word(tuple(ids)))
    raise AlgebraError("rewrite did not terminate; malformed rule set")


def word_sort_key(w: Word, table: SymbolTable):
    return (len(w.factors), tuple(table.rank(f) for f in w.factors))


def generate_monomials(symbols, max_order: int, rules: RewriteRuleSet,
                       extra_words=()) -> list[Word]:
    """All canonical products of length 0..K over ``symbols`` plus extras.

    The identity comes first; duplicates (words equal after reduction) are
    merged; products reducing to zero are dropped.
    """
    if max_order < 0:
        raise AlgebraError("max_order must be >= 0")
    table = rules.table
    ids = [s.id if isinstance(s, OperatorSymbol) else s for s in symbols]
    seen = {Word(): None}
    frontier = [Word()]
    for _ in range(max_order):
        nxt = []
        for w in frontier:
            for s in ids:
                nf = normalize(Word(w.factors + (s,)), rules)
                if nf.is_zero or nf.word in seen:
                    continue
                seen[nf.word] = None
                nxt.append(nf.word)
        frontier = nxt
    for w in extra_words:
        nf = normalize(w, rules)
        if nf.is_zero or nf.word in seen:
            continue
        seen[nf.word] = None
    out = sorted(seen, key=lambda w: word_sort_key(w, table))
    assert out[0].is_identity
    return out


@dataclass(frozen=True)
class BlockKey:
    """Canonical representative of a block equivalence class.

    ``adjoint``: the placement holds the conjugate transpose of the class
    representative.  ``scalar``: multiplicative factor picked up during
    reduction.  ``word is None`` marks the zero class.
    """

    word: Word | None
    adjoint: bool = False
    scalar: complex = 1.0

    @property
    def is_zero(self):
        return self.word is None


def _cyclic_rotations(w: Word):
    f = w.factors
    return [Word(f[i:] + f[:i]) for i in range(max(1, len(f)))]


def _class_closure(w0: Word, rules: RewriteRuleSet, theta_kind: str):
    """Orbit of ``w0`` under adjoint (and cyclic rotation for trace maps).

    Returns ``(seen, self_adjoint)`` where ``seen`` maps each reachable word
    to its orientation flag, or ``(None, True)`` when a trace rotation
    exposes a zero (the whole class is zero).  Rotations that reduce must do
    so with unit coefficient; other scalars never arise from the supported
    rule classes.
    """
    table = rules.table
    seen: dict[Word, bool] = {}
    self_adjoint = False
    stack = [(w0, False)]
    while stack:
        w, flag = stack.pop()
        if w in seen:
            if seen[w] != flag:
                self_adjoint = True
            continue
        seen[w] = flag
        adj = normalize(w.adjoint(table), rules)
        if adj.coeff != 1.0:
            raise AlgebraError("non-unit scalar in adjoint closure")
        stack.append((adj.word, not flag))
        if theta_kind == "trace":
            for r in _cyclic_rotations(w):
                rn = normalize(r, rules)
                if rn.is_zero:
                    return None, True
                if rn.coeff != 1.0:
                    raise AlgebraError("non-unit scalar in cyclic closure")
                stack.append((rn.word, flag))
    return seen, self_adjoint


def class_is_self_adjoint(rep: Word, rules: RewriteRuleSet,
                          theta_kind: str = "identity") -> bool:
    """True when the class of ``rep`` equals its own adjoint class."""
    seen, self_adjoint = _class_closure(rep, rules, theta_kind)
    return True if seen is None else self_adjoint


def block_key(u: Word, v: Word, rules: RewriteRuleSet,
              theta_kind: str = "identity") -> BlockKey:
    """Canonical class of the block ``u v*`` (cyclic classes for trace maps)."""
    table = rules.table
    nf = normalize(u * v.adjoint(table), rules)
    if nf.is_zero:
        return BlockKey(None)
    seen, _ = _class_closure(nf.word, rules, theta_kind)
    if seen is None:
        return BlockKey(None)
    rep = min(seen, key=lambda w: word_sort_key(w, table))
    return BlockKey(rep, seen[rep], nf.coeff)
