"""Real-coordinate conic program representation.

A program owns a flat vector of real scalar coordinates.  PSD constraints
are affine matrix-valued maps of the coordinates; complex hermitian cones
are embedded as real symmetric matrices of twice the order at the solver
boundary, which preserves semidefiniteness and doubles each eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ProgramError(ValueError):
    pass


class PSDCone:
    """Affine map  S(x) = C + sum_j x_j E_j  constrained to be PSD.

    Entries are specified on the upper triangle (p <= q); the hermitian
    mirror image is implied.  ``field`` selects complex hermitian or real
    symmetric blocks.
    """

    def __init__(self, name: str, size: int, field: str = "complex"):
        if field not in ("complex", "real"):
            raise ProgramError(f"bad field {field!r}")
        self.name = name
        self.size = size
        self.field = field
        # parallel entry arrays, upper triangle only
        self.coord: list[int] = []
        self.pos_p: list[int] = []
        self.pos_q: list[int] = []
        self.value: list[complex] = []
        self.const: dict[tuple, complex] = {}

    @property
    def embedded_size(self) -> int:
        return 2 * self.size if self.field == "complex" else self.size

    def add_term(self, p: int, q: int, coord: int, value: complex):
        """Add ``value * x[coord]`` to entry (p, q); (q, p) gets the conjugate."""
        p, q, coord = int(p), int(q), int(coord)
        if p > q:
            p, q, value = q, p, np.conj(value)
        value = complex(value)
        if p == q and abs(value.imag) > 1e-12:
            raise ProgramError(f"non-real diagonal coefficient at ({p},{p})")
        if self.field == "real" and abs(value.imag) > 1e-12:
            raise ProgramError("complex coefficient in a real cone")
        if not (0 <= p <= q < self.size):
            raise ProgramError(f"entry ({p},{q}) outside cone of size {self.size}")
        self.coord.append(coord)
        self.pos_p.append(p)
        self.pos_q.append(q)
        self.value.append(value)

    def add_const(self, p: int, q: int, value: complex):
        p, q = int(p), int(q)
        if p > q:
            p, q, value = q, p, np.conj(value)
        value = complex(value)
        if p == q and abs(value.imag) > 1e-12:
            raise ProgramError(f"non-real diagonal constant at ({p},{p})")
        if not (0 <= p <= q < self.size):
            raise ProgramError(f"entry ({p},{q}) outside cone of size {self.size}")
        self.const[(p, q)] = self.const.get((p, q), 0.0) + value

    def add_const_matrix(self, m):
        m = np.asarray(m)
        for p in range(self.size):
            for q in range(p, self.size):
                if m[p, q] != 0:
                    self.add_const(p, q, m[p, q])

    def value_at(self, x) -> np.ndarray:
        """Evaluate S(x) as a dense (complex or real) hermitian matrix."""
        dtype = complex if self.field == "complex" else float
        s = np.zeros((self.size, self.size), dtype=dtype)
        for (p, q), v in self.const.items():
            s[p, q] += v if dtype is complex else v.real
            if p != q:
                s[q, p] += np.conj(v) if dtype is complex else v.real
        for c, p, q, v in zip(self.coord, self.pos_p, self.pos_q, self.value):
            vv = v if dtype is complex else v.real
            s[p, q] += vv * x[c]
            if p != q:
                s[q, p] += (np.conj(v) if dtype is complex else v.real) * x[c]
        return s


@dataclass
class LinearRow:
    coords: np.ndarray
    values: np.ndarray
    rhs: float
    label: str = ""


class HermitianVariable:
    """Coordinate block for an n x n hermitian (or real symmetric) matrix
    variable, with optional entry sparsity mask."""

    def __init__(self, prog: "ConicProgram", name: str, n: int,
                 real: bool = False, mask=None):
        self.n = n
        self.real = real
        self.layout = {}
        count = 0
        for a in range(n):
            for b in range(a, n):
                if mask is not None and not mask[a][b]:
                    continue
                self.layout[(a, b)] = count
                count += 1 if (a == b or real) else 2
        self.start = prog.add_coords(count, name)
        self.count = count

    def entry_terms(self, a, b):
        """[(coord, complex coeff)] for entry (a, b); empty when masked."""
        conj = a > b
        if conj:
            a, b = b, a
        off = self.layout.get((a, b))
        if off is None:
            return []
        off += self.start
        if a == b or self.real:
            return [(off, 1.0)]
        return [(off, 1.0), (off + 1, -1j if conj else 1j)]

    def trace_terms(self, coeff=1.0):
        out = []
        for a in range(self.n):
            for c, v in self.entry_terms(a, a):
                out.append((c, coeff * np.real(v)))
        return out

    def add_to_cone(self, cone: PSDCone, coeff=1.0, offset=0):
        for (a, b), off in self.layout.items():
            cone.add_term(offset + a, offset + b, self.start + off, coeff)
            if a != b and not self.real:
                cone.add_term(offset + a, offset + b, self.start + off + 1,
                              1j * coeff)

    def value(self, x):
        out = np.zeros((self.n, self.n),
                       dtype=float if self.real else complex)
        for (a, b), off in self.layout.items():
            v = x[self.start + off]
            if a != b and not self.real:
                v = v + 1j * x[self.start + off + 1]
            out[a, b] = v
            if a != b:
                out[b, a] = np.conj(v)
        return out


@dataclass
class ConicProgram:
    """Objective, equality and inequality rows, and PSD cones over real coords."""

    n: int = 0
    names: dict = field(default_factory=dict)
    cones: list = field(default_factory=list)
    eq_rows: list = field(default_factory=list)
    ineq_rows: list = field(default_factory=list)  # a.x <= rhs
    obj: dict = field(default_factory=dict)        # coord -> coeff
    obj_const: float = 0.0
    sense: str = "min"

    def add_coords(self, k: int, name: str | None = None) -> int:
        start = self.n
        self.n += k
        if name is not None:
            if name in self.names:
                raise ProgramError(f"duplicate coordinate name {name!r}")
            self.names[name] = (start, k)
        return start

    def add_scalar(self, name: str) -> int:
        return self.add_coords(1, name)

    def scalar_index(self, name: str) -> int:
        start, k = self.names[name]
        if k != 1:
            raise ProgramError(f"{name!r} is not a scalar")
        return start

    def add_cone(self, name: str, size: int, field: str = "complex") -> PSDCone:
        cone = PSDCone(name, size, field)
        self.cones.append(cone)
        return cone

    def _row(self, terms, rhs, label):
        coords, values = [], []
        acc: dict[int, float] = {}
        for c, v in terms:
            v = float(v)
            if v != 0.0:
                acc[c] = acc.get(c, 0.0) + v
        for c, v in sorted(acc.items()):
            coords.append(c)
            values.append(v)
        return LinearRow(np.array(coords, dtype=int),
                         np.array(values, dtype=float), float(rhs), label)

    def add_eq(self, terms, rhs, label=""):
        row = self._row(terms, rhs, label)
        if row.coords.size == 0 and abs(row.rhs) > 1e-12:
            raise ProgramError(f"inconsistent constant equality ({label})")
        if row.coords.size:
            self.eq_rows.append(row)

    def add_ineq(self, terms, rhs, label=""):
        """sum terms <= rhs."""
        row = self._row(terms, rhs, label)
        if row.coords.size == 0:
            if row.rhs < -1e-12:
                raise ProgramError(f"inconsistent constant inequality ({label})")
            return
        self.ineq_rows.append(row)

    def set_objective(self, terms, const=0.0, sense="max"):
        if sense not in ("max", "min"):
            raise ProgramError(f"bad sense {sense!r}")
        self.obj = {}
        for c, v in terms:
            self.obj[c] = self.obj.get(c, 0.0) + float(v)
        self.obj_const = float(const)
        self.sense = sense

    # -- diagnostics -------------------------------------------------------

    def residuals(self, x) -> dict:
        """Post-hoc feasibility residuals of a coordinate vector."""
        eq = max((abs(float(r.values @ x[r.coords]) - r.rhs) for r in self.eq_rows),
                 default=0.0)
        ineq = max((max(0.0, float(r.values @ x[r.coords]) - r.rhs)
                    for r in self.ineq_rows), default=0.0)
        cone = 0.0
        for c in self.cones:
            s = c.value_at(x)
            w = np.linalg.eigvalsh(0.5 * (s + s.conj().T))
            cone = max(cone, max(0.0, -float(w.min())))
        return {"eq": eq, "ineq": ineq, "cone": cone,
                "max": max(eq, ineq, cone)}

    def objective_value(self, x) -> float:
        return self.obj_const + sum(v * x[c] for c, v in self.obj.items())
