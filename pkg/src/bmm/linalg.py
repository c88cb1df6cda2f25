"""Dense Hermitian linear algebra and the state/measurement constructors.

Everything works on plain numpy arrays; the helpers here validate the
invariants (hermiticity, normalisation, trace preservation) at construction
time and provide the complex-to-real symmetric embedding used at the solver
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

HERM_ATOL = 1e-12
KRAUS_ATOL = 1e-10


class LinalgError(ValueError):
    pass


def hermitian(m, atol=HERM_ATOL) -> np.ndarray:
    """Validate and symmetrise a Hermitian matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinalgError(f"not square: {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > atol:
        raise LinalgError("matrix is not hermitian within tolerance")
    return 0.5 * (m + m.conj().T)


def state_vector(v, atol=HERM_ATOL) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    n = np.linalg.norm(v)
    if abs(n - 1.0) > atol:
        raise LinalgError(f"state vector norm {n} != 1")
    return v


def ketbra(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class KrausChannel:
    """A CPTP map given by Kraus operators; trace preservation is checked."""

    kraus: tuple

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        object.__setattr__(self, "kraus", ks)
        n = ks[0].shape[1]
        s = sum(k.conj().T @ k for k in ks)
        if np.max(np.abs(s - np.eye(n))) > KRAUS_ATOL:
            raise LinalgError("Kraus operators do not sum to identity")

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return sum(k @ rho @ k.conj().T for k in self.kraus)


def fourier_basis(d: int) -> list[np.ndarray]:
    """The d vectors (1/sqrt d) sum_j w^{kj}|j>, mutually unbiased with the
    computational basis."""
    if d < 2:
        raise LinalgError("dimension must be >= 2")
    w = np.exp(2j * np.pi / d)
    return [np.array([w ** (k * j) for j in range(d)]) / math.sqrt(d)
            for k in range(d)]


def dicke_state(n: int, d: int, k) -> np.ndarray:
    """Uniform superposition over all arrangements with occupation vector k."""
    k = tuple(int(x) for x in k)
    if len(k) != d or any(x < 0 for x in k):
        raise LinalgError("occupation vector must have d nonnegative entries")
    if sum(k) != n:
        raise LinalgError(f"occupations sum to {sum(k)}, expected {n}")
    base = []
    for j, kj in enumerate(k):
        base.extend([j] * kj)
    vec = np.zeros(d ** n, dtype=complex)
    for perm in set(permutations(base)):
        idx = 0
        for p in perm:
            idx = idx * d + p
        vec[idx] = 1.0
    return vec / np.linalg.norm(vec)


def standard_dicke_occupations(n: int, d: int) -> tuple:
    """The occupation family k_j = ceil((n - j) / d)."""
    return tuple(math.ceil((n - j) / d) for j in range(d))


def hesse_sic() -> list[np.ndarray]:
    """The nine qutrit states with pairwise overlap-squared 1/4."""
    t = np.exp(2j * np.pi / 3)
    cols = np.array([
        [0, 0, 0, -1, -t**2, -t, 1, t, t**2],
        [1, t, t**2, 0, 0, 0, -1, -t**2, -t],
        [-1, -t**2, -t, 1, t, t**2, 0, 0, 0],
    ], dtype=complex)
    return [cols[:, x] / np.linalg.norm(cols[:, x]) for x in range(9)]


def isotropic_mix(rho, v: float) -> np.ndarray:
    """v * rho + (1 - v) * I / n."""
    if not 0.0 <= v <= 1.0:
        raise LinalgError(f"visibility {v} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    return v * rho + (1.0 - v) * np.eye(n) / n


def phase_damping_channel(d: int, gamma: float) -> KrausChannel:
    if not 0.0 <= gamma <= 1.0:
        raise LinalgError(f"damping {gamma} outside [0, 1]")
    k0 = np.zeros((d, d), dtype=complex)
    k0[0, 0] = 1.0
    for l in range(1, d):
        k0[l, l] = math.sqrt(1.0 - gamma)
    ks = [k0]
    for j in range(1, d):
        kj = np.zeros((d, d), dtype=complex)
        kj[j, j] = math.sqrt(gamma)
        ks.append(kj)
    return KrausChannel(tuple(ks))


def phase_damping_apply(psi, gamma: float) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return phase_damping_channel(psi.size, gamma).apply(ketbra(psi))


def partial_transpose(m, dims, subsystem="A") -> np.ndarray:
    """Transpose one tensor factor of a bipartite matrix."""
    da, db = dims
    m = np.asarray(m, dtype=complex)
    if m.shape != (da * db, da * db):
        raise LinalgError(f"shape {m.shape} incompatible with dims {dims}")
    t = m.reshape(da, db, da, db)
    if subsystem == "A":
        t = t.transpose(2, 1, 0, 3)
    elif subsystem == "B":
        t = t.transpose(0, 3, 2, 1)
    else:
        raise LinalgError("subsystem must be 'A' or 'B'")
    return t.reshape(da * db, da * db)


def partial_trace(m, dims, keep) -> np.ndarray:
    """Trace out all tensor factors except those in ``keep`` (sorted order)."""
    dims = list(dims)
    m = np.asarray(m, dtype=complex)
    n = len(dims)
    keep = sorted(keep)
    t = m.reshape(dims + dims)
    for sub in sorted(set(range(n)) - set(keep), reverse=True):
        t = np.trace(t, axis1=sub, axis2=sub + (t.ndim // 2))
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(dk, dk)


def realify(h) -> np.ndarray:
    """Embed a complex hermitian matrix as [[X, -Y], [Y, X]]; PSD iff input is,
    with every eigenvalue doubled in multiplicity."""
    h = np.asarray(h, dtype=complex)
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def unrealify(g) -> np.ndarray:
    """Left inverse of :func:`realify` (averages the two copies)."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0] // 2
    x = 0.5 * (g[:n, :n] + g[n:, n:])
    y = 0.5 * (g[n:, :n] - g[:n, n:])
    return x + 1j * y


def random_pure_state(dims, seed) -> np.ndarray:
    """Haar-random global pure state over the listed subsystem dimensions.

    numpy PCG64 with gaussian amplitudes; the same seed always reproduces
    the same vector.
    """
    dims = [int(d) for d in (dims if np.iterable(dims) else [dims])]
    n = int(np.prod(dims))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_density_matrix(dim, seed, rank=None) -> np.ndarray:
    """Normalised Wishart state of the given rank (default full)."""
    rng = np.random.default_rng(seed)
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def matrix_to_json(m) -> list:
    """Row-major nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])


def min_eig(h) -> float:
    return float(np.linalg.eigvalsh(hermitian(h, atol=1e-8)).min())
