"""Truncated bosonic Fock space on a periodic box.

Occupation vectors with total particle number <= n_max are enumerated in
graded-lexicographic order, so every "safe sector" (total <= level) is an index
prefix. Operators are stored as dense complex matrices; ladder operators drop
amplitudes that would leave the truncation, which keeps a(psi) and a+(conj psi)
exact mutual adjoints.

Smearing is bilinear: a+(psi) = sum_j sqrt(w) psi_j a+_j and a-(psi) = sum_j sqrt(w) psi_j a_j,
so [a-(psi), a+(psi')] = w * sum_j psi_j psi'_j on the safe sector.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class ModeGrid:
    d: int = 1
    L: float = 2 * math.pi
    J: int = 1
    m: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.J < 0:
            raise ValueError("need d >= 1 and J >= 0")
        if self.L <= 0 or self.m <= 0:
            raise ValueError("box length and mass must be positive")

    @cached_property
    def indices(self) -> np.ndarray:
        """Integer mode labels, shape (M, d), lexicographic in j."""
        r = range(-self.J, self.J + 1)
        return np.array(list(itertools.product(r, repeat=self.d)), dtype=int).reshape(-1, self.d)

    @property
    def M(self) -> int:
        return (2 * self.J + 1) ** self.d

    @cached_property
    def k(self) -> np.ndarray:
        return 2 * np.pi * self.indices / self.L

    @cached_property
    def k0(self) -> np.ndarray:
        return np.sqrt(np.sum(self.k**2, axis=1) + self.m**2)

    @property
    def w(self) -> float:
        return (2 * np.pi / self.L) ** self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def k_max(self) -> float:
        return float(np.max(np.linalg.norm(self.k, axis=1))) if self.J > 0 else 0.0

    def describe(self) -> dict:
        return {"d": self.d, "L": self.L, "J": self.J, "m": self.m}


class FockBasis:
    """Occupation-number basis with sum(n) <= n_max; immutable."""

    def __init__(self, grid: ModeGrid, n_max: int):
        if n_max < 0:
            raise ValueError("n_max must be nonnegative")
        self.grid = grid
        self.n_max = int(n_max)
        states = []
        for s in range(self.n_max + 1):
            block = set()
            for combo in itertools.combinations_with_replacement(range(grid.M), s):
                occ = [0] * grid.M
                for j in combo:
                    occ[j] += 1
                block.add(tuple(occ))
            states.extend(sorted(block))
        self.states = np.array(states, dtype=int).reshape(len(states), grid.M)
        self.states.setflags(write=False)
        self._index = {s: i for i, s in enumerate(states)}
        self.totals = self.states.sum(axis=1)
        self.totals.setflags(write=False)
        self.energies = self.states @ grid.k0
        self.energies.setflags(write=False)
        # lowering triplets: a_j |n> = sqrt(n_j) |n - e_j>
        rows, cols, modes, vals = [], [], [], []
        for c, occ in enumerate(states):
            for j, nj in enumerate(occ):
                if nj:
                    lowered = list(occ)
                    lowered[j] -= 1
                    rows.append(self._index[tuple(lowered)])
                    cols.append(c)
                    modes.append(j)
                    vals.append(math.sqrt(nj))
        self._rows = np.array(rows, dtype=int)
        self._cols = np.array(cols, dtype=int)
        self._modes = np.array(modes, dtype=int)
        self._vals = np.array(vals, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.states)

    @staticmethod
    def expected_dim(M: int, n_max: int) -> int:
        return sum(math.comb(M + s - 1, s) for s in range(n_max + 1))

    def index(self, occupation) -> int:
        return self._index[tuple(int(v) for v in occupation)]

    def occupation(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.states[i])

    def sector_size(self, level: int) -> int:
        """Number of basis states with total particle number <= level."""
        if level < 0:
            return 0
        return int(np.searchsorted(self.totals, min(level, self.n_max), side="right"))

    def safe_indices(self, margin: int) -> slice:
        return slice(0, self.sector_size(self.n_max - margin))

    def describe(self) -> dict:
        return {**self.grid.describe(), "n_max": self.n_max}

    def same_as(self, other: "FockBasis") -> bool:
        return self is other or (self.grid == other.grid and self.n_max == other.n_max)

    def vacuum(self) -> "FockVector":
        amp = np.zeros(self.dim, dtype=complex)
        amp[0] = 1.0
        return FockVector(self, amp)

    def basis_vector(self, occupation) -> "FockVector":
        amp = np.zeros(self.dim, dtype=complex)
        amp[self.index(occupation)] = 1.0
        return FockVector(self, amp)

    def ladder_matrix(self, c_minus: np.ndarray | None, c_plus: np.ndarray | None) -> np.ndarray:
        """sum_j c_minus[j] a_j + c_plus[j] a+_j as a dense matrix."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        if c_minus is not None:
            np.add.at(out, (self._rows, self._cols), np.asarray(c_minus)[self._modes] * self._vals)
        if c_plus is not None:
            np.add.at(out, (self._cols, self._rows), np.asarray(c_plus)[self._modes] * self._vals)
        return out


@dataclass
class FockVector:
    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude count does not match basis")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def normalized(self) -> "FockVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.basis, self.amplitudes / n)

    def __add__(self, other: "FockVector") -> "FockVector":
        _same_basis(self.basis, other.basis)
        return FockVector(self.basis, self.amplitudes + other.amplitudes)

    def __rmul__(self, c) -> "FockVector":
        return FockVector(self.basis, c * self.amplitudes)

    def to_dict(self) -> dict:
        nz = np.nonzero(self.amplitudes)[0]
        return {"basis": self.basis.describe(),
                "amplitudes": [[int(i), float(self.amplitudes[i].real), float(self.amplitudes[i].imag)]
                               for i in nz]}

    @classmethod
    def from_dict(cls, d: dict, basis: FockBasis | None = None) -> "FockVector":
        basis = basis or _basis_from(d["basis"])
        amp = np.zeros(basis.dim, dtype=complex)
        for i, re, im in d["amplitudes"]:
            amp[i] = complex(re, im)
        return cls(basis, amp)


def _same_basis(a: FockBasis, b: FockBasis) -> None:
    if not a.same_as(b):
        raise ValueError("basis mismatch")


def _basis_from(desc: dict) -> FockBasis:
    grid = ModeGrid(desc["d"], desc["L"], desc["J"], desc["m"])
    return FockBasis(grid, desc["n_max"])


class FieldOperator:
    """Dense operator on a truncated Fock space. Immutable once built."""

    HERMITIAN_TOL = 1e-12

    def __init__(self, basis: FockBasis, matrix: np.ndarray):
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (basis.dim, basis.dim):
            raise ValueError("matrix shape does not match basis")
        matrix.setflags(write=False)
        self.basis = basis
        self.matrix = matrix
        self._lock = threading.Lock()
        self._eig = None

    @cached_property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.matrix)))) if self.matrix.size else 1.0

    @cached_property
    def hermitian(self) -> bool:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0)) \
            <= self.HERMITIAN_TOL * self.scale

    @cached_property
    def width(self) -> int:
        r, c = np.nonzero(np.abs(self.matrix) > 1e-14 * self.scale)
        if r.size == 0:
            return 0
        t = self.basis.totals
        return int(np.max(np.abs(t[r] - t[c])))

    # algebra
    def _wrap(self, m) -> "FieldOperator":
        return FieldOperator(self.basis, m)

    def __matmul__(self, other):
        if isinstance(other, FieldOperator):
            _same_basis(self.basis, other.basis)
            return self._wrap(self.matrix @ other.matrix)
        if isinstance(other, FockVector):
            _same_basis(self.basis, other.basis)
            return FockVector(self.basis, self.matrix @ other.amplitudes)
        return NotImplemented

    def __add__(self, other: "FieldOperator"):
        _same_basis(self.basis, other.basis)
        return self._wrap(self.matrix + other.matrix)

    def __sub__(self, other: "FieldOperator"):
        _same_basis(self.basis, other.basis)
        return self._wrap(self.matrix - other.matrix)

    def __neg__(self):
        return self._wrap(-self.matrix)

    def __mul__(self, c):
        return self._wrap(c * self.matrix)

    __rmul__ = __mul__

    def dagger(self) -> "FieldOperator":
        return self._wrap(self.matrix.conj().T)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition (Hermitian operators only)."""
        if not self.hermitian:
            raise ValueError("eigh requires a Hermitian operator")
        with self._lock:
            if self._eig is None:
                h = 0.5 * (self.matrix + self.matrix.conj().T)
                self._eig = np.linalg.eigh(h)
            return self._eig

    def restricted(self, level: int) -> np.ndarray:
        """Columns of states with total <= level (all rows)."""
        return self.matrix[:, : self.basis.sector_size(level)]

    def to_dict(self) -> dict:
        r, c = np.nonzero(self.matrix)
        return {"basis": self.basis.describe(),
                "entries": [[int(i), int(j), float(self.matrix[i, j].real), float(self.matrix[i, j].imag)]
                            for i, j in zip(r, c)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, basis: FockBasis | None = None) -> "FieldOperator":
        basis = basis or _basis_from(d["basis"])
        m = np.zeros((basis.dim, basis.dim), dtype=complex)
        for i, j, re, im in d["entries"]:
            m[i, j] = complex(re, im)
        return cls(basis, m)

    @classmethod
    def identity(cls, basis: FockBasis) -> "FieldOperator":
        return cls(basis, np.eye(basis.dim))


def _mode_coeffs(basis: FockBasis, psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.shape != (basis.grid.M,):
        raise ValueError(f"mode function has {psi.size} components, grid has {basis.grid.M}")
    return math.sqrt(basis.grid.w) * psi


def create(basis: FockBasis, psi) -> FieldOperator:
    """a+(psi) = sum_j sqrt(w) psi_j a+_j, truncated at n_max."""
    return FieldOperator(basis, basis.ladder_matrix(None, _mode_coeffs(basis, psi)))


def annihilate(basis: FockBasis, psi) -> FieldOperator:
    """a-(psi) = sum_j sqrt(w) psi_j a_j (bilinear: psi is not conjugated)."""
    return FieldOperator(basis, basis.ladder_matrix(_mode_coeffs(basis, psi), None))


def energy_operator(basis: FockBasis) -> FieldOperator:
    """Normal-ordered P0 = sum_j k0_j n_j."""
    return FieldOperator(basis, np.diag(basis.energies.astype(complex)))


def exp_energy(basis: FockBasis, theta: float) -> FieldOperator:
    """exp(i theta P0)."""
    return FieldOperator(basis, np.diag(np.exp(1j * theta * basis.energies)))


def inner(f1: FockVector, f2: FockVector) -> complex:
    """<f1, f2>, antilinear in f1."""
    _same_basis(f1.basis, f2.basis)
    return complex(np.vdot(f1.amplitudes, f2.amplitudes))


def commutator(a: FieldOperator, b: FieldOperator) -> FieldOperator:
    return a @ b - b @ a


def safe_defect(op: FieldOperator, target: np.ndarray | complex, level: int) -> float:
    """max |(op - target) restricted to columns with total <= level|; scalar target means c*Id."""
    n = op.basis.sector_size(level)
    block = op.matrix[:, :n]
    if np.isscalar(target):
        ref = np.zeros_like(block)
        ref[:n, :n] = target * np.eye(n)
    else:
        ref = np.asarray(target)[:, :n]
    return float(np.max(np.abs(block - ref), initial=0.0))
