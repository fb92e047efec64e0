"""Regularized free field Phi0, its momentum Pi0 and the smeared delta rho_eps.

Regularization multiplies mode j by F(eps |k_j|), F the mollifier's Fourier
profile; eps = 0 means no regularization (F = 1 on every grid mode).
Derivatives are taken analytically on each mode.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .fock import FieldOperator, FockBasis, ModeGrid, commutator, exp_energy, safe_defect
from .gfcalc import Mollifier


def _position(grid: ModeGrid, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (grid.d,):
        raise ValueError(f"position must have {grid.d} components")
    return x


def mode_weights(grid: ModeGrid, mollifier: Mollifier, eps: float) -> np.ndarray:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return np.ones(grid.M)
    return np.asarray(mollifier(eps * np.linalg.norm(grid.k, axis=1)), dtype=float)


def is_sharp(grid: ModeGrid, mollifier: Mollifier, eps: float) -> bool:
    return bool(np.all(mode_weights(grid, mollifier, eps) == 1.0))


class RegularizedField:
    """Phi0(phi, eps, x, t) and its derivatives as operators; evaluations are cached."""

    def __init__(self, basis: FockBasis, mollifier: Mollifier, eps: float,
                 cache_bytes: int = 128 * 2**20):
        self.basis = basis
        self.grid = basis.grid
        self.mollifier = mollifier
        self.eps = float(eps)
        self.F = mode_weights(self.grid, mollifier, self.eps)
        self.amp = self.F / np.sqrt(2.0 * self.grid.volume * self.grid.k0)
        self._cache: dict = {}
        self._cache_size = max(8, cache_bytes // (16 * basis.dim**2))
        self._lock = threading.Lock()

    def coefficients(self, x, t: float, nt: int = 0, nx=None) -> tuple[np.ndarray, np.ndarray]:
        """(c_minus, c_plus): coefficients of a_j and a+_j in d^nt/dt^nt d^nx/dx^nx Phi0."""
        g = self.grid
        x = _position(g, x)
        nx = np.zeros(g.d, dtype=int) if nx is None else np.atleast_1d(np.asarray(nx, dtype=int))
        theta = g.k0 * t - g.k @ x
        plus = self.amp * np.exp(1j * theta) * (1j * g.k0) ** nt * np.prod((-1j * g.k) ** nx, axis=1)
        minus = self.amp * np.exp(-1j * theta) * (-1j * g.k0) ** nt * np.prod((1j * g.k) ** nx, axis=1)
        return minus, plus

    def derivative(self, x, t: float, nt: int = 0, nx=None) -> FieldOperator:
        key = (tuple(_position(self.grid, x)), float(t), int(nt),
               None if nx is None else tuple(np.atleast_1d(nx)))
        op = self._cache.get(key)
        if op is not None:
            return op
        minus, plus = self.coefficients(x, t, nt, nx)
        op = FieldOperator(self.basis, self.basis.ladder_matrix(minus, plus))
        with self._lock:
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            self._cache[key] = op
        return op

    def laplacian(self, x, t: float) -> FieldOperator:
        out = None
        for i in range(self.grid.d):
            nx = np.zeros(self.grid.d, dtype=int)
            nx[i] = 2
            term = self.derivative(x, t, 0, nx)
            out = term if out is None else out + term
        return out


def free_field(rf: RegularizedField, x, t: float) -> FieldOperator:
    return rf.derivative(x, t)


def conjugate_momentum(rf: RegularizedField, x, t: float) -> FieldOperator:
    return rf.derivative(x, t, nt=1)


def field_derivative(rf: RegularizedField, x, t: float, nt: int = 0, nx=None) -> FieldOperator:
    return rf.derivative(x, t, nt, nx)


@dataclass(frozen=True)
class RegularizedDelta:
    grid: ModeGrid
    mollifier: Mollifier
    eps: float

    @property
    def F2(self) -> np.ndarray:
        return mode_weights(self.grid, self.mollifier, self.eps) ** 2

    def __call__(self, y) -> np.ndarray:
        return rho(self, y)

    def gradient(self, y) -> np.ndarray:
        """d rho / dy, shape (..., d)."""
        y = np.asarray(y, dtype=float).reshape(-1, self.grid.d)
        s = np.sin(y @ self.grid.k.T) * self.F2
        return -(s @ self.grid.k) / self.grid.volume


def rho(reg_delta: RegularizedDelta, y):
    """L^-d sum_j F(eps k_j)^2 cos(k_j . y); scalar in, scalar out."""
    g = reg_delta.grid
    arr = np.asarray(y, dtype=float)
    scalar = arr.ndim == 0 or (g.d > 1 and arr.ndim == 1)
    pts = arr.reshape(-1, g.d)
    vals = np.cos(pts @ g.k.T) @ reg_delta.F2 / g.volume
    return float(vals[0]) if scalar else vals


@dataclass
class CCRReport:
    commutator_scalar: complex
    target: complex
    defect: float
    phi_phi_defect: float
    pi_pi_defect: float
    level: int

    @property
    def max_defect(self) -> float:
        return max(self.defect, self.phi_phi_defect, self.pi_pi_defect)

    def to_dict(self) -> dict:
        return {"commutator_scalar": [self.commutator_scalar.real, self.commutator_scalar.imag],
                "target": [self.target.real, self.target.imag], "defect": self.defect,
                "phi_phi_defect": self.phi_phi_defect, "pi_pi_defect": self.pi_pi_defect,
                "level": self.level}


def ccr_check(rf: RegularizedField, x, x2, t: float, level: int | None = None) -> CCRReport:
    """Equal-time commutators of Phi0, Pi0 on states with total <= level (default n_max - 2)."""
    if level is None:
        level = max(rf.basis.n_max - 2, 0)
    phi, phi2 = free_field(rf, x, t), free_field(rf, x2, t)
    pi, pi2 = conjugate_momentum(rf, x, t), conjugate_momentum(rf, x2, t)
    delta = RegularizedDelta(rf.grid, rf.mollifier, rf.eps)
    y = _position(rf.grid, x) - _position(rf.grid, x2)
    target = 1j * rho(delta, y if rf.grid.d > 1 else y[0])
    c = commutator(phi, pi2)
    return CCRReport(complex(c.matrix[0, 0]), target, safe_defect(c, target, level),
                     safe_defect(commutator(phi, phi2), 0.0, level),
                     safe_defect(commutator(pi, pi2), 0.0, level), level)


def klein_gordon_residual(rf: RegularizedField, x, t: float) -> float:
    """max |d_t^2 Phi0 - Laplacian Phi0 + m^2 Phi0| over all matrix entries."""
    r = rf.derivative(x, t, nt=2) - rf.laplacian(x, t) + rf.grid.m**2 * free_field(rf, x, t)
    return float(np.max(np.abs(r.matrix)))


def translation_defect(rf: RegularizedField, x, t: float, theta: float) -> float:
    """max over Phi0, Pi0 of |e^{i theta P0} A(x,t) e^{-i theta P0} - A(x, t+theta)|."""
    u = exp_energy(rf.basis, theta)
    ud = exp_energy(rf.basis, -theta)
    out = 0.0
    for nt in (0, 1):
        lhs = u @ rf.derivative(x, t, nt) @ ud
        out = max(out, float(np.max(np.abs(lhs.matrix - rf.derivative(x, t + theta, nt).matrix))))
    return out
