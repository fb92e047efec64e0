"""Hamiltonian assembly and exact evolution for the truncated interacting model.

H0(tau) is assembled by uniform quadrature over the box [-L/2, L/2)^d of

    chi(eps xi) * { 1/2 Pi0^2 + 1/2 |grad Phi0|^2 + 1/2 m^2 Phi0^2 + g/(N+1) Phi0^(N+1) }

with all fields at time tau and powers taken as matrix powers of the truncated
operators. Everything downstream (interacting fields, S-matrix, Dyson series)
is built from Hermitian eigendecompositions, diagonal phases and exact
quadrature, so the identities checked here are matrix identities up to
roundoff.

Safe sectors: an identity involving Phi0^(N+1) is asserted only on columns with
total particle number <= n_max - (N+1), where truncation cannot reach.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg

from .fock import FieldOperator, FockBasis, ModeGrid, energy_operator, exp_energy, safe_defect
from .field import RegularizedDelta, RegularizedField, is_sharp, mode_weights
from .gfcalc import Cutoff, Mollifier
from .quadrature import chebyshev_cumulative


class StepSizeError(RuntimeError):
    """ODE integration lost unitarity beyond the accepted threshold."""


@lru_cache(maxsize=16)
def get_basis(grid: ModeGrid, n_max: int) -> FockBasis:
    return FockBasis(grid, n_max)


@lru_cache(maxsize=4)
def _field(grid: ModeGrid, n_max: int, mollifier: Mollifier, eps: float) -> RegularizedField:
    return RegularizedField(get_basis(grid, n_max), mollifier, eps)


@dataclass(frozen=True)
class ModelParams:
    grid: ModeGrid = ModeGrid()
    n_max: int = 3
    mollifier: Mollifier = Mollifier()
    cutoff: Cutoff | None = None
    eps: float = 0.0
    g: float = 0.0
    N: int = 3
    tau: float = 0.0
    Q: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("interaction exponent N must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        q_min = 2 * (self.N + 1) * self.grid.J + 1
        if self.Q is None:
            object.__setattr__(self, "Q", q_min)
        elif self.Q < q_min:
            raise ValueError(f"Q={self.Q} underresolves the quadrature; need Q >= {q_min}")

    @property
    def m(self) -> float:
        return self.grid.m

    @property
    def basis(self) -> FockBasis:
        return get_basis(self.grid, self.n_max)

    @property
    def field(self) -> RegularizedField:
        return _field(self.grid, self.n_max, self.mollifier, self.eps)

    @property
    def delta(self) -> RegularizedDelta:
        return RegularizedDelta(self.grid, self.mollifier, self.eps)

    @property
    def safe_level(self) -> int:
        return self.n_max - (self.N + 1)

    @property
    def sharp(self) -> bool:
        return is_sharp(self.grid, self.mollifier, self.eps) and np.all(self.chi == 1.0)

    def with_(self, **kw) -> "ModelParams":
        if "J" in kw:
            kw["grid"] = replace(kw.pop("grid", self.grid), J=kw.pop("J"))
            kw.setdefault("Q", None)
        return replace(self, **kw)

    @property
    def nodes(self) -> np.ndarray:
        """Quadrature points, shape (Q^d, d)."""
        L = self.grid.L
        line = L * (np.arange(self.Q) - self.Q // 2) / self.Q
        return np.array(list(itertools.product(line, repeat=self.grid.d)))

    @property
    def node_weight(self) -> float:
        return (self.grid.L / self.Q) ** self.grid.d

    @property
    def chi(self) -> np.ndarray:
        if self.cutoff is None or self.eps == 0:
            return np.ones(len(self.nodes))
        return self.cutoff(self.eps * np.linalg.norm(self.nodes, axis=1))

    def describe(self) -> dict:
        return {"grid": self.grid.describe(), "n_max": self.n_max, "mollifier": self.mollifier.label,
                "cutoff": None if self.cutoff is None else self.cutoff.label, "eps": self.eps,
                "g": self.g, "N": self.N, "tau": self.tau, "Q": self.Q}


@dataclass
class HamiltonianBundle:
    H0: FieldOperator
    H_quad: FieldOperator
    V: FieldOperator
    E_zp: float
    defect: FieldOperator
    P0: FieldOperator
    V_unit: FieldOperator


def _power(op: FieldOperator, n: int) -> np.ndarray:
    return np.linalg.matrix_power(op.matrix, n)


def _interaction_unit(p: ModelParams, t: float) -> np.ndarray:
    """(1/(N+1)) sum_q w chi_q Phi0(xi_q, t)^(N+1), i.e. V(t) / g."""
    rf = p.field
    out = np.zeros((p.basis.dim, p.basis.dim), dtype=complex)
    for xi, c in zip(p.nodes, p.chi):
        if c == 0:
            continue
        out += c * _power(rf.derivative(xi, t), p.N + 1)
    return out * p.node_weight / (p.N + 1)


def assemble_hamiltonian(p: ModelParams) -> HamiltonianBundle:
    rf, basis, d = p.field, p.basis, p.grid.d
    quad = np.zeros((basis.dim, basis.dim), dtype=complex)
    for xi, c in zip(p.nodes, p.chi):
        if c == 0:
            continue
        phi = rf.derivative(xi, p.tau).matrix
        pi = rf.derivative(xi, p.tau, nt=1).matrix
        dens = pi @ pi + p.m**2 * (phi @ phi)
        for i in range(d):
            nx = np.zeros(d, dtype=int)
            nx[i] = 1
            grad = rf.derivative(xi, p.tau, 0, nx).matrix
            dens += grad @ grad
        quad += 0.5 * c * dens
    quad *= p.node_weight
    v_unit = FieldOperator(basis, _interaction_unit(p, p.tau))
    H_quad = FieldOperator(basis, quad)
    V = p.g * v_unit
    H0 = H_quad + V
    for name, op in (("H_quad", H_quad), ("V", V), ("H0", H0)):
        if not op.hermitian:
            raise RuntimeError(f"assembled {name} is not Hermitian")
    P0 = energy_operator(basis)
    E_zp = float(quad[0, 0].real)
    defect = H_quad - P0 - FieldOperator(basis, E_zp * np.eye(basis.dim))
    return HamiltonianBundle(H0, H_quad, V, E_zp, defect, P0, v_unit)


def zero_point_energy(p: ModelParams) -> float:
    """Closed form 1/2 sum_j F_j^2 k0_j (chi = 1)."""
    F = mode_weights(p.grid, p.mollifier, p.eps)
    return float(0.5 * np.sum(F**2 * p.grid.k0))


def quadratic_defect_oracle(p: ModelParams) -> np.ndarray:
    """Diagonal of sum_j k0_j (F_j^2 - 1) n_j."""
    F = mode_weights(p.grid, p.mollifier, p.eps)
    return p.basis.states @ (p.grid.k0 * (F**2 - 1.0))


# ---------------------------------------------------------------------------
# exponentials


def exp_hermitian(H: FieldOperator, theta: float) -> FieldOperator:
    """exp(i theta H) by eigendecomposition."""
    lam, vec = H.eigh()
    return FieldOperator(H.basis, (vec * np.exp(1j * theta * lam)) @ vec.conj().T)


def evolve_operator(H: FieldOperator, A: FieldOperator, theta: float) -> FieldOperator:
    """exp(i theta H) A exp(-i theta H)."""
    lam, vec = H.eigh()
    ph = np.exp(1j * theta * lam)
    a = vec.conj().T @ A.matrix @ vec
    return FieldOperator(H.basis, vec @ (ph[:, None] * a * ph.conj()[None, :]) @ vec.conj().T)


def unitarity_defect(U) -> float:
    m = U.matrix if isinstance(U, FieldOperator) else np.asarray(U)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def interacting_field(p: ModelParams, bundle: HamiltonianBundle, x, t: float,
                      nt: int = 0, nx=None) -> FieldOperator:
    """Phi(x, t, tau) (nt=0) or Pi(x, t) (nt=1): H0-conjugate of the free field at tau."""
    return evolve_operator(bundle.H0, p.field.derivative(x, p.tau, nt, nx), t - p.tau)


def s_matrix(p: ModelParams, bundle: HamiltonianBundle, t: float) -> FieldOperator:
    """exp(i (t-tau) P0) exp(-i (t-tau) H0)."""
    theta = t - p.tau
    return exp_energy(p.basis, theta) @ exp_hermitian(bundle.H0, -theta)


# ---------------------------------------------------------------------------
# identity checks


@dataclass
class DerivativeReport:
    h: list[float]
    defects: list[float]
    ratio: float


def heisenberg_derivative_check(p: ModelParams, bundle: HamiltonianBundle, x, t: float,
                                h: float = 1e-2) -> DerivativeReport:
    """Central difference of Phi(x, .) against i[H0, Phi(x, t)] at h and h/2."""
    phi = interacting_field(p, bundle, x, t).matrix
    exact = 1j * (bundle.H0.matrix @ phi - phi @ bundle.H0.matrix)
    defects = []
    for step in (h, h / 2):
        fd = (interacting_field(p, bundle, x, t + step).matrix
              - interacting_field(p, bundle, x, t - step).matrix) / (2 * step)
        defects.append(float(np.max(np.abs(fd - exact))))
    return DerivativeReport([h, h / 2], defects, defects[0] / defects[1])


@dataclass
class FieldEquationReport:
    phi_defect: float
    pi_defect: float
    unsmeared_phi: float
    unsmeared_pi: float
    level: int

    @property
    def smeared_defect(self) -> float:
        return max(self.phi_defect, self.pi_defect)

    @property
    def unsmeared_residual(self) -> float:
        return max(self.unsmeared_phi, self.unsmeared_pi)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(smeared_defect=self.smeared_defect, unsmeared_residual=self.unsmeared_residual)
        return d


def _on_grid(p: ModelParams, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p.grid.d,):
        raise ValueError(f"position must have {p.grid.d} components")
    if not np.any(np.all(np.abs(p.nodes - x) <= 1e-12 * p.grid.L, axis=1)):
        raise ValueError(f"x={x.tolist()} is not a quadrature node")
    return x


def field_equation_check(p: ModelParams, bundle: HamiltonianBundle, x, t: float,
                         level: int | None = None) -> FieldEquationReport:
    """Smeared field equations and the unsmeared residual on the safe sector.

    Both sides at time t are the H0-conjugates of their values at tau, so the
    comparison is done at tau (the co-moving frame) where the safe sector is
    defined.
    """
    x = _on_grid(p, x)
    if level is None:
        level = p.safe_level
    if level < 0:
        raise ValueError(f"n_max={p.n_max} leaves no safe sector for N={p.N}; need n_max >= N+1")
    rf, tau, d = p.field, p.tau, p.grid.d
    H = bundle.H0.matrix
    phi_x = rf.derivative(x, tau).matrix
    pi_x = rf.derivative(x, tau, nt=1).matrix
    dphi = 1j * (H @ phi_x - phi_x @ H)
    dpi = 1j * (H @ pi_x - pi_x @ H)

    rho = p.delta
    r = rho(x - p.nodes) if d > 1 else rho((x - p.nodes)[:, 0])
    gr = rho.gradient(p.nodes - x)
    wts = p.node_weight * p.chi
    phi_rhs = np.zeros_like(H)
    pi_rhs = np.zeros_like(H)
    for q, xi in enumerate(p.nodes):
        if wts[q] == 0:
            continue
        phi = rf.derivative(xi, tau).matrix
        phi_rhs += wts[q] * r[q] * rf.derivative(xi, tau, nt=1).matrix
        term = -(p.m**2) * r[q] * phi - p.g * r[q] * np.linalg.matrix_power(phi, p.N)
        for i in range(d):
            nx = np.zeros(d, dtype=int)
            nx[i] = 1
            term -= gr[q, i] * rf.derivative(xi, tau, 0, nx).matrix
        pi_rhs += wts[q] * term

    lap = rf.laplacian(x, tau).matrix
    kg = lap - p.m**2 * phi_x - p.g * np.linalg.matrix_power(phi_x, p.N)
    B = p.basis
    return FieldEquationReport(
        safe_defect(FieldOperator(B, dphi - phi_rhs), 0.0, level),
        safe_defect(FieldOperator(B, dpi - pi_rhs), 0.0, level),
        safe_defect(FieldOperator(B, dphi - pi_x), 0.0, level),
        safe_defect(FieldOperator(B, dpi - kg), 0.0, level),
        level,
    )


def interacting_ccr_defect(p: ModelParams, bundle: HamiltonianBundle, x, x2, t: float,
                           level: int | None = None) -> float:
    """[Phi(x,t), Pi(x2,t)] - i rho(x - x2) on the safe sector (default n_max - 2)."""
    if level is None:
        level = max(p.n_max - 2, 0)
    phi = interacting_field(p, bundle, x, t)
    pi = interacting_field(p, bundle, x2, t, nt=1)
    y = np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(x2, float))
    target = 1j * p.delta(y if p.grid.d > 1 else y[0])
    # the co-moving frame: conjugate back to tau before restricting
    c = phi @ pi - pi @ phi
    back = evolve_operator(bundle.H0, c, -(t - p.tau))
    return safe_defect(back, target, level)


def theorem2_check(p: ModelParams, bundle: HamiltonianBundle, x, t: float) -> float:
    """max |Phi(x,t,tau) - S^-1 Phi0(x,t) S|, S^-1 by a linear solve."""
    lhs = interacting_field(p, bundle, x, t).matrix
    S = s_matrix(p, bundle, t).matrix
    rhs = np.linalg.solve(S, p.field.derivative(x, t).matrix @ S)
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class Theorem3Report:
    defect: float
    oracle_defect: float
    level: int
    sharp: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _phase_conjugate(basis: FockBasis, A: np.ndarray, s: float) -> np.ndarray:
    # exp(isP0) A exp(-isP0)
    ph = np.exp(1j * s * basis.energies)
    return ph[:, None] * A * ph.conj()[None, :]


def theorem3_generator(p: ModelParams, bundle: HamiltonianBundle, t: float,
                       level: int | None = None) -> tuple[FieldOperator, Theorem3Report]:
    """G(t) = H0(t) - P0 and its comparison with E_zp + V(t).

    V(t) is assembled afresh from Phi0(., t). The difference is the
    phase-conjugated quadratic defect; ``oracle_defect`` compares it with the
    closed form sum_j k0_j (F_j^2 - 1) n_j. Default level: n_max - 1.
    """
    if level is None:
        level = p.n_max - 1
    B = p.basis
    G = _phase_conjugate(B, bundle.H0.matrix, t - p.tau) - bundle.P0.matrix
    target = bundle.E_zp * np.eye(B.dim) + p.g * _interaction_unit(p, t)
    diff = G - target
    oracle = np.diag(quadratic_defect_oracle(p).astype(complex))
    return FieldOperator(B, G), Theorem3Report(
        safe_defect(FieldOperator(B, diff), 0.0, level),
        safe_defect(FieldOperator(B, diff - oracle), 0.0, level),
        level, bool(p.sharp))


def interaction_operator(p: ModelParams, t: float) -> FieldOperator:
    """V(t) = g/(N+1) sum_q w chi Phi0(xi_q, t)^(N+1)."""
    return FieldOperator(p.basis, p.g * _interaction_unit(p, t))


# ---------------------------------------------------------------------------
# ODE, resolvent and series


@dataclass
class EvolutionResult:
    times: list[float]
    operators: list[FieldOperator]
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, with_operators: bool = False) -> dict:
        d = {"times": self.times, "method": self.method, "diagnostics": self.diagnostics}
        if with_operators:
            d["operators"] = [op.to_dict() for op in self.operators]
        return d


def s_matrix_ode(p: ModelParams, bundle: HamiltonianBundle, t: float, dt: float,
                 keep: int = 11) -> EvolutionResult:
    """RK4 for dS/ds = -i (G(s) - E_zp) S, S(tau) = Id.

    The generator at offset s is exp(isP0)(H0 - E_zp)exp(-isP0) - P0, evaluated by
    diagonal phases. The step is adjusted to divide t - tau exactly.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta = t - p.tau
    n = max(1, int(math.ceil(abs(theta) / dt - 1e-9)))
    h = theta / n
    B = p.basis
    A = bundle.H0.matrix - bundle.E_zp * np.eye(B.dim)
    P = bundle.P0.matrix
    E = B.energies

    def rhs(s, S):
        ph = np.exp(1j * s * E)
        K = ph[:, None] * A * ph.conj()[None, :] - P
        return -1j * (K @ S)

    S = np.eye(B.dim, dtype=complex)
    marks = set(np.unique(np.round(np.linspace(0, n, min(keep, n + 1))).astype(int)).tolist())
    times, ops = [p.tau], [FieldOperator(B, S)]
    for i in range(n):
        s = i * h
        k1 = rhs(s, S)
        k2 = rhs(s + h / 2, S + h / 2 * k1)
        k3 = rhs(s + h / 2, S + h / 2 * k2)
        k4 = rhs(s + h, S + h * k3)
        S = S + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if i + 1 in marks:
            times.append(p.tau + (i + 1) * h)
            ops.append(FieldOperator(B, S))
    udef = unitarity_defect(S)
    if udef > 1e-5:
        raise StepSizeError(f"unitarity defect {udef:.3e} at dt={h:.3e}; reduce the step")
    direct = np.exp(1j * theta * bundle.E_zp) * s_matrix(p, bundle, t).matrix
    return EvolutionResult(times, ops, "ode", {
        "dt": h, "steps": n, "unitarity_defect": udef,
        "direct_defect": float(np.max(np.abs(S - direct))),
    })


def hille_yoshida_approx(H: FieldOperator, theta: float, n: int) -> FieldOperator:
    """(Id + (i/n) theta H)^(-n) by n solves against one LU factorization."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    dim = H.basis.dim
    A = np.eye(dim) + (1j * theta / n) * H.matrix
    lu = scipy.linalg.lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu[0]))) == 0:
        raise np.linalg.LinAlgError("singular resolvent")
    X = np.eye(dim, dtype=complex)
    for _ in range(n):
        X = scipy.linalg.lu_solve(lu, X)
    return FieldOperator(H.basis, X)


def interaction_s_matrix(p: ModelParams, bundle: HamiltonianBundle, t: float) -> FieldOperator:
    """exp(i theta P0) exp(-i theta (P0 + V(tau))): the object the Dyson series expands."""
    theta = t - p.tau
    H = bundle.P0 + bundle.V
    return exp_energy(p.basis, theta) @ exp_hermitian(H, -theta)


def dyson_series(p: ModelParams, bundle: HamiltonianBundle, t: float, order: int,
                 nodes: int | None = None) -> FieldOperator:
    """Partial sum through ``order`` of the time-ordered expansion in V(s) = e^{isP0} V e^{-isP0}.

    Nested integrals D_k(s) = -i int_0^s V(s') D_{k-1}(s') ds' use a Chebyshev
    cumulative-integration matrix on [0, theta].
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    B = p.basis
    theta = t - p.tau
    if order == 0 or theta == 0:
        return FieldOperator.identity(B)
    if nodes is None:
        spread = float(B.energies.max() - B.energies.min())
        nodes = 24 + 2 * int(math.ceil(spread * abs(theta)))
    s, K = chebyshev_cumulative(nodes, 0.0, theta)
    Vs = np.array([_phase_conjugate(B, bundle.V.matrix, si) for si in s])
    D = np.broadcast_to(np.eye(B.dim, dtype=complex), (nodes, B.dim, B.dim))
    total = np.eye(B.dim, dtype=complex)
    for _ in range(order):
        integrand = np.einsum("nij,njk->nik", Vs, D)
        D = -1j * np.einsum("mn,nik->mik", K, integrand)
        total = total + D[-1]
    return FieldOperator(B, total)


# ---------------------------------------------------------------------------
# co-scaled ladder


@dataclass
class LadderPoint:
    index: int
    eps: float
    J: int
    dim: int


def coscaled_ladder(eps0: float, J0: int, n: int, n_max: int, d: int = 1,
                    dim_cap: int = 800, per_octave: int = 1) -> tuple[list[LadderPoint], bool]:
    """eps_k = eps0 2^-k, J_k = J0 2^k while the basis dimension stays under ``dim_cap``.

    ``per_octave`` > 1 inserts eps0 2^-(k + i/per_octave), i < per_octave, at
    the same J_k. Returns (points, partial) with ``partial`` True when the cap
    cut the ladder short.
    """
    pts = []
    for k in range(n):
        J = J0 * 2**k
        M = (2 * J + 1) ** d
        dim = FockBasis.expected_dim(M, n_max)
        if dim > dim_cap:
            return pts, True
        for i in range(per_octave):
            pts.append(LadderPoint(len(pts), eps0 * 2.0 ** -(k + i / per_octave), J, dim))
    return pts, False


def residual_curve(template: ModelParams, ladder: list[LadderPoint], x=0.0) -> list[dict]:
    """Smeared defect and unsmeared residual of the field equations along a ladder."""
    out = []
    for pt in ladder:
        p = template.with_(J=pt.J, eps=pt.eps)
        bundle = assemble_hamiltonian(p)
        rep = field_equation_check(p, bundle, x, p.tau)
        out.append({"index": pt.index, "eps": pt.eps, "J": pt.J, "dim": pt.dim,
                    "smeared_defect": rep.smeared_defect,
                    "unsmeared_residual": rep.unsmeared_residual})
    return out


def energy_drift(bundle: HamiltonianBundle, F, thetas) -> float:
    """max |<F_theta, H0 F_theta> - <F, H0 F>| along exp(-i theta H0) F."""
    H = bundle.H0
    f = np.asarray(F.amplitudes if hasattr(F, "amplitudes") else F, dtype=complex)
    e0 = np.vdot(f, H.matrix @ f).real
    drift = 0.0
    for th in thetas:
        ft = exp_hermitian(H, -th).matrix @ f
        drift = max(drift, abs(np.vdot(ft, H.matrix @ ft).real - e0))
    return float(drift)
