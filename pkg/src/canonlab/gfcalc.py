"""Scalar generalized functions worked at the level of representatives.

A representative is an epsilon-indexed family of ordinary functions. This
module supplies the regularizing profiles (plateau bumps on the Fourier side),
the convolution embedding of distributions, pointwise products, smoothed
Heaviside families and the tools used to decide whether a family is
infinitesimal (its pairings with test functions vanish as eps -> 0+).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import erf, expit

from .quadrature import adaptive_gauss


class ResolutionError(ValueError):
    """Sample grid too coarse for the requested regularization scale."""


class GridMismatchError(ValueError):
    """Two representatives sampled on different grids were combined."""


class QuadratureWindowError(RuntimeError):
    """The integration window misses the transition region of a profile."""


# ---------------------------------------------------------------------------
# plateau bumps


def _flat(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # exp(-1/t) for t > 0 together with its first two derivatives
    tc = np.maximum(t, 1e-3)
    f = np.where(t > 0, np.exp(-1.0 / tc), 0.0)
    d1 = f / tc**2
    d2 = f * (1.0 / tc**4 - 2.0 / tc**3)
    return f, np.where(t > 0, d1, 0.0), np.where(t > 0, d2, 0.0)


def smooth_step(t, order: int = 0) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1; ``order`` selects a derivative (0, 1, 2)."""
    t = np.asarray(t, dtype=float)
    A, A1, A2 = _flat(t)
    B, B1, B2 = _flat(1.0 - t)
    B1, B2 = -B1, B2  # chain rule for the reflected argument
    S = A + B
    if order == 0:
        return A / S
    num = A1 * B - A * B1
    if order == 1:
        return num / S**2
    if order == 2:
        dnum = A2 * B - A * B2
        return (dnum * S - 2.0 * num * (A1 + B1)) / S**3
    raise ValueError("order must be 0, 1 or 2")


@dataclass(frozen=True)
class Mollifier:
    """Fourier-side profile of a mollifier: ``F(u) = 1`` for ``|u| <= a``, 0 for ``|u| >= b``.

    The position-space kernel is ``phi(y) = (1/2pi) * int F(u) exp(iuy) du``; its
    rescaling ``phi_eps(x) = phi(x/eps)/eps`` has Fourier transform ``F(eps k)``.
    """

    a: float = 0.5
    b: float = 1.0
    label: str = "bump-0.5-1.0"

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise ValueError(f"need 0 < a < b, got a={self.a}, b={self.b}")

    def __call__(self, u) -> np.ndarray:
        return self.derivative(u, 0)

    def derivative(self, u, order: int = 1) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        width = self.b - self.a
        t = (np.abs(u) - self.a) / width
        if order == 0:
            return 1.0 - smooth_step(t)
        if order == 1:
            return -smooth_step(t, 1) * np.sign(u) / width
        if order == 2:
            return -smooth_step(t, 2) / width**2
        raise ValueError("order must be 0, 1 or 2")

    @property
    def support_radius(self) -> float:
        """Radius (in units of eps) beyond which |phi| and its tail mass are below ~1e-9."""
        return 200.0 / (self.b - self.a)

    def _u_nodes(self, ymax: float) -> tuple[np.ndarray, float]:
        # trapezoid on [0, b] is spectrally accurate: F vanishes to all orders at b
        # and the cosine integrand is even in u; alias-free for |y| < pi/du
        n = int(np.ceil(4.0 * self.b * max(ymax, 1.0) / np.pi)) + 64
        u, du = np.linspace(0.0, self.b, n + 1, retstep=True)
        return u, du

    def position(self, y) -> np.ndarray:
        """phi(y) by direct Fourier synthesis (suitable for modest numbers of points)."""
        y = np.asarray(y, dtype=float)
        u, du = self._u_nodes(float(np.max(np.abs(y), initial=1.0)))
        wts = np.full(u.size, du)
        wts[0] = wts[-1] = du / 2
        Fu = self(u) * wts
        out = np.cos(np.multiply.outer(y, u)) @ Fu / np.pi
        return out

    def cumulative(self, y) -> np.ndarray:
        """int_{-inf}^{y} phi  =  1/2 + (1/pi) int_0^b F(u) sin(uy)/u du."""
        y = np.asarray(y, dtype=float)
        u, du = self._u_nodes(float(np.max(np.abs(y), initial=1.0)))
        wts = np.full(u.size, du)
        wts[0] = wts[-1] = du / 2
        Fu = self(u) * wts
        sinc = np.multiply.outer(y, np.ones_like(u)) * np.sinc(np.multiply.outer(y, u) / np.pi)
        return 0.5 + sinc @ Fu / np.pi

    def kernel(self, eps: float, spacing: float) -> np.ndarray:
        """Samples of phi_eps at offsets ``m*spacing``, ``|m| <= radius/spacing`` (odd length).

        Built with one inverse FFT; the u-grid period is chosen 4x wider than
        the numerical support so that aliasing is below the truncation level.
        """
        delta = spacing / eps
        half = int(np.ceil(self.support_radius / delta))
        n = 1 << int(np.ceil(np.log2(8 * half + 8)))
        du = 2.0 * np.pi / (n * delta)
        k = np.fft.fftfreq(n, d=1.0 / n)  # integer frequencies
        spec = self(k * du)
        vals = np.fft.ifft(spec).real * n * du / (2.0 * np.pi)
        idx = np.arange(-half, half + 1)
        return vals[idx % n] / eps


STOCK_MOLLIFIERS: dict[str, Mollifier] = {
    "bump-0.5-1.0": Mollifier(0.5, 1.0, "bump-0.5-1.0"),
    "bump-0.3-1.0": Mollifier(0.3, 1.0, "bump-0.3-1.0"),
    "bump-0.6-1.5": Mollifier(0.6, 1.5, "bump-0.6-1.5"),
}


@dataclass(frozen=True)
class Cutoff:
    """Position-space cutoff chi(eps xi): smooth, even, 1 for ``|s| <= a``, 0 beyond ``b``."""

    a: float = 1.0
    b: float = 2.0
    label: str = "cutoff-1-2"

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise ValueError(f"need 0 < a < b, got a={self.a}, b={self.b}")

    def __call__(self, s) -> np.ndarray:
        """chi at the (already scaled) radius ``s = |eps xi|``."""
        s = np.abs(np.asarray(s, dtype=float))
        return 1.0 - smooth_step((s - self.a) / (self.b - self.a))


# ---------------------------------------------------------------------------
# representatives


Evaluator = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Representative:
    """An eps-indexed family ``x -> r(eps, x)``.

    ``grid`` is set when the family only exists as samples on a fixed grid
    (embedded distributions); ``scale`` is a concentration width in units of
    eps, used to place quadrature breakpoints near the origin.
    """

    func: Evaluator
    label: str = ""
    grid: np.ndarray | None = None
    eps_max: float = 1.0
    scale: float | None = None
    dx: Evaluator | None = None
    dxx: Evaluator | None = None

    def __call__(self, eps: float, x=None) -> np.ndarray:
        if not (0.0 < eps <= self.eps_max):
            raise ValueError(f"eps must lie in (0, {self.eps_max}], got {eps}")
        if x is None:
            if self.grid is None:
                raise ValueError(f"representative {self.label!r} has no grid; pass x")
            x = self.grid
        elif self.grid is not None and not _same_grid(np.asarray(x), self.grid):
            raise GridMismatchError(f"{self.label!r} is only defined on its sample grid")
        return self.func(eps, np.asarray(x, dtype=float))

    def __mul__(self, other):
        if isinstance(other, Representative):
            return product(self, other)
        c = other
        return Representative(lambda e, x: c * self.func(e, x), f"{c}*{self.label}", self.grid,
                              self.eps_max, self.scale)

    __rmul__ = __mul__

    def __add__(self, other: "Representative") -> "Representative":
        grid = _common_grid(self, other)
        return Representative(lambda e, x: self.func(e, x) + other.func(e, x),
                              f"({self.label} + {other.label})", grid,
                              min(self.eps_max, other.eps_max), _min_scale(self, other))

    def __sub__(self, other: "Representative") -> "Representative":
        grid = _common_grid(self, other)
        return Representative(lambda e, x: self.func(e, x) - other.func(e, x),
                              f"({self.label} - {other.label})", grid,
                              min(self.eps_max, other.eps_max), _min_scale(self, other))

    def __pow__(self, n: int) -> "Representative":
        return Representative(lambda e, x: self.func(e, x) ** n, f"{self.label}^{n}", self.grid,
                              self.eps_max, self.scale)


def _same_grid(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.array_equal(a, b)


def _common_grid(r1: Representative, r2: Representative):
    if r1.grid is not None and r2.grid is not None and not _same_grid(r1.grid, r2.grid):
        raise GridMismatchError(f"grids of {r1.label!r} and {r2.label!r} differ")
    return r1.grid if r1.grid is not None else r2.grid


def _min_scale(r1, r2):
    scales = [s for s in (r1.scale, r2.scale) if s is not None]
    return max(scales) if scales else None


def constant(c: float, label: str | None = None) -> Representative:
    return Representative(lambda e, x: np.full(np.shape(x), float(c)), label or str(c),
                          eps_max=math.inf, dx=lambda e, x: np.zeros(np.shape(x)),
                          dxx=lambda e, x: np.zeros(np.shape(x)))


def product(r1: Representative, r2: Representative) -> Representative:
    """Pointwise product, eps by eps; no re-smoothing."""
    grid = _common_grid(r1, r2)
    dx = dxx = None
    if r1.dx and r2.dx:
        dx = lambda e, x: r1.dx(e, x) * r2.func(e, x) + r1.func(e, x) * r2.dx(e, x)
        if r1.dxx and r2.dxx:
            dxx = lambda e, x: (r1.dxx(e, x) * r2.func(e, x) + 2 * r1.dx(e, x) * r2.dx(e, x)
                                + r1.func(e, x) * r2.dxx(e, x))
    return Representative(lambda e, x: r1.func(e, x) * r2.func(e, x),
                          f"{r1.label}*{r2.label}", grid, min(r1.eps_max, r2.eps_max),
                          _min_scale(r1, r2), dx, dxx)


# ---------------------------------------------------------------------------
# embedding by convolution

DELTA = "delta"
HEAVISIDE = "heaviside"


def uniform_spacing(grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-D array with at least two points")
    steps = np.diff(grid)
    h = float(steps.mean())
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(h)):
        raise ValueError("grid must be uniform and increasing")
    return h


def embed_distribution(f, phi: Mollifier, eps: float, grid) -> Representative:
    """Representative of ``f * phi_eps`` sampled on ``grid`` for all ``0 < eps' <= eps``.

    ``f`` is ``"delta"``, ``"heaviside"`` or a vectorized callable (a locally
    integrable function, sampled on the grid extended by the kernel support).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grid = np.asarray(grid, dtype=float)
    h = uniform_spacing(grid)
    _check_resolution(h, eps, phi)

    if isinstance(f, str):
        if f == DELTA:
            def func(e, x):
                _check_resolution(h, e, phi)
                return phi.position(x / e) / e
            label = f"delta*{phi.label}"
        elif f == HEAVISIDE:
            def func(e, x):
                return phi.cumulative(x / e)
            label = f"H*{phi.label}"
        else:
            raise ValueError(f"unknown distribution token {f!r}")
    else:
        def func(e, x):
            _check_resolution(h, e, phi)
            ker = phi.kernel(e, h)
            half = ker.size // 2
            ext = x[0] + h * np.arange(-half, x.size + half)
            return fftconvolve(np.asarray(f(ext), dtype=float), ker, mode="valid") * h
        label = f"{getattr(f, '__name__', 'f')}*{phi.label}"
    return Representative(func, label, grid=grid, eps_max=eps, scale=phi.support_radius)


def _check_resolution(spacing: float, eps: float, phi: Mollifier) -> None:
    if spacing > eps / phi.b:
        raise ResolutionError(
            f"grid spacing {spacing:g} cannot resolve phi_eps at eps={eps:g} (need <= {eps / phi.b:g})")


# ---------------------------------------------------------------------------
# smoothed Heaviside functions


@dataclass(frozen=True)
class TransitionProfile:
    """Smooth h with h(-inf) = 0 and h(+inf) = 1; ``halfwidth`` sets the quadrature window."""

    name: str
    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]
    halfwidth: float = 1.0


def _ramp(y):
    return smooth_step((np.asarray(y, dtype=float) + 1.0) / 2.0)


def _ramp_d(y):
    return 0.5 * smooth_step((np.asarray(y, dtype=float) + 1.0) / 2.0, 1)


TRANSITIONS: dict[str, TransitionProfile] = {
    "ramp": TransitionProfile("ramp", _ramp, _ramp_d, 1.0),
    "logistic": TransitionProfile("logistic", expit, lambda y: expit(y) * (1.0 - expit(y)), 4.0),
    "erf": TransitionProfile("erf", lambda y: 0.5 * (1.0 + erf(y)),
                             lambda y: np.exp(-np.square(y)) / math.sqrt(math.pi), 1.0),
}


def convolved_transition(phi: Mollifier) -> TransitionProfile:
    """h = H * phi (the embedded Heaviside at eps = 1); not monotone since phi changes sign."""
    return TransitionProfile(f"conv-{phi.label}", phi.cumulative, phi.position,
                             phi.support_radius / 10.0)


@dataclass(frozen=True)
class SmoothedHeaviside:
    """H_eps(x) = h(x/eps)."""

    profile: TransitionProfile

    def value(self, eps: float, x) -> np.ndarray:
        return self.profile.h(np.asarray(x, dtype=float) / eps)

    def derivative(self, eps: float, x) -> np.ndarray:
        return self.profile.dh(np.asarray(x, dtype=float) / eps) / eps

    def representative(self) -> Representative:
        return Representative(self.value, f"H[{self.profile.name}]", eps_max=math.inf,
                              scale=10.0 * self.profile.halfwidth, dx=self.derivative)

    def derivative_representative(self) -> Representative:
        return Representative(self.derivative, f"H'[{self.profile.name}]", eps_max=math.inf,
                              scale=10.0 * self.profile.halfwidth)


def heaviside_power_pairing(n1: int, n2: int, h: TransitionProfile, eps: float,
                            tol: float = 1e-13) -> float:
    """int (H_eps^n1 - H_eps^n2) H_eps' dx by windowed quadrature plus exact tails.

    The tails outside ``+-10*halfwidth*eps`` are added through the antiderivative
    ``H^(n+1)/(n+1)``; the window itself is integrated numerically.
    """
    if n1 < 1 or n2 < 1:
        raise ValueError("powers must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    W = 10.0 * h.halfwidth * eps
    lo, hi = float(h.h(np.array(-W / eps))), float(h.h(np.array(W / eps)))
    if hi - lo < 0.99:
        raise QuadratureWindowError(
            f"window +-{W:g} captures only {hi - lo:.3f} of the {h.name} transition")

    def integrand(x):
        H = h.h(x / eps)
        return (H**n1 - H**n2) * h.dh(x / eps) / eps

    def G(H):
        return H ** (n1 + 1) / (n1 + 1) - H ** (n2 + 1) / (n2 + 1)

    inner, _ = adaptive_gauss(integrand, -W, W, tol=tol, breakpoints=(-h.halfwidth * eps, 0.0,
                                                                       h.halfwidth * eps))
    return float(inner + (G(lo) - G(0.0)) + (G(1.0) - G(hi)))


def heaviside_jump_integral(h: TransitionProfile, eps: float) -> float:
    """int (H_eps^2 - H_eps) H_eps' dx; equals -1/6 for every profile and every eps."""
    return heaviside_power_pairing(2, 1, h, eps)


# ---------------------------------------------------------------------------
# pairings and infinitesimals


@dataclass(frozen=True)
class TestFunction:
    psi: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-20.0, 20.0)
    label: str = "psi"

    __test__ = False  # keep pytest from collecting this class


def gaussian_test(center: float = 0.0, width: float = 1.0) -> TestFunction:
    return TestFunction(lambda x: np.exp(-np.square((x - center) / width)),
                        (center - 40 * width, center + 40 * width), f"gauss({center},{width})")


def unit_test_function(half_window: float = 20.0) -> TestFunction:
    return TestFunction(lambda x: np.ones_like(x), (-half_window, half_window), "one")


def pair(r: Representative, psi: TestFunction, eps: float, tol: float = 1e-12) -> float:
    """int r(eps, x) psi(x) dx over the support of psi."""
    a, b = psi.support
    if r.grid is not None:
        g = r.grid
        mask = (g >= a) & (g <= b)
        vals = r(eps) * psi.psi(g)
        return float(np.trapezoid(vals[mask], g[mask]))
    bps: list[float] = [0.0]
    if r.scale is not None:
        for k in (1.0, 0.1):
            bps += [-k * r.scale * eps, k * r.scale * eps]
    val, _ = adaptive_gauss(lambda x: r.func(eps, x) * psi.psi(x), a, b, tol=tol, breakpoints=bps)
    return val


@dataclass
class InfinitesimalReport:
    verdict: bool
    slopes: dict[str, float]
    pairings: dict[str, list[float]]
    ladder: list[float]
    threshold: float


def fit_loglog_slope(eps: Sequence[float], values: Sequence[float], floor: float = 1e-300) -> float:
    """Least-squares slope of log|value| against log eps."""
    e = np.log(np.asarray(eps, dtype=float))
    v = np.log(np.maximum(np.abs(np.asarray(values, dtype=float)), floor))
    return float(np.polyfit(e, v, 1)[0])


def is_infinitesimal(r: Representative, test_functions: Iterable[TestFunction],
                     ladder: Sequence[float], threshold: float = 0.8,
                     zero_tol: float = 1e-13) -> InfinitesimalReport:
    """Sample pairings along a decreasing eps ladder and test for power-law decay.

    The verdict is true when, for every test function, the pairings either vanish
    identically (below ``zero_tol``) or decay with fitted log-log slope at least
    ``threshold``. This samples an asymptotic property; it does not prove it.
    """
    ladder = [float(e) for e in ladder]
    if len(ladder) < 4:
        raise ValueError("need at least 4 ladder points")
    if any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing and positive")
    slopes: dict[str, float] = {}
    pairings: dict[str, list[float]] = {}
    verdict = True
    for psi in test_functions:
        vals = [pair(r, psi, e) for e in ladder]
        pairings[psi.label] = vals
        if max(abs(v) for v in vals) <= zero_tol:
            slopes[psi.label] = math.inf
            continue
        s = fit_loglog_slope(ladder, vals)
        slopes[psi.label] = s
        if s < threshold:
            verdict = False
    return InfinitesimalReport(verdict, slopes, pairings, ladder, threshold)


def product_association_defect(f, g, phi: Mollifier, ladder: Sequence[float], grid,
                               psi: TestFunction) -> dict:
    """Pairings of ``(f*phi_eps)(g*phi_eps) - (fg)*phi_eps`` with psi along a ladder.

    Returns the pairings and their fitted log-log slope (positive when the
    embedded product is associated with the classical one).
    """
    grid = np.asarray(grid, dtype=float)
    emb_f = embed_distribution(f, phi, max(ladder), grid)
    emb_g = embed_distribution(g, phi, max(ladder), grid)
    fg = lambda x: f(x) * g(x)
    emb_fg = embed_distribution(fg, phi, max(ladder), grid)
    diff = product(emb_f, emb_g) - emb_fg
    vals = [pair(diff, psi, e) for e in ladder]
    # band-limited inputs are embedded exactly once eps is on the plateau
    slope = math.inf if max(abs(v) for v in vals) <= 1e-13 else fit_loglog_slope(ladder, vals)
    return {"ladder": list(map(float, ladder)), "pairings": vals, "slope": slope}


def export_csv(r: Representative, eps_values: Sequence[float], path, x=None) -> None:
    """Write samples of a representative as CSV with columns eps, x, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "x", "value"])
        for e in eps_values:
            xs = r.grid if x is None else np.asarray(x, dtype=float)
            vals = r(e, None if x is None else xs)
            for xi, vi in zip(np.atleast_1d(xs), np.atleast_1d(vals)):
                w.writerow([repr(float(e)), repr(float(xi)), repr(float(np.real(vi)))])
