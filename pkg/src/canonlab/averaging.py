"""Association of ordinary numbers to bounded oscillating eps-families by averaging.

The central quantity is the Cesaro mean ``A(eta) = (1/eta) int_0^eta R(eps) deps``
and its behaviour as eta -> 0+. When ``A`` settles, its value is the associated
number; when it keeps oscillating, the report carries the liminf/limsup window.

Two estimators are provided:

* ``"phase"`` -- for families ``R(eps) = f(theta(eps))`` with ``f`` periodic and
  ``theta`` a known monotone phase (``g/eps**p`` or ``p*log(1/eps)``). The integral
  is taken over whole half-periods in theta, then the remaining tail is closed
  with the period mean plus a first-order correction.
* ``"dyadic"`` -- for black-box families: dyadic pieces of (0, eta], each refined
  until the oscillation is resolved, and a tail cut where the declared bound
  makes it negligible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quadrature import composite_gauss


class BudgetExceeded(RuntimeError):
    """Raised when an estimate cannot reach its tolerance within the evaluation budget."""

    def __init__(self, message: str, partial: float | None = None, error: float | None = None):
        super().__init__(message)
        self.partial = partial
        self.error = error


@dataclass(frozen=True)
class Phase:
    """Monotone phase theta(eps) -> +inf as eps -> 0+.

    ``kind="power"``: theta = scale * eps**(-p);  ``kind="log"``: theta = p*log(1/eps).
    """

    kind: str = "power"
    p: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "log"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.p <= 0 or self.scale <= 0:
            raise ValueError("p and scale must be positive")

    def theta(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.kind == "power":
            return self.scale * eps ** (-self.p)
        return self.p * np.log(1.0 / eps)

    def eps_of(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "power":
            return (theta / self.scale) ** (-1.0 / self.p)
        return np.exp(-theta / self.p)

    def weight(self, theta):
        """|d eps / d theta|."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "power":
            return (theta / self.scale) ** (-1.0 / self.p - 1.0) / (self.p * self.scale)
        return np.exp(-theta / self.p) / self.p

    def weight_slope(self, theta):
        """|d^2 eps / d theta^2| (the weight is monotone decreasing)."""
        w = self.weight(theta)
        if self.kind == "power":
            return (1.0 / self.p + 1.0) * w / np.asarray(theta, dtype=float)
        return w / self.p


@dataclass(frozen=True, eq=False)
class GeneralizedNumber:
    """A scalar eps-family, optionally annotated with its oscillation structure."""

    func: Callable[[np.ndarray], np.ndarray]
    bound: float | None = None
    label: str = ""
    profile: Callable[[np.ndarray], np.ndarray] | None = None
    period: float | None = None
    phase: Phase | None = None

    def __call__(self, eps):
        return self.func(np.asarray(eps, dtype=float))

    @classmethod
    def oscillating(cls, profile, period: float, phase: Phase, bound: float, label: str = ""):
        return cls(lambda e: profile(phase.theta(e)), bound, label, profile, period, phase)

    def scaled(self, lam: float) -> "GeneralizedNumber":
        prof = None if self.profile is None else (lambda th, f=self.profile: lam * f(th))
        bound = None if self.bound is None else abs(lam) * self.bound
        return GeneralizedNumber(lambda e: lam * self.func(e), bound, f"{lam}*{self.label}",
                                 prof, self.period, self.phase)

    def squared(self) -> "GeneralizedNumber":
        prof = None if self.profile is None else (lambda th, f=self.profile: f(th) ** 2)
        bound = None if self.bound is None else self.bound**2
        return GeneralizedNumber(lambda e: self.func(e) ** 2, bound, f"({self.label})^2",
                                 prof, self.period, self.phase)


def abs_cos_inverse(g: float = 1.0, p: float = 1.0) -> GeneralizedNumber:
    """|cos(g / eps**p)|."""
    return GeneralizedNumber.oscillating(lambda th: np.abs(np.cos(th)), math.pi,
                                         Phase("power", p, g), 1.0, f"|cos({g}/eps^{p})|")


def abs_cos_log(p: float = 1.0) -> GeneralizedNumber:
    """|cos(p log(1/eps))| = |cos(log(1/eps**p))|."""
    return GeneralizedNumber.oscillating(lambda th: np.abs(np.cos(th)), math.pi,
                                         Phase("log", p), 1.0, f"|cos(log(1/eps^{p}))|")


def constant_number(c: float) -> GeneralizedNumber:
    return GeneralizedNumber(lambda e: np.full(np.shape(e), float(c)), abs(float(c)), f"{c}")


# ---------------------------------------------------------------------------
# Cesaro means


@dataclass
class CesaroEstimate:
    value: float
    error: float
    method: str
    panels: int
    evaluations: int


def cesaro_average(gn: GeneralizedNumber, eta: float, tol: float = 1e-4,
                   method: str = "auto", budget: int = 50_000_000) -> float:
    """(1/eta) * int_0^eta R(eps) deps, to within ``tol``."""
    return cesaro_estimate(gn, eta, tol, method, budget).value


def cesaro_estimate(gn: GeneralizedNumber, eta: float, tol: float = 1e-4,
                    method: str = "auto", budget: int = 50_000_000) -> CesaroEstimate:
    if eta <= 0 or tol <= 0:
        raise ValueError("eta and tol must be positive")
    if gn.bound is None:
        raise ValueError(f"{gn.label!r}: a sup bound must be declared to control the tail")
    if method == "auto":
        method = "phase" if gn.phase is not None and gn.profile is not None else "dyadic"
    if method == "phase":
        if gn.phase is None or gn.profile is None or gn.period is None:
            raise ValueError("phase estimator needs profile, period and phase")
        return _phase_estimate(gn, eta, tol, budget)
    if method == "dyadic":
        return _dyadic_estimate(gn, eta, tol, budget)
    raise ValueError(f"unknown method {method!r}")


def _period_statistics(f, P: float) -> tuple[float, float]:
    # mean of f over one period and mean of its zero-mean antiderivative
    edges = np.linspace(0.0, P, 129)
    fbar = float(composite_gauss(f, edges).sum()) / P
    mF = float(composite_gauss(lambda s: (P - s) * (f(s) - fbar), edges).sum()) / P
    return fbar, mF


def _phase_estimate(gn: GeneralizedNumber, eta: float, tol: float, budget: int,
                    min_periods: int = 64, nodes: int = 16) -> CesaroEstimate:
    f, P, ph, B = gn.profile, float(gn.period), gn.phase, float(gn.bound)
    half = 0.5 * P
    th0 = float(ph.theta(eta))
    fbar, mF = _period_statistics(f, P)

    def tail_bound(Th):
        return 2.0 * P**2 * B * float(ph.weight_slope(Th)) / eta

    Th = math.ceil((th0 + min_periods * P) / P) * P
    while tail_bound(Th) > tol / 4:
        Th = math.ceil((th0 + 2.0 * (Th - th0)) / P) * P
        if (Th - th0) / half * nodes > budget:
            raise BudgetExceeded(f"phase estimator needs more than {budget} evaluations", None, None)
    first = math.ceil(th0 / half) * half
    n_half = int(round((Th - first) / half))
    edges_all_count = n_half + (1 if first > th0 else 0)
    if edges_all_count * nodes > budget:
        raise BudgetExceeded(f"phase estimator needs more than {budget} evaluations")

    integrand = lambda th: f(th) * ph.weight(th)
    exact = 0.0
    qerr = 0.0
    if first > th0:
        e = np.array([th0, first])
        exact += float(composite_gauss(integrand, e, nodes).sum())
        qerr += abs(exact - float(composite_gauss(integrand, e, nodes // 2).sum()))
    chunk = 200_000
    for start in range(0, n_half, chunk):
        stop = min(start + chunk, n_half)
        e = first + half * np.arange(start, stop + 1)
        hi = composite_gauss(integrand, e, nodes)
        lo = composite_gauss(integrand, e, nodes // 2)
        exact += float(hi.sum())
        qerr += float(np.abs(hi - lo).sum())
    tail = fbar * float(ph.eps_of(Th)) + mF * float(ph.weight(Th))
    value = (exact + tail) / eta
    error = qerr / eta + tail_bound(Th)
    return CesaroEstimate(value, error, "phase", edges_all_count, edges_all_count * nodes)


def _count_extrema(v: np.ndarray) -> int:
    d = np.diff(v)
    return int(np.count_nonzero(d[:-1] * d[1:] < 0))


def _dyadic_estimate(gn: GeneralizedNumber, eta: float, tol: float, budget: int,
                     nodes: int = 16) -> CesaroEstimate:
    B = float(gn.bound)
    K = max(1, math.ceil(math.log2(2.0 * max(B, 1e-300) / tol)))
    piece_tol = tol * eta / (2.0 * K)
    integrand = lambda u: gn(1.0 / u) / u**2
    total = 0.0
    err = 0.0
    evals = 0
    panels_total = 0
    n = 8
    last_mean = 0.0
    for k in range(K):
        U0, U1 = 2.0**k / eta, 2.0 ** (k + 1) / eta
        prev = float(composite_gauss(integrand, np.linspace(U0, U1, n + 1), nodes).sum())
        evals += n * nodes
        while True:
            m = 2 * n
            e = np.linspace(U0, U1, m + 1)
            x = np.polynomial.legendre.leggauss(nodes)[0]
            mids, halfs = 0.5 * (e[1:] + e[:-1]), 0.5 * (e[1:] - e[:-1])
            pts = (mids[:, None] + halfs[:, None] * x[None, :]).ravel()
            vals = gn(1.0 / pts)
            cur = float(composite_gauss(integrand, e, nodes).sum())
            evals += 2 * m * nodes
            resolved = _count_extrema(vals) <= pts.size / 8
            if resolved and abs(cur - prev) <= piece_tol:
                break
            if evals > budget:
                raise BudgetExceeded(
                    f"dyadic estimator exceeded {budget} evaluations at piece {k}",
                    (total + cur) / eta, None)
            prev, n = cur, m
        total += cur
        err += abs(cur - prev)
        panels_total += m
        last_mean = cur / (eta * 2.0 ** (-k - 1))
        n = max(8, m // 2)
    tail_len = eta * 2.0**-K
    total += last_mean * tail_len
    return CesaroEstimate(total / eta, err / eta + B * tail_len / eta, "dyadic", panels_total, evals)


def rms_average(gn: GeneralizedNumber, eta: float, tol: float = 1e-4, method: str = "auto",
                budget: int = 50_000_000) -> float:
    """((1/eta) int_0^eta R^2)^(1/2) for nonnegative R."""
    _require_nonnegative(gn, eta)
    sq = gn.squared()
    coarse = cesaro_estimate(sq, eta, max(1e-2 * sq.bound, tol), method, budget).value
    tol_sq = 2.0 * tol * math.sqrt(max(coarse, tol**2))
    return math.sqrt(max(cesaro_estimate(sq, eta, tol_sq, method, budget).value, 0.0))


def _require_nonnegative(gn: GeneralizedNumber, eta: float) -> None:
    if gn.profile is not None and gn.period is not None:
        samples = gn.profile(np.linspace(0.0, gn.period, 4097))
    else:
        samples = gn(eta * np.logspace(-8, 0, 4097))
    if np.any(np.asarray(samples) < 0):
        raise ValueError(f"{gn.label!r} takes negative values; the RMS average needs R >= 0")


# ---------------------------------------------------------------------------
# reports


@dataclass
class AverageReport:
    label: str
    eta_ladder: list[float]
    A_values: list[float]
    limit: float | None
    liminf: float | None
    limsup: float | None
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "AverageReport":
        return cls(**d)

    @property
    def width(self) -> float | None:
        if self.liminf is None or self.limsup is None:
            return None
        return self.limsup - self.liminf


def _is_cauchy(values: Sequence[float], tol: float, last: int = 4) -> bool:
    if len(values) < last:
        return False
    tail = np.asarray(values[-last:])
    return float(tail.max() - tail.min()) <= 3.0 * tol


def _check_ladder(ladder: Sequence[float], minimum: int) -> list[float]:
    ladder = [float(e) for e in ladder]
    if len(ladder) < minimum:
        raise ValueError(f"ladder needs at least {minimum} points")
    if any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing and positive")
    return ladder


def associated_value(gn: GeneralizedNumber, ladder: Sequence[float], tol: float = 1e-4,
                     method: str = "auto", per_decade: int = 40,
                     budget: int = 50_000_000) -> AverageReport:
    """Cesaro means along an eta ladder, with a limit when they settle and a window always.

    The limit is reported (as the deepest ladder value) when the last four
    values agree within 3*tol. The liminf/limsup window is taken from a dense
    log-spaced eta grid over the last two decades of the ladder.
    """
    ladder = _check_ladder(ladder, 6)
    est = [cesaro_estimate(gn, e, tol, method, budget) for e in ladder]
    A = [x.value for x in est]
    limit = A[-1] if _is_cauchy(A, tol) else None
    lo_eta = ladder[-1]
    hi_eta = min(ladder[0], 100.0 * lo_eta)
    n_dense = max(2, int(round(per_decade * math.log10(hi_eta / lo_eta))) + 1)
    dense = np.logspace(math.log10(hi_eta), math.log10(lo_eta), n_dense)
    dense_vals = [cesaro_estimate(gn, float(e), tol, method, budget).value for e in dense]
    window = dense_vals + [a for e, a in zip(ladder, A) if e <= hi_eta]
    diagnostics = {
        "method": est[0].method,
        "tol": tol,
        "error_bounds": [x.error for x in est],
        "panels": [x.panels for x in est],
        "evaluations": [x.evaluations for x in est],
        "window_eta_range": [float(lo_eta), float(hi_eta)],
        "window_points": n_dense,
    }
    return AverageReport(gn.label, ladder, A, limit, float(min(window)), float(max(window)),
                         None, diagnostics)


@dataclass(frozen=True)
class APProfile:
    """Bounded almost-periodic profile f, composed as R_p(eps) = f((1/eps)**p).

    ``inner="identity"`` means f = periodic(z); ``inner="log"`` means
    f = periodic(log z).
    """

    periodic: Callable[[np.ndarray], np.ndarray]
    period: float
    inner: str = "identity"
    bound: float = 1.0
    label: str = "f"

    def number(self, p: float) -> GeneralizedNumber:
        phase = Phase("power", p, 1.0) if self.inner == "identity" else Phase("log", p)
        return GeneralizedNumber.oscillating(self.periodic, self.period, phase, self.bound,
                                             f"{self.label}[p={p}]")


ABS_COS = APProfile(lambda th: np.abs(np.cos(th)), math.pi, "identity", 1.0, "|cos|")
ABS_COS_LOG = APProfile(lambda th: np.abs(np.cos(th)), math.pi, "log", 1.0, "|cos o log|")
ONE = APProfile(lambda th: np.ones_like(th), 1.0, "identity", 1.0, "1")


@dataclass
class RescalingStudy:
    reports: dict[float, AverageReport]
    spread: float
    widths: dict[float, float]


def p_rescaling_study(profile: APProfile, p_list: Sequence[float], ladder: Sequence[float],
                      tol: float = 1e-4) -> RescalingStudy:
    """Associated values of f((1/eps)^p) for each p, with their spread across p."""
    reports: dict[float, AverageReport] = {}
    for p in p_list:
        if p <= 0:
            raise ValueError("p must be positive")
        reports[float(p)] = associated_value(profile.number(float(p)), ladder, tol)
    centers = [r.limit if r.limit is not None else 0.5 * (r.liminf + r.limsup)
               for r in reports.values()]
    widths = {p: r.limsup - r.liminf for p, r in reports.items()}
    return RescalingStudy(reports, float(max(centers) - min(centers)), widths)


# ---------------------------------------------------------------------------
# discrete sweeps


def sweep_average(samples: Sequence[tuple[float, float]], mode: str = "trapezoid",
                  seed: int = 0, tol: float = 1e-3, subsample: int = 4096,
                  label: str = "sweep", max_ladder: int = 48) -> AverageReport:
    """Average a discrete eps-sweep.

    ``trapezoid``: piecewise-linear interpolation in eps, then Cesaro means
    ``A(eta)`` over ``[eps_min, eta]`` for eta in the upper half (log scale) of the
    sample range; limit and window as in :func:`associated_value`.

    ``random``: a seeded uniform subsample of the small-eps half of the data;
    the limit is its mean and the window its [min, max] envelope.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (eps, value) pairs")
    if len(arr) < 8:
        raise ValueError("need at least 8 samples")
    eps, vals = arr[:, 0], arr[:, 1]
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    if np.unique(eps).size != eps.size:
        raise ValueError("duplicate eps values in sweep")
    order = np.argsort(eps)
    eps, vals = eps[order], vals[order]

    if mode == "trapezoid":
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(eps))])
        cut = math.sqrt(eps[0] * eps[-1])
        idx = np.nonzero(eps >= cut)[0]
        idx = idx[idx > 0]
        if idx.size > max_ladder:
            pick = np.unique(np.round(np.geomspace(idx[0], idx[-1], max_ladder)).astype(int))
            idx = pick
        idx = idx[::-1]
        etas = eps[idx]
        A = cum[idx] / (etas - eps[0])
        A_list = [float(a) for a in A]
        limit = A_list[-1] if _is_cauchy(A_list, tol) else None
        in_window = etas <= 100.0 * etas[-1]
        return AverageReport(label, [float(e) for e in etas], A_list, limit,
                             float(A[in_window].min()), float(A[in_window].max()), seed,
                             {"mode": mode, "tol": tol, "n_samples": int(eps.size),
                              "eps_range": [float(eps[0]), float(eps[-1])]})
    if mode == "random":
        region = vals[eps <= np.median(eps)]
        rng = np.random.default_rng(seed)
        n = min(int(subsample), region.size)
        pick = region[rng.choice(region.size, size=n, replace=False)]
        mean = float(pick.mean())
        return AverageReport(label, [float(np.median(eps))], [mean], mean,
                             float(pick.min()), float(pick.max()), seed,
                             {"mode": mode, "n_subsample": n, "std": float(pick.std()),
                              "n_samples": int(eps.size)})
    raise ValueError(f"unknown sweep mode {mode!r}")
