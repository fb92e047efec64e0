"""Transition amplitudes |<F1, S F2>| along regularization ladders, and their association.

States are described by grid-independent recipes in physical momentum, so the
"same" F1, F2 can be rebuilt on every grid of a co-scaled ladder.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import averaging
from .dynamics import (HamiltonianBundle, LadderPoint, ModelParams, assemble_hamiltonian,
                       dyson_series, interaction_s_matrix, s_matrix)
from .fock import FockBasis, FockVector, inner
from .gfcalc import Mollifier

CSV_COLUMNS = ("eps", "J", "dim", "mollifier", "value", "phase_re", "phase_im", "seed")


@dataclass(frozen=True)
class StateRecipe:
    """kind: vacuum | packet | pair | occupation.

    packet: one particle with Gaussian profile exp(-(k - k_center)^2 / 2 width^2) on modes |k| <= k_max.
    pair: back-to-back pairs a+_k a+_-k with the same profile in |k|.
    occupation: explicit {mode label: count}, labels are integer tuples.
    vacuum_weight mixes in the vacuum before normalization.
    """

    kind: str = "packet"
    k_center: float = 0.0
    width: float = 1.0
    k_max: float = 1.5
    vacuum_weight: float = 0.0
    occupation: tuple = ()

    def __post_init__(self):
        if self.kind not in ("vacuum", "packet", "pair", "occupation"):
            raise ValueError(f"unknown state kind {self.kind!r}")

    def _profile(self, k: np.ndarray) -> np.ndarray:
        kn = np.linalg.norm(k, axis=1)
        prof = np.exp(-np.sum((k - self.k_center) ** 2, axis=1) / (2 * self.width**2))
        return np.where(kn <= self.k_max + 1e-12, prof, 0.0)

    def build(self, basis: FockBasis) -> FockVector:
        g = basis.grid
        amp = np.zeros(basis.dim, dtype=complex)
        amp[0] = self.vacuum_weight
        labels = {tuple(int(v) for v in row): i for i, row in enumerate(g.indices)}
        if self.kind == "packet":
            if basis.n_max < 1:
                raise ValueError("packet needs n_max >= 1")
            f = self._profile(g.k)
            for j in np.nonzero(f)[0]:
                occ = np.zeros(g.M, dtype=int)
                occ[j] = 1
                amp[basis.index(occ)] += f[j]
        elif self.kind == "pair":
            if basis.n_max < 2:
                raise ValueError("pair needs n_max >= 2")
            f = self._profile(np.abs(g.k))
            for j in np.nonzero(f)[0]:
                jm = labels[tuple(-v for v in g.indices[j])]
                if jm < j:
                    continue
                occ = np.zeros(g.M, dtype=int)
                occ[j] += 1
                occ[jm] += 1
                amp[basis.index(occ)] += f[j] * (math.sqrt(2) if j == jm else 1.0)
        elif self.kind == "occupation":
            occ = np.zeros(g.M, dtype=int)
            for label, count in self.occupation:
                key = tuple(np.atleast_1d(label).astype(int).tolist())
                if key not in labels:
                    raise ValueError(f"mode {key} not on the grid")
                occ[labels[key]] = count
            amp[basis.index(occ)] += 1.0
        else:
            amp[0] = 1.0
        vec = FockVector(basis, amp)
        if vec.norm() == 0:
            raise ValueError("recipe produced the zero vector on this grid")
        return vec.normalized()


@dataclass
class AmplitudeRecord:
    eps: float
    index: int
    grid: dict
    value: float
    phase: complex
    mollifier: str
    seed: int | None = None

    def to_row(self) -> list:
        return [self.eps, self.grid.get("J"), self.grid.get("dim"), self.mollifier, self.value,
                self.phase.real, self.phase.imag, self.seed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase"] = [self.phase.real, self.phase.imag]
        return d


def _check_norm(F: FockVector, name: str) -> None:
    if abs(F.norm() - 1.0) > 1e-12:
        raise ValueError(f"{name} is not normalized (norm {F.norm():.15g})")


def amplitude(p: ModelParams, F1: FockVector, F2: FockVector, t: float,
              bundle: HamiltonianBundle | None = None, index: int = 0,
              seed: int | None = None) -> AmplitudeRecord:
    _check_norm(F1, "F1")
    _check_norm(F2, "F2")
    bundle = bundle or assemble_hamiltonian(p)
    z = inner(F1, s_matrix(p, bundle, t) @ F2)
    val = abs(z)
    phase = z / val if val > 0 else 1.0 + 0j
    grid = {**p.grid.describe(), "dim": p.basis.dim}
    return AmplitudeRecord(p.eps, index, grid, float(val), complex(phase), p.mollifier.label, seed)


@dataclass
class SweepResult:
    records: list[AmplitudeRecord]
    partial: bool = False
    notes: list[str] = field(default_factory=list)


def amplitude_sweep(template: ModelParams, ladder: list[LadderPoint], r1: StateRecipe,
                    r2: StateRecipe, t: float, mollifiers: list[Mollifier],
                    seed: int = 0, dim_cap: int | None = None) -> SweepResult:
    records, notes = [], []
    for pt in ladder:
        if dim_cap is not None and pt.dim > dim_cap:
            notes.append(f"stopped at ladder index {pt.index}: dim {pt.dim} > cap {dim_cap}")
            return SweepResult(records, True, notes)
        for phi in mollifiers:
            p = template.with_(J=pt.J, eps=pt.eps, mollifier=phi)
            F1, F2 = r1.build(p.basis), r2.build(p.basis)
            records.append(amplitude(p, F1, F2, t, index=pt.index, seed=seed))
    return SweepResult(records, False, notes)


@dataclass
class AssociationResult:
    reports: dict[str, averaging.AverageReport]
    spread: float

    def to_dict(self) -> dict:
        return {"reports": {k: v.to_dict() for k, v in self.reports.items()}, "spread": self.spread}


def associate_amplitude(records: list[AmplitudeRecord], mode: str = "trapezoid", seed: int = 0,
                        tol: float = 1e-3) -> AssociationResult:
    """Average amplitude records per mollifier; ``spread`` compares the mollifiers."""
    groups: dict[str, list[AmplitudeRecord]] = {}
    for r in records:
        groups.setdefault(r.mollifier, []).append(r)
    reports = {}
    for label, recs in sorted(groups.items()):
        if len(recs) < 8:
            raise ValueError(f"mollifier {label!r} has {len(recs)} records; need at least 8")
        samples = [(r.eps, r.value) for r in recs]
        reports[label] = averaging.sweep_average(samples, mode, seed, tol, label=label)
    centers = [rep.limit if rep.limit is not None else 0.5 * (rep.liminf + rep.limsup)
               for rep in reports.values()]
    return AssociationResult(reports, float(max(centers) - min(centers)))


def perturbative_amplitude(p: ModelParams, F1: FockVector, F2: FockVector, t: float, order: int,
                           bundle: HamiltonianBundle | None = None) -> complex:
    """<F1, S_k F2> for the order-k Dyson partial sum (interaction picture)."""
    bundle = bundle or assemble_hamiltonian(p)
    return inner(F1, dyson_series(p, bundle, t, order) @ F2)


def interaction_amplitude(p: ModelParams, F1: FockVector, F2: FockVector, t: float,
                          bundle: HamiltonianBundle | None = None) -> complex:
    """<F1, e^{i theta P0} e^{-i theta (P0 + V)} F2>, the object the Dyson sums approximate."""
    bundle = bundle or assemble_hamiltonian(p)
    return inner(F1, interaction_s_matrix(p, bundle, t) @ F2)


def write_csv(records: list[AmplitudeRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.to_row()])
