import csv
import math

import numpy as np
import pytest

from canonlab.dynamics import ModelParams, assemble_hamiltonian, coscaled_ladder
from canonlab.fock import FockVector, ModeGrid
from canonlab.gfcalc import STOCK_MOLLIFIERS
from canonlab.scattering import (CSV_COLUMNS, AmplitudeRecord, StateRecipe, amplitude,
                                 amplitude_sweep, associate_amplitude, interaction_amplitude,
                                 perturbative_amplitude, write_csv)

GRID = ModeGrid(d=1, L=2 * math.pi, J=1, m=1.0)
R1 = StateRecipe("packet", k_center=0.5, vacuum_weight=0.3)
R2 = StateRecipe("packet", k_center=-0.5, vacuum_weight=0.3)
MOLLS = list(STOCK_MOLLIFIERS.values())


def model(**kw):
    base = dict(grid=GRID, n_max=3, N=1, g=0.3)
    base.update(kw)
    return ModelParams(**base)


def test_recipes_normalized_and_validated():
    p = model()
    for r in (R1, StateRecipe("pair"), StateRecipe("vacuum"), StateRecipe("occupation", occupation=(((1,), 2),))):
        assert abs(r.build(p.basis).norm() - 1) < 1e-14
    v = StateRecipe("occupation", occupation=(((1,), 2),)).build(p.basis)
    assert v.amplitudes[p.basis.index([0, 0, 2])] == 1
    with pytest.raises(ValueError):
        StateRecipe("soliton")
    with pytest.raises(ValueError):
        StateRecipe("occupation", occupation=(((7,), 1),)).build(p.basis)
    with pytest.raises(ValueError):
        StateRecipe("pair").build(model(n_max=1).basis)


def test_amplitude_bounded():
    for g in (0.0, 0.3, 2.0):
        p = model(g=g)
        rec = amplitude(p, R1.build(p.basis), R2.build(p.basis), 1.7)
        assert 0 <= rec.value <= 1 + 1e-12
        assert abs(abs(rec.phase) - 1) < 1e-12


def test_amplitude_rejects_unnormalized():
    p = model()
    F = R1.build(p.basis)
    with pytest.raises(ValueError):
        amplitude(p, FockVector(p.basis, 2 * F.amplitudes), F, 1.0)


def test_free_amplitude_is_overlap():
    p = model(g=0.0)
    F1, F2 = R1.build(p.basis), R2.build(p.basis)
    rec = amplitude(p, F1, F2, 2.3)
    assert abs(rec.value - abs(np.vdot(F1.amplitudes, F2.amplitudes))) < 1e-10


def test_sweep_properties():
    pts, partial = coscaled_ladder(0.1, 1, 2, 3, per_octave=2)
    res = amplitude_sweep(model(), pts, R1, R2, 1.0, MOLLS)
    assert not partial and not res.partial
    assert len(res.records) == len(pts) * len(MOLLS)
    by_index = {}
    for r in res.records:
        by_index.setdefault(r.index, []).append(r.value)
    # eps k_max < 0.3 throughout: every mollifier is sharp on the grid
    assert max(max(v) - min(v) for v in by_index.values()) < 1e-10
    zero = amplitude_sweep(model(g=0.0), pts, R1, R2, 1.0, MOLLS)
    vals = [r.value for r in zero.records]
    assert max(vals) - min(vals) < 1e-8
    again = amplitude_sweep(model(), pts, R1, R2, 1.0, MOLLS)
    assert [r.to_row() for r in again.records] == [r.to_row() for r in res.records]


def test_sweep_dim_cap_marks_partial():
    pts, _ = coscaled_ladder(0.1, 1, 3, 3, dim_cap=10_000)
    res = amplitude_sweep(model(), pts, R1, R2, 1.0, MOLLS[:1], dim_cap=100)
    assert res.partial and res.notes
    assert all(r.grid["dim"] <= 100 for r in res.records)


def _records(eps, values, label="m"):
    return [AmplitudeRecord(float(e), i, {"J": 1, "dim": 1}, float(v), 1 + 0j, label)
            for i, (e, v) in enumerate(zip(eps, values))]


def test_associate_constant_records():
    eps = np.logspace(-1, -4, 12)
    recs = _records(eps, np.full(12, 0.42), "a") + _records(eps, np.full(12, 0.42), "b")
    res = associate_amplitude(recs)
    assert abs(res.reports["a"].limit - 0.42) < 1e-12 and res.spread < 1e-12


def test_associate_oscillating_records_random_mode():
    eps = 10 ** np.random.default_rng(5).uniform(-6, -2, 20_000)
    res = associate_amplitude(_records(eps, np.abs(np.cos(1 / eps))), mode="random", seed=1)
    assert abs(res.reports["m"].limit - 2 / math.pi) < 2e-2


def test_associate_needs_enough_records():
    with pytest.raises(ValueError):
        associate_amplitude(_records(np.logspace(-1, -2, 5), np.ones(5)))


def test_perturbative_amplitude_scaling():
    # N = 3: V is linear in g, so the order-2 truncation error is O(g^3)
    F1r, F2r = StateRecipe("vacuum"), StateRecipe("pair", vacuum_weight=0.5)

    def err(g, order):
        p = model(N=3, g=g)
        b = assemble_hamiltonian(p)
        F1, F2 = F1r.build(p.basis), F2r.build(p.basis)
        return abs(perturbative_amplitude(p, F1, F2, 1.0, order, b) - interaction_amplitude(p, F1, F2, 1.0, b))

    r = err(0.02, 2) / err(0.01, 2)
    assert abs(r - 8) < 2
    assert err(0.01, 3) < err(0.01, 2) < err(0.01, 1)


def test_write_csv(tmp_path):
    pts, _ = coscaled_ladder(0.1, 1, 1, 3)
    recs = amplitude_sweep(model(), pts, R1, R2, 1.0, MOLLS[:2], seed=4).records
    path = tmp_path / "a.csv"
    write_csv(recs, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 3
    assert float(rows[1][4]) == recs[0].value and rows[1][7] == "4"
