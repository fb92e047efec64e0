"""Acceptance criteria 1-13, each against an oracle computed here.

Each test prints one ``criterion N: PASS|FAIL`` line; the same lines are
repeated in the pytest terminal summary.
"""

import functools
import json
import math
import sys
import time

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
import scipy.optimize

from canonlab import averaging, gfcalc
from canonlab.cli import main
from canonlab.dynamics import (ModelParams, assemble_hamiltonian, dyson_series,
                               field_equation_check, hille_yoshida_approx, s_matrix_ode,
                               theorem2_check, theorem3_generator)
from canonlab.field import (RegularizedDelta, RegularizedField, ccr_check, klein_gordon_residual,
                            translation_defect)
from canonlab.fock import FockBasis, ModeGrid, annihilate, commutator, create, exp_energy
from canonlab.scattering import StateRecipe, amplitude_sweep
from canonlab.dynamics import coscaled_ladder

from conftest import ACCEPTANCE

TWO_OVER_PI = 2 / math.pi
L2PI = 2 * math.pi


def criterion(n):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*a, **kw):
            try:
                fn(*a, **kw)
            except BaseException:
                ACCEPTANCE[n] = "FAIL"
                print(f"criterion {n}: FAIL", file=sys.__stdout__, flush=True)
                raise
            ACCEPTANCE[n] = "PASS"
            print(f"criterion {n}: PASS", file=sys.__stdout__, flush=True)
        return wrapper
    return deco


def model(**kw):
    base = dict(grid=ModeGrid(d=1, L=L2PI, J=1, m=1.0), n_max=3, N=3, g=0.1)
    base.update(kw)
    return ModelParams(**base)


def cesaro_oracle(eta, n_periods=4000):
    """(1/eta) int_0^eta |cos(1/e)| de = (1/eta) int_{1/eta}^inf |cos u| / u^2 du.

    Integrated piecewise between zeros of cos, tail by its mean 2/pi.
    """
    U0 = 1 / eta
    k0 = math.ceil(U0 / math.pi - 0.5)
    edges = [U0] + [(k + 0.5) * math.pi for k in range(k0, k0 + n_periods)]
    total = sum(scipy.integrate.quad(lambda u: abs(math.cos(u)) / u**2, a, b)[0]
                for a, b in zip(edges, edges[1:]))
    total += TWO_OVER_PI / edges[-1]
    return total / eta


def log_window_oracle():
    """A(eta) = int_0^inf e^-s |cos(l + s)| ds, l = log(1/eta); pi-periodic in l."""
    def A(l):
        l = float(np.squeeze(l))
        zeros = [z for z in (math.pi / 2 - l % math.pi + j * math.pi for j in range(60)) if z > 0]
        edges = [0.0] + zeros
        return sum(scipy.integrate.quad(lambda s: math.exp(-s) * abs(math.cos(l + s)), a, b)[0]
                   for a, b in zip(edges, edges[1:]))

    grid = np.linspace(0, math.pi, 721)
    vals = [A(l) for l in grid]
    lo = scipy.optimize.minimize_scalar(A, bracket=(grid[np.argmin(vals)] - 0.01, grid[np.argmin(vals)],
                                                    grid[np.argmin(vals)] + 0.01)).fun
    hi = -scipy.optimize.minimize_scalar(lambda l: -A(l), bracket=(grid[np.argmax(vals)] - 0.01,
                                                                   grid[np.argmax(vals)],
                                                                   grid[np.argmax(vals)] + 0.01)).fun
    return lo, hi


@criterion(1)
def test_criterion_01_cesaro_abs_cos():
    t0 = time.perf_counter()
    rep = averaging.associated_value(averaging.abs_cos_inverse(),
                                     np.logspace(-2, -6, 9).tolist(), 1e-4)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10
    assert max(abs(v - TWO_OVER_PI) for v in rep.A_values) < 2e-3
    assert rep.limit is not None and abs(rep.limit - 0.63662) < 2e-3
    # finite-eta values against direct quadrature
    for eta, val in list(zip(rep.eta_ladder, rep.A_values))[:3]:
        assert abs(val - cesaro_oracle(eta)) < 1e-4


@criterion(2)
def test_criterion_02_log_window():
    t0 = time.perf_counter()
    rep = averaging.associated_value(averaging.abs_cos_log(), [10.0**-k for k in range(2, 9)], 1e-4)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30
    assert rep.limit is None
    assert abs(rep.liminf - 0.44) <= 0.02 and abs(rep.limsup - 0.82) <= 0.02
    lo, hi = log_window_oracle()
    assert abs(rep.liminf - lo) < 2e-3 and abs(rep.limsup - hi) < 2e-3


@criterion(3)
def test_criterion_03_p_independence():
    study = averaging.p_rescaling_study(averaging.ABS_COS, [1, 2, 3],
                                        [10.0**-k for k in range(2, 8)], 1e-4)
    # mean of |cos| over a period
    mean = scipy.integrate.quad(lambda u: abs(math.cos(u)), 0, math.pi)[0] / math.pi
    assert abs(mean - TWO_OVER_PI) < 1e-12
    for p in (1, 2, 3):
        assert abs(study.reports[p].limit - mean) < 5e-3


@criterion(4)
def test_criterion_04_heaviside():
    # int (H^2 - H) H' = [H^3/3 - H^2/2]_0^1
    target = 1 / 3 - 1 / 2
    for name in ("ramp", "logistic", "erf"):
        for eps in (1.0, 1e-2, 1e-4):
            assert abs(gfcalc.heaviside_jump_integral(gfcalc.TRANSITIONS[name], eps) - target) < 1e-8
    tests = [gfcalc.gaussian_test(0.0, 1.0), gfcalc.gaussian_test(0.5, 0.7)]
    ladder = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4]
    H = gfcalc.SmoothedHeaviside(gfcalc.TRANSITIONS["erf"]).representative()
    assert gfcalc.is_infinitesimal(H * H - H, tests, ladder).verdict
    assert not gfcalc.is_infinitesimal(H, tests, ladder).verdict


@criterion(5)
def test_criterion_05_ccr():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    phi = gfcalc.STOCK_MOLLIFIERS["bump-0.5-1.0"]
    for J in (1, 2, 3):
        grid = ModeGrid(d=1, L=L2PI, J=J, m=1.0)
        for n_max in (2, 3, 4):
            B = FockBasis(grid, n_max)
            s = B.sector_size(n_max - 2)  # safe columns are a prefix
            # ladder level: a+_j acts on basis states as sqrt(n_j + 1)
            for j in range(grid.M):
                e = np.zeros(grid.M)
                e[j] = 1
                ad = create(B, e).matrix / math.sqrt(grid.w)
                for col in range(B.sector_size(n_max - 1)):
                    occ = np.array(B.occupation(col))
                    occ[j] += 1
                    expect = np.zeros(B.dim)
                    expect[B.index(occ)] = math.sqrt(occ[j])
                    assert np.max(np.abs(ad[:, col] - expect)) < 1e-12
            psi = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
            chi = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
            c = commutator(annihilate(B, psi), create(B, chi)).matrix
            assert np.max(np.abs(c[:, :s] - grid.w * np.sum(psi * chi) * np.eye(B.dim)[:, :s])) <= 1e-10
            for eps in (0.0, 0.4):
                rf = RegularizedField(B, phi, eps)
                F2 = phi(eps * np.abs(grid.k[:, 0])) ** 2 if eps else np.ones(grid.M)
                for t in (0.0, 0.7):
                    for x, x2 in [(0.0, 0.0), (0.7, -1.3), (-1.3, 2.9)]:
                        rho = np.sum(F2 * np.cos(grid.k[:, 0] * (x - x2))) / grid.L
                        rep = ccr_check(rf, x, x2, t)
                        assert rep.max_defect <= 1e-10
                        assert abs(rep.commutator_scalar - 1j * rho) <= 1e-10
    assert time.perf_counter() - t0 < 60


@criterion(6)
def test_criterion_06_translation_kg():
    phi = gfcalc.STOCK_MOLLIFIERS["bump-0.5-1.0"]
    for J, eps in [(1, 0.0), (2, 0.0), (2, 0.3)]:
        grid = ModeGrid(d=1, L=L2PI, J=J, m=1.0)
        rf = RegularizedField(FockBasis(grid, 3), phi, eps)
        # dispersion relation used by the field
        assert np.allclose(grid.k0**2, grid.k[:, 0] ** 2 + grid.m**2, atol=1e-12)
        for x, t in [(0.0, 0.0), (0.7, 0.4), (-2.1, 1.3)]:
            assert klein_gordon_residual(rf, x, t) <= 1e-10
            assert translation_defect(rf, x, t, 0.9) <= 1e-10
            # translation against scipy's matrix exponential of P0
            P0 = np.diag(FockBasis(grid, 3).states @ grid.k0).astype(complex)
            U = scipy.linalg.expm(0.9j * P0)
            lhs = U @ rf.derivative(x, t).matrix @ U.conj().T
            assert np.max(np.abs(lhs - rf.derivative(x, t + 0.9).matrix)) <= 1e-10


@criterion(7)
def test_criterion_07_theorem2():
    for g in (0.0, 0.1):
        p = model(g=g)
        b = assemble_hamiltonian(p)
        assert theorem2_check(p, b, 0.3, 0.7) <= 1e-9
        # independent pipeline: expm for both the Heisenberg field and S
        H = b.H0.matrix
        P0 = np.diag(p.basis.states @ p.grid.k0).astype(complex)
        phi_tau = p.field.derivative(0.3, 0.0).matrix
        U = scipy.linalg.expm(0.7j * H)
        heis = U @ phi_tau @ U.conj().T
        S = scipy.linalg.expm(0.7j * P0) @ scipy.linalg.expm(-0.7j * H)
        assert np.max(np.abs(heis - S.conj().T @ p.field.derivative(0.3, 0.7).matrix @ S)) <= 1e-9


@criterion(8)
def test_criterion_08_theorem3():
    p = model()
    b = assemble_hamiltonian(p)
    _, rep = theorem3_generator(p, b, 1.0)
    assert rep.sharp and rep.defect <= 1e-9
    P0 = np.diag(p.basis.states @ p.grid.k0).astype(complex)
    direct = (np.exp(1j * b.E_zp) * scipy.linalg.expm(1j * P0)
              @ scipy.linalg.expm(-1j * b.H0.matrix))
    e1 = np.max(np.abs(s_matrix_ode(p, b, 1.0, 1e-3).operators[-1].matrix - direct))
    e2 = np.max(np.abs(s_matrix_ode(p, b, 1.0, 5e-4).operators[-1].matrix - direct))
    assert e1 <= 1e-6
    assert 12 <= e1 / e2 <= 20


@criterion(9)
def test_criterion_09_free_hamiltonian():
    p = model(g=0.0)
    b = assemble_hamiltonian(p)
    assert abs(b.E_zp - 0.5 * (1 + 2 * math.sqrt(2))) <= 1e-10
    k0 = np.sqrt(p.grid.k[:, 0] ** 2 + 1.0)
    assert abs(b.E_zp - 0.5 * np.sum(k0)) <= 1e-10
    target = np.diag(p.basis.states @ k0 + b.E_zp)
    s = p.basis.sector_size(p.n_max - 1)
    assert np.max(np.abs(b.H_quad.matrix[:, :s] - target[:, :s])) <= 1e-10


@criterion(10)
def test_criterion_10_field_equations(tmp_path):
    p = model(grid=ModeGrid(d=1, L=L2PI, J=2, m=1.0), n_max=4, g=0.1)
    b = assemble_hamiltonian(p)
    for q in (0, 3, 8):
        rep = field_equation_check(p, b, p.nodes[q], 0.7)
        assert rep.smeared_defect <= 1e-7
    out = tmp_path / "fe"
    assert main(["run", "crit10_field_equations", "--out", str(out)]) == 0
    curve = json.loads((out / "report.json").read_text())["residual_curve"]["points"]
    assert len(curve) >= 2
    assert all(math.isfinite(r["unsmeared_residual"]) for r in curve)
    assert (out / "residual_curve.csv").exists()


@criterion(11)
def test_criterion_11_hille_yoshida():
    p = model()
    b = assemble_hamiltonian(p)
    exact = scipy.linalg.expm(-1j * b.H0.matrix)
    errs = [np.max(np.abs(hille_yoshida_approx(b.H0, 1.0, n).matrix - exact)) for n in (8, 32, 128)]
    assert errs[0] > errs[1] > errs[2]


@criterion(12)
def test_criterion_12_dyson():
    def err(g):
        p = model(g=g)
        b = assemble_hamiltonian(p)
        P0 = np.diag(p.basis.states @ p.grid.k0).astype(complex)
        ref = scipy.linalg.expm(1j * P0) @ scipy.linalg.expm(-1j * (P0 + b.V.matrix))
        return np.max(np.abs(dyson_series(p, b, 1.0, 2).matrix - ref))

    ratio = err(1e-2) / err(5e-3)
    assert abs(ratio - 8) <= 0.25 * 8


@criterion(13)
def test_criterion_13_amplitudes(tmp_path):
    tmpl = model(N=1, g=0.3)
    r1 = StateRecipe("packet", k_center=0.5, vacuum_weight=0.3)
    r2 = StateRecipe("packet", k_center=-0.5, vacuum_weight=0.3)
    molls = list(gfcalc.STOCK_MOLLIFIERS.values())
    pts, _ = coscaled_ladder(0.1, 1, 3, 3, per_octave=3)
    recs = amplitude_sweep(tmpl, pts, r1, r2, 1.0, molls).records
    assert all(r.value <= 1 + 1e-12 for r in recs)
    by_index = {}
    for r in recs:
        by_index.setdefault(r.index, []).append(r.value)
    assert max(max(v) - min(v) for v in by_index.values()) <= 1e-10
    free = amplitude_sweep(tmpl.with_(g=0.0), pts, r1, r2, 1.0, molls).records
    for r in free:
        B = FockBasis(ModeGrid(d=1, L=L2PI, J=r.grid["J"], m=1.0), 3)
        overlap = abs(np.vdot(r1.build(B).amplitudes, r2.build(B).amplitudes))
        assert abs(r.value - overlap) <= 1e-8
    vals = [r.value for r in free]
    assert max(vals) - min(vals) <= 1e-8
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "crit13_amplitudes", "--out", str(a)]) == 0
    assert main(["run", "crit13_amplitudes", "--out", str(b)]) == 0
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["content_hash"] == mb["content_hash"]
    assert all(c["passed"] for c in ma["checks"])
