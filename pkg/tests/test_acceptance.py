"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines.  Every
tolerance is pinned here; nothing is calibrated at run time.
"""

import math
import time

import numpy as np
import pytest

from fsichannel import cli, fields, fsi, norms
from fsichannel.geometry import FLUID_LAYERS, build_geometry
from fsichannel.verification import (
    contraction_ratios,
    hidden_regularity_suite,
    single_mode_initial_data,
    standing_wave_study,
    stokes_mms_study,
)


def report(num, label, detail):
    print(f"\nACCEPTANCE {num:2d} PASS ({label}): {detail}")


def base_geometry(nz=8, nt=32, nx=16, ny=16):
    return build_geometry(
        dict(L1=1.0, L2=2.0, L3=3.0, Nx=nx, Ny=ny, Nz_lower=nz, Nz_elastic=nz, Nz_upper=nz, Nt=nt)
    )


def test_criterion_01_cofactor_algebra():
    start = time.time()
    rng = np.random.default_rng(2024)
    mats = []
    while len(mats) < 1000:
        cand = rng.uniform(-2.0, 2.0, size=(1200, 3, 3))
        keep = np.abs(np.linalg.det(cand)) > 1e-3
        mats.extend(cand[keep])
    m = np.array(mats[:1000])
    a = fields.cofactor(np.swapaxes(m, -1, -2))  # jacobian convention
    prod = np.einsum("...ij,...jk->...ik", a, m)
    target = np.linalg.det(m)[:, None, None] * np.eye(3)
    defect = np.abs(prod - target).max(axis=(1, 2))
    bound = 1e-12 * (1.0 + np.abs(m).max(axis=(1, 2)) ** 2)
    elapsed = time.time() - start
    assert np.all(defect <= bound)
    assert elapsed < 1.0
    report(1, "cofactor algebra", f"max defect {defect.max():.2e}, {elapsed:.2f} s")


def test_criterion_02_piola_identity():
    geom = build_geometry(
        dict(
            L1=2 * np.pi,
            L2=2 * np.pi + 1,
            L3=2 * np.pi + 2,
            Nx=32,
            Ny=32,
            Nz_lower=32,
            Nz_elastic=4,
            Nz_upper=4,
            Nt=4,
        )
    )
    x = geom.x_nodes()[:, None, None]
    y = geom.y_nodes()[None, :, None]
    z = geom.z_nodes("lower")[None, None, :]
    u, v, w = np.broadcast_arrays(0.1 * np.sin(y), 0.1 * np.sin(z), 0.1 * np.sin(x))
    disp = np.stack([u, v, w], axis=-1)[None]
    grad = fields.gradient(disp, geom, "lower") + np.eye(3)
    res32 = fields.piola_residual(fields.cofactor(grad), geom, "lower")
    assert res32 <= 1e-8

    # companion map whose residual is vertical-truncation dominated
    def coupled(geom):
        x = geom.x_nodes()[:, None, None]
        y = geom.y_nodes()[None, :, None]
        z = geom.z_nodes("lower")[None, None, :]
        u = 0.05 * np.sin(x) * np.sin(y) * np.sin(z)
        w = 0.05 * np.cos(x) * np.cos(y) * np.cos(z)
        u, w = np.broadcast_arrays(u, w)
        disp = np.stack([u, np.zeros_like(u), w], axis=-1)[None]
        grad = fields.gradient(disp, geom, "lower") + np.eye(3)
        return fields.piola_residual(fields.cofactor(grad), geom, "lower")

    res_h = coupled(geom)
    geom2 = build_geometry(
        dict(
            L1=2 * np.pi,
            L2=2 * np.pi + 1,
            L3=2 * np.pi + 2,
            Nx=32,
            Ny=32,
            Nz_lower=64,
            Nz_elastic=4,
            Nz_upper=4,
            Nt=4,
        )
    )
    res_h2 = coupled(geom2)
    assert res_h / res_h2 >= 8.0
    report(
        2,
        "Piola identity",
        f"resolved-map residual {res32:.2e}, vertical refinement gain {res_h / res_h2:.1f}x",
    )


def test_criterion_03_slobodeckij_oracle_equivalence():
    start = time.time()
    rng = np.random.default_rng(77)
    worst = 0.0
    for n in (64, 128):
        h = 1.0 / n
        t = (np.arange(n) + 0.5) * h
        for _ in range(10):
            coefs = rng.normal(size=4)
            f = (
                coefs[0] * np.sin(2 * np.pi * t)
                + coefs[1] * np.cos(4 * np.pi * t)
                + coefs[2] * t**2
                + coefs[3]
            )
            for alpha in (0.25, 0.6):
                ours = norms.slobodeckij_seminorm(f, alpha, h)
                # direct O(N^2) double sum in a different summation order
                i = np.arange(n)
                dist = np.abs(i[:, None] - i[None, :]) * h
                np.fill_diagonal(dist, 1.0)
                kernel = (f[:, None] - f[None, :]) ** 2 / dist ** (2 * alpha + 1)
                np.fill_diagonal(kernel, 0.0)
                oracle = math.sqrt(kernel.sum() * h * h)
                worst = max(worst, abs(ours - oracle) / oracle)
    elapsed = time.time() - start
    assert worst <= 1e-13
    assert elapsed < 5.0
    report(3, "Slobodeckij oracle", f"worst relative difference {worst:.2e}, {elapsed:.2f} s")


def test_criterion_04_small_time_poincare_failure():
    start = time.time()
    m_list = [2, 4, 8, 16, 32, 64, 128, 256]
    rows0 = norms.p01_experiment(0.0, 0.5, m_list, alpha=0.25, nsamples=4096)
    rows1 = norms.p01_experiment(0.1, 0.5, m_list, alpha=0.25, nsamples=4096)
    slope = np.polyfit(
        np.log([r["M"] for r in rows0]), np.log([r["seminorm"] for r in rows0]), 1
    )[0]
    assert abs(slope - (0.25 - 0.5)) <= 0.1
    r1 = [r["ratio"] for r in rows1]
    assert r1[-1] / r1[0] >= 2.0
    r0 = [r["ratio"] for r in rows0]
    # beta = 0 column: bounded by 1, varying slowly (per doubling of M)
    assert all(x <= 1.0 for x in r0)
    steps = [abs(b - a) / a for a, b in zip(r0, r0[1:])]
    assert max(steps) < 0.2
    elapsed = time.time() - start
    assert elapsed < 10.0
    report(
        4,
        "small-time Poincare failure",
        f"seminorm slope {slope:.3f}, beta=0.1 growth {r1[-1] / r1[0]:.2f}x, "
        f"beta=0 max step {max(steps) * 100:.1f}%, {elapsed:.1f} s",
    )


def test_criterion_05_stokes_manufactured_solution():
    start = time.time()
    rows = stokes_mms_study(levels=3, base_nz=16, t_end=0.5, base_steps=32)
    orders = [r[2] for r in rows[1:]]
    divres = [r[3] for r in rows]
    elapsed = time.time() - start
    assert all(o >= 1.8 for o in orders)
    assert all(d <= 1e-8 for d in divres)
    assert elapsed < 120.0
    report(
        5,
        "Stokes manufactured solution",
        f"orders {['%.2f' % o for o in orders]}, max divergence residual {max(divres):.2e}, "
        f"{elapsed:.1f} s",
    )


def test_criterion_06_wave_convergence_and_energy():
    start = time.time()
    rows = standing_wave_study(levels=3, base_nz=8, cfl=0.9)
    orders = [r[2] for r in rows[1:]]
    drift = max(r[3] for r in rows)
    elapsed = time.time() - start
    assert all(o >= 1.8 for o in orders)
    assert drift <= 1e-6
    assert elapsed < 30.0
    report(
        6,
        "wave solver",
        f"orders {['%.2f' % o for o in orders]}, max energy drift {drift:.2e}, {elapsed:.1f} s",
    )


def test_criterion_07_hidden_regularity_stability():
    # base level chosen inside the asymptotic regime of the trace norms
    geom = build_geometry(
        dict(L1=1.0, L2=2.0, L3=3.0, Nx=8, Ny=8, Nz_lower=4, Nz_elastic=16, Nz_upper=4, Nt=16)
    )
    rows = hidden_regularity_suite(geom, beta=2.0, samples=20, kmax=2, seed=321, levels=3)
    by_sample = {}
    for lev, i, lhs, rhs, ratio in rows:
        by_sample.setdefault(i, []).append(ratio)
    spans = {i: max(r) / min(r) for i, r in by_sample.items()}
    worst = max(spans.values())
    ratios = [r for _, _, _, _, r in rows]
    assert worst < 2.0
    assert max(ratios) / np.median(ratios) < 10.0
    report(
        7,
        "hidden-regularity ratio stability",
        f"worst per-sample span {worst:.2f}x over 3 levels, "
        f"max/median {max(ratios) / np.median(ratios):.2f}",
    )


def test_criterion_08_linear_contraction_at_theory_parameters():
    start = time.time()
    geom = base_geometry(nz=8, nt=32)
    v0, w1 = single_mode_initial_data(geom, amplitude=1e-3)
    params = fsi.compute_parameters(v0, None, w1, cbar=1.0, geom=geom)
    assert not params.off_theory
    ctx = fsi.make_context(geom, params, v0, w1)
    ratios = contraction_ratios(ctx, npairs=10, seed=7, amplitude=1e-3)
    elapsed = time.time() - start
    assert all(r < 1.0 for r in ratios)
    median = float(np.median(ratios))
    assert elapsed < 300.0
    report(
        8,
        "linear-map contraction",
        f"all 10 ratios < 1 (max {max(ratios):.3e}); median {median:.3e} "
        f"vs 1/2 target; t_tilde = {params.t_tilde:.2e}; {elapsed:.1f} s",
    )


def test_criterion_09_nonlinear_fixed_point():
    start = time.time()
    results = []
    iters0 = None
    for lev, (nz, nt) in enumerate([(8, 32), (16, 64), (32, 128)]):
        geom = base_geometry(nz=nz, nt=nt)
        v0, w1 = single_mode_initial_data(geom, amplitude=1e-3)
        params = fsi.compute_parameters(
            v0, None, w1, cbar=1.0, geom=geom, t_tilde_override=0.25, tol=1e-8
        )
        ctx = fsi.make_context(geom, params, v0, w1)
        state, history, converged = fsi.iterate_to_fixed_point(
            ctx, driver="nonlinear", residuals_every=1 if lev == 0 else 0
        )
        assert converged
        if lev == 0:
            iters0 = len(history)
            assert iters0 <= 30
            assert history[-1]["diff_norm"] < 1e-8
        results.append(history[-1])
    orders = {}
    for key in (
        "velocity_matching_sup",
        "stress_matching_sup",
        "lagrangian_divergence_sup",
        "piola_sup",
    ):
        vals = [r[key] for r in results]
        orders[key] = [math.log2(vals[i] / vals[i + 1]) for i in range(2)]
        assert all(o >= 1.8 for o in orders[key]), (key, vals, orders[key])
    elapsed = time.time() - start
    assert elapsed < 600.0
    report(
        9,
        "nonlinear fixed point",
        f"base grid converged in {iters0} iterations; residual orders "
        + "; ".join(f"{k.rsplit('_', 1)[0]}: {['%.2f' % o for o in v]}" for k, v in orders.items())
        + f"; {elapsed:.0f} s",
    )


def test_criterion_10_determinism(tmp_path):
    body = """
experiment = "solve"

[geometry]
L1 = 1.0
L2 = 2.0
L3 = 3.0
Nx = 16
Ny = 16
Nz_lower = 8
Nz_elastic = 8
Nz_upper = 8
Nt = 32

[data]
preset = "single-mode"
amplitude = 1e-3

[scheme]
driver = "nonlinear"
t_tilde_override = 0.25
tol = 1e-8
max_iter = 30
"""
    cfg = tmp_path / "solve-small.toml"
    cfg.write_text(body)
    assert cli.run(cfg, output_dir=tmp_path / "run1") == 0
    assert cli.run(cfg, output_dir=tmp_path / "run2") == 0
    a = (tmp_path / "run1" / "history.csv").read_bytes()
    b = (tmp_path / "run2" / "history.csv").read_bytes()
    assert a == b
    report(10, "determinism", f"bit-identical convergence CSVs ({len(a)} bytes)")
