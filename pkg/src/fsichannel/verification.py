"""Manufactured solutions, seeded random suites, and refinement studies.

Shared by the CLI experiments and the test suite so that both drive the
same verification machinery.
"""

from __future__ import annotations

import math

import numpy as np

from . import fields, fsi, norms, stokes, wave
from .geometry import ChannelGeometry, FLUID_LAYERS, INTERFACE_PLANES, build_geometry


# ---------------------------------------------------------------------------
# random smooth fields
# ---------------------------------------------------------------------------


def _random_horizontal_modes(geom, rng, kmax):
    """Smooth random real horizontal profile from modes |k| <= kmax."""
    x = geom.x_nodes()[:, None]
    y = geom.y_nodes()[None, :]
    out = np.zeros((geom.Nx, geom.Ny))
    for kx in range(-kmax, kmax + 1):
        for ky in range(-kmax, kmax + 1):
            c = rng.normal() + 1j * rng.normal()
            out += (c * np.exp(1j * (kx * x + ky * y))).real
    return out / (2 * kmax + 1)


def random_band_limited_fluid(geom, rng, kmax=2, amplitude=1.0, nt=None):
    """Random smooth fluid-region history (no boundary conditions imposed)."""
    if nt is None:
        nt = geom.Nt
    t = np.linspace(0.0, 1.0, nt + 1)
    out = {}
    for layer in FLUID_LAYERS:
        lo, hi = geom.layer_bounds(layer)
        z = geom.z_nodes(layer)
        zprof = np.stack(
            [np.cos(j * np.pi * (z - lo) / (hi - lo)) for j in range(1, 3)], axis=0
        )
        arr = np.zeros((nt + 1, geom.Nx, geom.Ny, z.size, 3))
        for comp in range(3):
            for j in range(2):
                hor = _random_horizontal_modes(geom, rng, kmax)
                tprof = np.cos((j + 1) * np.pi * t) + rng.normal() * np.sin(np.pi * t)
                arr[..., comp] += (
                    tprof[:, None, None, None]
                    * hor[None, :, :, None]
                    * zprof[j][None, None, None, :]
                )
        out[layer] = amplitude * arr
    return out


def admissible_perturbation(geom, rng, kmax=2, amplitude=1.0):
    """Fluid history vanishing at t = 0 and on the outer no-slip planes.

    The vertical profile stays nonzero on the coupling planes so the
    perturbation actually exercises the interface coupling.
    """
    t = np.linspace(0.0, 1.0, geom.Nt + 1)
    tprof = np.sin(np.pi * t) + 0.5 * np.sin(2.0 * np.pi * t) * rng.normal()
    out = {}
    for layer in FLUID_LAYERS:
        lo, hi = geom.layer_bounds(layer)
        z = geom.z_nodes(layer)
        if layer == "lower":  # outer plane at the bottom
            zprof = np.sin(0.5 * np.pi * (z - lo) / (hi - lo))
        else:  # outer plane at the top
            zprof = np.sin(0.5 * np.pi * (hi - z) / (hi - lo))
        arr = np.zeros((geom.Nt + 1, geom.Nx, geom.Ny, z.size, 3))
        for comp in range(3):
            hor = _random_horizontal_modes(geom, rng, kmax)
            arr[..., comp] = (
                tprof[:, None, None, None]
                * hor[None, :, :, None]
                * zprof[None, None, None, :]
            )
        out[layer] = amplitude * arr
    return out


def single_mode_initial_data(geom, amplitude=1e-3, kx=1, ky=1):
    """Divergence-free single-wavevector (v0, w1) pair satisfying the couplings.

    Built from two stream potentials psi1 = sin(kx x) cos(ky y) S(z) and
    psi2 = cos(kx x) sin(ky y) S(z) via v = (d_z psi1, d_z psi2,
    -d_x psi1 - d_y psi2).  The vertical profile is the quartic bump
    (z (L3 - z))^2, on which the fourth-order stencils are exact, so the
    discrete divergence vanishes identically, v0 is exactly zero on the
    outer planes, and the fluid trace matches the elastic velocity on the
    coupling planes exactly.
    """
    x = geom.x_nodes()[:, None, None]
    y = geom.y_nodes()[None, :, None]
    scale = (geom.L3**2 / 4.0) ** 2

    def S(z):
        return (z * (geom.L3 - z)) ** 2 / scale

    def S_z(z):
        return 2.0 * z * (geom.L3 - z) * (geom.L3 - 2.0 * z) / scale

    def build(layer):
        z = geom.z_nodes(layer)[None, None, :]
        u = amplitude * np.sin(kx * x) * np.cos(ky * y) * S_z(z)
        v = amplitude * np.cos(kx * x) * np.sin(ky * y) * S_z(z)
        w = -amplitude * (kx + ky) * np.cos(kx * x) * np.cos(ky * y) * S(z)
        u, v, w = np.broadcast_arrays(u, v, w)
        return np.stack([u, v, w], axis=-1)

    v0 = {layer: build(layer) for layer in FLUID_LAYERS}
    w1 = build("elastic")
    return v0, w1


# ---------------------------------------------------------------------------
# Stokes manufactured solution
# ---------------------------------------------------------------------------


class StokesManufactured:
    """u = (cos t sin x phi(z), 0, -cos t cos x PHI(z)), p = cos t cos x P(z),
    with PHI' = phi so the exact field is divergence free."""

    def phi(self, z):
        return np.cos(z)

    def phi_z(self, z):
        return -np.sin(z)

    def phi_zz(self, z):
        return -np.cos(z)

    def PHI(self, z):
        return np.sin(z)

    def PHI_z(self, z):
        return np.cos(z)

    def PHI_zz(self, z):
        return -np.sin(z)

    def P(self, z):
        return np.cos(z)

    def P_z(self, z):
        return -np.sin(z)

    def velocity(self, t, x, z):
        u = np.cos(t) * np.sin(x) * self.phi(z)
        w = -np.cos(t) * np.cos(x) * self.PHI(z)
        return np.stack(np.broadcast_arrays(u, np.zeros_like(u * 1.0), w), axis=-1)

    def pressure(self, t, x, z):
        return np.cos(t) * np.cos(x) * self.P(z) * np.ones_like(x + z)

    def forcing(self, t, x, z):
        fx = np.sin(x) * (
            -np.sin(t) * self.phi(z)
            + np.cos(t) * (self.phi(z) - self.phi_zz(z) - self.P(z))
        )
        fz = np.cos(x) * (
            np.sin(t) * self.PHI(z)
            + np.cos(t) * (self.PHI_zz(z) - self.PHI(z) + self.P_z(z))
        )
        return np.stack(np.broadcast_arrays(fx, np.zeros_like(fx), fz), axis=-1)

    def neumann(self, t, x, plane_z, n3):
        # (du/dN - p N) componentwise with N = (0, 0, n3)
        hx = n3 * np.cos(t) * np.sin(x) * self.phi_z(plane_z)
        hz = n3 * (-np.cos(t) * np.cos(x) * self.PHI_z(plane_z)) - n3 * np.cos(t) * np.cos(
            x
        ) * self.P(plane_z)
        return np.stack(np.broadcast_arrays(hx, np.zeros_like(hx), hz), axis=-1)

    def problem(self, geom, nsteps, dt):
        t = (np.arange(nsteps + 1) * dt)[:, None, None, None]
        x = geom.x_nodes()[None, :, None, None]
        f, g, u0 = {}, {}, {}
        for layer in FLUID_LAYERS:
            z = geom.z_nodes(layer)[None, None, None, :]
            f[layer] = self.forcing(t, x, z) * np.ones((1, 1, geom.Ny, 1, 1))
            g[layer] = np.zeros((nsteps + 1, geom.Nx, geom.Ny, z.size))
            u0[layer] = (self.velocity(0.0, x[0], z[0]) * np.ones((1, geom.Ny, 1, 1)))[
                ..., :
            ]
        h1 = {}
        for plane in INTERFACE_PLANES:
            layer, idx = geom.interface_fluid_layer(plane)
            plane_z = geom.z_nodes(layer)[idx]
            n3 = -1.0 if plane == "lower" else 1.0
            h1[plane] = self.neumann(t[:, :, :, 0], x[:, :, :, 0], plane_z, n3) * np.ones(
                (1, 1, geom.Ny, 1)
            )
        h2 = {}
        for plane in ("bottom", "top"):
            layer, idx = geom.outer_fluid_layer(plane)
            plane_z = geom.z_nodes(layer)[idx]
            h2[plane] = self.velocity(t[:, :, :, 0], x[:, :, :, 0], plane_z) * np.ones(
                (1, 1, geom.Ny, 1)
            )
        return stokes.StokesProblem(u0=u0, f=f, g=g, h1=h1, h2=h2)

    def exact_velocity(self, geom, t_val):
        x = geom.x_nodes()[:, None, None]
        out = {}
        for layer in FLUID_LAYERS:
            z = geom.z_nodes(layer)[None, None, :]
            out[layer] = self.velocity(t_val, x, z) * np.ones((1, geom.Ny, 1, 1))
        return out


def stokes_mms_study(levels=3, base_nz=16, t_end=0.5, base_steps=32):
    """Velocity error under vertical refinement with dt proportional to h^2."""
    mms = StokesManufactured()
    rows = []
    prev_err = None
    for lev in range(levels):
        nz = base_nz * 2**lev
        nsteps = base_steps * 4**lev
        dt = t_end / nsteps
        geom = build_geometry(
            {
                "L1": 1.0,
                "L2": 2.0,
                "L3": 3.0,
                "Nx": 8,
                "Ny": 4,
                "Nz_lower": nz,
                "Nz_elastic": 4,
                "Nz_upper": nz,
                "Nt": nsteps,
            }
        )
        problem = mms.problem(geom, nsteps, dt)
        sol = stokes.solve_stokes(problem, geom, dt=dt, nsteps=nsteps)
        exact = mms.exact_velocity(geom, t_end)
        err_sq = sum(
            norms.l2_layer(sol.u[l][-1] - exact[l], geom, l) ** 2 for l in FLUID_LAYERS
        )
        err = math.sqrt(err_sq)
        div_res = max(sol.residuals[l]["divergence"] for l in FLUID_LAYERS)
        order = math.log2(prev_err / err) if prev_err else math.nan
        rows.append([nz, err, order, div_res])
        prev_err = err
    return rows


# ---------------------------------------------------------------------------
# wave manufactured solutions
# ---------------------------------------------------------------------------


def standing_wave_study(levels=3, base_nz=8, mode_k=1, cfl=0.9, geom_kwargs=None):
    """Standing-wave error and energy drift under joint (h, dt) refinement.

    The elastic thickness is incommensurate with the unit horizon so the
    final-time error is phase-sensitive (a half-period endpoint would hide
    the leading dispersion error).
    """
    rows = []
    prev_err = None
    for lev in range(levels):
        nz = base_nz * 2**lev
        geom = build_geometry(
            {
                "L1": 1.0,
                "L2": 2.3,
                "L3": 3.3,
                "Nx": 4,
                "Ny": 4,
                "Nz_lower": 4,
                "Nz_elastic": nz,
                "Nz_upper": 4,
                "Nt": 8,
                **(geom_kwargs or {}),
            }
        )
        h = geom.dz("elastic")
        dt_target = min(cfl * h, 0.95 * wave.stability_limit(geom))
        nsteps = int(math.ceil(1.0 / dt_target))
        dt = 1.0 / nsteps
        le = geom.layer_thickness("elastic")
        omega = mode_k * np.pi / le
        z = geom.z_nodes("elastic")[None, None, :]
        shape = (geom.Nx, geom.Ny, z.shape[-1])
        w0 = np.broadcast_to(np.sin(mode_k * np.pi * (z - geom.L1) / le), shape).copy()
        w1 = np.zeros(shape)
        psi = {
            p: np.zeros((nsteps + 1, geom.Nx, geom.Ny)) for p in INTERFACE_PLANES
        }
        problem = wave.WaveProblem(w0=w0, w1=w1, psi=psi)
        sol = wave.solve_wave(problem, geom, dt=dt, nsteps=nsteps, track_energy=True)
        exact = np.broadcast_to(
            np.sin(mode_k * np.pi * (z - geom.L1) / le) * np.cos(omega * nsteps * dt), shape
        )
        err = norms.l2_layer(sol.w[-1] - exact, geom, "elastic")
        drift = float(np.abs(sol.energy - sol.energy[0]).max() / abs(sol.energy[0]))
        order = math.log2(prev_err / err) if prev_err else math.nan
        rows.append([nz, err, order, drift])
        prev_err = err
    return rows


def modulated_wave_error(geom, dt, nsteps, mode_k=1):
    """Error of the horizontally modulated separable solution e^{ix} sin(m z~) cos(omega t)."""
    le = geom.layer_thickness("elastic")
    m = mode_k * np.pi / le
    omega = math.sqrt(1.0 + m**2)
    x = geom.x_nodes()[:, None, None]
    z = geom.z_nodes("elastic")[None, None, :]
    prof = np.cos(x) * np.sin(m * (z - geom.L1)) * np.ones((1, geom.Ny, 1))
    w0 = prof.copy()
    w1 = np.zeros_like(prof)
    psi = {p: np.zeros((nsteps + 1, geom.Nx, geom.Ny)) for p in INTERFACE_PLANES}
    sol = wave.solve_wave(wave.WaveProblem(w0=w0, w1=w1, psi=psi), geom, dt=dt, nsteps=nsteps)
    exact = prof * math.cos(omega * nsteps * dt)
    return norms.l2_layer(sol.w[-1] - exact, geom, "elastic")


def hidden_regularity_suite(geom, beta=2.0, samples=20, kmax=2, seed=0, levels=3):
    """Seeded band-limited Dirichlet suite across refinement levels.

    Data: w0 = w1 = 0 and psi = s(t) g(x, y) with s(0) = s'(0) = 0, so the
    compatibility conditions hold exactly.  Returns rows
    (level, sample, lhs, rhs, ratio) using the interior-plus-trace
    estimate's two sides.
    """
    rows = []
    base = geom.config_echo()
    for lev in range(levels):
        cfg = dict(base)
        cfg["Nz_elastic"] = base["Nz_elastic"] * 2**lev
        g2 = build_geometry(cfg)
        h = g2.dz("elastic")
        dt_target = min(0.5 * h, 0.9 * wave.stability_limit(g2))
        nsteps = int(math.ceil(1.0 / dt_target))
        dt = 1.0 / nsteps
        t = np.arange(nsteps + 1) * dt
        rng = np.random.default_rng(seed)
        shape = (g2.Nx, g2.Ny, g2.layer_count("elastic") + 1)
        for i in range(samples):
            sprof = np.sin(np.pi * t) ** 2 + 0.5 * rng.normal() * np.sin(2.0 * np.pi * t) ** 2
            psi = {}
            for plane in INTERFACE_PLANES:
                gxy = _random_horizontal_modes(g2, rng, kmax)
                psi[plane] = sprof[:, None, None] * gxy[None]
            problem = wave.WaveProblem(w0=np.zeros(shape), w1=np.zeros(shape), psi=psi)
            sol = wave.solve_wave(problem, g2, dt=dt, nsteps=nsteps)
            rep = wave.hidden_regularity_report(problem, sol, beta, g2, dt=dt)
            rows.append([lev, i, rep.lhs_trace, rep.rhs_data, rep.ratio])
    return rows


# ---------------------------------------------------------------------------
# contraction measurement
# ---------------------------------------------------------------------------


def contraction_ratios(ctx, npairs=10, seed=7, kmax=2, amplitude=1e-3, driver="linear"):
    """Measured solution-map contraction over seeded admissible iterate pairs."""
    rng = np.random.default_rng(seed)
    state0 = fsi.initial_state(ctx)
    ratios = []
    for _ in range(npairs):
        d1 = admissible_perturbation(ctx.geom, rng, kmax=kmax, amplitude=amplitude)
        d2 = admissible_perturbation(ctx.geom, rng, kmax=kmax, amplitude=amplitude)
        v1 = {l: state0.v[l] + d1[l] for l in FLUID_LAYERS}
        v2 = {l: state0.v[l] + d2[l] for l in FLUID_LAYERS}
        denom = fsi.iterate_difference(v1, v2, ctx)
        if driver == "linear":
            out1 = fsi.linear_lambda_step(v1, ctx)[0]
            out2 = fsi.linear_lambda_step(v2, ctx)[0]
        else:
            s1 = fsi.IterationState(v=v1, q=state0.q, w=state0.w, w_t=state0.w_t)
            s2 = fsi.IterationState(v=v2, q=state0.q, w=state0.w, w_t=state0.w_t)
            out1 = fsi.nonlinear_pi_step(s1, ctx).v
            out2 = fsi.nonlinear_pi_step(s2, ctx).v
        numer = fsi.iterate_difference(out1, out2, ctx)
        ratios.append(numer / denom)
    return ratios
