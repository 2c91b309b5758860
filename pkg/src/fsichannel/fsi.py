"""Fixed-point drivers coupling the wave and Stokes subsolvers.

Two iterations share one skeleton: integrate the cutoff-weighted velocity
trace into Dirichlet data for the elastic slab, solve the wave equation,
extract the normal trace, feed it as Neumann data to the Stokes solve.
The linear driver carries fixed forcing data; the nonlinear driver builds
a flow map and cofactor field from the current iterate and assembles the
variable-coefficient perturbations as forcing for the constant-coefficient
solve, so a fixed point satisfies the variable-coefficient system.

Parameters follow the data-size law M = (6 cbar)^7 (1 + |v0|^7 + |w0| +
|w1|) with cutoff time 1/M^6; the law is a generation policy whose
contraction behavior is measured, not assumed.  Manual cutoff overrides
are honored but flagged off-theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fields, norms, wave as wave_mod
from .fields import CutoffFunction, FlowMapState, make_cutoff
from .geometry import ChannelGeometry, FLUID_LAYERS, INTERFACE_PLANES
from .stokes import NumericalFailure, StokesProblem, StokesSolver, initial_pressure

_EYE = np.eye(3)


@dataclass
class SchemeParameters:
    """Regularity exponent, scheme constants, and the M / cutoff law."""

    s: float
    eps0: float
    cbar: float
    M: float
    t_tilde: float
    tol: float = 1e-8
    max_iter: int = 30
    off_theory: bool = False  # set when the cutoff time was overridden
    data_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (1.5 < self.s < 1.5 + self.eps0 + 1e-12):
            raise ValueError(f"s = {self.s} outside (3/2, 3/2 + eps0)")
        if not (0.0 < self.eps0 < 0.05):
            raise ValueError(f"eps0 = {self.eps0} outside (0, 1/20)")


@dataclass
class IterationState:
    """One Picard iterate with its subsolver outputs and measured norms."""

    v: dict                      # fluid layer -> (nt+1, Nx, Ny, Nz+1, 3)
    q: dict                      # fluid layer -> (nt+1, Nx, Ny, Nz+1)
    w: np.ndarray                # elastic displacement history
    w_t: np.ndarray
    flow: dict | None = None     # fluid layer -> FlowMapState (nonlinear driver)
    norms: dict = field(default_factory=dict)
    index: int = 0


def fluid_h_norm(v0: dict, s: float, geom: ChannelGeometry) -> float:
    return math.sqrt(
        sum(norms.spatial_fractional_norm(v0[l], s, geom, l) ** 2 for l in FLUID_LAYERS)
    )


def compute_parameters(
    v0: dict,
    w0: np.ndarray | None,
    w1: np.ndarray,
    cbar: float,
    geom: ChannelGeometry,
    s: float = 1.52,
    eps0: float = 0.04,
    tol: float = 1e-8,
    max_iter: int = 30,
    t_tilde_override: float | None = None,
) -> SchemeParameters:
    """Data-size bound M and cutoff time from the initial data norms.

    M = (6 cbar)^7 (1 + |v0|_{H^s}^7 + |w0|_{H^{s+1/2}} + |w1|_{H^{s-1/2}})
    and t_tilde = 1/M^6, checked against (0, 1/4] rather than clamped.  A
    manual override replaces t_tilde and marks the parameters off-theory.
    """
    if cbar < 1.0:
        raise ValueError("cbar must be >= 1")
    v0n = fluid_h_norm(v0, s, geom)
    w0n = 0.0 if w0 is None else norms.spatial_fractional_norm(w0, s + 0.5, geom, "elastic")
    w1n = norms.spatial_fractional_norm(w1, s - 0.5, geom, "elastic")
    m = (6.0 * cbar) ** 7 * (1.0 + v0n**7 + w0n + w1n)
    t_tilde = 1.0 / m**6
    off_theory = False
    if t_tilde_override is not None:
        if not (0.0 < t_tilde_override <= 0.25):
            raise ValueError(f"t_tilde override {t_tilde_override} outside (0, 1/4]")
        t_tilde = t_tilde_override
        off_theory = True
    elif not (0.0 < t_tilde <= 0.25):
        raise NumericalFailure(f"computed t_tilde = {t_tilde} outside (0, 1/4]")
    return SchemeParameters(
        s=s,
        eps0=eps0,
        cbar=cbar,
        M=m,
        t_tilde=t_tilde,
        tol=tol,
        max_iter=max_iter,
        off_theory=off_theory,
        data_norms={"v0": v0n, "w0": w0n, "w1": w1n},
    )


@dataclass
class DriverContext:
    """Shared machinery of one fixed-point run; immutable across iterates."""

    geom: ChannelGeometry
    params: SchemeParameters
    psi: CutoffFunction
    stokes: StokesSolver
    v0: dict
    w0: np.ndarray
    w1: np.ndarray
    q0: dict
    wave_scheme: str = "leapfrog"
    # fixed forcing data of the linear driver; zeros when absent
    data_f: dict | None = None
    data_g: dict | None = None
    data_h: dict | None = None
    experimental_w0: bool = False


def make_context(
    geom: ChannelGeometry,
    params: SchemeParameters,
    v0: dict,
    w1: np.ndarray,
    w0: np.ndarray | None = None,
    wave_scheme: str = "leapfrog",
    stokes_theta: float = 1.0,
    data_f: dict | None = None,
    data_g: dict | None = None,
    data_h: dict | None = None,
) -> DriverContext:
    experimental = w0 is not None and float(np.abs(w0).max()) > 0.0
    if w0 is None:
        w0 = np.zeros((geom.Nx, geom.Ny, geom.layer_count("elastic") + 1, 3))
    q0 = initial_pressure(v0, w0, geom)
    return DriverContext(
        geom=geom,
        params=params,
        psi=make_cutoff(params.t_tilde),
        stokes=StokesSolver(geom, theta=stokes_theta),
        v0=v0,
        w0=w0,
        w1=w1,
        q0=q0,
        wave_scheme=wave_scheme,
        data_f=data_f,
        data_g=data_g,
        data_h=data_h,
        experimental_w0=experimental,
    )


def initial_state(ctx: DriverContext) -> IterationState:
    """Constant-in-time extension of the initial data as the first iterate."""
    nt = ctx.geom.Nt + 1
    v = {l: np.repeat(ctx.v0[l][None], nt, axis=0) for l in FLUID_LAYERS}
    q = {l: np.repeat(ctx.q0[l][None], nt, axis=0) for l in FLUID_LAYERS}
    w = np.repeat(ctx.w0[None], nt, axis=0)
    w_t = np.repeat(ctx.w1[None], nt, axis=0)
    return IterationState(v=v, q=q, w=w, w_t=w_t, index=0)


def check_z_membership(v: dict, ctx: DriverContext, tol: float = 1e-10):
    """Exact membership conditions: pinned initial slice and outer no-slip."""
    geom = ctx.geom
    worst = 0.0
    for layer in FLUID_LAYERS:
        worst = max(worst, float(np.abs(v[layer][0] - ctx.v0[layer]).max()))
    for plane in ("bottom", "top"):
        layer, idx = geom.outer_fluid_layer(plane)
        worst = max(worst, float(np.abs(v[layer][:, :, :, idx, :]).max()))
    scale = 1.0 + max(float(np.abs(ctx.v0[l]).max()) for l in FLUID_LAYERS)
    if worst > tol * scale:
        raise NumericalFailure(f"iterate violates the admissible-set conditions by {worst:.2e}")
    return worst


def integrated_interface_data(v: dict, ctx: DriverContext) -> dict:
    """Dirichlet data for the elastic slab: w0 trace plus int_0^t psi v."""
    geom = ctx.geom
    t = geom.t_nodes()
    weights = ctx.psi(t)[:, None, None, None]
    out = {}
    for plane in INTERFACE_PLANES:
        layer, idx = geom.interface_fluid_layer(plane)
        vtrace = v[layer][:, :, :, idx, :]
        eidx = geom.interface_elastic_index(plane)
        out[plane] = ctx.w0[None, :, :, eidx, :] + fields.cumulative_trapezoid(
            weights * vtrace, geom.dt
        )
    return out


def _wave_substep(v: dict, ctx: DriverContext) -> wave_mod.WaveSolution:
    psi_data = integrated_interface_data(v, ctx)
    problem = wave_mod.WaveProblem(w0=ctx.w0, w1=ctx.w1, psi=psi_data)
    return wave_mod.solve_wave(
        problem, ctx.geom, scheme=ctx.wave_scheme, check_compat=False
    )


def _stokes_substep(ctx, trace, f, g, h_extra, g_tilde=None, b=None):
    geom = ctx.geom
    h1 = {}
    for plane in INTERFACE_PLANES:
        h1[plane] = trace[plane] + (h_extra[plane] if h_extra else 0.0)
    problem = StokesProblem(
        u0=ctx.v0, f=f, g=g, h1=h1, h2=None, g_tilde=g_tilde, b=b
    )
    sol = ctx.stokes.solve(problem, nsteps=geom.Nt)
    for layer in FLUID_LAYERS:
        sol.p[layer][0] = ctx.q0[layer]  # implicit stepping leaves t = 0 open
    return sol


def linear_lambda_step(v: dict, ctx: DriverContext):
    """One application of the linear solution map.

    Integrates the cutoff-weighted trace of ``v`` into wave Dirichlet
    data, solves the wave equation, and drives the Stokes solve with the
    resulting normal trace plus the fixed Neumann data.  Returns the new
    (v, q) together with the wave solution and subsolver residuals.
    """
    check_z_membership(v, ctx)
    wsol = _wave_substep(v, ctx)
    trace = wave_mod.normal_trace(wsol.w, ctx.geom)
    sol = _stokes_substep(ctx, trace, ctx.data_f, ctx.data_g, ctx.data_h)
    return sol.u, sol.p, wsol, sol.residuals


def assemble_nonlinear_forcing(flow: dict, vbar: dict, qbar: dict, geom: ChannelGeometry, dt: float):
    """Variable-coefficient perturbations as data for the flat-operator solve.

    From the cofactor field a of the flow map and the current (v, q):

        f_k = d_j((a_jl a_ml - d_jm) d_m v_k) - d_j((a_jk - d_jk) q)
        g   = -d_j((a_ji - d_ji) v_i)
        h_k = (-(a_jl a_ml - d_jm) d_m v_k + (a_jk - d_jk) q) N^j   on the planes
        b_j = -(d_t a_ji v_i + (a_ji - d_ji) d_t v_i),   g_tilde = 0,

    the sign of b chosen so that g_t = g_tilde + div b holds discretely.
    """
    f, g, b, g_tilde, h = {}, {}, {}, {}, {}
    for layer in FLUID_LAYERS:
        a = flow[layer].cofactor
        if flow[layer].min_det() <= 0.0:
            raise NumericalFailure(
                f"flow map lost invertibility (layer {layer}, min det = {flow[layer].min_det():.3e})",
                {"layer": layer, "min_det": flow[layer].min_det()},
            )
        hz = geom.dz(layer)
        v = vbar[layer]
        q = qbar[layer]
        aat = np.einsum("...jl,...ml->...jm", a, a)
        tc = aat - _EYE   # a a^T - I
        c = a - _EYE      # a - I
        gradv = fields.gradient(v, geom, layer)          # [m, k]
        flux = np.einsum("...jm,...mk->...jk", tc, gradv)
        pflux = c * q[..., None, None]                   # (a - I)_{jk} q
        fk = _divergence_first_index(flux - pflux, geom, hz)
        g[layer] = -_divergence_vector(np.einsum("...ji,...i->...j", c, v), geom, hz)
        a_t = fields.time_derivative(a, dt)
        v_t = fields.time_derivative(v, dt)
        b[layer] = -(
            np.einsum("...ji,...i->...j", a_t, v)
            + np.einsum("...ji,...i->...j", c, v_t)
        )
        g_tilde[layer] = np.zeros_like(g[layer])
        f[layer] = fk
        plane = "lower" if layer == "lower" else "upper"
        idx = geom.interface_fluid_layer(plane)[1]
        n3 = -1.0 if plane == "lower" else 1.0
        h[plane] = n3 * (-flux[:, :, :, idx, 2, :] + pflux[:, :, :, idx, 2, :])
    return f, g, h, b, g_tilde


def _divergence_vector(vec, geom, hz):
    return (
        fields.d_dx(vec[..., 0], geom)
        + fields.d_dy(vec[..., 1], geom)
        + fields.d_dz(vec[..., 2], hz)
    )


def _divergence_first_index(tens, geom, hz):
    """d_j T_{jk} of a (..., 3, 3) field, contracting the first tensor index."""
    return (
        fields.d_dx(tens[..., 0, :], geom)
        + fields.d_dy(tens[..., 1, :], geom)
        + fields.d_dz(tens[..., 2, :], hz)
    )


def nonlinear_pi_step(state: IterationState, ctx: DriverContext):
    """One application of the nonlinear solution map.

    Flow map and cofactor from the iterate, wave solve on the integrated
    trace data, then the Stokes solve forced by the coefficient
    perturbations of the iterate.  The iterate norm is measured against M
    and flagged, never enforced.
    """
    check_z_membership(state.v, ctx)
    geom = ctx.geom
    flow = {l: fields.flow_map(state.v[l], ctx.psi, geom, l) for l in FLUID_LAYERS}
    for l in FLUID_LAYERS:
        if flow[l].min_det() <= 0.0:
            raise NumericalFailure(
                f"flow map lost invertibility (layer {l}, min det = {flow[l].min_det():.3e})",
                {"layer": l, "min_det": flow[l].min_det()},
            )
    wsol = _wave_substep(state.v, ctx)
    trace = wave_mod.normal_trace(wsol.w, geom)
    f, g, h, b, g_tilde = assemble_nonlinear_forcing(flow, state.v, state.q, geom, geom.dt)
    sol = _stokes_substep(ctx, trace, f, g, h, g_tilde=g_tilde, b=b)
    return IterationState(
        v=sol.u,
        q=sol.p,
        w=wsol.w,
        w_t=wsol.w_t,
        flow=flow,
        index=state.index + 1,
    )


def iterate_norm(v: dict, ctx: DriverContext) -> float:
    """K^{s+1} norm of a fluid iterate (squared pieces summed over slabs)."""
    spec = norms.NormSpec.parabolic(ctx.params.s + 1.0, "fluid")
    return norms.spacetime_norm(v, spec, ctx.geom).value


def iterate_difference(v1: dict, v2: dict, ctx: DriverContext) -> float:
    diff = {l: v1[l] - v2[l] for l in FLUID_LAYERS}
    return iterate_norm(diff, ctx)


def linear_state_from(v, q, wsol, index):
    return IterationState(v=v, q=q, w=wsol.w, w_t=wsol.w_t, index=index)


def iterate_to_fixed_point(ctx: DriverContext, driver: str = "nonlinear", residuals_every: int = 1):
    """Picard iteration of the selected solution map.

    Stops when the successive K^{s+1} difference drops below the
    tolerance (a zero tolerance runs exactly max_iter steps); returns the
    final state, the per-step history, and the convergence flag.  The
    coupled residual report is evaluated every ``residuals_every`` steps
    (0: only on the final iterate) and always on the last row.
    """
    if driver not in ("linear", "nonlinear"):
        raise ValueError(f"unknown driver {driver!r}")
    params = ctx.params
    state = initial_state(ctx)
    history = []
    prev_diff = None
    converged = False
    for n in range(1, params.max_iter + 1):
        if driver == "nonlinear":
            new_state = nonlinear_pi_step(state, ctx)
        else:
            v, q, wsol, _ = linear_lambda_step(state.v, ctx)
            new_state = linear_state_from(v, q, wsol, state.index + 1)
        diff = iterate_difference(new_state.v, state.v, ctx)
        ratio = (diff / prev_diff) if prev_diff not in (None, 0.0) else math.nan
        knorm = iterate_norm(new_state.v, ctx)
        new_state.norms = {"K_s_plus_1": knorm, "within_M": bool(knorm <= params.M)}
        row = {"n": n, "diff_norm": diff, "ratio": ratio, "iterate_norm": knorm}
        state = new_state
        prev_diff = diff
        done = (params.tol > 0.0 and diff < params.tol) or n == params.max_iter
        if done or (residuals_every and n % residuals_every == 0):
            row.update(verify_coupled_solution(new_state, ctx))
        history.append(row)
        if params.tol > 0.0 and diff < params.tol:
            converged = True
            break
    return state, history, converged


def verify_coupled_solution(state: IterationState, ctx: DriverContext, skip_time: float = 0.1) -> dict:
    """Sup and L^2 residuals of the coupled interface and interior laws.

    Measures velocity matching w_t = psi v, the stress matching condition,
    the Lagrangian divergence, and the Piola identity, all with the
    high-order measurement operators rather than the solver's internal
    ones.  Pure measurement; the implied constant of a tolerance of the
    shape K (h^2 + dt) is recorded per residual.

    Samples with t < skip_time are excluded: at t = 0 the stress matching
    is a compatibility property of the data, not of the scheme, and
    generic data enter through a discrete initial layer whose amplitude is
    set by that compatibility defect, not by the resolution.  The raw
    t = 0 stress defect is reported separately.
    """
    geom = ctx.geom
    dt = geom.dt
    t = geom.t_nodes()
    psi_t = ctx.psi(t)
    flow = state.flow
    out = {}

    def record(name, sup, l2):
        hmax = max(geom.dz(l) for l in FLUID_LAYERS)
        out[f"{name}_sup"] = sup
        out[f"{name}_l2"] = l2
        out[f"{name}_K"] = sup / (hmax**2 + dt)

    wt_time = norms._trapezoid_weights(len(t), dt)
    first = max(2, int(math.ceil(skip_time / dt)))
    sl = slice(first, None)
    gradv_cache = {l: fields.gradient(state.v[l], geom, l) for l in FLUID_LAYERS}

    # velocity matching on the coupling planes
    sup = 0.0
    l2sq = 0.0
    for plane in INTERFACE_PLANES:
        eidx = geom.interface_elastic_index(plane)
        layer, fidx = geom.interface_fluid_layer(plane)
        mismatch = state.w_t[:, :, :, eidx, :] - psi_t[:, None, None, None] * state.v[layer][:, :, :, fidx, :]
        sup = max(sup, float(np.abs(mismatch[sl]).max()))
        l2sq += float(
            (wt_time[sl, None, None, None] * mismatch[sl] ** 2).sum() * geom.dx * geom.dy
        )
    record("velocity_matching", sup, math.sqrt(l2sq))

    # stress matching on the coupling planes
    sup = 0.0
    l2sq = 0.0
    t0_defect = 0.0
    lhs = wave_mod.normal_trace(state.w, geom)
    for plane in INTERFACE_PLANES:
        layer, fidx = geom.interface_fluid_layer(plane)
        n3 = -1.0 if plane == "lower" else 1.0
        gradv = gradv_cache[layer]
        if flow is not None:
            a = flow[layer].cofactor
            aat = np.einsum("...jl,...ml->...jm", a, a)
            rhs_vol = np.einsum("...m,...mk->...k", aat[..., 2, :], gradv) - (
                a[..., 2, :] * state.q[layer][..., None]
            )
        else:
            rhs_vol = gradv[..., 2, :] - _EYE[2] * state.q[layer][..., None]
        rhs = n3 * rhs_vol[:, :, :, fidx, :]
        mismatch = lhs[plane] - rhs
        sup = max(sup, float(np.abs(mismatch[sl]).max()))
        t0_defect = max(t0_defect, float(np.abs(mismatch[0]).max()))
        l2sq += float((wt_time[sl, None, None, None] * mismatch[sl] ** 2).sum() * geom.dx * geom.dy)
    record("stress_matching", sup, math.sqrt(l2sq))
    out["stress_compatibility_t0"] = t0_defect

    # Lagrangian divergence over the fluid region
    sup = 0.0
    l2sq = 0.0
    for layer in FLUID_LAYERS:
        gradv = gradv_cache[layer]
        if flow is not None:
            ldiv = np.einsum("...ji,...ji->...", flow[layer].cofactor, gradv)
        else:
            ldiv = np.einsum("...jj->...", gradv)
        sup = max(sup, float(np.abs(ldiv[sl]).max()))
        w_layer = norms.layer_weights(geom, layer)
        l2sq += float((wt_time[sl, None, None, None] * ldiv[sl] ** 2 * w_layer[None]).sum())
    record("lagrangian_divergence", sup, math.sqrt(l2sq))

    # Piola identity of the cofactor field
    if flow is not None:
        piola = max(fields.piola_residual(flow[l].cofactor, geom, l) for l in FLUID_LAYERS)
    else:
        piola = 0.0
    hmax = max(geom.dz(l) for l in FLUID_LAYERS)
    out["piola_sup"] = piola
    out["piola_K"] = piola / (hmax**2 + dt)
    return out


def freeze_after_cutoff_defect(state: IterationState, ctx: DriverContext) -> float:
    """sup change of flow map, cofactor, and interface data past 2 t_tilde."""
    geom = ctx.geom
    t = geom.t_nodes()
    frozen = t >= 2.0 * ctx.params.t_tilde - 1e-14
    if frozen.sum() < 2 or state.flow is None:
        return 0.0
    worst = 0.0
    for layer in FLUID_LAYERS:
        for arr in (state.flow[layer].eta, state.flow[layer].cofactor):
            tail = arr[frozen]
            worst = max(worst, float(np.abs(tail - tail[0]).max()))
    data = integrated_interface_data(state.v, ctx)
    for plane in INTERFACE_PLANES:
        tail = data[plane][frozen]
        worst = max(worst, float(np.abs(tail - tail[0]).max()))
    return worst
