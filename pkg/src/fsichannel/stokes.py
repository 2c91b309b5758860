"""Time-dependent Stokes on the fluid slabs with Neumann coupling data.

The problem solved per slab is

    u_t - Lap u + grad p = f,   div u = g         in the slab,
    du/dN - p N = h1                              on the coupling plane,
    u = h2                                        on the outer plane,

with N the interface normal oriented outward from the elastic layer.  The
two fluid slabs couple only through the elastic layer, so they are solved
independently.

Discretization: Fourier collocation in (x, y); second-order centered
differences on a staggered vertical grid with the horizontal velocity and
pressure at cell centers and the vertical velocity at faces (this removes
the spurious pressure mode without stabilization, and the Neumann row
pins the pressure level per mode).  Time stepping is a theta scheme with
backward Euler as the default and Crank-Nicolson behind a flag; the
divergence constraint, boundary rows, and the pressure are always taken
at the new time level.  Each horizontal mode yields one small dense
saddle-point block, factorized once at setup; modes are independent and
the per-step solve is a batched matrix-vector product.

Unpaired Nyquist modes are projected out of all data, consistent with the
symmetric-wavenumber convention of the derivative operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fields
from .geometry import ChannelGeometry, FLUID_LAYERS

# pressure extrapolation from the first three cell centers to the face
_P_FACE = np.array([15.0, -10.0, 3.0]) / 8.0
# one-sided d/dz at a face from the three nearest faces
_W_FACE = np.array([-1.5, 2.0, -0.5])


class NumericalFailure(RuntimeError):
    """Numerical breakdown carrying a machine-readable diagnostic."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass
class StokesProblem:
    """Data for the two-slab Neumann-Stokes problem.

    Volume fields are sampled on the collocated node grids, one entry per
    fluid layer (keys "lower"/"upper"); boundary data are keyed by plane
    ("lower"/"upper" for the coupling set, "bottom"/"top" for the outer
    set).  ``g_tilde``/``b`` record the structural decomposition
    g_t = g_tilde + div b used by the regularity monitor; they do not
    enter the solve.
    """

    u0: dict
    f: dict | None = None       # layer -> (nt+1, Nx, Ny, Nz+1, 3)
    g: dict | None = None       # layer -> (nt+1, Nx, Ny, Nz+1)
    h1: dict | None = None      # coupling plane -> (nt+1, Nx, Ny, 3)
    h2: dict | None = None      # outer plane -> (nt+1, Nx, Ny, 3)
    g_tilde: dict | None = None
    b: dict | None = None


@dataclass
class StokesSolution:
    u: dict           # layer -> (nt+1, Nx, Ny, Nz+1, 3)
    p: dict           # layer -> (nt+1, Nx, Ny, Nz+1); sample 0 is left zero
    residuals: dict   # algebraic residual sup-norms per row block


# slab orientation: (dirichlet face end, neumann face end, N3 of the coupling plane)
_SLAB_ENDS = {"lower": ("first", "last", -1.0), "upper": ("last", "first", 1.0)}


class SlabStokesSolver:
    """Factorized per-mode solver for one fluid slab; reusable across solves."""

    def __init__(self, geom: ChannelGeometry, layer: str, dt: float, theta: float = 1.0):
        if layer not in FLUID_LAYERS:
            raise ValueError(f"{layer!r} is not a fluid layer")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if not (0.5 <= theta <= 1.0):
            raise ValueError("theta must lie in [1/2, 1]")
        self.geom = geom
        self.layer = layer
        self.dt = dt
        self.theta = theta
        self.nz = geom.layer_count(layer)
        self.h = geom.dz(layer)
        self.dirichlet_end, self.neumann_end, self.n3 = _SLAB_ENDS[layer]

        kxg, kyg = np.meshgrid(geom.kx(), geom.ky()[: geom.Ny // 2 + 1], indexing="ij")
        self.kx = kxg.ravel()
        self.ky = kyg.ravel()
        self.nmodes = self.kx.size
        self._assemble()

    # unknown layout per mode: [u centers | v centers | w faces | p centers]
    def _offsets(self):
        nz = self.nz
        return 0, nz, 2 * nz, 3 * nz + 1

    def _assemble(self):
        nz, h, dt, th = self.nz, self.h, self.dt, self.theta
        n = 4 * nz + 1
        iu, iv, iw, ip = self._offsets()
        A = np.zeros((self.nmodes, n, n), dtype=complex)
        k2 = self.kx**2 + self.ky**2

        jd = 0 if self.dirichlet_end == "first" else nz - 1
        jn = 0 if self.neumann_end == "first" else nz - 1
        for block in (iu, iv):
            for j in range(nz):
                r = block + j
                A[:, r, r] += 1.0 / dt + th * (k2 + 2.0 / h**2)
                if j > 0:
                    A[:, r, r - 1] -= th / h**2
                if j < nz - 1:
                    A[:, r, r + 1] -= th / h**2
            # ghost closures: Dirichlet face adds 1/h^2, Neumann face removes it
            A[:, block + jd, block + jd] += th / h**2
            A[:, block + jn, block + jn] -= th / h**2
        for j in range(nz):
            A[:, iu + j, ip + j] += 1j * self.kx
            A[:, iv + j, ip + j] += 1j * self.ky

        # w momentum on interior faces
        for j in range(1, nz):
            r = iw + j
            A[:, r, r] += 1.0 / dt + th * (k2 + 2.0 / h**2)
            A[:, r, r - 1] -= th / h**2
            A[:, r, r + 1] -= th / h**2
            A[:, r, ip + j] += 1.0 / h
            A[:, r, ip + j - 1] -= 1.0 / h

        # boundary rows for w: pinned value at the outer face, stress row at
        # the coupling face (d_z w - p at the face, both one-sided)
        fD = 0 if self.dirichlet_end == "first" else nz
        A[:, iw + fD, iw + fD] = 1.0
        fN = 0 if self.neumann_end == "first" else nz
        if self.neumann_end == "last":
            for i, c in enumerate(_W_FACE):
                A[:, iw + fN, iw + nz - i] += -c / h
            for i, c in enumerate(_P_FACE):
                A[:, iw + fN, ip + nz - 1 - i] += -c
        else:
            for i, c in enumerate(_W_FACE):
                A[:, iw + fN, iw + i] += c / h
            for i, c in enumerate(_P_FACE):
                A[:, iw + fN, ip + i] += -c

        # divergence at cell centers
        for j in range(nz):
            r = ip + j
            A[:, r, iu + j] += 1j * self.kx
            A[:, r, iv + j] += 1j * self.ky
            A[:, r, iw + j + 1] += 1.0 / h
            A[:, r, iw + j] -= 1.0 / h

        try:
            self.inv = np.linalg.inv(A)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular saddle-point block in layer {self.layer}") from exc
        defect = np.abs(np.matmul(A, self.inv) - np.eye(n)).max(axis=(1, 2))
        worst = int(defect.argmax())
        if defect[worst] > 1e-8:
            raise NumericalFailure(
                "ill-conditioned saddle-point block "
                f"(layer {self.layer}, mode kx={self.kx[worst]:g} ky={self.ky[worst]:g}, "
                f"defect {defect[worst]:.2e})"
            )
        self.matrix = A
        self._row_blocks = {
            "momentum": list(range(iu, iw)) + list(range(iw + 1, iw + nz)),
            "divergence": list(range(ip, ip + nz)),
            "boundary": [iw + fD, iw + fN],
        }

    # -- transforms -----------------------------------------------------------

    def _to_modes(self, arr: np.ndarray) -> np.ndarray:
        """rfft2 over (x, y) of (..., Nx, Ny, Z) and flatten the mode axes."""
        geom = self.geom
        coef = np.fft.rfft2(arr, axes=(-3, -2))
        if geom.Nx % 2 == 0:
            coef[..., geom.Nx // 2, :, :] = 0.0
        if geom.Ny % 2 == 0:
            coef[..., :, -1, :] = 0.0
        return coef.reshape(arr.shape[:-3] + (self.nmodes, arr.shape[-1]))

    def _plane_to_modes(self, arr: np.ndarray) -> np.ndarray:
        """rfft2 of (..., Nx, Ny) plane data, flattened to (..., nmodes)."""
        geom = self.geom
        coef = np.fft.rfft2(arr, axes=(-2, -1))
        if geom.Nx % 2 == 0:
            coef[..., geom.Nx // 2, :] = 0.0
        if geom.Ny % 2 == 0:
            coef[..., :, -1] = 0.0
        return coef.reshape(arr.shape[:-2] + (self.nmodes,))

    def _from_modes(self, coef: np.ndarray, nzp: int) -> np.ndarray:
        geom = self.geom
        shaped = coef.reshape(coef.shape[:-2] + (geom.Nx, geom.Ny // 2 + 1, nzp))
        return np.fft.irfft2(shaped, s=(geom.Nx, geom.Ny), axes=(-3, -2))

    @staticmethod
    def _centers(prof: np.ndarray) -> np.ndarray:
        return 0.5 * (prof[..., 1:] + prof[..., :-1])

    # -- right-hand side -------------------------------------------------------

    def _rhs(self, state, f_new, g_new, h1_new, h2_new, f_old, h1_old, h2_old):
        """System right side for one step.

        ``state``: (nmodes, n) at the old time level; ``f_*``: (3, nmodes,
        Z) nodal forcing; ``g_*``: (nmodes, Z); ``h1_*``/``h2_*``: (3,
        nmodes) boundary data.
        """
        nz, h, dt, th = self.nz, self.h, self.dt, self.theta
        iu, iv, iw, ip = self._offsets()
        rhs = np.zeros_like(state)

        fu, fv, fw = self._centers(f_new[0]), self._centers(f_new[1]), f_new[2]
        if th < 1.0:
            fu = th * fu + (1 - th) * self._centers(f_old[0])
            fv = th * fv + (1 - th) * self._centers(f_old[1])
            fw = th * fw + (1 - th) * f_old[2]

        rhs[:, iu : iu + nz] = fu + state[:, iu : iu + nz] / dt
        rhs[:, iv : iv + nz] = fv + state[:, iv : iv + nz] / dt
        rhs[:, iw + 1 : iw + nz] = fw[:, 1:nz] + state[:, iw + 1 : iw + nz] / dt
        if th < 1.0:
            rhs += (1.0 - th) * self._explicit_momentum(state, h1_old, h2_old)

        # ghost-closure data for u, v at the new time level
        jd = 0 if self.dirichlet_end == "first" else nz - 1
        jn = 0 if self.neumann_end == "first" else nz - 1
        sig_n = 1.0 if self.neumann_end == "last" else -1.0
        for comp, block in ((0, iu), (1, iv)):
            rhs[:, block + jd] += th * 2.0 * h2_new[comp] / h**2
            rhs[:, block + jn] += th * sig_n * (self.n3 * h1_new[comp]) / h

        # constraint rows at the new time level
        fD = 0 if self.dirichlet_end == "first" else nz
        fN = 0 if self.neumann_end == "first" else nz
        rhs[:, iw + fD] = h2_new[2]
        rhs[:, iw + fN] = self.n3 * h1_new[2]
        rhs[:, ip : ip + nz] = self._centers(g_new)
        return rhs

    def _explicit_momentum(self, state, h1_old, h2_old):
        """Momentum-row action of (d_zz - k^2) on the old state (theta < 1)."""
        nz, h = self.nz, self.h
        iu, iv, iw, _ = self._offsets()
        out = np.zeros_like(state)
        k2 = (self.kx**2 + self.ky**2)[:, None]

        def second_diff(prof, comp):
            lo = np.empty_like(prof[:, 0])
            hi = np.empty_like(prof[:, 0])
            slope = self.n3 * h1_old[comp]
            if self.dirichlet_end == "first":
                lo = 2.0 * h2_old[comp] - prof[:, 0]
                hi = prof[:, -1] + h * slope
            else:
                lo = prof[:, 0] - h * slope
                hi = 2.0 * h2_old[comp] - prof[:, -1]
            ghosted = np.concatenate([lo[:, None], prof, hi[:, None]], axis=1)
            return (ghosted[:, 2:] - 2.0 * prof + ghosted[:, :-2]) / h**2

        u = state[:, iu : iu + nz]
        v = state[:, iv : iv + nz]
        w = state[:, iw : iw + nz + 1]
        out[:, iu : iu + nz] = second_diff(u, 0) - k2 * u
        out[:, iv : iv + nz] = second_diff(v, 1) - k2 * v
        out[:, iw + 1 : iw + nz] = (w[:, 2:] - 2.0 * w[:, 1:-1] + w[:, :-2]) / h**2 - k2 * w[:, 1:-1]
        return out

    # -- nodal reconstruction ---------------------------------------------------

    def _nodal(self, state, h1_new, h2_new):
        """Collocated nodal (u, p) mode profiles from one staggered state."""
        nz, h = self.nz, self.h
        iu, iv, iw, ip = self._offsets()
        u_node = np.zeros((3, self.nmodes, nz + 1), dtype=complex)
        u_node[2] = state[:, iw : iw + nz + 1]
        jd_face = 0 if self.dirichlet_end == "first" else nz
        jn_face = 0 if self.neumann_end == "first" else nz
        for comp, block in ((0, iu), (1, iv)):
            c = state[:, block : block + nz]
            u_node[comp, :, 1:nz] = 0.5 * (c[:, :-1] + c[:, 1:])
            u_node[comp, :, jd_face] = h2_new[comp]
            slope = self.n3 * h1_new[comp]
            if jn_face == nz:
                u_node[comp, :, nz] = c[:, -1] + 0.5 * h * slope
            else:
                u_node[comp, :, 0] = c[:, 0] - 0.5 * h * slope
        p = state[:, ip : ip + nz]
        p_node = np.zeros((self.nmodes, nz + 1), dtype=complex)
        p_node[:, 1:nz] = 0.5 * (p[:, :-1] + p[:, 1:])
        p_node[:, 0] = _P_FACE[0] * p[:, 0] + _P_FACE[1] * p[:, 1] + _P_FACE[2] * p[:, 2]
        p_node[:, nz] = _P_FACE[0] * p[:, -1] + _P_FACE[1] * p[:, -2] + _P_FACE[2] * p[:, -3]
        return u_node, p_node

    # -- main entry ---------------------------------------------------------------

    def solve(self, problem: StokesProblem, nsteps: int):
        geom = self.geom
        nz = self.nz
        nzp = nz + 1
        iu, iv, iw, ip = self._offsets()

        u0 = problem.u0[self.layer]
        h2_plane = "bottom" if self.layer == "lower" else "top"
        zeros_bc = np.zeros((nsteps + 1, geom.Nx, geom.Ny, 3))
        h1 = problem.h1[self.layer] if problem.h1 is not None else zeros_bc
        h2 = problem.h2[h2_plane] if problem.h2 is not None else zeros_bc

        dir_idx = 0 if self.dirichlet_end == "first" else nz
        scale = 1.0 + float(np.abs(u0).max())
        compat = float(np.abs(u0[:, :, dir_idx, :] - h2[0]).max())
        if compat > 1e-8 * scale:
            raise NumericalFailure(
                "initial data incompatible with the outer Dirichlet data "
                f"(layer {self.layer}, defect {compat:.2e})",
                {"compatibility_defect": compat},
            )

        u0m = self._to_modes(np.moveaxis(u0, -1, 0))              # (3, modes, Z)
        h1m = self._plane_to_modes(np.moveaxis(h1, -1, 1))        # (nt+1, 3, modes)
        h2m = self._plane_to_modes(np.moveaxis(h2, -1, 1))
        if problem.f is not None:
            fm = self._to_modes(np.moveaxis(problem.f[self.layer], -1, 1))
        else:
            fm = np.zeros((nsteps + 1, 3, self.nmodes, nzp), dtype=complex)
        if problem.g is not None:
            gm = self._to_modes(problem.g[self.layer])
        else:
            gm = np.zeros((nsteps + 1, self.nmodes, nzp), dtype=complex)

        state = np.zeros((self.nmodes, 4 * nz + 1), dtype=complex)
        state[:, iu : iu + nz] = self._centers(u0m[0])
        state[:, iv : iv + nz] = self._centers(u0m[1])
        state[:, iw : iw + nz + 1] = u0m[2]

        u_hist = np.zeros((nsteps + 1, 3, self.nmodes, nzp), dtype=complex)
        p_hist = np.zeros((nsteps + 1, self.nmodes, nzp), dtype=complex)
        u_hist[0] = u0m
        residual = {k: 0.0 for k in self._row_blocks}
        for n in range(nsteps):
            rhs = self._rhs(state, fm[n + 1], gm[n + 1], h1m[n + 1], h2m[n + 1], fm[n], h1m[n], h2m[n])
            state = np.matmul(self.inv, rhs[..., None])[..., 0]
            defect = np.abs(np.matmul(self.matrix, state[..., None])[..., 0] - rhs)
            for key, rows in self._row_blocks.items():
                residual[key] = max(residual[key], float(defect[:, rows].max()))
            u_hist[n + 1], p_hist[n + 1] = self._nodal(state, h1m[n + 1], h2m[n + 1])

        u_out = np.moveaxis(self._from_modes(u_hist, nzp), 1, -1)  # (nt+1, Nx, Ny, Z, 3)
        p_out = self._from_modes(p_hist, nzp)
        return u_out, p_out, residual


class StokesSolver:
    """Two-slab solver; immutable after setup, re-entrant solve calls."""

    def __init__(self, geom: ChannelGeometry, dt: float | None = None, theta: float = 1.0):
        self.geom = geom
        self.dt = geom.dt if dt is None else dt
        self.theta = theta
        self.slabs = {layer: SlabStokesSolver(geom, layer, self.dt, theta) for layer in FLUID_LAYERS}

    def solve(self, problem: StokesProblem, nsteps: int | None = None) -> StokesSolution:
        if nsteps is None:
            nsteps = self.geom.Nt
        u, p, residuals = {}, {}, {}
        for layer in FLUID_LAYERS:
            u[layer], p[layer], residuals[layer] = self.slabs[layer].solve(problem, nsteps)
        return StokesSolution(u=u, p=p, residuals=residuals)


def solve_stokes(
    problem: StokesProblem,
    geom: ChannelGeometry,
    dt: float | None = None,
    nsteps: int | None = None,
    theta: float = 1.0,
) -> StokesSolution:
    """One-shot two-slab solve; see StokesSolver for reuse across calls."""
    return StokesSolver(geom, dt=dt, theta=theta).solve(problem, nsteps=nsteps)


# ---------------------------------------------------------------------------
# structural divergence decomposition
# ---------------------------------------------------------------------------


def divergence_decomposition(g: dict, geom: ChannelGeometry, dt: float | None = None):
    """Generic structural split of the divergence history: (g_t, 0).

    The nonlinear driver assembles its own decomposition with g_tilde = 0
    from the coefficient fields; this fallback covers externally supplied
    divergence data.
    """
    if dt is None:
        dt = geom.dt
    g_tilde = {layer: fields.time_derivative(arr, dt) for layer, arr in g.items()}
    b = {layer: np.zeros(arr.shape + (3,)) for layer, arr in g.items()}
    return g_tilde, b


def decomposition_residual(g: dict, g_tilde: dict, b: dict, geom: ChannelGeometry, dt=None) -> float:
    """sup |g_t - g_tilde - div b| over the fluid region (quadrature check)."""
    if dt is None:
        dt = geom.dt
    worst = 0.0
    for layer, arr in g.items():
        gt = fields.time_derivative(arr, dt)
        h = geom.dz(layer)
        bb = b[layer]
        divb = (
            fields.d_dx(bb[..., 0], geom)
            + fields.d_dy(bb[..., 1], geom)
            + fields.d_dz(bb[..., 2], h)
        )
        worst = max(worst, float(np.abs(gt - g_tilde[layer] - divb).max()))
    return worst


# ---------------------------------------------------------------------------
# initial pressure
# ---------------------------------------------------------------------------


def solve_poisson_mixed(
    rhs: dict, dirichlet: dict, neumann: dict, geom: ChannelGeometry
) -> dict:
    """Per-slab Poisson solve with Dirichlet data on the coupling plane and a
    Neumann condition on the outer plane.

    ``rhs`` is keyed by fluid layer on the node grids, ``dirichlet`` by
    coupling plane (Nx, Ny), ``neumann`` by outer plane: the target values
    of d_z q at the outer faces.
    """
    out = {}
    for layer in FLUID_LAYERS:
        nz = geom.layer_count(layer)
        h = geom.dz(layer)
        kxg, kyg = np.meshgrid(geom.kx(), geom.ky()[: geom.Ny // 2 + 1], indexing="ij")
        k2 = (kxg**2 + kyg**2).ravel()
        nmodes = k2.size

        n = nz + 1
        A = np.zeros((nmodes, n, n), dtype=complex)
        for j in range(1, nz):
            A[:, j, j - 1] += 1.0 / h**2
            A[:, j, j] += -2.0 / h**2 - k2
            A[:, j, j + 1] += 1.0 / h**2
        if layer == "lower":
            c_node, f_node, outer = nz, 0, "bottom"
            A[:, f_node, 0], A[:, f_node, 1], A[:, f_node, 2] = -1.5 / h, 2.0 / h, -0.5 / h
        else:
            c_node, f_node, outer = 0, nz, "top"
            A[:, f_node, nz], A[:, f_node, nz - 1], A[:, f_node, nz - 2] = 1.5 / h, -2.0 / h, 0.5 / h
        A[:, c_node, c_node] = 1.0

        rm = np.fft.rfft2(rhs[layer], axes=(0, 1))
        dm = np.fft.rfft2(dirichlet["lower" if layer == "lower" else "upper"], axes=(0, 1))
        nm = np.fft.rfft2(neumann[outer], axes=(0, 1))
        if geom.Nx % 2 == 0:
            rm[geom.Nx // 2] = 0.0
            dm[geom.Nx // 2] = 0.0
            nm[geom.Nx // 2] = 0.0
        if geom.Ny % 2 == 0:
            rm[:, -1] = 0.0
            dm[:, -1] = 0.0
            nm[:, -1] = 0.0
        rm = rm.reshape(nmodes, nz + 1)
        dm = dm.reshape(nmodes)
        nm = nm.reshape(nmodes)

        b = rm.copy()
        b[:, c_node] = dm
        b[:, f_node] = nm
        q = np.linalg.solve(A, b[..., None])[..., 0]
        q_xy = q.reshape(geom.Nx, geom.Ny // 2 + 1, nz + 1)
        out[layer] = np.fft.irfft2(q_xy, s=(geom.Nx, geom.Ny), axes=(0, 1))
    return out


def initial_pressure(v0: dict, w0, geom: ChannelGeometry, div_tol: float = 1e-6) -> dict:
    """Initial pressure from the incompressibility constraint at t = 0.

    Solves Lap q0 = -d_k v0_i d_i v0_k on each slab with Dirichlet data
    (dv0/dN - dw0/dN) . N on the coupling planes and the Neumann condition
    dq0/dN = (Lap v0) . N on the outer planes.  ``w0`` is the elastic
    displacement on the elastic node grid (zero allowed).
    """
    scale = 1.0 + max(float(np.abs(v0[l]).max()) for l in FLUID_LAYERS)
    rhs, dirichlet, neumann = {}, {}, {}
    for layer in FLUID_LAYERS:
        h = geom.dz(layer)
        grad = fields.gradient(v0[layer][None, ...], geom, layer)[0]
        div = np.einsum("...kk->...", grad)
        if float(np.abs(div).max()) > div_tol * scale:
            raise NumericalFailure(
                f"initial velocity is not divergence free (layer {layer}, "
                f"sup |div v0| = {float(np.abs(div).max()):.2e})"
            )
        rhs[layer] = -np.einsum("...ki,...ik->...", grad, grad)
        lap3 = (
            fields.d_dx(fields.d_dx(v0[layer][None, ..., 2], geom), geom)
            + fields.d_dy(fields.d_dy(v0[layer][None, ..., 2], geom), geom)
            + fields.d_dz(fields.d_dz(v0[layer][None, ..., 2], h), h)
        )[0]
        if layer == "lower":
            neumann["bottom"] = lap3[:, :, 0]
        else:
            neumann["top"] = lap3[:, :, -1]

    w0_arr = np.zeros((geom.Nx, geom.Ny, geom.layer_count("elastic") + 1, 3)) if w0 is None else w0
    he = geom.dz("elastic")
    for plane in ("lower", "upper"):
        layer, idx = geom.interface_fluid_layer(plane)
        hf = geom.dz(layer)
        end_f = "last" if idx else "first"
        dz_v3 = fields.one_sided_normal_derivative(v0[layer][None, ..., 2], hf, end_f)[0]
        end_e = "first" if plane == "lower" else "last"
        dz_w3 = fields.one_sided_normal_derivative(w0_arr[None, ..., 2], he, end_e)[0]
        # (dv/dN - dw/dN) . N = d_z v3 - d_z w3 regardless of the orientation
        dirichlet[plane] = dz_v3 - dz_w3
    return solve_poisson_mixed(rhs, dirichlet, neumann, geom)
