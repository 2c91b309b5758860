"""Fractional space-time Sobolev norms and inequality verifiers.

Spatial fractional norms are spectral-multiplier norms, (1 + |xi|^2)^(s/2)
after a Fourier transform in (x, y) and an even-reflection transform in z;
they agree with the classical norms up to equivalence constants, which is
the level at which every monitored inequality is stated.  Temporal
fractional orders split into an integer part (finite differences) plus a
Sobolev-Slobodeckij remainder evaluated by a midpoint double sum with the
diagonal excluded; the double sum is the defining quadrature and any
reorganized evaluation must reproduce it to near machine precision.

Discrete L^2 inner products use the rectangle rule horizontally and the
trapezoid rule vertically and in time, which makes the s = 0 multiplier
norm coincide with the discrete L^2 norm exactly (Parseval).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import time_derivative, _smoothstep
from .geometry import ChannelGeometry, FLUID_LAYERS, INTERFACE_PLANES


# ---------------------------------------------------------------------------
# norm specifications and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormSpec:
    """Fractional exponent pair with a domain tag.

    ``kind`` is "H" for H^{r,s} or "K" for the parabolic scale K^s, which
    expands to H^{s/2, s}.
    """

    r: float
    s: float
    domain: str  # "fluid" | "elastic" | "interface"
    kind: str = "H"

    def __post_init__(self):
        if self.kind not in ("H", "K"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "K" and abs(self.r - 0.5 * self.s) > 1e-12:
            raise ValueError("K^s requires r = s/2")
        if self.r < 0 or self.s < 0:
            raise ValueError("orders must be nonnegative")

    @classmethod
    def parabolic(cls, s: float, domain: str) -> "NormSpec":
        return cls(r=0.5 * s, s=s, domain=domain, kind="K")

    def label(self) -> str:
        if self.kind == "K":
            return f"K^{self.s:g}({self.domain})"
        return f"H^{{{self.r:g},{self.s:g}}}({self.domain})"


@dataclass
class NormReport:
    value: float
    spec: NormSpec
    method: str  # "spectral" | "slobodeckij-quadrature" | "hybrid"
    time_sq: float = 0.0
    space_sq: float = 0.0


# ---------------------------------------------------------------------------
# quadrature weights
# ---------------------------------------------------------------------------


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def layer_weights(geom: ChannelGeometry, layer: str) -> np.ndarray:
    """L^2(layer) quadrature weights on the (Nx, Ny, Nz+1) node grid."""
    wz = _trapezoid_weights(geom.layer_count(layer) + 1, geom.dz(layer))
    w = np.broadcast_to(wz, (geom.Nx, geom.Ny, wz.size))
    return geom.dx * geom.dy * w


def plane_weights(geom: ChannelGeometry) -> np.ndarray:
    return np.full((geom.Nx, geom.Ny), geom.dx * geom.dy)


def l2_layer(f: np.ndarray, geom: ChannelGeometry, layer: str) -> float:
    """Discrete L^2 norm of a single-time-slice field on one layer."""
    w = layer_weights(geom, layer)
    if f.ndim == 4:  # vector components trail
        w = w[..., None]
    return math.sqrt(float(np.sum(np.abs(f) ** 2 * w)))


# ---------------------------------------------------------------------------
# Slobodeckij seminorm
# ---------------------------------------------------------------------------


def _slobodeckij_sq(F: np.ndarray, spacing: float, alpha: float, weights=None) -> float:
    """Squared Slobodeckij seminorm of Hilbert-space-valued time samples.

    F has shape (N, ...); trailing axes are reduced with ``weights`` (or
    plainly summed).  Midpoint double sum over all sample pairs with the
    diagonal excluded; pairs are visited lag by lag, which reorganizes but
    reproduces the direct double sum.
    """
    n = F.shape[0]
    if weights is not None:
        weights = np.broadcast_to(np.asarray(weights), F.shape[1:]).reshape(-1)
    F = F.reshape(n, -1)
    power = 2.0 * alpha + 1.0
    total = 0.0
    for d in range(1, n):
        diff = F[d:] - F[:-d]
        mag = diff.real * diff.real + diff.imag * diff.imag if np.iscomplexobj(diff) else diff * diff
        s = float((mag @ weights).sum()) if weights is not None else float(mag.sum())
        # both (i, j) and (j, i) orderings of each pair
        total += 2.0 * s / (d * spacing) ** power
    return total * spacing * spacing


def slobodeckij_seminorm(f: np.ndarray, alpha: float, spacing: float) -> float:
    """Slobodeckij seminorm of scalar time samples on a uniform grid.

    Evaluates the double integral of |f(t1) - f(t2)|^2 / |t1 - t2|^(2a+1)
    by the midpoint rule, skipping pairs closer than half a grid spacing
    (with a uniform grid that is exactly the diagonal).
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("need a 1-D array of at least 2 samples")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha = {alpha} outside (0, 1)")
    return math.sqrt(_slobodeckij_sq(f, spacing, alpha))


# ---------------------------------------------------------------------------
# temporal Sobolev norms of sampled (Hilbert-valued) signals
# ---------------------------------------------------------------------------


def time_sobolev_sq(F: np.ndarray, r: float, dt: float, weights=None) -> float:
    """Squared H^r norm in time of samples F (time axis first).

    Integer part by repeated second-order differencing, fractional
    remainder by the Slobodeckij quadrature on the highest derivative.
    """
    n = F.shape[0]
    m = int(math.floor(r + 1e-12))
    alpha = r - m
    if alpha < 1e-12:
        alpha = 0.0
    wt = _trapezoid_weights(n, dt).reshape((n,) + (1,) * (F.ndim - 1))
    if weights is not None:
        w_full = np.asarray(weights)
    total = 0.0
    G = F
    for k in range(m + 1):
        mag = np.abs(G) ** 2 if np.iscomplexobj(G) else G * G
        if weights is None:
            total += float((mag * wt).sum())
        else:
            total += float(((mag * wt) * w_full).sum())
        if k < m:
            G = time_derivative(G, dt)
    if alpha > 0.0:
        total += _slobodeckij_sq(G, dt, alpha, weights=weights)
    return total


# ---------------------------------------------------------------------------
# spatial spectral-multiplier norms
# ---------------------------------------------------------------------------


def _layer_coefficients(f: np.ndarray, geom: ChannelGeometry, layer: str):
    """Normalized Fourier coefficients after even reflection in z.

    Input has spatial axes (..., Nx, Ny, Nz+1); output coefficient array
    (..., Nx, Ny, 2*Nz) with Parseval: sum w |f|^2 = measure * sum |coef|^2.
    """
    nz = geom.layer_count(layer)
    ext = np.concatenate([f, f[..., -2:0:-1]], axis=-1)
    coef = np.fft.fft(ext, axis=-1) / (2 * nz)
    coef = np.fft.fft(coef, axis=-3) / geom.Nx
    coef = np.fft.fft(coef, axis=-2) / geom.Ny
    measure = geom.Lx * geom.Ly * geom.layer_thickness(layer)
    return coef, measure


def _layer_multiplier(geom: ChannelGeometry, layer: str) -> np.ndarray:
    nz = geom.layer_count(layer)
    kx = geom.kx()[:, None, None]
    ky = geom.ky()[None, :, None]
    kz = (np.pi / geom.layer_thickness(layer)) * np.fft.fftfreq(2 * nz, d=1.0 / (2 * nz))
    kz = kz[None, None, :]
    return 1.0 + kx**2 + ky**2 + kz**2


def _plane_coefficients(f: np.ndarray, geom: ChannelGeometry):
    coef = np.fft.fft2(f, axes=(-2, -1)) / (geom.Nx * geom.Ny)
    return coef, geom.Lx * geom.Ly


def _plane_multiplier(geom: ChannelGeometry) -> np.ndarray:
    kx = geom.kx()[:, None]
    ky = geom.ky()[None, :]
    return 1.0 + kx**2 + ky**2


def _check_order(s: float):
    if not (0.0 <= s <= 4.0):
        raise ValueError(f"spatial order s = {s} outside [0, 4]")


def spatial_fractional_norm(
    f: np.ndarray, s: float, geom: ChannelGeometry, layer: str
) -> float:
    """Spectral-multiplier H^s norm of a single time slice on one layer.

    Vector fields (trailing component axis) contribute the sum of the
    squared component norms.
    """
    _check_order(s)
    vec = f.ndim == 4
    if vec:
        f = np.moveaxis(f, -1, 0)
    coef, measure = _layer_coefficients(f, geom, layer)
    mult = _layer_multiplier(geom, layer) ** s
    val = measure * float((np.abs(coef) ** 2 * mult).sum())
    return math.sqrt(val)


def _spatial_sq_history(f: np.ndarray, s: float, geom: ChannelGeometry, layer: str) -> np.ndarray:
    """Squared spectral H^s norm of every time slice at once; f is (nt, ...)."""
    vec = f.ndim == 5
    g = np.moveaxis(f, -1, 1) if vec else f
    coef, measure = _layer_coefficients(g, geom, layer)
    mult = _layer_multiplier(geom, layer) ** s
    axes = tuple(range(1, coef.ndim))
    return measure * np.sum(np.abs(coef) ** 2 * mult, axis=axes)


def interface_fractional_norm(f: np.ndarray, s: float, geom: ChannelGeometry) -> float:
    """Spectral H^s norm of a single time slice on one coupling plane."""
    _check_order(s)
    vec = f.ndim == 3
    if vec:
        f = np.moveaxis(f, -1, 0)
    coef, measure = _plane_coefficients(f, geom)
    mult = _plane_multiplier(geom) ** s
    return math.sqrt(measure * float((np.abs(coef) ** 2 * mult).sum()))


def _plane_sq_history(f: np.ndarray, s: float, geom: ChannelGeometry) -> np.ndarray:
    vec = f.ndim == 4
    g = np.moveaxis(f, -1, 1) if vec else f
    coef, measure = _plane_coefficients(g, geom)
    mult = _plane_multiplier(geom) ** s
    axes = tuple(range(1, coef.ndim))
    return measure * np.sum(np.abs(coef) ** 2 * mult, axis=axes)


# ---------------------------------------------------------------------------
# space-time norms
# ---------------------------------------------------------------------------


def _piece_sq(f, spec, geom, piece, dt):
    """(time_sq, space_sq) of one layer or one plane."""
    kind, name = piece
    nt = f.shape[0]
    wt_time = _trapezoid_weights(nt, dt)
    if kind == "layer":
        weights = layer_weights(geom, name)
        if f.ndim == 5:
            weights = weights[..., None]
        space_hist = _spatial_sq_history(f, spec.s, geom, name)
    else:
        weights = plane_weights(geom)
        if f.ndim == 4:
            weights = weights[..., None]
        space_hist = _plane_sq_history(f, spec.s, geom)
    time_sq = time_sobolev_sq(f, spec.r, dt, weights=weights)
    space_sq = float(wt_time @ space_hist)
    return time_sq, space_sq


def _pieces_for(f, spec: NormSpec, geom: ChannelGeometry):
    if spec.domain == "fluid":
        return [(("layer", layer), f[layer]) for layer in FLUID_LAYERS]
    if spec.domain == "elastic":
        arr = f["elastic"] if isinstance(f, dict) else f
        return [(("layer", "elastic"), arr)]
    if spec.domain == "interface":
        return [(("plane", p), f[p]) for p in INTERFACE_PLANES]
    raise ValueError(f"unknown norm domain {spec.domain!r}")


def spacetime_norm(f, spec: NormSpec, geom: ChannelGeometry, dt: float | None = None) -> NormReport:
    """H^{r,s} (or K^s) norm of a space-time field.

    ``f`` is a dict of per-layer arrays for the fluid domain, a dict of
    per-plane arrays for the interface, or a single array for the elastic
    layer.  The squared norm is the temporal part (on the spatial-L^2
    reduction) plus the time-integrated squared spatial norms; both
    addends are returned in the report.
    """
    _check_order(spec.s)
    pieces = _pieces_for(f, spec, geom)
    nt = pieces[0][1].shape[0]
    if dt is None:
        dt = geom.dt
    time_sq = space_sq = 0.0
    for piece, arr in pieces:
        ts, ss = _piece_sq(arr, spec, geom, piece, dt)
        time_sq += ts
        space_sq += ss
    return NormReport(
        value=math.sqrt(time_sq + space_sq),
        spec=spec,
        method="hybrid",
        time_sq=time_sq,
        space_sq=space_sq,
    )


def interface_trace_norm(traces: dict, spec: NormSpec, geom: ChannelGeometry, dt=None) -> NormReport:
    """H^{r,s} norm of a field restricted to the coupling set (both planes)."""
    spec = NormSpec(r=spec.r, s=spec.s, domain="interface", kind=spec.kind)
    return spacetime_norm(traces, spec, geom, dt=dt)


def mixed_time_space_sq(f, theta: float, lam: float, geom: ChannelGeometry, pieces, dt) -> float:
    """Squared H^theta((0,1), H^lambda) norm over the given pieces.

    The spatial multiplier is folded into the spectral coefficients, after
    which the temporal Sobolev norm with plain l^2 reduction applies.
    """
    _check_order(lam)
    total = 0.0
    for kind, name, arr in pieces:
        vec = arr.ndim == (5 if kind == "layer" else 4)
        g = np.moveaxis(arr, -1, 1) if vec else arr
        if kind == "layer":
            coef, measure = _layer_coefficients(g, geom, name)
            mult = _layer_multiplier(geom, name) ** (0.5 * lam)
        else:
            coef, measure = _plane_coefficients(g, geom)
            mult = _plane_multiplier(geom) ** (0.5 * lam)
        total += measure * time_sobolev_sq(coef * mult, theta, dt)
    return total


# ---------------------------------------------------------------------------
# inequality verifiers
# ---------------------------------------------------------------------------


@dataclass
class InequalityReport:
    lhs: float
    term1: float  # the eps-weighted strong term
    term2: float  # the C eps^(-power)-weighted weak term
    eps: float
    eps_power: float  # exponent of eps multiplying C
    c_min: float


def _fluid_trace(v: dict, geom: ChannelGeometry) -> dict:
    """Restriction of a fluid field to the two coupling planes."""
    out = {}
    for plane in INTERFACE_PLANES:
        layer, idx = geom.interface_fluid_layer(plane)
        out[plane] = v[layer][:, :, :, idx]
    return out


def verify_trace_inequality(
    v: dict, r: float, theta: float, eps: float, geom: ChannelGeometry, dt=None
) -> InequalityReport:
    """Empirical constant in the space-time boundary trace inequality.

    Measures ||u||_{H^theta_t L^2(interface)} against
    eps ||u||_{H^{2 theta r/(2r-1)}_t L^2} + C eps^{1-2r} ||u||_{L^2_t H^r}
    and reports the smallest admissible C for this sample.
    """
    if r <= 0.5:
        raise ValueError("need r > 1/2")
    if theta < 0.0:
        raise ValueError("need theta >= 0")
    if not (0.0 < eps <= 1.0):
        raise ValueError("need eps in (0, 1]")
    if dt is None:
        dt = geom.dt
    traces = _fluid_trace(v, geom)
    lhs_sq = sum(
        time_sobolev_sq(traces[p], theta, dt, weights=_vec_weights(plane_weights(geom), traces[p], 3))
        for p in INTERFACE_PLANES
    )
    strong_order = 2.0 * theta * r / (2.0 * r - 1.0)
    t1_sq = sum(
        time_sobolev_sq(v[l], strong_order, dt, weights=_vec_weights(layer_weights(geom, l), v[l], 4))
        for l in FLUID_LAYERS
    )
    rep = spacetime_norm(v, NormSpec(r=0.0, s=r, domain="fluid"), geom, dt=dt)
    t2 = math.sqrt(rep.space_sq)
    lhs, t1 = math.sqrt(lhs_sq), math.sqrt(t1_sq)
    c_min = max(0.0, lhs - eps * t1) / (eps ** (1.0 - 2.0 * r) * t2) if t2 > 0 else 0.0
    return InequalityReport(lhs=lhs, term1=t1, term2=t2, eps=eps, eps_power=1.0 - 2.0 * r, c_min=c_min)


def _vec_weights(w, arr, scalar_ndim):
    return w[..., None] if arr.ndim - 1 == scalar_ndim else w


def verify_interpolation(
    v: dict,
    alpha: float,
    beta: float,
    theta: float,
    lam: float,
    eps: float,
    geom: ChannelGeometry,
    dt=None,
) -> InequalityReport:
    """Empirical constant in the space-time interpolation inequality.

    Measures ||u||_{H^theta_t H^lambda} against
    eps ||u||_{H^alpha_t L^2} + C eps^{-theta beta/(alpha lambda)} ||u||_{L^2_t H^beta}.
    The exponent constraint theta/alpha + lambda/beta <= 1 is enforced.
    """
    if alpha <= 0 or beta <= 0 or not (0 < theta < alpha) or not (0 < lam < beta):
        raise ValueError("need alpha, beta > 0, theta in (0, alpha), lambda in (0, beta)")
    if theta / alpha + lam / beta > 1.0 + 1e-12:
        raise ValueError("exponent constraint theta/alpha + lambda/beta <= 1 violated")
    if not (0.0 < eps <= 1.0):
        raise ValueError("need eps in (0, 1]")
    if dt is None:
        dt = geom.dt
    pieces = [("layer", l, v[l]) for l in FLUID_LAYERS]
    lhs = math.sqrt(mixed_time_space_sq(v, theta, lam, geom, pieces, dt))
    t1_sq = sum(
        time_sobolev_sq(v[l], alpha, dt, weights=_vec_weights(layer_weights(geom, l), v[l], 4))
        for l in FLUID_LAYERS
    )
    t1 = math.sqrt(t1_sq)
    rep = spacetime_norm(v, NormSpec(r=0.0, s=beta, domain="fluid"), geom, dt=dt)
    t2 = math.sqrt(rep.space_sq)
    power = -theta * beta / (alpha * lam)
    c_min = max(0.0, lhs - eps * t1) / (eps**power * t2) if t2 > 0 else 0.0
    return InequalityReport(lhs=lhs, term1=t1, term2=t2, eps=eps, eps_power=power, c_min=c_min)


# ---------------------------------------------------------------------------
# small-time Poincare failure experiment
# ---------------------------------------------------------------------------


def bump_signal(t: np.ndarray, horizon: float, m: int) -> np.ndarray:
    """The necessity construction: smoothstep ramp on [0, T/M], plateau 1."""
    return _smoothstep(t * m / horizon, 2)


def p01_experiment(
    beta: float, horizon: float, m_list, alpha: float = 0.25, nsamples: int = 4096
) -> list[dict]:
    """Table of bump-family norms probing the small-time Poincare inequality.

    For each M the bump vanishes at 0, ramps up on [0, T/M] and holds 1 up
    to T.  The reported ratio weighs the L^2 mass against the seminorm sum
    at the bump's own small-time scale T/M,

        ratio = ||f|| / ((T/M)^beta (seminorm + ||f||)),

    so that for beta > 0 the ratio grows without bound as M increases
    (the inequality cannot hold uniformly), while for beta = 0 it stays
    bounded by 1.
    """
    if not (0.0 < horizon <= 1.0):
        raise ValueError("horizon must lie in (0, 1]")
    t = (np.arange(nsamples) + 0.5) * (horizon / nsamples)
    h = horizon / nsamples
    rows = []
    for m in m_list:
        if m < 2:
            raise ValueError("each M must be >= 2")
        f = bump_signal(t, horizon, m)
        l2 = math.sqrt(float(f @ f) * h)
        semi = slobodeckij_seminorm(f, alpha, h)
        t_eff = horizon / m
        ratio = l2 / (t_eff**beta * (semi + l2))
        rows.append(
            {
                "M": int(m),
                "ramp_end": t_eff,
                "l2": l2,
                "seminorm": semi,
                "ratio": ratio,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def write_norm_reports(path, rows):
    """One CSV row per (field id, spec, value, method, addends)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field_id", "kind", "r", "s", "domain", "value", "method", "time_sq", "space_sq"])
        for field_id, rep in rows:
            writer.writerow(
                [
                    field_id,
                    rep.spec.kind,
                    repr(rep.spec.r),
                    repr(rep.spec.s),
                    rep.spec.domain,
                    repr(rep.value),
                    rep.method,
                    repr(rep.time_sq),
                    repr(rep.space_sq),
                ]
            )
