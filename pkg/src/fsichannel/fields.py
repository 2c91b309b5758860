"""Space-time fields, cutoff profile, modified flow map, cofactor algebra.

Field arrays are laid out (t, x, y, z) with optional trailing component
axes, one layer per array; the z axis includes both bounding planes of
the layer.  Horizontal derivatives are spectral (unpaired Nyquist modes
zeroed so real fields stay real), vertical derivatives use fourth-order
centered stencils with one-sided closures at the layer boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelGeometry

X_AXIS, Y_AXIS, Z_AXIS = 1, 2, 3

_MAGIC = b"FSFLD001"
_HEADER_BYTES = 64

# Levi-Civita symbol
_EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_i, _j, _k] = 1.0
    _EPS[_i, _k, _j] = -1.0


@dataclass
class SpaceTimeField:
    """Samples of a scalar or 3-vector field on one layer's tensor grid."""

    data: np.ndarray  # (nt, Nx, Ny, Nz+1) or (nt, Nx, Ny, Nz+1, 3)
    layer: str

    @property
    def ncomp(self) -> int:
        return 1 if self.data.ndim == 4 else self.data.shape[-1]

    def validate(self, geom: ChannelGeometry):
        nz = geom.layer_count(self.layer) + 1
        shape = self.data.shape
        if shape[1:4] != (geom.Nx, geom.Ny, nz):
            raise ValueError(f"field shape {shape} does not match layer {self.layer!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite values")


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _spectral_derivative(arr: np.ndarray, n: int, length: float, axis: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n) * (2.0 * np.pi / length)
    if n % 2 == 0:
        k[n // 2] = 0.0  # unpaired Nyquist mode carries no odd derivative
    shape = [1] * arr.ndim
    shape[axis] = n
    fac = (1j * k).reshape(shape)
    return np.real(np.fft.ifft(fac * np.fft.fft(arr, axis=axis), axis=axis))


def d_dx(arr: np.ndarray, geom: ChannelGeometry, axis: int = X_AXIS) -> np.ndarray:
    return _spectral_derivative(arr, geom.Nx, geom.Lx, axis)


def d_dy(arr: np.ndarray, geom: ChannelGeometry, axis: int = Y_AXIS) -> np.ndarray:
    return _spectral_derivative(arr, geom.Ny, geom.Ly, axis)


# fourth-order one-sided stencils at the first two planes, written in
# difference-from-evaluation-point form so constants are annihilated exactly
_D1_EDGE0 = np.array([48.0, -36.0, 16.0, -3.0]) / 12.0  # weights of f_i - f_0, i = 1..4
_D1_EDGE1 = np.array([-3.0, 18.0, -6.0, 1.0]) / 12.0    # weights of f_i - f_1, i = 0,2,3,4


def d_dz(arr: np.ndarray, h: float, axis: int = Z_AXIS) -> np.ndarray:
    """Fourth-order vertical derivative with one-sided boundary closures."""
    a = np.moveaxis(arr, axis, -1)
    n = a.shape[-1]
    if n < 5:
        raise ValueError("need at least 5 vertical planes for the 4th-order stencil")
    out = np.empty_like(a)
    out[..., 2:-2] = (
        8.0 * (a[..., 3:-1] - a[..., 1:-3]) - (a[..., 4:] - a[..., :-4])
    ) / 12.0
    out[..., 0] = sum(_D1_EDGE0[i - 1] * (a[..., i] - a[..., 0]) for i in range(1, 5))
    out[..., 1] = sum(
        _D1_EDGE1[k] * (a[..., i] - a[..., 1]) for k, i in enumerate((0, 2, 3, 4))
    )
    out[..., -1] = -sum(_D1_EDGE0[i - 1] * (a[..., -1 - i] - a[..., -1]) for i in range(1, 5))
    out[..., -2] = -sum(
        _D1_EDGE1[k] * (a[..., -1 - i] - a[..., -2]) for k, i in enumerate((0, 2, 3, 4))
    )
    out /= h
    return np.moveaxis(out, -1, axis)


def one_sided_normal_derivative(arr: np.ndarray, h: float, end: str, axis: int = Z_AXIS) -> np.ndarray:
    """Fourth-order one-sided d/dz at one bounding plane of a layer.

    ``end`` is "first" (take the derivative at index 0) or "last".
    Returns the plane slice with the z axis removed; the sign is plain
    d/dz, callers apply the normal orientation.
    """
    a = np.moveaxis(arr, axis, -1)
    if end == "first":
        val = sum(_D1_EDGE0[i - 1] * (a[..., i] - a[..., 0]) for i in range(1, 5))
    elif end == "last":
        val = -sum(_D1_EDGE0[i - 1] * (a[..., -1 - i] - a[..., -1]) for i in range(1, 5))
    else:
        raise ValueError(f"end must be 'first' or 'last', got {end!r}")
    return val / h


def gradient(arr: np.ndarray, geom: ChannelGeometry, layer: str) -> np.ndarray:
    """Gradient of a field on one layer; derivative index is appended first.

    For input (..., Nz+1) returns shape (..., Nz+1, 3); for a vector field
    (..., Nz+1, 3) returns (..., Nz+1, 3, 3) indexed [m, k] = d_m f_k.
    """
    h = geom.dz(layer)
    parts = [d_dx(arr, geom), d_dy(arr, geom), d_dz(arr, h)]
    if arr.ndim == 4:
        return np.stack(parts, axis=-1)
    return np.stack(parts, axis=-2)


def time_derivative(arr: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Second-order time derivative: centered interior, one-sided at the ends."""
    a = np.moveaxis(arr, axis, 0)
    n = a.shape[0]
    if n < 3:
        raise ValueError("need at least 3 time samples")
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * dt)
    out[-1] = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * dt)
    return np.moveaxis(out, 0, axis)


def cumulative_trapezoid(arr: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Composite-trapezoid running integral along the time axis."""
    a = np.moveaxis(arr, axis, 0)
    out = np.zeros_like(a)
    np.cumsum(0.5 * dt * (a[1:] + a[:-1]), axis=0, out=out[1:])
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# cutoff profile
# ---------------------------------------------------------------------------


def _smoothstep(u: np.ndarray, order: int) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    if order == 1:
        return u * u * (3.0 - 2.0 * u)
    if order == 2:
        return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    if order == 3:
        return u**4 * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u**3)
    raise ValueError(f"unsupported smoothstep order {order}")


_RAMP_SLOPE = {1: 1.5, 2: 30.0 / 16.0, 3: 35.0 / 16.0}  # max |S'| on [0,1]


@dataclass(frozen=True)
class CutoffFunction:
    """Plateau-ramp-zero profile: 1 on [0, t_tilde], 0 from 2*t_tilde on."""

    t_tilde: float
    order: int = 2  # polynomial smoothstep family of the ramp
    derivative_bound: float = 0.0  # sup |psi'|, recorded at construction

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = (t - self.t_tilde) / self.t_tilde
        return 1.0 - _smoothstep(u, self.order)

    @property
    def ramp_constant(self) -> float:
        """c in sup|psi'| = c / t_tilde for the chosen ramp profile."""
        return _RAMP_SLOPE[self.order]


def make_cutoff(t_tilde: float, steepness: int = 2) -> CutoffFunction:
    """Build the time cutoff with plateau end t_tilde in (0, 1/4].

    ``steepness`` selects the smoothstep order of the C^1 ramp on
    [t_tilde, 2*t_tilde] (2 = quintic, the default).
    """
    if not (0.0 < t_tilde <= 0.25):
        raise ValueError(f"t_tilde = {t_tilde} outside (0, 1/4]")
    if steepness not in _RAMP_SLOPE:
        raise ValueError(f"steepness must be one of {sorted(_RAMP_SLOPE)}")
    bound = _RAMP_SLOPE[steepness] / t_tilde
    return CutoffFunction(t_tilde=t_tilde, order=steepness, derivative_bound=bound)


# ---------------------------------------------------------------------------
# flow map and cofactor algebra
# ---------------------------------------------------------------------------


def cofactor(grad_eta: np.ndarray) -> np.ndarray:
    """Cofactor matrix a_ij = eps_imn eps_jkl G_mk G_nl / 2 of a gradient field.

    ``grad_eta`` has the two tensor axes last, indexed [m, k] = d_m eta_k.
    """
    return 0.5 * np.einsum("imn,jkl,...mk,...nl->...ij", _EPS, _EPS, grad_eta, grad_eta)


def cofactor_difference(
    grad_eta1: np.ndarray, grad_eta2: np.ndarray
) -> np.ndarray:
    """a1 - a2 assembled through the bilinear epsilon-identity expansion.

    Exact identity: cof is quadratic, so the difference equals the symmetric
    bilinear form evaluated on (G1 - G2, G1 + G2).
    """
    diff = grad_eta1 - grad_eta2
    summ = grad_eta1 + grad_eta2
    return 0.5 * np.einsum("imn,jkl,...mk,...nl->...ij", _EPS, _EPS, diff, summ)


def tensor_determinant(grad_eta: np.ndarray) -> np.ndarray:
    return np.linalg.det(grad_eta)


@dataclass
class FlowMapState:
    """Flow map of one fluid layer with its gradient, cofactor and determinant."""

    eta: np.ndarray       # (nt, Nx, Ny, Nz+1, 3)
    grad_eta: np.ndarray  # (nt, Nx, Ny, Nz+1, 3, 3), [m, k] = d_m eta_k
    cofactor: np.ndarray  # (nt, Nx, Ny, Nz+1, 3, 3)
    det: np.ndarray       # (nt, Nx, Ny, Nz+1)
    layer: str

    def min_det(self) -> float:
        return float(self.det.min())


def flow_map(
    v: np.ndarray, psi: CutoffFunction, geom: ChannelGeometry, layer: str
) -> FlowMapState:
    """Cutoff-modified Lagrangian flow map of one fluid layer.

    eta(t, x) = x + int_0^t psi(tau) v(tau, x) dtau, integrated with the
    composite trapezoid rule on the stored time grid.
    """
    nt = v.shape[0]
    t = np.linspace(0.0, 1.0, geom.Nt + 1)[:nt]
    dt = geom.dt
    weights = psi(t).reshape((nt,) + (1,) * (v.ndim - 1))
    displacement = cumulative_trapezoid(weights * v, dt)

    x = geom.x_nodes()[:, None, None]
    y = geom.y_nodes()[None, :, None]
    z = geom.z_nodes(layer)[None, None, :]
    coords = np.stack(np.broadcast_arrays(x, y, z), axis=-1)

    # the identity part is differentiated analytically: the coordinate
    # functions are not horizontally periodic, the displacement is
    eta = displacement + coords
    grad = gradient(displacement, geom, layer) + np.eye(3)
    cof = cofactor(grad)
    det = tensor_determinant(grad)
    return FlowMapState(eta=eta, grad_eta=grad, cofactor=cof, det=det, layer=layer)


def piola_residual(a: np.ndarray, geom: ChannelGeometry, layer: str) -> float:
    """max_j sup |d_i a_ij| of a cofactor field (divergence over the first index)."""
    h = geom.dz(layer)
    div = (
        d_dx(a[..., 0, :], geom)
        + d_dy(a[..., 1, :], geom)
        + d_dz(a[..., 2, :], h)
    )
    return float(np.abs(div).max())


def identity_defect(flow: FlowMapState) -> float:
    """sup |a grad_eta - det I| over all samples (algebraic consistency check)."""
    prod = np.einsum("...ij,...jk->...ik", flow.cofactor, np.swapaxes(flow.grad_eta, -1, -2))
    target = flow.det[..., None, None] * np.eye(3)
    return float(np.abs(prod - target).max())


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------


def write_snapshot(path, field: SpaceTimeField, geom: ChannelGeometry):
    """Write a field as little-endian float64 with a 64-byte header.

    Header: magic "FSFLD001", then uint32 little-endian
    (version, ncomp, nt, nx, ny, nz_planes, layer_code), zero padded.
    Payload: row-major (t, x, y, z, component).
    """
    data = field.data if field.data.ndim == 5 else field.data[..., None]
    nt, nx, ny, nz, ncomp = data.shape
    header = bytearray(_HEADER_BYTES)
    header[: len(_MAGIC)] = _MAGIC
    meta = np.array(
        [1, ncomp, nt, nx, ny, nz, geom.layer_code(field.layer)], dtype="<u4"
    )
    header[8 : 8 + meta.nbytes] = meta.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_snapshot(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_BYTES)
        if header[: len(_MAGIC)] != _MAGIC:
            raise ValueError(f"{path}: not a field snapshot (bad magic)")
        version, ncomp, nt, nx, ny, nz, layer_code = np.frombuffer(
            header, dtype="<u4", count=7, offset=8
        )
        if version != 1:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    data = payload.reshape(nt, nx, ny, nz, ncomp).astype(float)
    if ncomp == 1:
        data = data[..., 0]
    return SpaceTimeField(data=data, layer=ChannelGeometry.layer_from_code(int(layer_code)))
