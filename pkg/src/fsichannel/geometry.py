"""Periodic-channel domain decomposition: grids, interfaces, normals.

The reference configuration is a slab 2pi-periodic in (x, y):

    fluid   :  0  < z < L1   ("lower" layer)
    elastic :  L1 < z < L2   ("elastic" layer)
    fluid   :  L2 < z < L3   ("upper" layer)

The fluid/elastic interfaces (z = L1 and z = L2) form the coupling set,
the outer planes (z = 0 and z = L3) the no-slip set.  Vertical grids are
uniform per layer and include both bounding planes, so interface planes
are shared grid planes of the adjacent layers.  The time grid lives on
the reference interval [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLUID_LAYERS = ("lower", "upper")
ELASTIC_LAYER = "elastic"
ALL_LAYERS = ("lower", "elastic", "upper")

#: coupling planes, keyed by which fluid slab they bound
INTERFACE_PLANES = ("lower", "upper")
#: outer no-slip planes
OUTER_PLANES = ("bottom", "top")

_LAYER_CODES = {"lower": 0, "elastic": 1, "upper": 2}
_LAYER_FROM_CODE = {v: k for k, v in _LAYER_CODES.items()}


@dataclass(frozen=True)
class InterfacePatch:
    """One coupling plane with its unit normal, outward from the elastic slab."""

    plane: str  # "lower" (z = L1) or "upper" (z = L2)

    def __post_init__(self):
        if self.plane not in INTERFACE_PLANES:
            raise ValueError(f"unknown interface plane {self.plane!r}")

    @property
    def normal(self) -> np.ndarray:
        # outward with respect to the elastic slab: down at z=L1, up at z=L2
        n = -1.0 if self.plane == "lower" else 1.0
        return np.array([0.0, 0.0, n])


def normal_at(patch: InterfacePatch) -> np.ndarray:
    """Unit normal of an interface patch, oriented outward from the elastic slab."""
    return patch.normal


@dataclass(frozen=True)
class ChannelGeometry:
    """Immutable grid container; safe to share across threads."""

    L1: float
    L2: float
    L3: float
    Nx: int
    Ny: int
    Nz_lower: int
    Nz_elastic: int
    Nz_upper: int
    Nt: int

    Lx: float = field(default=2.0 * np.pi, init=False)
    Ly: float = field(default=2.0 * np.pi, init=False)

    def __post_init__(self):
        if not (0.0 < self.L1 < self.L2 < self.L3):
            raise ValueError("lengths not strictly ordered: need 0 < L1 < L2 < L3")
        for name in ("Nx", "Ny", "Nz_lower", "Nz_elastic", "Nz_upper", "Nt"):
            n = getattr(self, name)
            if n < 4:
                raise ValueError(f"{name} = {n} too small, need >= 4")
        for name in ("Nx", "Ny"):
            n = getattr(self, name)
            if n & (n - 1):
                raise ValueError(f"{name} = {n} must be a power of two")
        for layer in ALL_LAYERS:
            lo, hi = self.layer_bounds(layer)
            if not np.isfinite((hi - lo) / self.layer_count(layer)):
                raise ValueError(f"interface planes of layer {layer!r} not on the grid")

    # -- layer bookkeeping ------------------------------------------------

    def layer_bounds(self, layer: str) -> tuple[float, float]:
        try:
            return {
                "lower": (0.0, self.L1),
                "elastic": (self.L1, self.L2),
                "upper": (self.L2, self.L3),
            }[layer]
        except KeyError:
            raise ValueError(f"unknown layer {layer!r}") from None

    def layer_count(self, layer: str) -> int:
        return {
            "lower": self.Nz_lower,
            "elastic": self.Nz_elastic,
            "upper": self.Nz_upper,
        }[layer]

    def layer_thickness(self, layer: str) -> float:
        lo, hi = self.layer_bounds(layer)
        return hi - lo

    def dz(self, layer: str) -> float:
        return self.layer_thickness(layer) / self.layer_count(layer)

    def z_nodes(self, layer: str) -> np.ndarray:
        """Vertical grid planes of a layer, both bounding planes included."""
        lo, hi = self.layer_bounds(layer)
        return np.linspace(lo, hi, self.layer_count(layer) + 1)

    def z_centers(self, layer: str) -> np.ndarray:
        z = self.z_nodes(layer)
        return 0.5 * (z[:-1] + z[1:])

    # -- horizontal grid ---------------------------------------------------

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    def x_nodes(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    def y_nodes(self) -> np.ndarray:
        return np.arange(self.Ny) * self.dy

    def kx(self) -> np.ndarray:
        """Integer wavenumbers along x (torus side 2pi), fft ordering."""
        return np.fft.fftfreq(self.Nx, d=1.0 / self.Nx)

    def ky(self) -> np.ndarray:
        return np.fft.fftfreq(self.Ny, d=1.0 / self.Ny)

    # -- time grid ----------------------------------------------------------

    @property
    def dt(self) -> float:
        return 1.0 / self.Nt

    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.Nt + 1)

    # -- interface / boundary indexing ---------------------------------------

    def interface_fluid_layer(self, plane: str) -> tuple[str, int]:
        """Fluid layer adjacent to a coupling plane and the z-index of the plane there."""
        if plane == "lower":
            return "lower", self.Nz_lower  # top plane of the lower slab
        if plane == "upper":
            return "upper", 0  # bottom plane of the upper slab
        raise ValueError(f"unknown interface plane {plane!r}")

    def interface_elastic_index(self, plane: str) -> int:
        if plane == "lower":
            return 0
        if plane == "upper":
            return self.Nz_elastic
        raise ValueError(f"unknown interface plane {plane!r}")

    def outer_fluid_layer(self, plane: str) -> tuple[str, int]:
        """Fluid layer touching an outer plane and the z-index of the plane there."""
        if plane == "bottom":
            return "lower", 0
        if plane == "top":
            return "upper", self.Nz_upper
        raise ValueError(f"unknown outer plane {plane!r}")

    def layer_code(self, layer: str) -> int:
        return _LAYER_CODES[layer]

    @staticmethod
    def layer_from_code(code: int) -> str:
        return _LAYER_FROM_CODE[code]

    def config_echo(self) -> dict:
        """Geometry block as written into every output header."""
        return {
            "L1": self.L1,
            "L2": self.L2,
            "L3": self.L3,
            "Nx": self.Nx,
            "Ny": self.Ny,
            "Nz_lower": self.Nz_lower,
            "Nz_elastic": self.Nz_elastic,
            "Nz_upper": self.Nz_upper,
            "Nt": self.Nt,
        }


def build_geometry(config: dict) -> ChannelGeometry:
    """Construct a ChannelGeometry from a geometry config block.

    Rejects non-ordered lengths and undersized or non-power-of-two sample
    counts; interface planes always coincide with grid planes because the
    vertical grids are generated per layer.
    """
    known = {"L1", "L2", "L3", "Nx", "Ny", "Nz_lower", "Nz_elastic", "Nz_upper", "Nt"}
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
    missing = known - set(config)
    if missing:
        raise ValueError(f"missing geometry keys: {sorted(missing)}")
    return ChannelGeometry(
        L1=float(config["L1"]),
        L2=float(config["L2"]),
        L3=float(config["L3"]),
        Nx=int(config["Nx"]),
        Ny=int(config["Ny"]),
        Nz_lower=int(config["Nz_lower"]),
        Nz_elastic=int(config["Nz_elastic"]),
        Nz_upper=int(config["Nz_upper"]),
        Nt=int(config["Nt"]),
    )
