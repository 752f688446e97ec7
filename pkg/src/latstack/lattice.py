"""Multilayer 2D atomic lattices and their diffraction-order structure.

Geometry conventions: all lengths are measured in units of the optical
wavelength (so the wavenumber is k = 2*pi) and all rates in units of the
single-atom linewidth gamma.  A stack consists of n_z identical layers
spaced by a_z along z; each layer is a Bravais lattice with spacing a and
primitive-vector angle psi (pi/2 square, pi/3 triangular), laterally
offset by a per-layer shift b_l with b_0 = 0.

A layer scatters normally incident light into plane-wave channels labeled
by integer pairs m = (m1, m2) with transverse momentum Q_m on the
reciprocal lattice; channels with |Q_m| < k propagate (radiative), the
rest are evanescent.  The per-channel emission rates Gamma_m assume a
fixed circular dipole orientation in the lattice plane, for which
|Q . e|^2 = |Q|^2 / 2 independent of handedness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# wavenumber in wavelength units
K_LIGHT = 2.0 * math.pi

PSI_SQUARE = math.pi / 2
PSI_TRIANGULAR = math.pi / 3

_LATTICE_PSI = {"square": PSI_SQUARE, "triangular": PSI_TRIANGULAR}


class WindowTooSmallError(ValueError):
    """Requested m-window is not provably large enough to hold all radiative orders."""


def lattice_angle(lattice: str) -> float:
    """Primitive-vector angle for a named lattice ("square" or "triangular")."""
    try:
        return _LATTICE_PSI[lattice]
    except KeyError:
        raise ValueError(f"unknown lattice {lattice!r}; expected 'square' or 'triangular'")


def gamma0(a: float, psi: float) -> float:
    """Specular (zeroth-order) emission rate of one layer, in gamma units.

    Equals 3/(4*pi) / (a^2 sin(psi)) for spacing a in wavelength units.
    """
    return 3.0 / (4.0 * math.pi) / (a * a * math.sin(psi))


@dataclass(frozen=True)
class StackSpec:
    """Full geometric description of a multilayer array.

    Parameters
    ----------
    psi : float
        Lattice angle in radians (pi/2 square, pi/3 triangular).
    a : float
        Intralayer lattice spacing (wavelength units).
    a_z : float
        Interlayer spacing (wavelength units).
    n_side : int
        Atoms per side of one layer; a layer holds n_side**2 atoms
        (rhombic n1 x n2 patch for the triangular lattice).
    n_z : int
        Number of layers.
    shifts : tuple of (x, y)
        Lateral offset b_l of each layer; must have n_z entries with
        shifts[0] == (0, 0).
    polarization : str
        Circular dipole handedness "+" or "-".  Both give identical
        scalar couplings; the field is kept for bookkeeping.
    crop : str
        Layer boundary rule: "rhombus" (default patch) or "disk"
        (keep the n_side**2 sites closest to the patch center).
    """

    psi: float
    a: float
    a_z: float
    n_side: int
    n_z: int = 1
    shifts: tuple = ((0.0, 0.0),)
    polarization: str = "+"
    crop: str = "rhombus"

    def __post_init__(self):
        if not (self.a > 0 and self.a_z > 0):
            raise ValueError("lattice spacings a, a_z must be positive")
        if self.n_side < 1 or self.n_z < 1:
            raise ValueError("n_side and n_z must be at least 1")
        if not (0 < self.psi <= math.pi / 2):
            raise ValueError("psi must lie in (0, pi/2]")
        shifts = tuple((float(x), float(y)) for x, y in self.shifts)
        object.__setattr__(self, "shifts", shifts)
        if len(shifts) != self.n_z:
            raise ValueError(f"need exactly n_z={self.n_z} shifts, got {len(shifts)}")
        if shifts[0] != (0.0, 0.0):
            raise ValueError("the first layer must be unshifted: b_0 = (0, 0)")
        if self.polarization not in ("+", "-"):
            raise ValueError("polarization must be '+' or '-'")
        if self.crop not in ("rhombus", "disk"):
            raise ValueError("crop must be 'rhombus' or 'disk'")

    @property
    def superwavelength(self) -> bool:
        return self.a > 1.0

    @property
    def atoms_per_layer(self) -> int:
        return self.n_side * self.n_side

    @property
    def total_atoms(self) -> int:
        return self.atoms_per_layer * self.n_z

    @property
    def lattice(self) -> str:
        for name, psi in _LATTICE_PSI.items():
            if math.isclose(self.psi, psi, rel_tol=1e-12):
                return name
        return "oblique"

    @property
    def gamma0(self) -> float:
        return gamma0(self.a, self.psi)

    @property
    def linear_size(self) -> float:
        """Equal-area linear size L = a * sqrt(N sin(psi)) of one layer."""
        return self.a * math.sqrt(self.atoms_per_layer * math.sin(self.psi))


def single_layer(lattice: str, a: float, n_side: int, *, a_z: float = 1.0,
                 crop: str = "rhombus") -> StackSpec:
    """One-layer spec (a_z is irrelevant but must be positive)."""
    return StackSpec(lattice_angle(lattice), a, a_z, n_side, 1, ((0.0, 0.0),), crop=crop)


def two_layer(lattice: str, a_z: float, a: float, n_side: int, *,
              shifted: bool = False, crop: str = "rhombus") -> StackSpec:
    """Two-layer spec; `shifted` applies the half-cell offset b_1 = (a/2, a/2)."""
    b1 = (a / 2.0, a / 2.0) if shifted else (0.0, 0.0)
    return StackSpec(lattice_angle(lattice), a, a_z, n_side, 2,
                     ((0.0, 0.0), b1), crop=crop)


def quarter_cell_shifts(lattice: str, a: float) -> tuple:
    """Four-layer shift set that merges the layers into an a/2 sublattice.

    Square: {0, e1, e2, e1+e2} * a/2 on the cartesian cell.
    Triangular: the same construction on the primitive vectors
    e1 = (1, 0), e2 = (1/2, sqrt(3)/2).
    """
    if lattice == "square":
        return ((0.0, 0.0), (a / 2, 0.0), (0.0, a / 2), (a / 2, a / 2))
    if lattice == "triangular":
        return ((0.0, 0.0), (a / 2, 0.0),
                (a / 4, a * math.sqrt(3) / 4), (3 * a / 4, a * math.sqrt(3) / 4))
    raise ValueError(f"unknown lattice {lattice!r}")


def _layer_xy(spec: StackSpec) -> np.ndarray:
    """In-plane site coordinates of the l = 0 layer, (N, 2), deterministic order."""
    n = np.arange(1, spec.n_side + 1, dtype=float)
    n1, n2 = np.meshgrid(n, n, indexing="ij")  # n1 slow, n2 fast (row-major)
    x = n1 * spec.a + n2 * spec.a * math.cos(spec.psi)
    y = n2 * spec.a * math.sin(spec.psi)
    xy = np.column_stack([x.ravel(), y.ravel()])
    if spec.crop == "disk":
        xy = _disk_crop(spec, xy)
    return xy


def _disk_crop(spec: StackSpec, xy: np.ndarray) -> np.ndarray:
    """Keep the n_side**2 sites of an enlarged patch closest to its center."""
    pad = max(2, spec.n_side // 3)
    m = spec.n_side + 2 * pad
    n1 = np.arange(1 - pad, spec.n_side + pad + 1, dtype=float)
    g1, g2 = np.meshgrid(n1, n1, indexing="ij")
    x = g1 * spec.a + g2 * spec.a * math.cos(spec.psi)
    y = g2 * spec.a * math.sin(spec.psi)
    big = np.column_stack([x.ravel(), y.ravel()])
    center = big.mean(axis=0)
    d2 = ((big - center) ** 2).sum(axis=1)
    # deterministic tie-break: distance, then generation order
    order = np.lexsort((np.arange(big.shape[0]), np.round(d2, 12)))
    keep = np.sort(order[: spec.atoms_per_layer])
    return big[keep]


def build_positions(spec: StackSpec) -> np.ndarray:
    """Atomic positions of the full stack, shape (n_z * N, 3).

    Layer-major ordering: all sites of layer 0, then layer 1, ...; within a
    layer the (n1, n2) indices run row-major.  Layer l sits at z = l * a_z,
    offset laterally by shifts[l].
    """
    xy = _layer_xy(spec)
    npl = xy.shape[0]
    out = np.empty((spec.n_z * npl, 3))
    for l in range(spec.n_z):
        bx, by = spec.shifts[l]
        sl = out[l * npl:(l + 1) * npl]
        sl[:, 0] = xy[:, 0] + bx
        sl[:, 1] = xy[:, 1] + by
        sl[:, 2] = l * spec.a_z
    return out


@dataclass(frozen=True)
class DiffractionOrder:
    """One plane-wave scattering channel of a layer.

    `kz_ratio` stores k_z/k for radiative orders and |k_z|/k for evanescent
    ones (flag `radiative`); consumers that need the complex longitudinal
    wavevector of an evanescent order must multiply by 1j themselves.
    `gamma_m` is the emission rate in gamma units for radiative orders; for
    evanescent orders it stores the real magnitude such that the physical
    (imaginary) rate is -1j * gamma_m.
    """

    m: tuple
    Q: tuple
    q_ratio: float
    kz_ratio: float
    gamma_m: float
    radiative: bool
    theta_d: float | None = None

    @property
    def is_zero(self) -> bool:
        return self.m == (0, 0)


def required_m_window(a: float) -> int:
    """Smallest provably sufficient enumeration half-width: ceil(a) + 1."""
    return int(math.ceil(a)) + 1


def enumerate_orders(spec: StackSpec, m_max: int | None = None) -> list:
    """All diffraction orders with |m1|, |m2| <= m_max, sorted by q then m.

    Raises WindowTooSmallError when m_max < ceil(a) + 1, since a smaller
    window cannot be guaranteed to contain every radiative order.
    """
    need = required_m_window(spec.a)
    if m_max is None:
        m_max = need
    if m_max < 1 or m_max < need:
        raise WindowTooSmallError(
            f"m_max={m_max} may miss radiative orders; need at least {need}")
    g0 = spec.gamma0
    cot = math.cos(spec.psi) / math.sin(spec.psi)
    csc = 1.0 / math.sin(spec.psi)
    base = K_LIGHT / spec.a
    orders = []
    for m1 in range(-m_max, m_max + 1):
        for m2 in range(-m_max, m_max + 1):
            qx = base * m1
            qy = base * (-m1 * cot + m2 * csc)
            q = math.hypot(qx, qy) / K_LIGHT
            pol_factor = 1.0 - q * q / 2.0  # circular in-plane dipole
            if q < 1.0:
                kz = math.sqrt(1.0 - q * q)
                orders.append(DiffractionOrder(
                    m=(m1, m2), Q=(qx, qy), q_ratio=q, kz_ratio=kz,
                    gamma_m=g0 * pol_factor / kz, radiative=True,
                    theta_d=math.asin(q)))
            else:
                kz = math.sqrt(q * q - 1.0)
                orders.append(DiffractionOrder(
                    m=(m1, m2), Q=(qx, qy), q_ratio=q, kz_ratio=kz,
                    gamma_m=g0 * pol_factor / kz if kz > 0 else math.inf,
                    radiative=False, theta_d=None))
    orders.sort(key=lambda o: (o.q_ratio, o.m))
    return orders


def radiative_orders(spec: StackSpec, m_max: int | None = None,
                     include_zero: bool = True) -> list:
    orders = [o for o in enumerate_orders(spec, m_max) if o.radiative]
    if not include_zero:
        orders = [o for o in orders if not o.is_zero]
    return orders


def group_shells(orders, rtol: float = 1e-9) -> list:
    """Group orders by |Q| into shells: list of lists, ascending q_ratio."""
    shells = []
    for o in sorted(orders, key=lambda o: (o.q_ratio, o.m)):
        if shells and math.isclose(shells[-1][0].q_ratio, o.q_ratio,
                                   rel_tol=rtol, abs_tol=1e-12):
            shells[-1].append(o)
        else:
            shells.append([o])
    return shells


def shell_scales(lattice: str, n_shells: int = 4) -> list:
    """Dimensionless shell radii c_s with q_ratio = c_s / a, ascending.

    Square: 1, sqrt(2), 2, ...; triangular: 2/sqrt(3), 2, 4/sqrt(3), ...
    """
    psi = lattice_angle(lattice)
    cot = math.cos(psi) / math.sin(psi)
    csc = 1.0 / math.sin(psi)
    vals = {}  # dedupe by rounded key, keep full-precision values
    rng = n_shells + 3
    for m1 in range(-rng, rng + 1):
        for m2 in range(-rng, rng + 1):
            if m1 == 0 and m2 == 0:
                continue
            c = math.hypot(m1, -m1 * cot + m2 * csc)
            vals.setdefault(round(c, 9), c)
    return [vals[k] for k in sorted(vals)][:n_shells]
