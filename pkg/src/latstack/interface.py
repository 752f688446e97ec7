"""Analytic 1D model of the stack's coupling to the normal target mode.

For a two-layer stack the symmetric collective dipole couples to the
normal-incidence mode at rate Gamma = 2*Gamma_0 while higher radiative
diffraction orders contribute a loss

    gamma_diff = sum_m Gamma_m (1 + e^{i k a_z} e^{i k_z^m a_z} e^{i Q_m . b_1}),

and the coupling efficiency is r0 = Gamma / (Gamma + Re gamma_diff), which
also equals the on-resonance reflectivity of the target mode.  The loss
vanishes on families of "resonant spacings" (a_z, a) where the interlayer
phases interfere destructively; this module solves for those curves,
evaluates multi-shell scans, and searches for four-layer configurations
that cancel two radiative shells exactly.

All lengths in wavelength units, rates in single-atom linewidths.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import (
    K_LIGHT,
    StackSpec,
    WindowTooSmallError,
    enumerate_orders,
    group_shells,
    lattice_angle,
    quarter_cell_shifts,
    shell_scales,
)

# evanescent interlayer terms with |k_z| a_z above this are dropped (< e^-40)
EVANESCENT_CUTOFF = 40.0


class NotAnEigenmodeError(RuntimeError):
    """The symmetric layer mode is not an eigenmode of the interlayer kernel."""

    def __init__(self, residual: float):
        super().__init__(
            f"symmetric-mode eigenvector residual {residual:.3e} Gamma_0 "
            "exceeds tolerance; the 1D reduction is invalid for this stack")
        self.residual = residual


class ResonanceShiftWarning(UserWarning):
    """Im(gamma_diff) is large: the actual resonance is shifted off delta = Delta."""


@dataclass(frozen=True)
class InterfaceParams:
    """Effective 1D-interface quantities of a stack.

    gamma_target : coupling rate Gamma to the normal mode (gamma units).
    gamma_diff   : complex diffraction loss; Re is the loss rate, Im a
                   residual shift contribution folded into the resonance.
    r0           : efficiency Gamma / (Gamma + max(Re gamma_diff, 0)).
    delta_shift  : collective shift Delta; None when not determined (the
                   analytic model leaves it to a numerical resonance scan).
    """

    gamma_target: float
    gamma_diff: complex
    r0: float
    delta_shift: float | None = None

    @property
    def one_minus_r0(self) -> float:
        return 1.0 - self.r0

    @property
    def im_warning(self) -> bool:
        return abs(self.gamma_diff.imag) > 1e-3 * self.gamma_target


def _efficiency(gamma: float, gamma_diff: complex) -> float:
    loss = max(gamma_diff.real, 0.0)  # clamp numerical -0.0
    return gamma / (gamma + loss)


def interlayer_kernel(spec: StackSpec, l: int, lp: int,
                      m_max: int | None = None, *,
                      include_evanescent: bool = True,
                      return_residual: bool = False):
    """Interlayer coupling D_{l l'} summed over diffraction orders.

    D_{ll'} = sum_m (Gamma_m / 2) e^{i k_z^m a_z |l - l'|} e^{-i Q_m . (b_l - b_l')}

    Evanescent orders contribute -1j * (Gamma-magnitude/2) * exp(-|k_z| a_z |l-l'|)
    and are truncated once |k_z| a_z |l-l'| exceeds EVANESCENT_CUTOFF; the
    truncation residual (an upper bound on the dropped terms) is returned
    when `return_residual` is set.

    The equal-layer diagonal is refused unless `include_evanescent=False`,
    because the on-site evanescent sum does not converge (it encodes the
    single-layer collective shift, which this module never evaluates).
    """
    if not (0 <= l < spec.n_z and 0 <= lp < spec.n_z):
        raise ValueError("layer indices out of range")
    if l == lp and include_evanescent:
        raise ValueError(
            "on-site evanescent sum diverges; call with include_evanescent=False "
            "for the radiative-only diagonal")
    dl = abs(l - lp)
    db = (spec.shifts[l][0] - spec.shifts[lp][0],
          spec.shifts[l][1] - spec.shifts[lp][1])
    total = 0.0 + 0.0j
    residual = 0.0
    for o in enumerate_orders(spec, m_max):
        shift_phase = cmath.exp(-1j * (o.Q[0] * db[0] + o.Q[1] * db[1]))
        if o.radiative:
            phase = cmath.exp(1j * K_LIGHT * o.kz_ratio * spec.a_z * dl)
            total += 0.5 * o.gamma_m * phase * shift_phase
        elif include_evanescent and dl > 0:
            decay_arg = K_LIGHT * o.kz_ratio * spec.a_z * dl
            term = -0.5j * o.gamma_m * math.exp(-min(decay_arg, 745.0)) * shift_phase
            if decay_arg <= EVANESCENT_CUTOFF:
                total += term
            else:
                residual += abs(term)
    if return_residual:
        return total, residual
    return total


def two_layer_params(spec: StackSpec, m_max: int | None = None) -> InterfaceParams:
    """Effective rates and efficiency of a two-layer stack.

    Gamma = 2 Gamma_0; gamma_diff sums the radiative orders beyond (0,0)
    with their interlayer interference factors.  Warns when the imaginary
    part of gamma_diff exceeds 1e-3 Gamma (resonance condition shifted).
    """
    if spec.n_z != 2:
        raise ValueError("two_layer_params requires a two-layer spec")
    gamma = 2.0 * spec.gamma0
    b1 = spec.shifts[1]
    phase0 = cmath.exp(1j * K_LIGHT * spec.a_z)
    gd = 0.0 + 0.0j
    for o in enumerate_orders(spec, m_max):
        if not o.radiative or o.is_zero:
            continue
        interlayer = cmath.exp(1j * K_LIGHT * o.kz_ratio * spec.a_z)
        shift = cmath.exp(1j * (o.Q[0] * b1[0] + o.Q[1] * b1[1]))
        gd += o.gamma_m * (1.0 + phase0 * interlayer * shift)
    if abs(gd.imag) > 1e-3 * gamma:
        warnings.warn(
            f"Im(gamma_diff) = {gd.imag:.3e} exceeds 1e-3 Gamma; the resonance "
            "is shifted away from the bare collective resonance",
            ResonanceShiftWarning, stacklevel=2)
    return InterfaceParams(gamma_target=gamma, gamma_diff=gd,
                           r0=_efficiency(gamma, gd))


def _half_integer(x: float, tol: float = 1e-9) -> bool:
    return abs(2.0 * x - round(2.0 * x)) < tol


def kernel_matrix(spec: StackSpec, m_max: int | None = None, *,
                  include_evanescent: bool = True) -> np.ndarray:
    """n_z x n_z interlayer kernel; diagonal is radiative-only by construction."""
    n = spec.n_z
    D = np.empty((n, n), dtype=complex)
    for l in range(n):
        for lp in range(n):
            D[l, lp] = interlayer_kernel(
                spec, l, lp, m_max,
                include_evanescent=include_evanescent and l != lp)
    return D


def multilayer_params(spec: StackSpec, m_max: int | None = None, *,
                      tol: float = 1e-8,
                      include_evanescent: bool = True):
    """Effective rates of an n_z-layer stack via the symmetric layer mode.

    Requires half-integer a_z so the symmetric mode couples identically to
    both propagation directions.  Builds the kernel matrix, checks that
    v_l = e^{-i k l a_z} / sqrt(n_z) is an eigenvector (residual in Gamma_0
    units), and if so returns Gamma = n_z Gamma_0 together with
    gamma_diff = 2 <v|D|v> - n_z Gamma_0.

    Returns (InterfaceParams, residual); raises NotAnEigenmodeError when the
    residual exceeds `tol`.  With `include_evanescent` the residual picks up
    the genuine (exponentially small) near-field interlayer coupling of
    uncancelled evanescent orders; pass include_evanescent=False to test the
    radiative reduction alone, which is exact for the designed stacks.
    """
    if spec.n_z < 2:
        raise ValueError("multilayer_params requires n_z >= 2")
    if not _half_integer(spec.a_z):
        raise ValueError("multilayer reduction requires half-integer a_z")
    D = kernel_matrix(spec, m_max, include_evanescent=include_evanescent)
    n = spec.n_z
    v = np.exp(-1j * K_LIGHT * spec.a_z * np.arange(n)) / math.sqrt(n)
    lam = np.vdot(v, D @ v)
    residual = float(np.linalg.norm(D @ v - lam * v)) / spec.gamma0
    if residual > tol:
        raise NotAnEigenmodeError(residual)
    gamma = n * spec.gamma0
    gd = 2.0 * lam - gamma
    params = InterfaceParams(gamma_target=gamma, gamma_diff=gd,
                             r0=_efficiency(gamma, gd))
    return params, residual


# ---------------------------------------------------------------------------
# resonant-spacing curves


@dataclass(frozen=True)
class ResonantCurve:
    """One branch of exact loss-cancellation spacings.

    Points satisfy (1 + kz_ratio(a)) * a_z = n + 1/2 on the "opposing"
    branch (unshifted layers) or = n on the "matched" branch (half-cell
    shifted square layers).
    """

    branch: str
    n: int
    lattice: str
    shifted: bool
    points: np.ndarray  # (num, 2) columns (a_z, a)


def single_shell_window(lattice: str) -> tuple:
    """Open interval of spacings a with exactly one radiative shell."""
    c = shell_scales(lattice, 2)
    return (c[0], c[1])


def two_shell_window(lattice: str) -> tuple:
    """Open interval of spacings a with exactly two radiative shells."""
    c = shell_scales(lattice, 3)
    return (c[1], c[2])


def first_shell_kz(lattice: str, a) -> np.ndarray:
    """kz_ratio of the first diffraction shell as a function of spacing a."""
    c1 = shell_scales(lattice, 1)[0]
    a = np.asarray(a, dtype=float)
    q = c1 / a
    if np.any(q >= 1.0):
        raise ValueError("first shell is evanescent for some of the requested a")
    return np.sqrt(1.0 - q * q)


def branch_for(lattice: str, shifted: bool) -> str:
    """Interference branch of the standard configurations."""
    if not shifted:
        return "opposing"
    if lattice == "square":
        return "matched"
    raise ValueError("shifted resonant curves are only defined for the square "
                     "lattice (half-cell shift gives a uniform pi phase)")


def resonant_interlayer_spacing(lattice: str, branch: str, n: int, a) -> np.ndarray:
    """a_z on the branch-n resonance curve at lattice spacing(s) a."""
    kz = first_shell_kz(lattice, a)
    target = n + 0.5 if branch == "opposing" else float(n)
    return target / (1.0 + kz)


def resonant_lattice_constant(lattice: str, branch: str, n: int, a_z: float) -> float:
    """Exact lattice spacing a of the branch-n curve at interlayer spacing a_z."""
    target = n + 0.5 if branch == "opposing" else float(n)
    kz = target / a_z - 1.0
    if not (0.0 < kz < 1.0):
        raise ValueError(f"branch n={n} does not cross a_z={a_z}")
    c1 = shell_scales(lattice, 1)[0]
    q = math.sqrt(1.0 - kz * kz)
    return c1 / q


def resonant_spacing_curves(lattice: str, shifted: bool, a_range: tuple,
                            n_range, num: int = 100) -> list:
    """Sampled exact-cancellation curves a_z(a) in the single-shell window."""
    lo, hi = single_shell_window(lattice)
    a0, a1 = a_range
    if not (lo < a0 < hi and lo < a1 < hi and a0 < a1):
        raise ValueError(
            f"a_range must lie inside the single-shell window ({lo:.6g}, {hi:.6g})")
    branch = branch_for(lattice, shifted)
    a = np.linspace(a0, a1, num)
    curves = []
    for n in n_range:
        az = resonant_interlayer_spacing(lattice, branch, n, a)
        curves.append(ResonantCurve(branch=branch, n=int(n), lattice=lattice,
                                    shifted=shifted,
                                    points=np.column_stack([az, a])))
    return curves


def resonant_two_layer(lattice: str, a_z: float, n: int, n_side: int,
                       shifted: bool | None = None) -> StackSpec:
    """Two-layer spec sitting exactly on the branch-n resonance at a_z.

    `shifted` defaults to the standard choice: half-cell shifted square
    (matched branch) and unshifted triangular (opposing branch).
    """
    if shifted is None:
        shifted = lattice == "square"
    branch = branch_for(lattice, shifted)
    a = resonant_lattice_constant(lattice, branch, n, a_z)
    from .lattice import two_layer
    return two_layer(lattice, a_z, a, n_side, shifted=shifted)


# ---------------------------------------------------------------------------
# multi-shell scans


@dataclass(frozen=True)
class ScanTable:
    """Column-oriented scan output (CSV-ready)."""

    columns: tuple
    data: np.ndarray  # (rows, len(columns))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def rows_at(self, **match) -> np.ndarray:
        mask = np.ones(self.data.shape[0], dtype=bool)
        for key, val in match.items():
            mask &= np.isclose(self.column(key), val)
        return self.data[mask]


def _shell_phase_residues(spec: StackSpec, orders) -> list:
    """Distance of each radiative shell from its destructive-phase condition.

    For shell phase x = (1 + kz) a_z and uniform shell shift factor
    sigma = e^{i Q . b_1}, the loss term 1 + e^{2 pi i x} sigma vanishes at
    x = (pi - arg sigma) / (2 pi)  (mod 1); the residue is the circular
    distance of x from that target.  NaN when sigma varies within a shell.
    """
    b1 = spec.shifts[1]
    residues = []
    shells = group_shells([o for o in orders if o.radiative and not o.is_zero])
    for shell in shells:
        sigmas = [cmath.exp(1j * (o.Q[0] * b1[0] + o.Q[1] * b1[1])) for o in shell]
        if max(abs(s - sigmas[0]) for s in sigmas) > 1e-9:
            residues.append(math.nan)
            continue
        x = (1.0 + shell[0].kz_ratio) * spec.a_z
        target = (math.pi - cmath.phase(sigmas[0])) / (2.0 * math.pi)
        residues.append(abs((x - target + 0.5) % 1.0 - 0.5))
    return residues


def multiorder_scan(lattice: str, shifted: bool, a_values, a_z_list,
                    m_max: int | None = None) -> ScanTable:
    """Two-layer loss scan over a grid of (a_z, a), any number of shells.

    Returns one row per grid point with the complex loss, the efficiency,
    and one destructive-phase residue per radiative shell.
    """
    a_values = np.asarray(a_values, dtype=float)
    if a_values.size == 0 or len(tuple(a_z_list)) == 0:
        raise ValueError("scan axes must be non-empty")
    psi = lattice_angle(lattice)
    n_shell = 0
    rows = []
    for a_z in a_z_list:
        for a in a_values:
            b1 = (a / 2.0, a / 2.0) if shifted else (0.0, 0.0)
            spec = StackSpec(psi, float(a), float(a_z), 1, 2,
                             ((0.0, 0.0), b1))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ResonanceShiftWarning)
                params = two_layer_params(spec, m_max)
            residues = _shell_phase_residues(spec, enumerate_orders(spec, m_max))
            n_shell = max(n_shell, len(residues))
            rows.append([a_z, a, params.gamma_diff.real, params.gamma_diff.imag,
                         params.r0, residues])
    columns = ("a_z", "a", "re_gamma_diff", "im_gamma_diff", "r0") + tuple(
        f"residual_shell_{k + 1}" for k in range(n_shell))
    data = np.full((len(rows), len(columns)), math.nan)
    for i, row in enumerate(rows):
        data[i, :5] = row[:5]
        data[i, 5:5 + len(row[5])] = row[5]
    return ScanTable(columns=columns, data=data)


# ---------------------------------------------------------------------------
# four-layer exact designs


def design_multilayer_shifts(lattice: str, a_range: tuple, n_z: int = 4,
                             a_z_max: float = 10.0, *, int_tol: float = 5e-3,
                             verify_tol: float = 1e-8) -> list:
    """Half-integer interlayer spacings cancelling two radiative shells.

    Searches half-integer a_z <= a_z_max for lattice spacings a in `a_range`
    (inside the two-shell window) where (1 + kz_s(a)) a_z is an integer for
    every radiative shell s simultaneously -- the matched-phase condition
    e^{i k a_z} e^{i k_z a_z} = 1 -- and pairs each solution with the
    quarter-cell shifts that merge the four layers into a subwavelength
    a/2 sublattice.  The first-shell condition is inverted exactly and the
    remaining shells must land within `int_tol` of an integer; candidates
    are then verified through multilayer_params and kept only when
    |Re gamma_diff| < verify_tol * Gamma_0.

    Returns a list of (a_z, a, shifts) sorted by a_z then a.
    """
    if n_z != 4:
        raise ValueError("the quarter-cell construction is defined for n_z = 4")
    lo, hi = two_shell_window(lattice)
    a0, a1 = max(a_range[0], lo + 1e-9), min(a_range[1], hi - 1e-9)
    if not (a0 < a1):
        raise ValueError(
            f"a_range must intersect the two-shell window ({lo:.6g}, {hi:.6g})")
    c1, c2 = shell_scales(lattice, 2)
    psi = lattice_angle(lattice)

    def kz(c, a):
        q = c / a
        return math.sqrt(1.0 - q * q)

    found = []
    n_az = int(round(2 * a_z_max))
    for half in range(1, n_az + 1):
        a_z = half / 2.0
        x_lo = (1.0 + kz(c1, a0)) * a_z
        x_hi = (1.0 + kz(c1, a1)) * a_z
        for n1 in range(int(math.ceil(x_lo)), int(math.floor(x_hi)) + 1):
            kz1 = n1 / a_z - 1.0
            if not (0.0 < kz1 < 1.0):
                continue
            a_cand = c1 / math.sqrt(1.0 - kz1 * kz1)
            if not (a0 <= a_cand <= a1):
                continue
            x2 = (1.0 + kz(c2, a_cand)) * a_z
            if abs(x2 - round(x2)) > int_tol:
                continue
            shifts = quarter_cell_shifts(lattice, a_cand)
            spec = StackSpec(psi, a_cand, a_z, 1, 4, shifts)
            # verification targets the radiative 1D reduction; uncancelled
            # evanescent orders only add a physical near-field shift
            try:
                params, _resid = multilayer_params(spec, tol=1e-8,
                                                   include_evanescent=False)
            except NotAnEigenmodeError:
                continue
            if abs(params.gamma_diff.real) < verify_tol * spec.gamma0:
                found.append((a_z, a_cand, shifts))
    found.sort(key=lambda t: (t[0], t[1]))
    return found
