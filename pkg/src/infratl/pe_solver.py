"""Wide-angle split-step Pade parabolic-equation solver for ground-level
transmission loss over 4000 km.

dB convention (read this first)
-------------------------------
TL(r) = 20*log10(|p(r, z=0)| / p_ref) where p_ref is the free-field amplitude
at 1 km range of the launched source aperture *including its rigid-ground
image*. With source and receiver on the ground in a homogeneous lossless
atmosphere this makes TL(r) = -20*log10(r / 1 km) exactly: the pressure
doubling from the ground image appears in both numerator and reference and
cancels. Curves therefore grow negative with range.

Numerics
--------
The field is marched in range as u(r+dr) = R(Q) u(r) with
Q = (d2/dz2 + k_c(z)^2) / k0^2 - 1 and R an order-M product of first-order
rational factors prod (1 + a_j Q) / (1 + b_j Q) approximating the one-way
propagator exp(i k0 dr (sqrt(1+Q) - 1)); each factor is one tridiagonal solve.
The density stratification is removed by the substitution p = sqrt(rho0) u,
which adds the standard -1/(4 H^2) potential for an exponential profile and
keeps the march self-adjoint. Rigid (Neumann) ground, absorbing sponge over
the top 100 km (cubic onset; a shallow sponge visibly reflects near-grazing
energy back into multi-Mm ground TL), linear range interpolation of the
sound speed field between the slice's 40 columns.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy.linalg import solve_banded

from .atmosphere import DZ_KM, N_COLUMNS, N_LEVELS, RANGE_STEP_KM, altitude_grid_km

FULL_RANGE_M = 4000e3
TL_STEP_M = 10e3
N_TL_POINTS = 400
TL_REFERENCE = "1 km free field (source + rigid-ground image)"


class GridResolutionError(ValueError):
    """Grid too coarse for the requested frequency."""


class NumericalBlowupError(RuntimeError):
    """March produced non-finite values; carries the range reached."""

    def __init__(self, range_reached_m):
        self.range_reached_m = range_reached_m
        super().__init__(f"non-finite field at range {range_reached_m / 1e3:.1f} km")


class PadeConstructionError(RuntimeError):
    """Root-finding or fitting for the rational propagator failed."""


@dataclass
class PEGrid:
    """Computational grid for one march."""

    f: float                  # Hz
    dz: float                 # m
    dr: float                 # m
    c_ref: float = 344.0      # m/s, reference (ground effective) sound speed
    z_max: float = 220e3      # m, includes the sponge
    r_max: float = FULL_RANGE_M
    sponge_depth: float = 100e3

    @property
    def k0(self):
        return 2.0 * np.pi * self.f / self.c_ref

    @property
    def wavelength(self):
        return self.c_ref / self.f

    @classmethod
    def default(cls, f, c_ref=344.0, r_max=FULL_RANGE_M):
        lam = c_ref / f
        dz = lam / 10.0
        return cls(f=f, dz=dz, dr=10.0 * dz, c_ref=c_ref, r_max=r_max)

    def validate(self):
        if self.f <= 0:
            raise ValueError("frequency must be positive")
        if self.dz > self.wavelength / 10.0 * (1 + 1e-12):
            raise GridResolutionError(
                f"dz={self.dz:.1f} m does not resolve wavelength {self.wavelength:.1f} m (need <= lambda/10)")
        if self.dr > 20.0 * self.dz * (1 + 1e-12):
            raise ValueError("dr must not exceed 20*dz")
        if self.z_max < 120e3 + self.sponge_depth:
            raise ValueError("z_max must cover 120 km of atmosphere plus the sponge")
        return self


@dataclass
class AbsorptionModel:
    """Altitude/frequency-dependent atmospheric absorption, Np/m.

    alpha(z, f) = coefficient * f^2 / (rho0(z) * c(z)^3) with an exponential
    density profile. The coefficient lumps the classical (viscous + thermal
    conduction) and rotational-relaxation losses of air; vibrational
    relaxation is out of scope here (it contributes little below a few Hz
    at the amplitudes that matter for stratospheric returns), so the model is
    a plug-in surface: swap ``coefficient`` or subclass ``alpha`` for a
    fuller treatment.
    """

    rho_ground: float = 1.225        # kg/m^3
    scale_height_m: float = 7000.0
    c_ref: float = 344.0             # m/s used in the f^2 law
    coefficient: float = None        # Np * kg / (m^2 * Hz^2); default from air constants

    # air constants at 20 degC for the lumped classical+rotational coefficient
    SHEAR_VISCOSITY = 1.82e-5        # Pa s
    BULK_VISCOSITY = 1.10e-5         # Pa s (rotational relaxation)
    THERMAL_CONDUCTIVITY = 0.0257    # W/(m K)
    GAMMA = 1.4
    CP = 1005.0                      # J/(kg K)

    def __post_init__(self):
        if self.coefficient is None:
            visc = (4.0 / 3.0) * self.SHEAR_VISCOSITY + self.BULK_VISCOSITY
            cond = self.THERMAL_CONDUCTIVITY * (self.GAMMA - 1.0) / self.CP
            self.coefficient = 2.0 * np.pi ** 2 * (visc + cond)
        if self.rho_ground <= 0 or self.scale_height_m <= 0:
            raise ValueError("density profile parameters must be positive")

    def rho0(self, z_m):
        return self.rho_ground * np.exp(-np.asarray(z_m, dtype=float) / self.scale_height_m)

    def alpha(self, z_m, f):
        if f <= 0:
            raise ValueError("frequency must be positive")
        z = np.asarray(z_m, dtype=float)
        if np.any(z < 0):
            raise ValueError("altitude must be non-negative")
        return self.coefficient * f ** 2 / (self.rho0(z) * self.c_ref ** 3)


def absorption_coefficient(z_m, f, model=None):
    """Absorption in Np/m at altitude z (m) and frequency f (Hz)."""
    return (model or AbsorptionModel()).alpha(z_m, f)


@dataclass
class PadeCoefficients:
    """Factored rational propagator prod_j (1 + a_j q) / (1 + b_j q)."""

    order: int
    a: np.ndarray
    b: np.ndarray
    sigma: float                       # k0 * dr
    q_band: tuple = (-0.2, 0.2)

    def evaluate(self, q):
        q = np.asarray(q, dtype=complex)
        out = np.ones_like(q)
        for aj, bj in zip(self.a, self.b):
            out = out * (1.0 + aj * q) / (1.0 + bj * q)
        return out


def pade_coefficients(order, sigma, q_band=(-0.2, 0.2), dps=80):
    """Rational [M/M] approximation of exp(i*sigma*(sqrt(1+q)-1)).

    The numerator and denominator (constant terms pinned to 1, so R(0) = 1
    exactly) are fit by matching the propagator's value and first two Taylor
    derivatives at q = 0 plus interpolation at 2M-2 Chebyshev nodes of
    ``q_band``. For M = 1 this degenerates to the classic [1/1] Pade
    approximant. The fit runs in extended precision; roots of both polynomials
    give the factored form used by the march.
    """
    if order < 1:
        raise ValueError("Pade order must be >= 1")
    with mp.workdps(dps):
        M = int(order)
        isig = mp.mpc(0, sigma)
        # Taylor coefficients f_0..f_2 of the propagator at q=0
        g = [mp.mpc(0)] + [isig * mp.binomial(mp.mpf(1) / 2, k) for k in (1, 2)]
        fc = [mp.mpc(1)]
        for m_ in (1, 2):
            fc.append(sum(k * g[k] * fc[m_ - k] for k in range(1, m_ + 1)) / m_)

        def f(q):
            return mp.exp(isig * (mp.sqrt(1 + q) - 1))

        n_unknown = 2 * M
        n_taylor = min(2, n_unknown)
        n_nodes = n_unknown - n_taylor
        lo, hi = mp.mpf(q_band[0]), mp.mpf(q_band[1])
        nodes = [(lo + hi) / 2 + (hi - lo) / 2 * mp.cos(mp.pi * (2 * k + 1) / (2 * n_nodes))
                 for k in range(n_nodes)]
        A = mp.matrix(n_unknown, n_unknown)
        rhs = mp.matrix(n_unknown, 1)
        # Taylor rows: coefficient of q^j in N(q) - f(q) D(q) vanishes
        for j in range(1, n_taylor + 1):
            row = j - 1
            for k in range(1, M + 1):
                A[row, k - 1] = mp.mpf(1) if k == j else mp.mpf(0)
                A[row, M + k - 1] = -(fc[j - k] if 0 <= j - k < len(fc) else mp.mpc(0))
            rhs[row] = fc[j]
        # interpolation rows: N(q_i) - f(q_i) D(q_i) = 0
        for i, q in enumerate(nodes):
            fq = f(q)
            row = n_taylor + i
            for k in range(1, M + 1):
                A[row, k - 1] = q ** k
                A[row, M + k - 1] = -fq * q ** k
            rhs[row] = fq - 1
        try:
            sol = mp.lu_solve(A, rhs)
            num = [mp.mpc(1)] + [sol[k] for k in range(M)]
            den = [mp.mpc(1)] + [sol[M + k] for k in range(M)]
            nroots = mp.polyroots([complex(c) for c in num[::-1]], maxsteps=300, extraprec=300)
            droots = mp.polyroots([complex(c) for c in den[::-1]], maxsteps=300, extraprec=300)
        except (mp.libmp.NoConvergence, ZeroDivisionError) as exc:
            raise PadeConstructionError(
                f"propagator fit failed for order={order}, sigma={sigma}: {exc}") from exc
        a = np.array([complex(-1 / r) for r in nroots])
        b = np.array([complex(-1 / r) for r in droots])
    coeffs = PadeCoefficients(order=M, a=a, b=b, sigma=float(sigma), q_band=tuple(q_band))
    # guard: the factored form must not amplify propagating or evanescent modes
    probe = np.concatenate([np.linspace(-50.0, 1.5, 2000), np.linspace(q_band[0], q_band[1], 500)])
    mag = np.abs(coeffs.evaluate(probe))
    if mag.max() > 1.0 + 1e-9:
        raise PadeConstructionError(
            f"unstable propagator (max |R| = {mag.max():.3e}) for order={order}, sigma={sigma}")
    return coeffs


@dataclass
class TLCurve:
    """Ground transmission loss in dB at 10, 20, ..., 4000 km."""

    values: np.ndarray
    f: float
    reference: str = TL_REFERENCE

    def validate(self):
        if self.values.shape != (N_TL_POINTS,):
            raise ValueError(f"TL curve length {self.values.shape}, expected ({N_TL_POINTS},)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("TL curve contains non-finite values")
        return self

    @property
    def ranges_km(self):
        return (np.arange(N_TL_POINTS) + 1) * (TL_STEP_M / 1e3)


def tl_ranges_km():
    return (np.arange(N_TL_POINTS) + 1) * (TL_STEP_M / 1e3)


def starter_field(grid, source_alt=0.0):
    """Gaussian starter (pressure values on the grid) with rigid-ground image.

    Width scales as 1/k0; aperture integral of the image-extended field is
    2*sqrt(2*pi)/k0 regardless of source altitude, which fixes the 1-km
    free-field reference amplitude used by the march.
    """
    if not (0.0 <= source_alt <= grid.z_max):
        raise ValueError("source altitude outside the grid")
    z = np.arange(int(round(grid.z_max / grid.dz))) * grid.dz
    k0 = grid.k0
    p0 = np.exp(-0.5 * k0 ** 2 * (z - source_alt) ** 2) + \
        np.exp(-0.5 * k0 ** 2 * (z + source_alt) ** 2)
    return p0.astype(complex)


def _reference_amplitude(grid, starter):
    """Free-field |p| at 1 km of the launched aperture (with its ground image).

    The even extension of the half-space starter doubles its integral; the
    on-axis 2D far field of an aperture A is |int A dz| / sqrt(lambda * x),
    and the spreading-corrected pressure gains another 1/sqrt(x). Deriving the
    reference from the actual starter makes TL invariant under starter scaling.
    """
    aperture_integral = 2.0 * np.abs(np.trapezoid(starter, dx=grid.dz))
    return aperture_integral / (np.sqrt(grid.wavelength) * 1000.0)


def _ceff_on_grid(slc, z_m):
    """Effective sound speed (m/s) columns of a slice resampled onto the PE
    altitude axis; above the slice top the last value is held (sponge region)."""
    z_slice = altitude_grid_km() * 1e3
    ceff = slc.c_ratio * slc.c_ground            # (1000, 40)
    out = np.empty((z_m.size, ceff.shape[1]))
    for j in range(ceff.shape[1]):
        out[:, j] = np.interp(z_m, z_slice, ceff[:, j])
    return out


def march(slc, f, grid=None, absorption=None, pade_order=7, q_band=(-0.2, 0.2),
          sponge_peak=0.5, sponge_power=3, source_alt=0.0, starter=None,
          norm_trace=None):
    """March a slice at one frequency; returns the 400-point :class:`TLCurve`.

    Parameters
    ----------
    slc : AtmosphericSlice
    f : frequency, Hz
    grid : PEGrid or None for the default (dz = lambda/10, dr = 10 dz)
    absorption : AbsorptionModel or None for the default; a model with
        ``coefficient=0`` disables volume absorption
    pade_order : rational propagator order (7 reproduces wide-angle returns
        from the stratosphere and above)
    sponge_peak : peak imaginary wavenumber of the top sponge, in units of k0
        (0 disables the sponge); sponge_power sets the ramp exponent
    norm_trace : optional list; appends the per-step L2 norm of the
        density-reduced field (diagnostic for the energy-conservation check)
    """
    if grid is None:
        grid = PEGrid.default(f, c_ref=slc.c_ground)
    grid.validate()
    if abs(grid.f - f) > 1e-12:
        raise ValueError("grid frequency disagrees with requested frequency")
    if grid.r_max < FULL_RANGE_M:
        raise ValueError("the 400-point TL contract requires r_max >= 4000 km")
    model = absorption if absorption is not None else AbsorptionModel()

    nz = int(round(grid.z_max / grid.dz))
    z = np.arange(nz) * grid.dz
    k0 = grid.k0
    omega = 2.0 * np.pi * f

    ceff = _ceff_on_grid(slc, z)                     # (nz, 40)
    alpha = model.alpha(z, f)
    # sponge: polynomial imaginary ramp over the top sponge_depth
    sp = np.clip((z - (grid.z_max - grid.sponge_depth)) / grid.sponge_depth, 0.0, None)
    alpha_total = alpha + sponge_peak * k0 * sp ** sponge_power
    # density reduction potential for the exponential profile
    potential = -1.0 / (4.0 * model.scale_height_m ** 2)

    coeffs = pade_coefficients(pade_order, k0 * grid.dr, q_band=q_band)

    inv = 1.0 / (k0 ** 2 * grid.dz ** 2)
    # tridiagonal Laplacian: Neumann ghost at the ground (even symmetry),
    # Dirichlet at the top (field is sponge-damped before it arrives)
    up = np.full(nz, inv)
    up[0] = 2.0 * inv
    up[-1] = 0.0
    low = np.full(nz, inv)
    low[0] = 0.0

    # starter in reduced variable u = p * sqrt(rho0(0)/rho0(z)); ground u == p
    p0 = starter_field(grid, source_alt) if starter is None else np.asarray(starter, dtype=complex)
    if p0.shape != z.shape:
        raise ValueError(f"starter length {p0.shape} does not match the grid ({z.shape})")
    u = p0 * np.exp(z / (2.0 * model.scale_height_m))
    ref = _reference_amplitude(grid, p0)

    n_steps = int(np.ceil(grid.r_max / grid.dr))
    r_nodes = np.arange(1, n_steps + 1) * grid.dr
    col_pos = np.arange(ceff.shape[1]) * RANGE_STEP_KM * 1e3
    ab = np.zeros((3, nz), dtype=complex)
    ground_amp = np.empty(n_steps)

    for n in range(n_steps):
        # medium at the midpoint of the step: c_eff linear in range
        r_mid = (n + 0.5) * grid.dr
        j = min(int(r_mid // (RANGE_STEP_KM * 1e3)), ceff.shape[1] - 2)
        w = (r_mid - col_pos[j]) / (RANGE_STEP_KM * 1e3)
        w = min(max(w, 0.0), 1.0)
        ceff_col = (1.0 - w) * ceff[:, j] + w * ceff[:, j + 1]
        kc2_col = (omega / ceff_col + 1j * alpha_total) ** 2 + potential
        diag = -2.0 * inv + kc2_col / k0 ** 2 - 1.0

        for aj, bj in zip(coeffs.a, coeffs.b):
            rhs = (1.0 + aj * diag) * u
            rhs[:-1] += aj * up[:-1] * u[1:]
            rhs[1:] += aj * low[1:] * u[:-1]
            ab[0, 1:] = bj * up[:-1]
            ab[1, :] = 1.0 + bj * diag
            ab[2, :-1] = bj * low[1:]
            u = solve_banded((1, 1), ab, rhs)

        g = np.abs(u[0])
        if not (np.isfinite(g) and np.all(np.isfinite(u))):
            raise NumericalBlowupError(range_reached_m=r_nodes[n])
        ground_amp[n] = g
        if norm_trace is not None:
            norm_trace.append(float(np.linalg.norm(u)))

    # cylindrical-to-spherical spreading and referencing
    with np.errstate(divide="ignore"):
        tl_nodes = 20.0 * np.log10(ground_amp / np.sqrt(r_nodes) / ref)
    marks = (np.arange(N_TL_POINTS) + 1) * TL_STEP_M
    values = np.interp(marks, r_nodes, tl_nodes)
    return TLCurve(values=values, f=float(f)).validate()


def lloyds_mirror_tl(r, z_src, z_rcv, f, c=344.0):
    """Analytic two-ray (direct + rigid-ground image) transmission loss, dB.

    Homogeneous medium, spherical spreading, same reference convention as the
    march: free-field amplitude of source plus image at 1 km.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("range must be positive")
    k = 2.0 * np.pi * f / c
    r1 = np.sqrt(r ** 2 + (z_rcv - z_src) ** 2)
    r2 = np.sqrt(r ** 2 + (z_rcv + z_src) ** 2)
    p = np.exp(1j * k * r1) / r1 + np.exp(1j * k * r2) / r2
    ref = 2.0 / 1000.0
    return 20.0 * np.log10(np.abs(p) / ref)


# ---------------------------------------------------------------------------
# solver configuration and TL container I/O

@dataclass
class SolverConfig:
    """JSON-loadable march configuration (grid overrides + physics knobs)."""

    dz: float = None             # m; None -> lambda/10
    dr: float = None             # m; None -> 10*dz
    z_max: float = 220e3
    sponge_depth: float = 100e3
    sponge_peak: float = 0.5
    sponge_power: int = 3
    pade_order: int = 7
    q_band: tuple = (-0.2, 0.2)
    absorption_coefficient: float = None   # None -> air-constant default
    rho_ground: float = 1.225
    scale_height_m: float = 7000.0

    def grid_for(self, f, c_ref, r_max=FULL_RANGE_M):
        lam = c_ref / f
        dz = self.dz if self.dz is not None else lam / 10.0
        dr = self.dr if self.dr is not None else 10.0 * dz
        return PEGrid(f=f, dz=dz, dr=dr, c_ref=c_ref, z_max=self.z_max,
                      r_max=r_max, sponge_depth=self.sponge_depth)

    def absorption_model(self):
        return AbsorptionModel(rho_ground=self.rho_ground,
                               scale_height_m=self.scale_height_m,
                               coefficient=self.absorption_coefficient)

    def run(self, slc, f, norm_trace=None):
        grid = self.grid_for(f, c_ref=slc.c_ground)
        return march(slc, f, grid=grid, absorption=self.absorption_model(),
                     pade_order=self.pade_order, q_band=tuple(self.q_band),
                     sponge_peak=self.sponge_peak, sponge_power=self.sponge_power,
                     norm_trace=norm_trace)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["q_band"] = list(self.q_band)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "q_band" in d:
            d["q_band"] = tuple(d["q_band"])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def save_tl(path, curve, meta=None):
    from .container import write_container
    m = dict(meta or {})
    m.update({"kind": "tl_curve", "f_hz": curve.f, "reference": curve.reference,
              "range_step_km": TL_STEP_M / 1e3})
    write_container(path, {"tl_db": curve.values}, m)


def load_tl(path):
    from .container import read_container
    arrays, meta = read_container(path)
    if "tl_db" not in arrays:
        raise ValueError(f"{path}: not a TL container")
    return TLCurve(values=arrays["tl_db"].astype(float), f=float(meta["f_hz"]),
                   reference=meta.get("reference", TL_REFERENCE)).validate()
