"""Range-dependent synthetic atmospheres and effective sound speed ratio fields.

A slice covers 0-120 km altitude by 0-4000 km range. Vertical profiles of
temperature and horizontal wind sit every 100 km; each column is converted to
the effective sound speed ratio

    c_ratio(z) = (c(z) + v_proj(z)) / c_ground,

where c(z) is the adiabatic sound speed, v_proj the wind component projected
onto the propagation azimuth, and c_ground the effective sound speed at the
ground of the slice's first (range-0) column, shared by all 40 columns.
Values >= 1 aloft mark a refracting duct returning energy to the ground.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .container import read_container, write_container

# Reference sound speed and temperature (20 degC air).
C0_MS = 344.0
T0_K = 293.13

# Fixed altitude grid: 1000 levels, 0.12 km spacing, 0 to 119.88 km.
N_LEVELS = 1000
DZ_KM = 0.12

# Fixed range sampling: 40 columns every 100 km, 0 to 3900 km.
N_COLUMNS = 40
RANGE_STEP_KM = 100.0


def altitude_grid_km():
    """The canonical altitude grid in km (1000 points, 0.12 km step)."""
    return np.arange(N_LEVELS) * DZ_KM


@dataclass
class VerticalProfile:
    """Temperature and horizontal winds on the fixed altitude grid."""

    z_km: np.ndarray
    T: np.ndarray  # K
    U: np.ndarray  # zonal wind, m/s (positive east)
    V: np.ndarray  # meridional wind, m/s (positive north)

    def validate(self):
        for name in ("z_km", "T", "U", "V"):
            arr = getattr(self, name)
            if arr.shape != (N_LEVELS,):
                raise ValueError(f"profile field {name} has shape {arr.shape}, expected ({N_LEVELS},)")
        dz = np.diff(self.z_km)
        if not (np.all(dz > 0) and np.allclose(dz, dz[0])):
            raise ValueError("altitude grid must be strictly increasing and uniform")
        if np.any(self.T <= 0):
            raise ValueError("temperatures must be positive")
        if np.any(np.abs(self.U) >= 300) or np.any(np.abs(self.V) >= 300):
            raise ValueError("wind speeds exceed the 300 m/s sanity bound")
        return self

    def copy(self):
        return VerticalProfile(self.z_km.copy(), self.T.copy(), self.U.copy(), self.V.copy())


@dataclass
class ClimatologySpec:
    """Parameters of the synthetic climatology used in place of reanalysis data."""

    ground_T: float = 288.15          # K
    tropo_lapse: float = 6.5          # K/km temperature decrease up to ~11 km
    strato_jet_amp: float = 50.0      # m/s, signed; >0 blows along +U
    strato_jet_alt: float = 60.0      # km
    strato_jet_width: float = 12.0    # km (Gaussian sigma)
    tropo_jet_amp: float = 30.0       # m/s
    thermo_rise_scale: float = 5.0    # K/km above ~92 km
    meridional_amp: float = 10.0      # m/s
    range_trend: float = 0.1          # fractional jet-amplitude drift per 1000 km
    rng_seed: int = 0

    def validate(self):
        if not (40.0 <= self.strato_jet_alt <= 75.0):
            raise ValueError(f"strato_jet_alt {self.strato_jet_alt} outside [40, 75] km")
        if self.strato_jet_width <= 0:
            raise ValueError("strato_jet_width must be positive")
        if self.ground_T <= 0:
            raise ValueError("ground_T must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GravityWaveSpec:
    """Spectral fine-structure perturbation superimposed on the climatology.

    A bank of vertical sinusoids with amplitudes following an m**spectral_slope
    power law between m_min and m_max (rad/km), an exp(z / 2H) growth envelope
    anchored to rms_at_20km and capped at saturation_cap, and mode coefficients
    decorrelating in range over horizontal_corr_km.
    """

    n_modes: int = 64
    m_min: float = 2 * np.pi / 20.0   # rad/km (20 km vertical wavelength)
    m_max: float = 2 * np.pi / 1.0    # rad/km (1 km vertical wavelength)
    spectral_slope: float = -3.0
    rms_at_20km: float = 2.0          # m/s
    growth_scale_H: float = 7.0       # km density scale height
    saturation_cap: float = 40.0      # m/s
    horizontal_corr_km: float = 500.0
    rng_seed: int = 0

    def validate(self):
        if not self.m_min < self.m_max:
            raise ValueError("require m_min < m_max")
        if self.rms_at_20km < 0:
            raise ValueError("rms_at_20km must be non-negative")
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AtmosphericSlice:
    """Effective sound speed ratio field plus the profiles it derives from."""

    c_ratio: np.ndarray               # (1000, 40), dimensionless
    profiles: list                    # 40 VerticalProfile, one per 100 km
    azimuth_deg: float
    c_ground: float                   # m/s, shared ratio denominator
    metadata: dict = field(default_factory=dict)

    def validate(self):
        if self.c_ratio.shape != (N_LEVELS, N_COLUMNS):
            raise ValueError(f"c_ratio shape {self.c_ratio.shape}, expected ({N_LEVELS}, {N_COLUMNS})")
        if len(self.profiles) != N_COLUMNS:
            raise ValueError(f"expected {N_COLUMNS} profiles, got {len(self.profiles)}")
        if not np.all(self.c_ratio > 0):
            raise ValueError("c_ratio must be positive everywhere")
        if self.c_ground <= 0:
            raise ValueError("c_ground must be positive")
        return self


def adiabatic_sound_speed(T):
    """Adiabatic sound speed c = 344 * sqrt(T / 293.13) m/s; T in kelvin."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    return C0_MS * np.sqrt(T / T0_K)


def project_wind(U, V, azimuth_deg):
    """Wind component along a propagation azimuth (degrees clockwise from north)."""
    az = np.deg2rad(azimuth_deg)
    return np.asarray(U) * np.sin(az) + np.asarray(V) * np.cos(az)


def effective_sound_speed(profile, azimuth_deg):
    """c_eff(z) = c(z) + projected wind, m/s."""
    return adiabatic_sound_speed(profile.T) + project_wind(profile.U, profile.V, azimuth_deg)


def effective_ratio_column(profile, azimuth_deg, c_ground=None):
    """One c_ratio column.

    When ``c_ground`` is None the denominator is this profile's own ground
    effective sound speed (the convention for a slice's first column, where the
    ground value is then exactly 1).
    """
    c_eff = effective_sound_speed(profile, azimuth_deg)
    if c_ground is None:
        c_ground = c_eff[0]
    if c_ground <= 0:
        raise ValueError(f"non-physical ground effective sound speed {c_ground}")
    return c_eff / c_ground


def blend_upper_atmosphere(lower, upper, z_low_km=75.0, z_high_km=85.0):
    """Join a lower-atmosphere profile to an upper-atmosphere one.

    Output equals ``lower`` below ``z_low_km``, ``upper`` above ``z_high_km``,
    and a cubic Hermite (smoothstep-weighted) blend in between; the weight has
    zero slope at both ends so all fields connect C1-continuously.
    """
    if lower.z_km.shape != upper.z_km.shape or not np.array_equal(lower.z_km, upper.z_km):
        raise ValueError("profiles must share one altitude grid")
    s = np.clip((lower.z_km - z_low_km) / (z_high_km - z_low_km), 0.0, 1.0)
    w = s * s * (3.0 - 2.0 * s)
    out = {}
    for name in ("T", "U", "V"):
        a = getattr(lower, name)
        b = getattr(upper, name)
        out[name] = (1.0 - w) * a + w * b
    return VerticalProfile(lower.z_km.copy(), out["T"], out["U"], out["V"])


def _gaussian(z, center, width):
    return np.exp(-0.5 * ((z - center) / width) ** 2)


def synth_profile(spec, range_km):
    """Deterministic synthetic profile at a given range along the slice.

    Temperature follows the familiar layered structure (tropospheric lapse,
    stratopause maximum near 50 km, mesospheric decline, thermospheric rise
    above ~92 km) via shape-preserving cubic interpolation of control points.
    Zonal wind carries a Gaussian stratospheric jet whose amplitude drifts
    linearly with range, plus a fixed tropospheric jet near 11 km.
    """
    spec.validate()
    z = altitude_grid_km()
    t11 = spec.ground_T - spec.tropo_lapse * 11.0
    r = spec.thermo_rise_scale
    nodes_z = [0.0, 11.0, 17.0, 25.0, 35.0, 47.0, 53.0, 62.0, 75.0, 86.0, 92.0,
               100.0, 110.0, 126.0]
    nodes_T = [spec.ground_T, t11, t11, t11 + 8.0, t11 + 26.0, 268.0, 268.0,
               252.0, 215.0, 189.0, 188.5,
               188.5 + 8.0 * r, 188.5 + 18.0 * r, 188.5 + 34.0 * r]
    T = PchipInterpolator(nodes_z, nodes_T)(z)

    jet_amp = spec.strato_jet_amp * (1.0 + spec.range_trend * range_km / 1000.0)
    U = (jet_amp * _gaussian(z, spec.strato_jet_alt, spec.strato_jet_width)
         + spec.tropo_jet_amp * _gaussian(z, 11.0, 4.0))
    V = spec.meridional_amp * _gaussian(z, 45.0, 18.0)
    return VerticalProfile(z, T, U, V).validate()


def _gw_modes(spec):
    """Mode wavenumbers (rad/km) and unit-rms weights for the spectral bank."""
    dm = (spec.m_max - spec.m_min) / spec.n_modes
    m = spec.m_min + (np.arange(spec.n_modes) + 0.5) * dm
    w = m ** (spec.spectral_slope / 2.0)
    w /= np.sqrt(0.5 * np.sum(w ** 2))  # sum w^2 / 2 = 1 -> unit rms field
    return m, w


def gw_envelope(z_km, spec):
    """RMS amplitude envelope: exponential growth, saturation-capped."""
    amp = spec.rms_at_20km * np.exp((z_km - 20.0) / (2.0 * spec.growth_scale_H))
    return np.minimum(amp, spec.saturation_cap)


def _gw_mode_coeffs(spec, column):
    """Complex mode coefficients for one range column.

    Coefficients follow an AR(1) recursion across the 100-km column lattice
    with correlation exp(-step / horizontal_corr_km), so any two columns
    decorrelate over the configured horizontal scale. All draws come from a
    fresh generator seeded by spec.rng_seed: every call resamples the same
    underlying noise, which is what keeps per-column calls mutually consistent.
    """
    rng = np.random.default_rng(spec.rng_seed)
    # 3 independent field families: U, V, T. Real/imaginary parts interleaved
    # in one draw so the per-column noise prefix is call-order independent.
    draws = rng.standard_normal((column + 1, 3, spec.n_modes, 2))
    xi = (draws[..., 0] + 1j * draws[..., 1]) / np.sqrt(2.0)
    rho = np.exp(-RANGE_STEP_KM / spec.horizontal_corr_km)
    c = xi[0]
    for k in range(1, column + 1):
        c = rho * c + np.sqrt(1.0 - rho ** 2) * xi[k]
    return c


def gw_perturb(profile, spec, range_km):
    """Superimpose gravity-wave fine structure on a profile.

    Adds a sum-of-sinusoids field to U and V whose spectrum follows
    m**spectral_slope, with amplitude envelope from :func:`gw_envelope`; the
    temperature perturbation is the same kind of field scaled by
    0.5 * T(z) / c(z). Zero rms is the exact identity.
    """
    spec.validate()
    if spec.rms_at_20km == 0.0:
        return profile.copy()
    column = int(round(range_km / RANGE_STEP_KM))
    m, w = _gw_modes(spec)
    coeffs = _gw_mode_coeffs(spec, column)          # (3, n_modes) complex
    z = profile.z_km
    phase = np.exp(1j * np.outer(z, m))             # (1000, n_modes)
    fields = (phase @ (w * coeffs).T).real          # (1000, 3) unit-rms fields
    amp = gw_envelope(z, spec)
    dU = amp * fields[:, 0]
    dV = amp * fields[:, 1]
    dT = 0.5 * (profile.T / adiabatic_sound_speed(profile.T)) * amp * fields[:, 2]
    return VerticalProfile(z.copy(), profile.T + dT, profile.U + dU, profile.V + dV)


def slice_from_profiles(profiles, azimuth_deg, metadata=None):
    """Assemble a slice from 40 explicit profiles (the range-0 column fixes
    the shared ground denominator)."""
    if len(profiles) != N_COLUMNS:
        raise ValueError(f"expected {N_COLUMNS} profiles, got {len(profiles)}")
    c_ground = float(effective_sound_speed(profiles[0], azimuth_deg)[0])
    columns = [effective_ratio_column(p, azimuth_deg, c_ground) for p in profiles]
    c_ratio = np.stack(columns, axis=1)
    return AtmosphericSlice(c_ratio, list(profiles), float(azimuth_deg), c_ground,
                            metadata or {}).validate()


def build_slice(clim_spec, gw_spec, azimuth_deg):
    """Assemble a full range-dependent slice.

    40 synthetic profiles at 0, 100, ..., 3900 km are perturbed and converted
    to c_ratio columns sharing the range-0 ground denominator. Bit-identical
    for identical (specs, azimuth).
    """
    clim_spec.validate()
    gw_spec.validate()
    if not (0.0 <= azimuth_deg < 360.0):
        raise ValueError("azimuth must lie in [0, 360)")
    profiles = []
    for j in range(N_COLUMNS):
        base = synth_profile(clim_spec, j * RANGE_STEP_KM)
        profiles.append(gw_perturb(base, gw_spec, j * RANGE_STEP_KM))
    meta = {
        "climatology": clim_spec.to_dict(),
        "gravity_waves": gw_spec.to_dict(),
    }
    return slice_from_profiles(profiles, azimuth_deg, meta)


def classify_downwind(slc):
    """Stratospheric duct score and class.

    Score is the maximum over 30-60 km altitude of the range-mean c_ratio;
    scores >= 1 count as downwind (ducting), below as upwind.
    """
    z = altitude_grid_km()
    band = (z >= 30.0) & (z <= 60.0)
    score = float(np.max(np.mean(slc.c_ratio[band, :], axis=1)))
    return score, ("downwind" if score >= 1.0 else "upwind")


# ---------------------------------------------------------------------------
# container I/O

def save_slice(path, slc):
    """Write a slice (ratio field + raw profiles) to an ITL1 container."""
    arrays = {
        "c_ratio": slc.c_ratio,
        "T": np.stack([p.T for p in slc.profiles], axis=1),
        "U": np.stack([p.U for p in slc.profiles], axis=1),
        "V": np.stack([p.V for p in slc.profiles], axis=1),
    }
    meta = dict(slc.metadata)
    meta.update({
        "kind": "atmospheric_slice",
        "azimuth_deg": slc.azimuth_deg,
        "c_ground": slc.c_ground,
        "z0_km": 0.0, "dz_km": DZ_KM, "n_levels": N_LEVELS,
        "range_step_km": RANGE_STEP_KM, "n_columns": N_COLUMNS,
    })
    write_container(path, arrays, meta)


def load_slice(path):
    """Read a slice container; c_ratio is recomputed from the stored profiles
    so the ratio field is exactly consistent with them (the stored float32
    field is checked against the recomputation)."""
    arrays, meta = read_container(path)
    for key in ("T", "U", "V", "c_ratio"):
        if key not in arrays:
            raise ValueError(f"{path}: not a slice container (missing {key!r})")
    z = altitude_grid_km()
    profiles = [
        VerticalProfile(z.copy(),
                        arrays["T"][:, j].astype(float),
                        arrays["U"][:, j].astype(float),
                        arrays["V"][:, j].astype(float))
        for j in range(arrays["T"].shape[1])
    ]
    azimuth = float(meta["azimuth_deg"])
    c_ground = float(effective_sound_speed(profiles[0], azimuth)[0])
    c_ratio = np.stack(
        [effective_ratio_column(p, azimuth, c_ground) for p in profiles], axis=1)
    if not np.allclose(c_ratio, arrays["c_ratio"], rtol=1e-4, atol=1e-4):
        raise ValueError(f"{path}: stored c_ratio inconsistent with stored profiles")
    slc = AtmosphericSlice(c_ratio, profiles, azimuth, c_ground, dict(meta))
    return slc.validate()


def save_profile(path, profile, meta=None):
    """Write a single vertical profile (fields T, U, V) to a container."""
    m = dict(meta or {})
    m.update({"kind": "vertical_profile", "z0_km": 0.0, "dz_km": DZ_KM, "n_levels": N_LEVELS})
    write_container(path, {"T": profile.T, "U": profile.U, "V": profile.V,
                           "z_km": profile.z_km}, m)


def load_profile(path):
    """Read an externally supplied profile container (fields T, U, V).

    Accepts an optional ``z_km`` array; if its grid differs from the canonical
    one the fields are linearly resampled onto it (endpoint-held), which is the
    ingestion path for real reanalysis or climatological columns.
    """
    arrays, meta = read_container(path)
    for key in ("T", "U", "V"):
        if key not in arrays:
            raise ValueError(f"{path}: not a profile container (missing {key!r})")
    z = altitude_grid_km()
    src_z = arrays.get("z_km")
    if src_z is not None and (src_z.shape != z.shape or not np.allclose(src_z, z)):
        out = {k: np.interp(z, src_z.astype(float), arrays[k].astype(float))
               for k in ("T", "U", "V")}
    else:
        out = {k: arrays[k].astype(float) for k in ("T", "U", "V")}
        if out["T"].shape != (N_LEVELS,):
            raise ValueError(f"{path}: profile length {out['T'].shape} and no z_km grid to resample from")
    return VerticalProfile(z, out["T"], out["U"], out["V"]).validate()
