import numpy as np
import pytest

from infratl.atmosphere import (T0_K, VerticalProfile, altitude_grid_km,
                                slice_from_profiles)


def make_profile(T=None, U=None, V=None):
    z = altitude_grid_km()
    n = z.size
    return VerticalProfile(
        z,
        np.full(n, T0_K) if T is None else np.asarray(T, dtype=float),
        np.zeros(n) if U is None else np.asarray(U, dtype=float),
        np.zeros(n) if V is None else np.asarray(V, dtype=float),
    )


def homogeneous_slice(azimuth=0.0):
    """Isothermal, windless slice: c_ratio is exactly 1 everywhere."""
    profiles = [make_profile() for _ in range(40)]
    return slice_from_profiles(profiles, azimuth)


@pytest.fixture(scope="session")
def iso_slice():
    return homogeneous_slice()


def rel_grad_error(analytic, numeric):
    """Max abs deviation normalized by gradient scale."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f wrt array x (float64)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g
