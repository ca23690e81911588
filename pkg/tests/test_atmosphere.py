import numpy as np
import pytest

from conftest import homogeneous_slice, make_profile
from infratl.atmosphere import (ClimatologySpec, GravityWaveSpec, T0_K,
                                VerticalProfile, adiabatic_sound_speed,
                                altitude_grid_km, blend_upper_atmosphere,
                                build_slice, classify_downwind,
                                effective_ratio_column, effective_sound_speed,
                                gw_envelope, gw_perturb, load_profile,
                                load_slice, project_wind, save_profile,
                                save_slice, slice_from_profiles, synth_profile)


class TestAdiabaticSoundSpeed:
    def test_reference_temperature(self):
        assert adiabatic_sound_speed(293.13) == pytest.approx(344.0)

    def test_quarter_temperature(self):
        assert adiabatic_sound_speed(293.13 / 4) == pytest.approx(172.0)

    def test_four_times_reference(self):
        assert adiabatic_sound_speed(4 * 293.13) == pytest.approx(688.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            adiabatic_sound_speed(0.0)
        with pytest.raises(ValueError):
            adiabatic_sound_speed(np.array([250.0, -3.0]))


class TestProjectWind:
    def test_eastward_picks_zonal(self):
        assert project_wind(10.0, 0.0, 90.0) == pytest.approx(10.0)

    def test_northward_orthogonal_to_zonal(self):
        assert project_wind(10.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_three_four_five(self):
        assert project_wind(3.0, 4.0, 36.87) == pytest.approx(5.0, abs=1e-4)


class TestEffectiveRatio:
    def test_isothermal_windless_is_unity(self):
        ratio = effective_ratio_column(make_profile(), 45.0)
        assert np.allclose(ratio, 1.0, atol=1e-14)

    def test_wind_bump_gives_ratio_1p1(self):
        U = np.zeros(1000)
        U[500] = 34.4
        ratio = effective_ratio_column(make_profile(U=U), 90.0)
        assert ratio[500] == pytest.approx(1.1)
        assert ratio[0] == pytest.approx(1.0)

    def test_downwind_spec_ducts_in_stratosphere(self):
        spec = ClimatologySpec(strato_jet_amp=50.0)
        prof = synth_profile(spec, 0.0)
        # independent evaluation of the ratio definition on this profile
        c_eff = 344.0 * np.sqrt(prof.T / 293.13) + prof.U * np.sin(np.deg2rad(90.0)) \
            + prof.V * np.cos(np.deg2rad(90.0))
        expected = c_eff / c_eff[0]
        got = effective_ratio_column(prof, 90.0)
        assert np.allclose(got, expected, rtol=1e-12)
        z = altitude_grid_km()
        band = (z >= 30) & (z <= 60)
        assert got[band].max() > 1.0

    def test_rejects_bad_ground(self):
        with pytest.raises(ValueError):
            effective_ratio_column(make_profile(), 0.0, c_ground=-1.0)


class TestBlend:
    def test_identical_inputs_identity(self):
        p = make_profile(T=np.linspace(220, 280, 1000))
        out = blend_upper_atmosphere(p, p)
        assert np.array_equal(out.T, p.T)

    def test_constant_midpoint(self):
        lo = make_profile(T=np.full(1000, 250.0))
        hi = make_profile(T=np.full(1000, 270.0))
        out = blend_upper_atmosphere(lo, hi)
        z = altitude_grid_km()
        i80 = int(np.argmin(np.abs(z - 80.0)))
        assert out.T[i80] == pytest.approx(260.0, abs=0.2)
        assert np.all(np.diff(out.T[(z >= 75) & (z <= 85)]) >= 0)

    def test_exact_outside_blend_zone(self):
        rng = np.random.default_rng(0)
        lo = make_profile(T=250 + rng.random(1000))
        hi = make_profile(T=270 + rng.random(1000))
        out = blend_upper_atmosphere(lo, hi)
        z = altitude_grid_km()
        assert np.array_equal(out.T[z < 75.0], lo.T[z < 75.0])
        assert np.array_equal(out.T[z > 85.0], hi.T[z > 85.0])

    def test_c1_continuity(self):
        lo = make_profile(T=np.full(1000, 250.0))
        hi = make_profile(T=np.full(1000, 270.0))
        out = blend_upper_atmosphere(lo, hi)
        dT = np.diff(out.T)
        # slope changes smoothly: second difference stays small through the joints
        assert np.max(np.abs(np.diff(dT))) < 0.05

    def test_grid_mismatch_raises(self):
        p = make_profile()
        q = make_profile()
        q.z_km = q.z_km + 0.01
        with pytest.raises(ValueError):
            blend_upper_atmosphere(p, q)


class TestSynthProfile:
    def test_jet_amplitude_at_center(self):
        spec = ClimatologySpec(strato_jet_amp=50.0, strato_jet_alt=60.0)
        prof = synth_profile(spec, 0.0)
        z = altitude_grid_km()
        i = int(np.argmin(np.abs(z - 60.0)))
        assert prof.U[i] == pytest.approx(50.0, abs=0.5)

    def test_deterministic(self):
        spec = ClimatologySpec(rng_seed=42)
        a = synth_profile(spec, 300.0)
        b = synth_profile(spec, 300.0)
        assert np.array_equal(a.T, b.T)
        assert np.array_equal(a.U, b.U)
        assert np.array_equal(a.V, b.V)

    def test_ground_temperature_exact(self):
        prof = synth_profile(ClimatologySpec(ground_T=288.15), 0.0)
        assert prof.T[0] == 288.15

    def test_range_trend_scales_jet(self):
        spec = ClimatologySpec(strato_jet_amp=50.0, range_trend=0.1)
        p0 = synth_profile(spec, 0.0)
        p39 = synth_profile(spec, 3900.0)
        z = altitude_grid_km()
        i = int(np.argmin(np.abs(z - spec.strato_jet_alt)))
        assert p39.U[i] == pytest.approx(p0.U[i] * 1.39, rel=1e-3)

    def test_jet_alt_bounds_enforced(self):
        with pytest.raises(ValueError):
            synth_profile(ClimatologySpec(strato_jet_alt=80.0), 0.0)


class TestGravityWaves:
    def test_zero_rms_is_identity(self):
        prof = synth_profile(ClimatologySpec(), 0.0)
        spec = GravityWaveSpec(rms_at_20km=0.0)
        out = gw_perturb(prof, spec, 0.0)
        assert np.array_equal(out.U, prof.U)
        assert np.array_equal(out.T, prof.T)

    def test_deterministic(self):
        prof = synth_profile(ClimatologySpec(), 100.0)
        spec = GravityWaveSpec(rng_seed=7)
        a = gw_perturb(prof, spec, 100.0)
        b = gw_perturb(prof, spec, 100.0)
        assert np.array_equal(a.U, b.U)

    def test_spectral_slope(self):
        # ensemble periodogram of the envelope-normalized perturbation;
        # fit band [3*m_min, m_max/3] per the stated contract
        prof = make_profile()
        z = altitude_grid_km()
        spec0 = GravityWaveSpec(rms_at_20km=1.0, saturation_cap=1e9)
        amp = gw_envelope(z, spec0)
        psd = 0.0
        for seed in range(100):
            spec = GravityWaveSpec(rms_at_20km=1.0, saturation_cap=1e9, rng_seed=seed)
            du = gw_perturb(prof, spec, 0.0).U - prof.U
            psd = psd + np.abs(np.fft.rfft(du / amp)) ** 2
        m = 2 * np.pi * np.fft.rfftfreq(z.size, d=z[1] - z[0])
        band = (m >= 3 * spec0.m_min) & (m <= spec0.m_max / 3)
        slope, _ = np.polyfit(np.log(m[band]), np.log(psd[band]), 1)
        assert slope == pytest.approx(spec0.spectral_slope, abs=0.5)

    def test_rms_grows_with_altitude_below_cap(self):
        prof = make_profile()
        z = altitude_grid_km()
        i20 = int(np.argmin(np.abs(z - 20.0)))
        i50 = int(np.argmin(np.abs(z - 50.0)))
        r20 = r50 = 0.0
        for seed in range(100):
            spec = GravityWaveSpec(rms_at_20km=1.0, saturation_cap=1e9, rng_seed=seed)
            du = gw_perturb(prof, spec, 0.0).U - prof.U
            r20 += du[i20] ** 2
            r50 += du[i50] ** 2
        assert r50 > r20

    def test_envelope_saturates(self):
        z = altitude_grid_km()
        spec = GravityWaveSpec(rms_at_20km=2.0, saturation_cap=40.0)
        amp = gw_envelope(z, spec)
        assert amp.max() == pytest.approx(40.0)
        assert amp[int(np.argmin(np.abs(z - 20.0)))] == pytest.approx(2.0, abs=0.01)

    def test_range_decorrelation(self):
        # ensemble-average correlation: adjacent columns stay correlated near
        # exp(-100/500), columns 3900 km apart are decorrelated
        prof = make_profile()
        c01, c039 = [], []
        for seed in range(30):
            spec = GravityWaveSpec(rng_seed=seed, horizontal_corr_km=500.0)
            d0 = gw_perturb(prof, spec, 0.0).U - prof.U
            d1 = gw_perturb(prof, spec, 100.0).U - prof.U
            d39 = gw_perturb(prof, spec, 3900.0).U - prof.U
            c01.append(np.corrcoef(d0, d1)[0, 1])
            c039.append(np.corrcoef(d0, d39)[0, 1])
        assert np.mean(c01) > 0.55
        assert abs(np.mean(c039)) < 0.25


class TestBuildSlice:
    def test_shape(self):
        slc = build_slice(ClimatologySpec(), GravityWaveSpec(), 90.0)
        assert slc.c_ratio.shape == (1000, 40)

    def test_isothermal_windless_all_ones(self):
        slc = homogeneous_slice()
        assert np.allclose(slc.c_ratio, 1.0, atol=1e-14)

    def test_deterministic(self):
        a = build_slice(ClimatologySpec(rng_seed=5), GravityWaveSpec(rng_seed=6), 45.0)
        b = build_slice(ClimatologySpec(rng_seed=5), GravityWaveSpec(rng_seed=6), 45.0)
        assert np.array_equal(a.c_ratio, b.c_ratio)

    def test_first_column_ground_is_one(self):
        slc = build_slice(ClimatologySpec(rng_seed=1), GravityWaveSpec(rng_seed=2), 123.0)
        assert slc.c_ratio[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_columns_recomputable(self):
        slc = build_slice(ClimatologySpec(rng_seed=9), GravityWaveSpec(rng_seed=9), 10.0)
        for j in (0, 17, 39):
            col = effective_ratio_column(slc.profiles[j], slc.azimuth_deg, slc.c_ground)
            assert np.array_equal(col, slc.c_ratio[:, j])


class TestClassify:
    def test_all_ones_is_downwind_boundary(self):
        score, cls = classify_downwind(homogeneous_slice())
        assert score == pytest.approx(1.0)
        assert cls == "downwind"

    def test_single_band_entry(self):
        slc = homogeneous_slice()
        z = altitude_grid_km()
        i45 = int(np.argmin(np.abs(z - 45.0)))
        c = slc.c_ratio.copy()
        c[i45, :] = 1.1
        slc2 = slc.__class__(c, slc.profiles, slc.azimuth_deg, slc.c_ground, {})
        score, _ = classify_downwind(slc2)
        assert score == pytest.approx(1.1)

    def test_upwind_spec(self):
        slc = build_slice(ClimatologySpec(strato_jet_amp=-50.0),
                          GravityWaveSpec(rms_at_20km=0.0), 90.0)
        score, cls = classify_downwind(slc)
        assert cls == "upwind"
        assert score < 1.0


class TestSliceIO:
    def test_round_trip(self, tmp_path):
        slc = build_slice(ClimatologySpec(rng_seed=3), GravityWaveSpec(rng_seed=4), 200.0)
        path = tmp_path / "slice.itl1"
        save_slice(path, slc)
        loaded = load_slice(path)
        assert loaded.c_ratio.shape == (1000, 40)
        assert np.allclose(loaded.c_ratio, slc.c_ratio, atol=2e-4)
        assert loaded.azimuth_deg == slc.azimuth_deg
        # loaded ratio field is exactly consistent with loaded profiles
        col = effective_ratio_column(loaded.profiles[5], loaded.azimuth_deg,
                                     loaded.c_ground)
        assert np.array_equal(col, loaded.c_ratio[:, 5])

    def test_profile_import_native_grid(self, tmp_path):
        prof = synth_profile(ClimatologySpec(), 0.0)
        path = tmp_path / "prof.itl1"
        save_profile(path, prof)
        loaded = load_profile(path)
        assert np.allclose(loaded.T, prof.T, atol=1e-3)

    def test_profile_import_resamples_foreign_grid(self, tmp_path):
        from infratl.container import write_container
        z_src = np.linspace(0.0, 150.0, 200)
        write_container(tmp_path / "ext.itl1",
                        {"T": 250 + z_src, "U": np.zeros(200), "V": np.zeros(200),
                         "z_km": z_src},
                        {"kind": "vertical_profile"})
        prof = load_profile(tmp_path / "ext.itl1")
        z = altitude_grid_km()
        assert prof.T.shape == (1000,)
        assert np.allclose(prof.T, 250 + z, atol=0.05)

    def test_profile_missing_fields(self, tmp_path):
        from infratl.container import write_container
        write_container(tmp_path / "bad.itl1", {"T": np.full(1000, 250.0)})
        with pytest.raises(ValueError, match="missing"):
            load_profile(tmp_path / "bad.itl1")


class TestInvariants:
    def test_sanity_bounds_enforced(self):
        with pytest.raises(ValueError, match="300"):
            make_profile(U=np.full(1000, 320.0)).validate()

    def test_slice_positive(self):
        slc = build_slice(ClimatologySpec(rng_seed=11), GravityWaveSpec(rng_seed=11), 0.0)
        assert np.all(slc.c_ratio > 0)
