"""Lattice simulator: coercive-field closed forms against a brute-force
single-site sweep, pattern geometry, relaxation fixed points, loop-area
conventions, energy dissipation and the a-domain pinning contract."""

import numpy as np
import pytest

from mechgp import ferrosim as fs
from mechgp.errors import (InsufficientTrace, InvalidCoefficients,
                           OutOfRange)


class TestCoerciveField:
    def test_closed_form_unit_coefficients(self):
        assert fs.coercive_field(-1.0, 1.0) == pytest.approx(2.0 / (3.0 * np.sqrt(3.0)))

    def test_closed_form_scaled(self):
        assert fs.coercive_field(-4.0, 1.0) == pytest.approx((8.0 / 3.0) * np.sqrt(4.0 / 3.0))

    def test_linear_scaling_in_coefficients(self):
        base = fs.coercive_field(-1.0, 1.0)
        for lam in (0.5, 2.0, 7.0):
            assert fs.coercive_field(-lam, lam) == pytest.approx(lam * base, rel=1e-12)

    def test_rejects_non_double_well(self):
        with pytest.raises(InvalidCoefficients):
            fs.coercive_field(1.0, 1.0)
        with pytest.raises(InvalidCoefficients):
            fs.coercive_field(-1.0, -1.0)

    def test_single_site_switching_matches_analytic(self):
        # brute-force oracle: one site, no coupling/defects/depolarization,
        # quasi-static drive (high mobility, slow sweep) so the dynamic lag
        # vanishes and the sign flip happens at the spinodal field
        cfg = fs.LatticeConfig(n=1, k_grad=0.0, alpha_dep=0.0, imprint_ec=0.0,
                               gamma=100.0)
        pattern = fs.c_only_pattern(0, cfg)
        wf = fs.FieldWaveform(amplitude_ec=2.0, periods=2, samples_per_period=4000)
        trace = fs.simulate(pattern, wf, cfg, dt=0.02, substeps=10)
        spp = wf.samples_per_period
        e, p = trace.field[-(spp + 1):], trace.polarization[-(spp + 1):]
        rising = np.nonzero((p[:-1] < 0) & (p[1:] > 0) & (np.diff(e) > 0))[0]
        assert rising.size
        e_switch = e[rising[0] + 1]
        step = 2.0 * cfg.e_c * 2.0 * np.pi / spp
        assert abs(e_switch - cfg.e_c) <= 2.0 * step


class TestPatterns:
    def test_p1_all_a_domains(self):
        pat = fs.make_pattern(0, 1)
        assert pat.a_mask.all()

    def test_k0_wall_on_diagonal_balance(self):
        pat = fs.make_pattern(0, 8)
        up = (pat.c_sign > 0).sum()
        down = (pat.c_sign < 0).sum()
        # one diagonal (15 sites) tips the balance
        assert abs(up - down) == 15

    def test_k14_uniform_down(self):
        pat = fs.make_pattern(14, 8)
        assert np.all(pat.c_sign == -1.0)

    def test_mirror_symmetry_of_wall_family(self):
        # K and -K are exact mirrors under flip + transpose
        for k in (1, 5, 14):
            a = fs.make_pattern(k, 8).c_sign
            b = fs.make_pattern(-k, 8).c_sign
            np.testing.assert_array_equal(b, -a.T)

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            fs.make_pattern(15, 4)
        with pytest.raises(OutOfRange):
            fs.make_pattern(0, 0)
        with pytest.raises(OutOfRange):
            fs.make_pattern(0, 9)

    def test_defect_field_magnitudes(self):
        cfg = fs.LatticeConfig()
        pat = fs.make_pattern(3, 2, cfg)
        a = pat.a_mask
        np.testing.assert_allclose(pat.defect[a, 0], 30.0 * cfg.e_c)
        np.testing.assert_allclose(np.abs(pat.defect[~a, 1]), 0.1 * cfg.e_c)
        # imprint is anti-parallel to the initial polarization
        assert np.all(pat.defect[~a, 1] * pat.p_init[~a, 1] < 0)

    def test_channels_reconstructible(self):
        pat1 = fs.make_pattern(-3, 5)
        pat2 = fs.make_pattern(-3, 5)
        np.testing.assert_array_equal(pat1.channels[0], pat2.channels[0])
        np.testing.assert_array_equal(pat1.channels[1], pat2.channels[1])


class TestSimulate:
    def test_uniform_relaxation_fixed_point(self):
        # dp/dt = 0 at p* = sqrt((|a1| - alpha_dep)/a11) for a uniform lattice
        cfg = fs.LatticeConfig(imprint_ec=0.0)
        pat = fs.uniform_c_pattern(8, cfg)
        pat.a_mask[:] = False
        pat.p_init[:, :, 1] = 1.0
        pat.defect[:] = 0.0
        py, pz = fs.relax(pat, cfg, steps=3000)
        expected = np.sqrt((abs(cfg.a1) - cfg.alpha_dep) / cfg.a11)
        assert abs(pz.mean() - expected) <= 0.01 * expected

    def test_all_a_pattern_has_no_polarization(self):
        cfg = fs.LatticeConfig()
        trace = fs.simulate(fs.make_pattern(0, 1, cfg), fs.FieldWaveform(), cfg)
        assert np.abs(trace.polarization).max() < 0.05 * cfg.p_well

    def test_a_sites_stay_pinned_in_mixed_pattern(self):
        cfg = fs.LatticeConfig()
        pat = fs.make_pattern(2, 3, cfg)
        py, pz = fs.relax(pat, cfg, steps=500)
        assert np.abs(pz[pat.a_mask]).max() <= 0.05 * cfg.p_well

    def test_energy_dissipation_under_constant_field(self):
        cfg = fs.LatticeConfig(n=5)
        pat = fs.make_pattern(1, 3, cfg)
        _, _, energies = fs.relax(pat, cfg, steps=2000, record_energy=True)
        assert np.all(np.diff(energies) <= 1e-10)


class TestLoopArea:
    def test_constant_polarization_zero_area(self):
        e = np.sin(np.linspace(0, 4 * np.pi, 401))
        trace = fs.LoopTrace(field=e, polarization=np.full(401, 0.3),
                             samples_per_period=200, periods=2)
        assert fs.loop_area(trace) == pytest.approx(0.0, abs=1e-15)

    def test_rectangular_loop_area(self):
        # E in [-2, 2] E_c, p in [-1, 1]: area 8 E_c
        ec = fs.LatticeConfig().e_c
        spp = 400
        t = np.arange(2 * spp + 1)
        e = 2.0 * ec * np.sin(2 * np.pi * t / spp)
        p = np.where(np.gradient(e) >= 0, -1.0, 1.0)
        p[e > 1.9999 * ec] = 1.0
        p[e < -1.9999 * ec] = -1.0
        trace = fs.LoopTrace(field=e, polarization=p,
                             samples_per_period=spp, periods=2)
        assert fs.loop_area(trace) == pytest.approx(8.0 * ec, rel=0.02)

    def test_time_reversal_invariance(self):
        # reversing the measured cycle flips the contour orientation; the
        # absolute-value convention makes the area invariant
        cfg = fs.LatticeConfig()
        trace = fs.simulate(fs.make_pattern(0, 4, cfg), fs.FieldWaveform(), cfg)
        spp = trace.samples_per_period
        seg_e = trace.field[-(spp + 1):]
        seg_p = trace.polarization[-(spp + 1):]

        def padded(e, p):
            return fs.LoopTrace(
                field=np.concatenate([e[:-1], e]),
                polarization=np.concatenate([p[:-1], p]),
                samples_per_period=spp, periods=2)

        fwd = fs.loop_area(padded(seg_e, seg_p))
        rev = fs.loop_area(padded(seg_e[::-1].copy(), seg_p[::-1].copy()))
        assert rev == pytest.approx(fwd, rel=1e-12)
        assert fwd == pytest.approx(fs.loop_area(trace), rel=1e-12)

    def test_single_period_rejected(self):
        trace = fs.LoopTrace(field=np.zeros(201), polarization=np.zeros(201),
                             samples_per_period=200, periods=1)
        with pytest.raises(InsufficientTrace):
            fs.loop_area(trace)


class TestSweepsSmall:
    def test_mirror_area_identity_no_imprint(self):
        # without imprint, mirrored walls give equal areas within 1%
        cfg = fs.LatticeConfig(n=9, imprint_ec=0.0)
        wf = fs.FieldWaveform(samples_per_period=100)
        areas = {}
        for k in (-4, 4):
            areas[k] = fs.loop_area(fs.simulate(fs.c_only_pattern(k, cfg), wf, cfg))
        assert areas[4] == pytest.approx(areas[-4], rel=0.01)

    def test_dataset_cardinality_and_determinism(self):
        cfg = fs.LatticeConfig(n=9)
        wf = fs.FieldWaveform(samples_per_period=60)
        ds = fs.build_ferrosim_dataset(range(-2, 3), range(1, 4), cfg, wf)
        assert ds.n_samples == 5 * 3
        ds2 = fs.build_ferrosim_dataset(range(-2, 3), range(1, 4), cfg, wf)
        assert ds.content_hash() == ds2.content_hash()
        p1 = ds.extra["P"] == 1
        np.testing.assert_allclose(ds.targets[p1], 0.0, atol=1e-12)
