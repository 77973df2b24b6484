import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtaccomp.sampler import (
    InpaintSpec,
    gaussian_denoiser,
    karras_schedule,
    sample_inpaint,
    _midpoint_descend,
)
from rtaccomp.window import MaskBoundary


def make_spec(frames=16, bins=8, boundary=8, resamples=2, fill=0.3):
    fixed = np.full((frames, bins), fill)
    return InpaintSpec(MaskBoundary(boundary, frames), fixed, resamples)


class TestSchedule:
    def test_deployed_schedule_values(self):
        # frozen from sigma_i = (hi + i/(N-1) * (lo - hi))^rho with
        # N=5, sigma in [1e-4, 50], rho=9
        sched = karras_schedule(5)
        np.testing.assert_allclose(
            sched.sigmas,
            [50.0, 7.353749251, 0.641786622, 0.0223894246, 1e-4],
            rtol=1e-9,
        )

    def test_endpoints_exact(self):
        sched = karras_schedule(7, sigma_min=0.002, sigma_max=80.0, rho=7.0)
        assert sched.sigmas[0] == 80.0
        assert sched.sigmas[-1] == 0.002

    def test_strictly_decreasing(self):
        for steps in (2, 3, 5, 20):
            sched = karras_schedule(steps)
            assert (np.diff(sched.sigmas) < 0).all()

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            karras_schedule(1)
        with pytest.raises(ValueError):
            karras_schedule(5, sigma_min=2.0, sigma_max=1.0)
        with pytest.raises(ValueError):
            karras_schedule(5, rho=0.0)

    @given(
        steps=st.integers(2, 30),
        rho=st.floats(0.5, 12.0),
        lo=st.floats(1e-5, 0.1),
        hi=st.floats(1.0, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_schedule_property(self, steps, rho, lo, hi):
        sched = karras_schedule(steps, lo, hi, rho)
        assert len(sched.sigmas) == steps
        assert sched.sigmas[0] == hi and sched.sigmas[-1] == lo
        assert (np.diff(sched.sigmas) < 0).all()


class TestGaussianDenoiser:
    def test_posterior_mean_limits(self):
        mu = np.full((4, 4), 0.7)
        g = gaussian_denoiser(mu, sigma_d=1.0)
        z = np.random.default_rng(0).standard_normal((4, 4))
        # at tiny noise the estimate is the observation, at huge noise the prior mean
        np.testing.assert_allclose(g(z, 1e-9), z, atol=1e-6)
        np.testing.assert_allclose(g(z, 1e9), mu, atol=1e-6)

    def test_shrink_coefficient(self):
        g = gaussian_denoiser(np.zeros((2, 2)), sigma_d=2.0)
        z = np.ones((2, 2))
        # sigma_d^2 / (sigma_d^2 + sigma^2) = 4/8 at sigma = 2
        np.testing.assert_allclose(g(z, 2.0), 0.5 * z)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError):
            gaussian_denoiser(np.zeros((2, 2)), sigma_d=0.0)


class TestOdeIntegration:
    def test_descent_matches_closed_form(self):
        # for a Gaussian denoiser the flow is linear: z(s_n) - mu scales by
        # sqrt((sigma_d^2 + s_n^2) / (sigma_d^2 + s_c^2))
        mu = np.full((8, 8), 0.7)
        g = gaussian_denoiser(mu, sigma_d=1.0)
        rng = np.random.default_rng(3)
        z0 = mu + 50.0 * rng.standard_normal((8, 8))
        out = _midpoint_descend(g, z0, 50.0, 1e-4, cond=None, substeps=256)
        lam = np.sqrt((1.0 + 1e-8) / (1.0 + 2500.0))
        np.testing.assert_allclose(out, mu + lam * (z0 - mu), atol=1e-3)

    def test_more_substeps_reduce_error(self):
        mu = np.zeros((4, 4))
        g = gaussian_denoiser(mu, sigma_d=1.0)
        z0 = np.full((4, 4), 10.0)
        lam = np.sqrt((1.0 + 0.01) / (1.0 + 100.0))
        exact = lam * z0
        errs = []
        for substeps in (2, 8, 32):
            out = _midpoint_descend(g, z0, 10.0, 0.1, cond=None, substeps=substeps)
            errs.append(np.abs(out - exact).max())
        assert errs[0] > errs[1] > errs[2]

    def test_denoiser_shape_mismatch_detected(self):
        bad = lambda z, sigma, cond=None: np.zeros((2, 2))
        sched = karras_schedule(3)
        with pytest.raises(ValueError):
            sample_inpaint(bad, sched, make_spec(), seed=0)


class TestInpaint:
    def test_fixed_region_bit_exact(self):
        spec = make_spec(boundary=8, fill=0.3)
        sched = karras_schedule(5)
        g = gaussian_denoiser(np.zeros((16, 8)), sigma_d=1.0)
        out = sample_inpaint(g, sched, spec, seed=7)
        assert (out[:8] == 0.3).all()
        assert not (out[8:] == 0.3).any()

    def test_deterministic_per_seed(self):
        spec = make_spec()
        sched = karras_schedule(5)
        g = gaussian_denoiser(np.zeros((16, 8)), sigma_d=1.0)
        a = sample_inpaint(g, sched, spec, seed=11)
        b = sample_inpaint(g, sched, spec, seed=11)
        c = sample_inpaint(g, sched, spec, seed=12)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_batch_shape_and_fixed_region(self):
        spec = make_spec(boundary=4, fill=-0.5)
        sched = karras_schedule(5)
        g = gaussian_denoiser(np.zeros((16, 8)), sigma_d=1.0)
        out = sample_inpaint(g, sched, spec, seed=0, batch=6)
        assert out.shape == (6, 16, 8)
        assert (out[:, :4] == -0.5).all()
        # generated regions differ across the batch
        assert not np.array_equal(out[0, 4:], out[1, 4:])

    def test_fully_generated_when_boundary_zero(self):
        spec = make_spec(boundary=0)
        sched = karras_schedule(5)
        mu = np.full((16, 8), 0.7)
        out = sample_inpaint(gaussian_denoiser(mu, 1.0), sched, spec, seed=1)
        assert out.shape == (16, 8)
        assert np.isfinite(out).all()

    def test_on_level_called_per_downstep(self):
        seen = []
        spec = make_spec()
        sched = karras_schedule(5)
        g = gaussian_denoiser(np.zeros((16, 8)), sigma_d=1.0)
        sample_inpaint(g, sched, spec, seed=0, on_level=lambda n, z: seen.append(n))
        assert seen == [0, 1, 2, 3]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            InpaintSpec(MaskBoundary(4, 16), np.zeros(16))
        with pytest.raises(ValueError):
            InpaintSpec(MaskBoundary(4, 16), np.zeros((8, 8)))
        with pytest.raises(ValueError):
            InpaintSpec(MaskBoundary(4, 16), np.zeros((16, 8)), resamples=0)

    def test_generated_statistics_match_target_law(self):
        # Monte Carlo over seeds: the generated region of a Gaussian target
        # should carry the target mean and variance (smoke-sized version of
        # the acceptance run)
        frames, bins, boundary = 8, 4, 4
        mu_val, sigma_d = 0.7, 1.0
        n = 2000
        spec = InpaintSpec(MaskBoundary(boundary, frames), np.zeros((frames, bins)), 2)
        sched = karras_schedule(5)
        g = gaussian_denoiser(np.full((frames, bins), mu_val), sigma_d)
        out = sample_inpaint(g, sched, spec, seed=99, batch=n)
        gen = out[:, boundary:, :]
        m = gen.size
        se_mean = sigma_d / np.sqrt(m)
        assert abs(gen.mean() - mu_val) < 4 * se_mean
        se_var = sigma_d**2 * np.sqrt(2.0 / m)
        assert abs(gen.var() - sigma_d**2) < 4 * se_var + 5e-3
