"""Forward-process algebra: noising, v round trips, min-SNR weights."""

import numpy as np
import pytest

from sixview.param import add_noise, from_v, min_snr_weight, to_v
from sixview.schedule import Schedule, make_schedule


@pytest.fixture(scope="module")
def sched():
    return make_schedule("linear", 1000)


class _FixedAbar(Schedule):
    """Schedule stub with a prescribed alpha_bar at every t (algebra tests)."""

    def __init__(self, abar_value, T=10):
        super().__init__("linear", T)
        self._forced = float(abar_value)

    def abar(self, t):
        return 1.0 if t == 0 else self._forced

    def snr(self, t):
        return self._forced / (1.0 - self._forced)


class TestAddNoise:
    def test_no_noise_limit(self, sched):
        rng = np.random.default_rng(0)
        x0 = rng.random((4, 4)).astype(np.float32)
        eps = rng.standard_normal((4, 4)).astype(np.float32)
        st = add_noise(x0, eps, 1, sched)  # alpha_bar(1) = 0.9999
        np.testing.assert_allclose(st.x_t, x0, atol=0.05)
        assert st.alpha_t**2 + st.sigma_t**2 == pytest.approx(1.0, abs=1e-6)

    def test_pure_noise_limit(self, sched):
        rng = np.random.default_rng(1)
        x0 = rng.random((4, 4)).astype(np.float32)
        eps = rng.standard_normal((4, 4)).astype(np.float32)
        st = add_noise(x0, eps, 1000, sched)
        np.testing.assert_allclose(st.x_t, eps, atol=0.05)

    def test_half_alpha_bar(self):
        s = _FixedAbar(0.5)
        x0 = np.array([1.0, 0.0], np.float32)
        eps = np.array([0.0, 2.0], np.float32)
        st = add_noise(x0, eps, 5, s)
        np.testing.assert_allclose(st.x_t, (x0 + eps) / np.sqrt(2), rtol=1e-6)

    def test_shape_mismatch_rejected(self, sched):
        with pytest.raises(ValueError):
            add_noise(np.zeros((2, 2)), np.zeros((2, 3)), 10, sched)


class TestVAlgebra:
    def test_v_equals_eps_at_full_signal(self):
        s = _FixedAbar(1.0)
        rng = np.random.default_rng(2)
        x0, eps = rng.random((3, 3)), rng.standard_normal((3, 3))
        np.testing.assert_allclose(to_v(x0, eps, 1, s), eps.astype(np.float32), atol=1e-6)

    def test_v_equals_minus_x0_at_zero_signal(self):
        s = _FixedAbar(0.0)
        rng = np.random.default_rng(3)
        x0, eps = rng.random((3, 3)), rng.standard_normal((3, 3))
        np.testing.assert_allclose(to_v(x0, eps, 1, s), -x0.astype(np.float32), atol=1e-6)

    def test_round_trip_thousand_random(self, sched):
        # Algebraic oracle: from_v(add_noise(...), to_v(...)) must recover inputs.
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(1000):
            t = int(rng.integers(1, 1001))
            x0 = rng.random((5, 5)).astype(np.float32) * 2 - 1
            eps = rng.standard_normal((5, 5)).astype(np.float32)
            st = add_noise(x0, eps, t, sched)
            v = to_v(x0, eps, t, sched)
            x0r, epsr = from_v(st.x_t, v, t, sched)
            worst = max(worst, float(np.abs(x0r - x0).max()), float(np.abs(epsr - eps).max()))
        assert worst < 1e-5

    def test_renoising_reproduces_xt(self, sched):
        rng = np.random.default_rng(5)
        for t in (1, 77, 500, 1000):
            x0 = rng.random((4, 4)).astype(np.float32)
            eps = rng.standard_normal((4, 4)).astype(np.float32)
            st = add_noise(x0, eps, t, sched)
            x0r, epsr = from_v(st.x_t, to_v(x0, eps, t, sched), t, sched)
            st2 = add_noise(x0r, epsr, t, sched)
            assert np.abs(st2.x_t - st.x_t).max() < 1e-5


class TestMinSnrWeight:
    def test_clamp_boundary_eps(self, sched):
        # Find t where SNR crosses gamma; at SNR == gamma the eps weight is 1.
        t = min(range(1, 1001), key=lambda tt: abs(sched.snr(tt) - 5.0))
        g = sched.snr(t)
        assert min_snr_weight(t, sched, g, "eps") == pytest.approx(1.0, abs=1e-12)

    def test_v_weight_at_snr_one(self):
        s = _FixedAbar(0.5)  # SNR = 1
        assert min_snr_weight(3, s, 5.0, "v") == pytest.approx(0.5, rel=1e-9)

    def test_v_weight_high_snr(self):
        s = _FixedAbar(100.0 / 101.0)  # SNR = 100
        assert min_snr_weight(3, s, 5.0, "v") == pytest.approx(5.0 / 101.0, rel=1e-6)

    def test_ranges_and_monotonicity(self, sched):
        gamma = 5.0
        prev_eps, prev_v = None, None
        clamped = False
        for t in range(1, 1001):
            we = min_snr_weight(t, sched, gamma, "eps")
            wv = min_snr_weight(t, sched, gamma, "v")
            assert 0 < we <= 1.0
            assert 0 < wv <= gamma / (gamma + 1.0) + 1e-12
            if sched.snr(t) <= gamma:
                clamped = True
            if prev_eps is not None and sched.snr(t) > gamma:
                # Below the clamp (high SNR side), weights fall as SNR rises.
                assert we >= prev_eps - 1e-12
            prev_eps, prev_v = we, wv
        assert clamped

    def test_gamma_none_disables_weighting(self, sched):
        assert min_snr_weight(500, sched, None, "v") == 1.0
        assert min_snr_weight(500, sched, None, "eps") == 1.0

    def test_bad_gamma_rejected(self, sched):
        with pytest.raises(ValueError):
            min_snr_weight(1, sched, -1.0, "v")
