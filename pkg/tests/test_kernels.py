import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snlslab import kernels
from snlslab.integrator import CutoffSpec, SolverConfig, get_stepper, initial_state
from snlslab.noise import NoiseSpec, RngStream
from snlslab.spectral import Field, GridSpec

BACKENDS = kernels.available_backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def sample(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


@pytest.mark.parametrize("name", BACKENDS)
class TestBackend:
    def test_phase_kick_modulus_and_phase(self, name):
        impl = kernels.get_backend(name)
        u = sample(257)
        dw = np.linspace(-1, 1, 257)
        ref = u * np.exp(-1j * (0.3 * np.abs(u) ** 6 + dw))
        v = u.copy()
        impl.phase_kick(v, 0.3, 3.0, dw)
        # phases reach a few hundred radians, so rounding is ~phase * eps
        np.testing.assert_allclose(v, ref, rtol=1e-10, atol=1e-12)
        w = u.copy()
        impl.phase_kick(w, 0.0, 1.0, None)
        np.testing.assert_array_equal(w, u)

    def test_phase_kick_length_mismatch(self, name):
        with pytest.raises(ValueError):
            kernels.get_backend(name).phase_kick(sample(8), 1.0, 1.0, np.zeros(7))

    @pytest.mark.parametrize("p", [1.0, 2.0, 2.4, 4.0, 8.0, 12.0, 7.3])
    def test_abs_pow_sum(self, name, p):
        a = sample(1000, 1)
        assert kernels.get_backend(name).abs_pow_sum(a, p) == pytest.approx(
            float(np.sum(np.abs(a) ** p)), rel=1e-12)

    def test_abs_max(self, name):
        impl = kernels.get_backend(name)
        a = sample(100, 2)
        assert impl.abs_max(a) == pytest.approx(np.abs(a).max(), rel=1e-15)
        assert impl.abs_max(np.zeros(0, complex)) == 0.0


class TestSelection:
    def test_python_always_available(self):
        assert "python" in BACKENDS
        assert kernels.BACKEND in BACKENDS

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")

    def test_use_backend_restores(self):
        before = kernels.BACKEND
        with kernels.use_backend("python"):
            assert kernels.BACKEND == "python"
        assert kernels.BACKEND == before

    @compiled
    def test_default_prefers_compiled(self, monkeypatch):
        monkeypatch.delenv("SNLS_BACKEND", raising=False)
        assert kernels.get_backend("auto") is kernels.get_backend("cython")


@compiled
class TestParity:
    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 300), p=st.floats(1.0, 16.0), seed=st.integers(0, 2**32 - 1))
    def test_abs_pow_sum(self, n, p, seed):
        a = sample(n, seed)
        c = kernels.get_backend("cython").abs_pow_sum(a, p)
        py = kernels.get_backend("python").abs_pow_sum(a, p)
        assert c == pytest.approx(py, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 300), hp=st.sampled_from([1.0, 1.2, 2.0, 3.0, 4.5]),
           seed=st.integers(0, 2**32 - 1))
    def test_phase_kick(self, n, hp, seed):
        u = sample(n, seed)
        dw = np.random.default_rng(seed).standard_normal(n)
        a, b = u.copy(), u.copy()
        kernels.get_backend("cython").phase_kick(a, 0.7, hp, dw)
        kernels.get_backend("python").phase_kick(b, 0.7, hp, dw)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_trajectory_agrees(self):
        g = GridSpec(1, 64, 16.0)
        u0 = Field.from_function(g, lambda x: np.exp(-x**2 / 2))
        cfg = SolverConfig(dt=1e-3, power=7, radius=50.0)
        spec = NoiseSpec(amplitude=0.5, sigma=2.0)
        finals = []
        for name in ("cython", "python"):
            with kernels.use_backend(name):
                st_ = initial_state(u0)
                stepper = get_stepper(g, cfg, spec, CutoffSpec())
                rng = RngStream(0, (1,))
                for _ in range(200):
                    stepper.step(st_, rng=rng)
                finals.append((st_.u.values.copy(), st_.x1))
        np.testing.assert_allclose(finals[0][0], finals[1][0], rtol=0, atol=1e-10)
        assert finals[0][1] == pytest.approx(finals[1][1], rel=1e-10)
