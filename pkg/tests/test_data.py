import numpy as np
import pytest

from chabocal import data as datamod
from chabocal.data import MeasurementSet, NoiseModel
from chabocal.forward import FixedParams, LoadProgram, ParameterVector, Specimen


def q_ref():
    return ParameterVector(kappa=1.66e9, shear=7.69e8, b_r=50.0, b_chi=50.0, sigma_y=1.7e8)


def ramp(dt=0.01):
    return LoadProgram(
        knots=((0.0, (0.0, 0.0, 0.0)), (4.0, (2.4e8, 1.2e8, -1.0e8))), cycles=1, dt=dt
    )


def times_for(prog, every):
    n = int(round(prog.duration / prog.dt))
    stride = int(round(every / prog.dt))
    return np.arange(stride, n + 1, stride) * prog.dt


class TestNoiseModel:
    def test_exactly_one_sigma(self):
        with pytest.raises(ValueError):
            NoiseModel()
        with pytest.raises(ValueError):
            NoiseModel(sigma_abs=1.0, sigma_rel=0.01)
        with pytest.raises(ValueError):
            NoiseModel(sigma_abs=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(sigma_rel=0.01, kind="laplace")

    def test_effective_sigma(self):
        y = np.array([3.0, 4.0, 0.0])  # rms = sqrt(25/3)
        assert NoiseModel(sigma_abs=2.5).effective_sigma(y) == 2.5
        want = 0.1 * np.sqrt(25.0 / 3.0)
        assert NoiseModel(sigma_rel=0.1).effective_sigma(y) == pytest.approx(want, rel=1e-15)


class TestGenerate:
    def test_zero_noise_degenerate(self):
        from chabocal.forward import measurement_operator

        prog = ramp(dt=0.05)
        times = times_for(prog, 0.2)
        mset = datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.0), seed=1
        )
        clean = measurement_operator(q_ref(), FixedParams(), prog, Specimen(), times)
        assert np.array_equal(mset.values, clean)

    def test_seed_reproducibility(self):
        prog = ramp(dt=0.05)
        times = times_for(prog, 0.2)
        a = datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.01), seed=7
        )
        b = datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.01), seed=7
        )
        assert np.array_equal(a.values, b.values)

    def _large_set(self, seed=11):
        prog = ramp(dt=0.001)
        times = times_for(prog, 0.001)  # 4000 times -> 12000 observations
        return datamod.generate(
            q_ref(),
            FixedParams(),
            prog,
            Specimen(),
            times,
            NoiseModel(sigma_abs=1e-5),
            seed=seed,
        )

    def test_empirical_noise_std(self):
        # chi-square concentration band frozen for n = 1e4 scalar draws
        mset = self._large_set()
        e = mset.noise_realization[:10000]
        assert 0.97e-5 <= e.std() <= 1.03e-5

    def test_noise_whiteness(self):
        mset = self._large_set()
        e = mset.noise_realization
        e = e - e.mean()
        n = len(e)
        denom = float(np.dot(e, e))
        for lag in (1, 2, 3, 5):
            rho = float(np.dot(e[:-lag], e[lag:])) / denom
            assert abs(rho) < 4.0 / np.sqrt(n)

    def test_seed_independence(self):
        a = self._large_set(seed=1).noise_realization
        b = self._large_set(seed=2).noise_realization
        a = a - a.mean()
        b = b - b.mean()
        corr = float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))
        assert abs(corr) < 4.0 / np.sqrt(len(a))

    def test_truth_tag_recorded(self):
        prog = ramp(dt=0.05)
        times = times_for(prog, 0.2)
        mset = datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.01), seed=3
        )
        assert mset.truth_tag["kappa"] == 1.66e9
        assert mset.truth_tag["sigma_y"] == 1.7e8


class TestSerialization:
    def _small(self):
        prog = ramp(dt=0.05)
        times = times_for(prog, 0.2)
        return datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.01), seed=5
        )

    def test_json_round_trip(self, tmp_path):
        mset = self._small()
        path = tmp_path / "m.json"
        mset.to_json(path)
        back = MeasurementSet.from_json(path)
        assert np.array_equal(back.values, mset.values)
        assert np.array_equal(back.sample_times, mset.sample_times)
        assert back.seed == mset.seed
        assert back.sigma_effective == mset.sigma_effective
        assert back.noise.sigma_rel == 0.01

    def test_json_missing_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"sample_times": [0.1], "values": [1, 2, 3]}')
        with pytest.raises(ValueError):
            MeasurementSet.from_json(path)

    def test_csv_layout(self, tmp_path):
        mset = self._small()
        path = tmp_path / "m.csv"
        mset.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "time,ux,uy,uz"
        assert len(lines) == 1 + len(mset.sample_times)

    def test_length_invariant(self):
        with pytest.raises(ValueError):
            MeasurementSet(
                sample_times=np.array([0.1, 0.2]),
                values=np.zeros(5),
                noise=NoiseModel(sigma_rel=0.01),
                seed=0,
                sigma_effective=1.0,
            )
