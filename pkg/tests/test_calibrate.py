import numpy as np
import pytest

from chabocal import calibrate, data as datamod, forward, tmcmc
from chabocal.calibrate import LikelihoodSpec, PriorBox
from chabocal.data import MeasurementSet, NoiseModel
from chabocal.errors import NoConvergence
from chabocal.forward import FixedParams, LoadProgram, ParameterVector, Specimen


def q_ref():
    return ParameterVector(kappa=1.66e9, shear=7.69e8, b_r=50.0, b_chi=50.0, sigma_y=1.7e8)


def small_program():
    # one tension-compression triangle, coarse grid: cheap likelihoods
    return LoadProgram(
        knots=(
            (0.0, (0.0, 0.0, 0.0)),
            (1.0, (2.4e8, 0.0, 0.0)),
            (2.0, (0.0, 1.8e8, 0.0)),
            (3.0, (-2.4e8, 0.0, 1.2e8)),
            (4.0, (0.0, 0.0, 0.0)),
        ),
        cycles=1,
        dt=0.05,
    )


def observation_times(prog, every=0.2):
    n = int(round(prog.duration / prog.dt))
    stride = int(round(every / prog.dt))
    return np.arange(stride, n + 1, stride) * prog.dt


@pytest.fixture(scope="module")
def setup():
    prog = small_program()
    times = observation_times(prog)
    data = datamod.generate(
        q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.01), seed=42
    )
    prior = PriorBox.around(q_ref(), rel_width=0.5)
    problem = calibrate.build_problem(
        prior, LikelihoodSpec(data=data), FixedParams(), prog, Specimen()
    )
    return prog, times, data, prior, problem


class TestPriorBox:
    def test_around(self):
        box = PriorBox.around(q_ref(), rel_width=0.5)
        lo, hi = box.arrays()
        assert lo[0] == pytest.approx(0.83e9, rel=1e-12)
        assert hi[4] == pytest.approx(2.55e8, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorBox(lows=(1.0,) * 5, highs=(0.5,) * 5)
        with pytest.raises(ValueError):
            PriorBox(lows=(1.0,) * 4, highs=(2.0,) * 4)

    def test_log_density(self):
        box = PriorBox(lows=(1.0,) * 5, highs=(3.0,) * 5)
        assert box.log_density() == pytest.approx(-5.0 * np.log(2.0), rel=1e-14)


class TestLogPrior:
    def test_inside_outside(self, setup):
        _, _, _, prior, problem = setup
        assert problem.log_prior(q_ref().as_array()) == prior.log_density()
        outside = q_ref().as_array()
        outside[0] *= 2.0
        assert problem.log_prior(outside) == -np.inf

    def test_normalization_midpoint_rule(self, setup):
        # constant density: the per-dimension midpoint sums factorize
        _, _, _, prior, problem = setup
        lo, hi = prior.arrays()
        center = 0.5 * (lo + hi)
        dens = np.exp(problem.log_prior(center))
        total = dens
        for i in range(5):
            grid = lo[i] + (np.arange(100) + 0.5) * (hi[i] - lo[i]) / 100
            q = center.copy()
            vals = []
            for g in grid:
                q[i] = g
                vals.append(np.exp(problem.log_prior(q)))
            # density constant along every axis
            assert np.allclose(vals, dens, rtol=1e-12)
            total *= (hi[i] - lo[i])
        assert total == pytest.approx(1.0, abs=1e-6)


class TestLogLikelihood:
    def test_maximum_at_truth_noiseless(self):
        prog = small_program()
        times = observation_times(prog)
        clean = datamod.generate(
            q_ref(), FixedParams(), prog, Specimen(), times, NoiseModel(sigma_rel=0.0), seed=1
        )
        prior = PriorBox.around(q_ref(), rel_width=0.5)
        problem = calibrate.build_problem(
            prior, LikelihoodSpec(data=clean, noise_sigma=1e-6),
            FixedParams(), prog, Specimen(),
        )
        best = problem.log_likelihood(q_ref().as_array())
        lo, hi = prior.arrays()
        rng = np.random.default_rng(2)
        for _ in range(1000):
            q = lo + rng.uniform(size=5) * (hi - lo)
            assert problem.log_likelihood(q) <= best

    def test_unit_residuals_closed_form(self, setup):
        prog, times, data, prior, _ = setup
        clean = forward.measurement_operator(q_ref(), FixedParams(), prog, Specimen(), times)
        sigma = 1e-5
        shifted = MeasurementSet(
            sample_times=times,
            values=clean + sigma,
            noise=NoiseModel(sigma_abs=sigma),
            seed=0,
            sigma_effective=sigma,
        )
        problem = calibrate.build_problem(
            prior, LikelihoodSpec(data=shifted), FixedParams(), prog, Specimen()
        )
        n = len(shifted.values)
        want = -n / 2.0 - n * np.log(sigma * np.sqrt(2.0 * np.pi))
        assert problem.log_likelihood(q_ref().as_array()) == pytest.approx(want, rel=1e-12)

    def test_forward_failure_counted(self, setup, monkeypatch):
        _, _, _, _, problem = setup
        lik = problem.log_likelihood

        def boom(*a, **k):
            raise NoConvergence(50)

        monkeypatch.setattr(calibrate.kernels, "integrate_path", boom)
        before = lik.failures
        assert lik(q_ref().as_array()) == -np.inf
        assert lik.failures == before + 1

    def test_concurrent_evaluations_match_serial(self, setup):
        from concurrent.futures import ThreadPoolExecutor

        _, _, _, prior, problem = setup
        lo, hi = prior.arrays()
        rng = np.random.default_rng(3)
        points = [lo + rng.uniform(size=5) * (hi - lo) for _ in range(24)]
        serial = [problem.log_likelihood(q) for q in points]
        with ThreadPoolExecutor(max_workers=4) as ex:
            parallel = list(ex.map(problem.log_likelihood, points))
        assert serial == parallel

    def test_gradient_richardson_self_consistency(self, setup):
        # central differences at two step sizes agree after halving:
        # guards against discontinuities from the subdivision logic
        _, _, _, prior, problem = setup
        lo, hi = prior.arrays()
        rng = np.random.default_rng(4)
        for _ in range(5):
            q = lo + (0.25 + 0.5 * rng.uniform(size=5)) * (hi - lo)
            for i in range(5):
                h = 1e-4 * q[i]

                def grad(step):
                    qp = q.copy()
                    qm = q.copy()
                    qp[i] += step
                    qm[i] -= step
                    return (problem.log_likelihood(qp) - problem.log_likelihood(qm)) / (
                        2.0 * step
                    )

                g1 = grad(h)
                g2 = grad(h / 2.0)
                scale = max(abs(g1), abs(g2), 1e-12)
                assert abs(g1 - g2) / scale < 1e-4


class TestLogReparameterize:
    def test_max_likelihood_location_invariant(self, setup):
        _, _, _, prior, problem = setup
        logged = calibrate.log_reparameterize(problem)
        lo, hi = prior.arrays()
        rng = np.random.default_rng(5)
        probes = [lo + rng.uniform(size=5) * (hi - lo) for _ in range(40)]
        plain = [problem.log_likelihood(q) for q in probes]
        trans = [logged.log_likelihood(np.log(q)) for q in probes]
        assert np.allclose(plain, trans, rtol=1e-12)
        assert int(np.argmax(plain)) == int(np.argmax(trans))

    def test_prior_jacobian(self, setup):
        _, _, _, prior, problem = setup
        logged = calibrate.log_reparameterize(problem)
        q = q_ref().as_array()
        want = problem.log_prior(q) + np.sum(np.log(q))
        assert logged.log_prior(np.log(q)) == pytest.approx(want, rel=1e-12)


class TestLikelihoodSpec:
    def test_defaults_to_generating_sigma(self, setup):
        _, _, data, _, _ = setup
        spec = LikelihoodSpec(data=data)
        assert spec.noise_sigma == data.sigma_effective

    def test_rejects_nonpositive(self, setup):
        _, _, data, _, _ = setup
        with pytest.raises(ValueError):
            LikelihoodSpec(data=data, noise_sigma=0.0)


class TestSummarize:
    def _result(self, samples, prior_samples=None):
        samples = np.atleast_2d(samples)
        stage0 = tmcmc.TmcmcStage(
            index=0,
            exponent=0.0,
            samples=prior_samples if prior_samples is not None else samples,
            log_likes=np.zeros(len(samples)),
        )
        return tmcmc.PosteriorResult(
            samples=samples,
            log_evidence=0.0,
            stages=[stage0],
            mean=samples.mean(axis=0),
            std=samples.std(axis=0),
        )

    def test_identical_samples(self):
        s = np.tile(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), (20, 1))
        summary = calibrate.summarize(self._result(s), bins=10)
        assert np.all(summary.std == 0.0)
        assert np.allclose(summary.mean, s[0])

    def test_two_point_moments(self):
        box = PriorBox(lows=(0.5,) * 5, highs=(9.5,) * 5)
        s = np.vstack([np.full(5, 2.0), np.full(5, 6.0)])
        summary = calibrate.summarize(self._result(s), bins=9, prior_box=box)
        assert np.allclose(summary.mean, 4.0)
        assert np.allclose(summary.std, 2.0)  # population std |b-a|/2

    def test_histogram_counts_sum_to_n(self):
        rng = np.random.default_rng(6)
        box = PriorBox.around(q_ref(), rel_width=0.5)
        lo, hi = box.arrays()
        post = lo + rng.uniform(size=(500, 5)) * (hi - lo)
        prior = lo + rng.uniform(size=(500, 5)) * (hi - lo)
        summary = calibrate.summarize(
            self._result(post, prior_samples=prior), bins=40, prior_box=box
        )
        assert np.all(summary.posterior_counts.sum(axis=1) == 500)
        assert np.all(summary.prior_counts.sum(axis=1) == 500)

    def test_relative_error_against_truth(self):
        s = np.tile(q_ref().as_array() * 1.02, (10, 1))
        summary = calibrate.summarize(self._result(s), truth=q_ref(), bins=5)
        assert np.allclose(summary.rel_error, 0.02, rtol=1e-10)

    def test_json_and_csv_outputs(self, tmp_path):
        rng = np.random.default_rng(7)
        box = PriorBox.around(q_ref(), rel_width=0.5)
        lo, hi = box.arrays()
        s = lo + rng.uniform(size=(50, 5)) * (hi - lo)
        summary = calibrate.summarize(self._result(s), truth=q_ref(), bins=8, prior_box=box)
        summary.to_json(tmp_path / "summary.json")
        summary.histograms_to_csv(tmp_path / "hist.csv")
        import json

        doc = json.loads((tmp_path / "summary.json").read_text())
        assert set(doc["parameters"]) == set(forward.PARAM_NAMES)
        lines = (tmp_path / "hist.csv").read_text().strip().split("\n")
        assert lines[0] == "parameter,bin_left,bin_right,prior_count,posterior_count"
        assert len(lines) == 1 + 5 * 8
