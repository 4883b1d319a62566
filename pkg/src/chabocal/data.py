"""Virtual measurement data: forward predictions plus white Gaussian noise."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .forward import PARAM_NAMES, measurement_operator


@dataclass(frozen=True)
class NoiseModel:
    """Additive iid Gaussian noise, one sigma for every observation.

    Exactly one of `sigma_abs` (meters) and `sigma_rel` (fraction of the
    noiseless signal RMS) must be given.  Zero is allowed as the
    degenerate no-noise case.
    """

    sigma_abs: float = None
    sigma_rel: float = None
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if (self.sigma_abs is None) == (self.sigma_rel is None):
            raise ValueError("exactly one of sigma_abs and sigma_rel must be set")
        val = self.sigma_abs if self.sigma_abs is not None else self.sigma_rel
        if val < 0.0:
            raise ValueError("noise sigma must be non-negative")

    def effective_sigma(self, noiseless):
        """Absolute standard deviation for a given noiseless signal."""
        if self.sigma_abs is not None:
            return float(self.sigma_abs)
        rms = float(np.sqrt(np.mean(np.square(noiseless))))
        return self.sigma_rel * rms


@dataclass
class MeasurementSet:
    """Time-stamped displacement observations with noise metadata."""

    sample_times: np.ndarray
    values: np.ndarray
    noise: NoiseModel
    seed: int
    sigma_effective: float
    truth_tag: dict = None
    noise_realization: np.ndarray = None  # kept for test introspection

    def __post_init__(self):
        if len(self.values) != 3 * len(self.sample_times):
            raise ValueError("values length must be 3x the number of sample times")

    def to_json(self, path):
        doc = {
            "sample_times": [float(t) for t in self.sample_times],
            "values": [float(v) for v in self.values],
            "noise": {
                "kind": self.noise.kind,
                "sigma_abs": self.noise.sigma_abs,
                "sigma_rel": self.noise.sigma_rel,
                "sigma_effective": self.sigma_effective,
            },
            "seed": self.seed,
        }
        if self.truth_tag is not None:
            doc["truth_tag"] = self.truth_tag
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        for key in ("sample_times", "values", "noise", "seed"):
            if key not in doc:
                raise ValueError(f"measurement file missing {key!r}")
        noise = NoiseModel(
            sigma_abs=doc["noise"].get("sigma_abs"),
            sigma_rel=doc["noise"].get("sigma_rel"),
            kind=doc["noise"].get("kind", "gaussian"),
        )
        return cls(
            sample_times=np.asarray(doc["sample_times"], dtype=float),
            values=np.asarray(doc["values"], dtype=float),
            noise=noise,
            seed=int(doc["seed"]),
            sigma_effective=float(doc["noise"]["sigma_effective"]),
            truth_tag=doc.get("truth_tag"),
        )

    def to_csv(self, path):
        """Alternative flat layout: one row per sample time."""
        u = self.values.reshape(-1, 3)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "ux", "uy", "uz"])
            for t, row in zip(self.sample_times, u):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def generate(q_true, fixed, program, specimen, times, noise, seed):
    """Draw one virtual data set u = Y(q_true) + e, reproducible from seed.

    Uses a counter-based generator so draws are independent of evaluation
    order under parallel refactors.
    """
    times = np.asarray(times, dtype=float)
    clean = measurement_operator(q_true, fixed, program, specimen, times)
    sigma = noise.effective_sigma(clean)
    rng = np.random.Generator(np.random.Philox(key=seed))
    e = sigma * rng.standard_normal(clean.shape[0])
    return MeasurementSet(
        sample_times=times,
        values=clean + e,
        noise=noise,
        seed=seed,
        sigma_effective=sigma,
        truth_tag={name: float(v) for name, v in zip(PARAM_NAMES, q_true.as_array())},
        noise_realization=e,
    )
