import numpy as np
import pytest

from adaptest import bank as bank_mod


def simpson_posterior_oracle(prior_mean, prior_sd, responses, lo=-8.0, hi=8.0, n=10_001):
    """Independent check for grid posteriors: direct density evaluation on a
    fine grid integrated with Simpson's rule (n must be odd)."""
    x = np.linspace(lo, hi, n)
    dens = np.exp(-0.5 * ((x - prior_mean) / prior_sd) ** 2)
    for (a, b), correct in responses:
        p = 1.0 / (1.0 + np.exp(-a * (x + b)))
        dens = dens * (p if correct else 1.0 - p)
    h = (hi - lo) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    total = float(w @ dens)
    mean = float(w @ (x * dens)) / total
    var = float(w @ ((x - mean) ** 2 * dens)) / total
    return mean, float(np.sqrt(var))


@pytest.fixture(scope="session")
def vlat_bank():
    return bank_mod.synth_bank(1, bank_mod.SynthSpec.vlat_like())


@pytest.fixture(scope="session")
def calvi_bank():
    return bank_mod.synth_bank(1, bank_mod.SynthSpec.calvi_like())
