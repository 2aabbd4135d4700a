import numpy as np
import pytest

from twistrmt.rmt import RngStream, haar_batch
from twistrmt.specfun import p_o_density
from twistrmt.stats import HaarPool

# Seeds are fixed once here; no test chooses its own seed after the fact.
POOL_SEED = 20240601
BIG = 1_000_000


@pytest.fixture(scope="session")
def density12():
    return p_o_density(12)


@pytest.fixture(scope="session")
def density6():
    return p_o_density(6)


@pytest.fixture(scope="session")
def big_batch12():
    """10^6 Haar SO(24) draws."""
    return haar_batch(12, BIG, RngStream(POOL_SEED, 1))


@pytest.fixture(scope="session")
def big_batch6():
    """10^6 Haar SO(12) draws."""
    return haar_batch(6, BIG, RngStream(POOL_SEED, 2))


@pytest.fixture(scope="session")
def batch12(big_batch12):
    """First 10^5 of the SO(24) draws."""
    return big_batch12.take(np.arange(100_000))


@pytest.fixture(scope="session")
def sweep_pool(big_batch12):
    """2 x 10^5 frozen draws for re-weighting sweeps (disjoint from data streams)."""
    return HaarPool.from_batch(big_batch12.take(np.arange(800_000, BIG)))


# E11.a3 positive twists with X = 400000.  kappa is not printed anywhere we
# can read, so it is inferred by inverting the excision threshold 0.0048.
E11_X = 400_000
E11_THRESHOLD = 0.0048


@pytest.fixture(scope="session")
def e11_window():
    """Inferred kappa and the first-peak window (t1, t2) for E11.a3 at X = 400000."""
    import math

    from twistrmt.arithmetic import a_s_factor, calibrate_delta
    from twistrmt.dataio import bundled_curve
    from twistrmt.ensembles import first_peak_window
    from twistrmt.rmt import matrix_dimension

    a_half = a_s_factor(bundled_curve("E11.a3"), -0.5, 100_000).value
    delta = calibrate_delta().delta
    n = matrix_dimension(11, E11_X)
    kappa = E11_THRESHOLD * a_half**2 * math.exp(n / 2) / delta
    t1, t2 = first_peak_window(kappa, E11_X)
    return {"kappa": kappa, "X": E11_X, "t1": t1, "t2": t2, "a_half": a_half, "delta": delta, "N": n}
