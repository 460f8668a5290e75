import pathlib

import numpy as np
import pytest

from bcastopt.channel import RateModel
from bcastopt.demand import FileCatalog, ZipfParams, build_catalog, zipf_pmf
from bcastopt.optimizer import CellConfig

REPO = pathlib.Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO / "configs"


def point_rate(rate: float = 1.0) -> RateModel:
    """Degenerate single-region model: every user sees the same rate."""
    return RateModel(r_high=rate, r_low=rate, prob_high=1.0)


def catalog_from(sizes, popularity, theta, rate_model=None, delay_lo=None, delay_hi=None):
    """Hand-crafted catalog for analytic tests."""
    if rate_model is None:
        rate_model = point_rate(1.0)
    return FileCatalog.from_arrays(
        sizes, popularity, theta, rate_model, delay_lo=delay_lo, delay_hi=delay_hi
    )


def random_instance(rng, m_lo=3, m_hi=8, f_lo=0.05, f_hi=0.5):
    """Random small catalog + cell in the regime where every formula is
    well defined (delay-sensitive draws, bound hypothesis satisfiable)."""
    m = int(rng.integers(m_lo, m_hi + 1))
    sizes = rng.uniform(f_lo, f_hi, size=m)
    gamma = float(rng.uniform(0.4, 1.6))
    pu = float(rng.uniform(1.5, 3.0))
    delay_lo, delay_hi = 0.1, 0.4
    # keep size/rate > threshold + 1 with margin even at the high rate
    r_low = float(sizes.min()) / (delay_hi + 1.0) / rng.uniform(2.0, 6.0)
    rate_model = RateModel(r_high=1.4 * r_low, r_low=r_low, prob_high=0.3)
    catalog = build_catalog(
        ZipfParams(exponent=gamma, catalog_size=m),
        sizes=sizes,
        delay_lo=delay_lo,
        delay_hi=delay_hi,
        rate_model=rate_model,
        tolerance_samples=4000,
        seed=int(rng.integers(2**31)),
    )
    cell = CellConfig(
        bandwidth=float(rng.uniform(2.0, 20.0)),
        slots=int(rng.integers(5, 120)),
        n_users=int(rng.integers(5, 400)),
        price_unicast=pu,
        rate_model=rate_model,
        bc_cap_fraction=float(rng.uniform(0.4, 1.0)),
    )
    return catalog, cell


@pytest.fixture(scope="session")
def single_cell_spec():
    from bcastopt.scenario import load_spec

    return load_spec(str(CONFIG_DIR / "single_cell.cfg"))


@pytest.fixture(scope="session")
def seven_cell_spec():
    from bcastopt.scenario import load_spec

    return load_spec(str(CONFIG_DIR / "seven_cell.cfg"))


@pytest.fixture(scope="session")
def single_cell_setup(single_cell_spec):
    from bcastopt.scenario import normalize

    return normalize(single_cell_spec)


@pytest.fixture(scope="session")
def seven_cell_setup(seven_cell_spec):
    from bcastopt.scenario import normalize

    return normalize(seven_cell_spec)
