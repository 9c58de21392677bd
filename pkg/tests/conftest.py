import numpy as np
import pytest

import quenchlab as ql


@pytest.fixture(scope="session")
def p3_1d():
    return ql.ModelParams(p=3.0, n=1)


@pytest.fixture(scope="session")
def p3_2d():
    return ql.ModelParams(p=3.0, n=2)


@pytest.fixture(scope="session")
def ode_field_dyadic(p3_1d):
    """Collapse-solution field on dyadic times; exact under lambda in {1/2, 2}."""
    grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[128],
                       time_start=-1.0, time_end=-2.0 ** -40)
    times = ql.dyadic_times(-1.0, 40)
    return ql.ode_field(p3_1d, grid, times)


@pytest.fixture(scope="session")
def ode_field_dense(p3_1d):
    """Collapse field with dense coverage for Gaussian-weighted functionals."""
    grid = ql.GridSpec(origin=[-4.0], extent=[8.0], cells=[400],
                       time_start=-0.7, time_end=-1e-7)
    times = np.unique(np.concatenate([
        ql.geometric_times(-0.5, -1e-7, 0.95),
        np.linspace(-0.7, -0.26, 881),
        np.arange(-0.26, -0.2, 2e-5),
    ]))
    return ql.ode_field(p3_1d, grid, times)


@pytest.fixture(scope="session")
def radial_field_2d(p3_2d):
    grid = ql.GridSpec(origin=[-1.0, -1.0], extent=[2.0, 2.0], cells=[128, 128],
                       time_start=-1.0, time_end=-0.0625)
    return ql.radial_field(p3_2d, grid, ql.dyadic_times(-1.0, 4))
