"""Shared synthetic-data builders for the test suite."""

import numpy as np

from histfun import FunctionalSample, assemble, build_mesh, center
from histfun.penalties import build_penalty_system
from histfun.simulation import gen_covariates, gen_response, make_scenario


def scenario_data(scenario_id=1, N=16, n_pts=33, sigma=0.0, seed=0, delta=0.5):
    """Covariate/response samples drawn from one of the synthetic scenarios."""
    scenario = make_scenario(scenario_id, delta=delta, seed=seed)
    grid = np.linspace(0.0, 1.0, n_pts)
    ss = np.random.SeedSequence(seed).spawn(2)
    x = gen_covariates(N, grid, seed=ss[0])
    y = gen_response(x, scenario, sigma, seed=ss[1])
    return scenario, x, y


def assembled_system(M=3, N=8, n_pts=21, sigma=0.25, seed=0, omega=1e-4, gamma=0.5):
    """A small but realistic design system plus its penalty system."""
    _, x, y = scenario_data(N=N, n_pts=n_pts, sigma=sigma, seed=seed)
    mesh = build_mesh(M, 1.0)
    design = assemble(center(x), center(y), mesh)
    penalties = build_penalty_system(mesh, gamma, omega)
    return design, penalties, x, y
