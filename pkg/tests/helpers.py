import numpy as np

from gagbias import IndependenceOmega, ModelParams, SaturatedOmega


def random_params(rng: np.random.Generator, saturated: bool = False) -> ModelParams:
    pi, tau, rho, delta = rng.uniform(0.0, 1.0, 4)
    if saturated:
        omega = SaturatedOmega(rng.dirichlet(np.ones(10)).reshape(5, 2))
    else:
        omega = IndependenceOmega(rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(2)))
    return ModelParams(pi=pi, tau=tau, rho=rho, delta=delta, omega=omega)
