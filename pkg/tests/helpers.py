import numpy as np

from stochlq.system import SystemModel


def random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return X + X.T


def random_spd(rng, n, shift=1.0):
    X = rng.standard_normal((n, n))
    return X @ X.T + shift * np.eye(n)


def scalar_model(a, b, c, d, sigma2=1.0):
    return SystemModel([[a]], [[b]], [[c]], [[d]], sigma2)


def rel_err(X, Y):
    return float(np.linalg.norm(np.asarray(X) - np.asarray(Y)) / np.linalg.norm(Y))
