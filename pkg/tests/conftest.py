"""Shared fixtures; the expensive objects are built once per session."""

import time

import numpy as np
import pytest

from hpadyn import dde, floquet, jacobian, koopman

#: wall-clock cost of each session fixture, so the acceptance suite can
#: charge shared work against per-criterion runtime budgets
FIXTURE_TIMES: dict[str, float] = {}


def _timed(name):
    def wrap(builder):
        t0 = time.perf_counter()
        obj = builder()
        FIXTURE_TIMES[name] = time.perf_counter() - t0
        return obj
    return wrap


@pytest.fixture(scope="session")
def params():
    return dde.default_params()


@pytest.fixture(scope="session")
def cycle(params):
    return _timed("cycle")(lambda: dde.find_limit_cycle(params))


@pytest.fixture(scope="session")
def monodromy(params, cycle):
    return _timed("monodromy")(
        lambda: floquet.assemble_monodromy(params, cycle, N=50))


@pytest.fixture(scope="session")
def indicators200(params, cycle):
    return _timed("indicators200")(
        lambda: jacobian.sweep_trajectory(params, cycle, 200))


@pytest.fixture(scope="session")
def koopman_model(params, cycle):
    """Seeded desk-scale pipeline: snapshots, dictionary, matrices, eigenpairs."""

    def build():
        cfg = koopman.default_embedding(cycle, n_init=2000, seed=0)
        ds = koopman.generate_snapshots(params, cfg)
        dic = koopman.build_dictionary(ds, N=400, seed=0)
        mats = koopman.assemble_matrices(koopman.eval_dictionary(dic, ds.X0),
                                         koopman.eval_dictionary(dic, ds.X1))
        w, gs = koopman.dmd_eigs(mats)
        res = np.array([koopman.residual(w[i], gs[:, i], mats)
                        for i in range(w.size)])
        return {"cfg": cfg, "ds": ds, "dic": dic, "mats": mats,
                "eigvals": w, "coeffs": gs, "residuals": res}

    return _timed("koopman_model")(build)
