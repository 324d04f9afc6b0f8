import numpy as np
import pytest

from dgcontact.afem import ProblemSetup
from dgcontact.assembly import MethodVariant, ProblemData
from dgcontact.dgspace import MaterialParams
from dgcontact.mesh import build_rectangle_mesh, side_labeler


def example1_traction(x, y):
    return np.stack([200.0 * (5.0 - y), -190.0 * np.ones_like(y)], axis=-1)


def example1_setup(kind="sipg", n0=2, **overrides):
    mat = MaterialParams.from_young_poisson(2000.0, 0.4)
    data = ProblemData(mat=mat, f=(0.0, 0.0), g=example1_traction,
                       c_n=1.0, c_tau=450.0, m_n=1, g_a=0.05)
    lo, hi = (0.0, 0.05), (1.0, 1.05)
    setup = ProblemSetup(
        corner_lo=lo, corner_hi=hi,
        labeler=side_labeler("traction", "dirichlet", "contact", "traction",
                             lo, hi),
        data=data, variant=MethodVariant(kind, 30.0 * mat.mu), n0=n0)
    for key, val in overrides.items():
        setattr(setup, key, val)
    return setup


def example2_setup(kind="sipg", n0=2, **overrides):
    mat = MaterialParams.from_young_poisson(2500.0, 0.2)
    data = ProblemData(mat=mat, f=(0.0, 0.0), g=(880.0, 0.0),
                       c_n=1.0, c_tau=250.0, m_n=1, g_a=0.0)
    lo, hi = (0.0, 0.0), (1.0, 1.0)
    setup = ProblemSetup(
        corner_lo=lo, corner_hi=hi,
        labeler=side_labeler("traction", "traction", "contact", "dirichlet",
                             lo, hi),
        data=data, variant=MethodVariant(kind, 30.0 * mat.mu), n0=n0)
    for key, val in overrides.items():
        setattr(setup, key, val)
    return setup


def unit_square_mesh(n=1, left="traction", right="dirichlet",
                     bottom="contact", top="traction"):
    return build_rectangle_mesh(
        (0.0, 0.0), (1.0, 1.0), n,
        side_labeler(left, right, bottom, top, (0.0, 0.0), (1.0, 1.0)))


def clamped_square_mesh(n=1):
    return unit_square_mesh(n, "dirichlet", "dirichlet", "dirichlet",
                            "dirichlet")


@pytest.fixture
def two_triangle_mesh():
    return unit_square_mesh(1)


@pytest.fixture
def material():
    return MaterialParams.from_young_poisson(2000.0, 0.4)
