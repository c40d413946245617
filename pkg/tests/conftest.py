"""Shared builders for the test suite."""

import numpy as np
import pytest

from geneo_lab.decomposition import build_decomposition, sarkis_pou, standard_pou
from geneo_lab.fem import (
    BoundaryCondition,
    CoefficientField,
    DofMap,
    StructuredMesh,
    assemble_darcy,
)
from geneo_lab.geneo import assemble_geneo_pencil


def make_darcy_problem(nx=12, ny=12, px=2, py=2, overlap=1, contrast=1e4,
                       layers=4, dirichlet=None, pou="standard", seed=None):
    """Small layered Darcy problem with its decomposition and PoU."""
    mesh = StructuredMesh(nx, ny)
    field = CoefficientField.layers(mesh, layers, contrast)
    bc = BoundaryCondition(dirichlet=dirichlet if dirichlet is not None else {"bottom": 0.0})
    dofmap = DofMap(mesh, 1)
    a, b = assemble_darcy(mesh, field, bc)
    decomp = build_decomposition(mesh, dofmap, px, py, overlap)
    ddofs, _ = bc.constrained_dofs(mesh, dofmap)
    builder = sarkis_pou if pou == "sarkis" else standard_pou
    pou_obj = builder(decomp, ddofs)
    return {
        "mesh": mesh, "field": field, "bc": bc, "dofmap": dofmap,
        "matrix": a, "rhs": b, "decomp": decomp, "pou": pou_obj,
        "dirichlet_dofs": ddofs,
    }


def make_pencils(prob):
    return [
        assemble_geneo_pencil(
            prob["decomp"], prob["mesh"], prob["field"], prob["bc"],
            prob["dofmap"], prob["pou"], j,
        )
        for j in range(prob["decomp"].num_subdomains)
    ]


def random_spd(n, rng, cond=None):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    if cond is None:
        vals = rng.uniform(0.5, 2.0, n)
    else:
        vals = np.geomspace(1.0, cond, n)
    return (q * vals) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
