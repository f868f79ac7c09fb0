"""Shared fixtures-in-spirit: small systems used across test modules."""

import numpy as np

from dtnlab.assemble import assemble
from dtnlab.coeffs import CoefficientSet, certify
from dtnlab.mesh import (
    build_structured_square,
    partition_boundary,
    square_side_selector,
)


def square_system(n=8, gamma0_sides=("left",), coeffs=None, lumped=False):
    mesh = build_structured_square(n)
    if gamma0_sides:
        selector = square_side_selector(gamma0_sides)
    else:
        selector = lambda x, y: False
    part = partition_boundary(mesh, selector)
    c = coeffs if coeffs is not None else CoefficientSet.identity()
    certify(c, mesh)
    return assemble(mesh, part, c, lump_boundary_mass=lumped)


def variable_coeffs():
    """A symmetric, uniformly elliptic variable coefficient set on [0,2]^2."""
    return CoefficientSet.make(
        a=(("1.5 + 0.25*sin(pi*x)", "0.1*x*y"),
           ("0.1*x*y", "1 + 0.2*cos(pi*y)")),
        drift=("0.2", "0.1"),
        a0="0.5 + 0.25*x",
    )
