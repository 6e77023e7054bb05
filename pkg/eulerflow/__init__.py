"""Separated-variables solutions of the 2D incompressible Euler equations."""
