"""Numerics for the fractional linear birth-death process.

Mittag-Leffler evaluation, the classical (nu = 1) closed forms, the stable
time change, the fractional state probabilities and moments, two independent
oracles, a Monte Carlo engine and a command surface.
"""
import logging

__version__ = '0.1.0'

logging.getLogger(__name__).addHandler(logging.NullHandler())
