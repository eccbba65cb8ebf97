"""Monte Carlo simulator for micro-macro entanglement of light.

A single photon delocalised over two modes is displaced to a macroscopic
amplitude in one mode; the package samples the conditional photon-number
statistics, threshold discrimination, and homodyne tomography of the
undisplaced state.
"""
__version__ = "0.1.0"

from .channels import IDEAL, ImperfectionParams
from .frame import DisplacedState, displace, photon_moments, photon_pmf_exact
from .streams import stream
