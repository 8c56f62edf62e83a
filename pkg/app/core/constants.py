# app/core/constants.py
"""Numerical limits and conventions for quasilab"""

import math

# Exit Codes
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

# Output Formatting
SIGNIFICANT_DIGITS = 17
CSV_DELIMITER = ","
CSV_LINE_END = "\n"

# Continued Fractions
MIN_DEPTH = 1
PERIODIC_GUARD_BITS = 16  # extra bits of tail beyond the working precision

# Localization Regions
REGION_C0 = 3
AMPLITUDE_FLOOR = 1e-13
ENVELOPE_SLACK = math.log(10.0)
EDGE_FRACTION = 0.1

# Uniformity
DEGENERATE_COSINE_TOL = 1e-14
DEFAULT_UNIFORMITY_GRID = 4096

# Transfer Products
LOG_OVERFLOW_GUARD = 600.0  # log-scale beyond which plain doubles would overflow
MONOTONE_RELATIVE_TOL = 1e-12
STRIP_LINES = 5  # horizontal lines sampled across |Im x| <= eta, both edges included

# Weyl Recursion
WEYL_INITIAL_DEPTH = 64
WEYL_DEFAULT_TOL = 1e-12

# Green Functions
DEFAULT_DIVISOR_FLOOR = 1e-8

# Spectral Measures
MAX_SUPPORT_FRACTION = 0.5  # support of f within [-N/2, N/2]
COLLISION_DISTANCE = 1e-6
PSI_GRID_POINTS = 10000

# Experiment Subcommands
SUBCOMMANDS = [
    "cf", "beta", "divisors", "dc", "resonances", "spectrum", "ids", "measure",
    "holder", "lyapunov", "strip-growth", "weyl", "pk-scan", "duality",
    "thouless", "uniformity", "localize", "bloch-defect", "model-x", "covariance",
]
