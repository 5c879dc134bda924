"""Physical constants (SI units)."""

import math

EPS0 = 8.8541878128e-12     # vacuum permittivity [F/m]
MU0 = 1.25663706212e-6      # vacuum permeability [H/m]
C0 = 1.0 / math.sqrt(EPS0 * MU0)   # speed of light [m/s]
ETA0 = math.sqrt(MU0 / EPS0)       # free-space impedance [ohm]
