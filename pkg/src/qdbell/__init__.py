"""Event-level simulation and correlation analysis of a triggered
quantum-dot entangled-photon-pair source.

Circular handedness convention used throughout the package::

    L = (H + iV)/sqrt(2)        R = (H - iV)/sqrt(2)

With this choice the cascade state (|L1 R2> + |R1 L2>)/sqrt(2) equals
(|H1 H2> + |V1 V2>)/sqrt(2): co-polarised in the rectilinear and diagonal
bases and cross-polarised in the circular basis.  Photon 1 is the
biexciton (XX) photon, photon 2 the exciton (X) photon.
"""

__version__ = "0.1.0"
