"""Critical points of Gaussian random spherical harmonics."""
