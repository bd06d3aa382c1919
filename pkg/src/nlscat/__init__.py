"""Time-domain boundary elements for electromagnetic scattering with a power-law impedance condition."""
