"""Surface displacement measurement for torsional-shear specimens."""
