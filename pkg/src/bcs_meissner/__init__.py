"""Magnetic screening in the strong-coupling BCS-Hubbard model.

Modules
-------
fields
    Grids, vector fields, spectral transforms, mollifiers and VFLD1 dumps.
helmholtz
    Helmholtz projections, Biot-Savart operator and vector potentials.
bcs_thermo
    Closed-form thermodynamics at fixed magnetic induction and the gap equation.
meissner_solver
    Screening, current-space and full free-energy variational problems.
cli
    Batch driver (``bcs-meissner``).
"""

__version__ = "0.1.0"
