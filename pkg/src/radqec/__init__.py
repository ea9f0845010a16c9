"""Radiation-burst fault-tolerance simulation for a distance-3 surface code.

Modules
-------
qp_dynamics   quasiparticle generation traces and density integration
coherence     density to per-cycle T1/T2 schedules
channels      GAD channel and its Pauli twirl
surface_code  rotated d=3 layout and stabilizer cycle
pauli_sim     Pauli-frame Monte Carlo (protocols I and II)
trajectory    GAD Kraus-trajectory statevector simulation
decoder       detector graphs and minimum-weight matching
experiments   end-to-end runs, performance gap, sweeps
"""

__version__ = "0.1.0"
