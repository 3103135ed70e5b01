"""Distributed H-infinity robust control for vehicle platoons on directed graphs."""
from .analysis import analyze, dc_gain_is_peak, gamma_upper_bound, hinf_norm, hinf_norm_sweep_oracle, mode_hinf
from .ingest import loess_smooth, read_trajectory_csv, to_leader_trajectory
from .plant import FeedbackGains, assemble_closed_loop, vehicle_model
from .simulate import Drag, SinePulse, Zero, l2_gain, replay_leader, sine_pulse, spacing_errors
from .synthesis import extract_gains, min_coupling, solve_lmi, synthesize, verify_synthesis
from .topology import (
    DirectedPlatoonGraph,
    build_coupling_matrix,
    check_lemma1,
    gershgorin_discs,
    load_topology,
    spectral_factorization,
)

__version__ = "0.1.0"
