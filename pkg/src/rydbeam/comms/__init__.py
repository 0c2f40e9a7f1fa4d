"""End-to-end QAM links over the simulated receiver."""
from rydbeam.comms.channel import (NOISE_DENSITY, SAMPLE_RATE, Interferer, Scenario, User,
                                   band_gains, band_psd, channel_apply, interferer_envelope,
                                   response_reference)
from rydbeam.comms.modem import (LOCK_THRESHOLD, QamStream, analytic_ber, compute_ber,
                                 compute_evm, constellation, downconvert, gray_demap, gray_map,
                                 lock_metric, matched_filter, qam_modulate, srrc_taps,
                                 superhet_demodulate)
from rydbeam.comms.experiments import (KU_FREQ_HZ, MULTIUSER_RABI_AT_0DBM, RABI_AT_0DBM,
                                       S_FREQ_HZ, LinkMetrics, MetricsTable, dbm_to_rabi,
                                       evaluate_link, interference_scenario,
                                       multiband_scenario, multiuser_scenario,
                                       run_interference_sweep, run_multiband, run_multiuser)
