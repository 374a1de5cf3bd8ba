"""Physical constants and reference parameter values."""

SPEED_OF_LIGHT = 299_792_458.0  # m/s

FREQUENCY = 30e9  # Hz
WAVELENGTH = 0.01  # m, rounded as in the reference parameter table
ELEMENT_SPACING = WAVELENGTH / 4
SIDE_COUNT = 40
FEEDBACK_RATIO = 0.004
AMP_GAIN_DB = 24.0
AMP_MAX_OUTPUT_W = 1.0
MAX_GAIN_DBI = 4.97
ITERATIONS = 200
MONTE_CARLO_TRIALS = 100
SEED_POWER_W = 1e-3
NOISE_POWER_W = 2e-5  # 0.02 mW per element
SNAPSHOTS = 128
