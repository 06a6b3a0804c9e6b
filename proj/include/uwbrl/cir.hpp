#pragma once

#include <array>
#include <complex>
#include <random>
#include <span>
#include <vector>

namespace uwbrl {

using Rng = std::mt19937_64;

inline constexpr int kCirLength = 1016;
inline constexpr double kTapDurationS = 1.0e-9;
inline constexpr int kWindowBefore = 50;
inline constexpr int kWindowAfter = 100;
inline constexpr int kWindowLength = kWindowBefore + kWindowAfter;
// First paths must leave room for the full preprocessing window.
inline constexpr int kMinFirstPathTap = kWindowBefore;
inline constexpr int kMaxFirstPathTap = kCirLength - kWindowAfter;

using Complex = std::complex<double>;

struct RawCir {
    std::vector<Complex> taps = std::vector<Complex>(kCirLength);
    double tap_duration = kTapDurationS;
    int detected_fp_index = 0;
};

// Normalized RSSI window around the detected first path; the agent's state.
struct PreprocessedCir {
    std::array<double, kWindowLength> values{};
};

struct CirPath {
    double amplitude = 1.0;
    double delay_s = 0.0;  // relative to the path the multipath train hangs off
    double phase_rad = 0.0;
};

// One channel realization. paths[0] is the dominant arrival; the rest are later
// multipath components with delays measured from it (ascending).
struct CirSimParams {
    std::vector<CirPath> paths{CirPath{}};
    double noise_sigma = 1.0;  // RMS magnitude of the complex AWGN
    double noise_floor = 4.0;
    int pulse_width_taps = 3;
    // NLOS only: amplitude of the attenuated true first path, as a fraction of
    // noise_floor. Must stay below 1 so the leading edge misses it.
    double nlos_first_path_gain = 0.6;
};

double iq_to_rssi(Complex tap);

std::vector<double> cir_rssi(const RawCir& raw);

// Smallest index whose RSSI strictly exceeds the floor. Throws NoPathDetected.
int detect_first_path(std::span<const double> rssi, double noise_floor);

// Min-max normalization into [0, 1]; a constant input maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

// RSSI window [fp-50, fp+100) normalized. Throws WindowOutOfBounds.
PreprocessedCir preprocess(const RawCir& raw);

// Causal half raised-cosine pulse sampled at tap resolution.
std::vector<double> pulse_shape(int width_taps);

// Synthesizes a CIR whose leading edge lands on fp_tap (LOS) or on
// fp_tap + error_taps (NLOS, attenuated true first path). Regenerates the noise
// when it would move the detected edge; throws NoPathDetected if that keeps
// happening.
RawCir simulate_cir(const CirSimParams& params, int fp_tap, int error_taps, bool los, Rng& rng);

}  // namespace uwbrl
