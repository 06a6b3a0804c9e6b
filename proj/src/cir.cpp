#include "uwbrl/cir.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "uwbrl/error.hpp"

namespace uwbrl {

namespace {

constexpr int kMaxSynthesisAttempts = 64;

void add_path(std::vector<Complex>& taps, const std::vector<double>& pulse, int tap,
              double amplitude, double phase) {
    const Complex phasor = std::polar(amplitude, phase);
    for (std::size_t k = 0; k < pulse.size(); ++k) {
        const std::size_t idx = static_cast<std::size_t>(tap) + k;
        if (idx >= taps.size()) break;
        taps[idx] += phasor * pulse[k];
    }
}

void validate(const CirSimParams& params, int fp_tap, int error_taps, bool los) {
    if (params.paths.empty()) throw InvalidArgument("CIR synthesis needs at least one path");
    if (params.pulse_width_taps < 1) throw InvalidArgument("pulse width must be >= 1 tap");
    if (!(params.noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
    double previous = -1.0;
    for (const auto& p : params.paths) {
        if (!(p.amplitude > 0.0)) throw InvalidArgument("path amplitudes must be positive");
        if (p.delay_s < previous) throw InvalidArgument("path delays must be ascending");
        previous = p.delay_s;
    }
    if (error_taps < 0) throw InvalidArgument("error_taps must be >= 0");
    if (los && error_taps != 0) throw InvalidArgument("LOS synthesis carries no leading-edge bias");
    if (fp_tap < kMinFirstPathTap || fp_tap + error_taps > kMaxFirstPathTap) {
        throw InvalidArgument("first path tap " + std::to_string(fp_tap) + " (+" +
                              std::to_string(error_taps) + ") outside [50, 916]");
    }
    if (!los && !(params.nlos_first_path_gain >= 0.0 && params.nlos_first_path_gain < 1.0)) {
        throw InvalidArgument("NLOS first path gain must be in [0, 1)");
    }
}

}  // namespace

double iq_to_rssi(Complex tap) {
    return std::abs(tap);
}

std::vector<double> cir_rssi(const RawCir& raw) {
    std::vector<double> rssi(raw.taps.size());
    std::transform(raw.taps.begin(), raw.taps.end(), rssi.begin(), iq_to_rssi);
    return rssi;
}

int detect_first_path(std::span<const double> rssi, double noise_floor) {
    const auto it = std::find_if(rssi.begin(), rssi.end(), [&](double v) { return v > noise_floor; });
    if (it == rssi.end()) throw NoPathDetected("no CIR tap rises above the noise floor");
    return static_cast<int>(it - rssi.begin());
}

std::vector<double> min_max_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
    return out;
}

PreprocessedCir preprocess(const RawCir& raw) {
    const int fp = raw.detected_fp_index;
    const int begin = fp - kWindowBefore;
    const int end = fp + kWindowAfter;
    if (begin < 0 || end > static_cast<int>(raw.taps.size())) {
        throw WindowOutOfBounds("first path at tap " + std::to_string(fp) +
                                " leaves no room for the 150-tap window");
    }
    std::array<double, kWindowLength> window{};
    for (int i = 0; i < kWindowLength; ++i) window[i] = iq_to_rssi(raw.taps[begin + i]);
    const auto normalized = min_max_normalize(window);
    PreprocessedCir out;
    std::copy(normalized.begin(), normalized.end(), out.values.begin());
    return out;
}

std::vector<double> pulse_shape(int width_taps) {
    std::vector<double> pulse(static_cast<std::size_t>(width_taps));
    for (int k = 0; k < width_taps; ++k) {
        pulse[k] = 0.5 * (1.0 + std::cos(std::numbers::pi * k / width_taps));
    }
    return pulse;
}

RawCir simulate_cir(const CirSimParams& params, int fp_tap, int error_taps, bool los, Rng& rng) {
    validate(params, fp_tap, error_taps, los);
    const auto pulse = pulse_shape(params.pulse_width_taps);
    const int detected_target = fp_tap + error_taps;
    const double component_sigma = params.noise_sigma / std::numbers::sqrt2;

    std::vector<Complex> clean(kCirLength);
    const CirPath& dominant = params.paths.front();
    if (!los && error_taps > 0) {
        add_path(clean, pulse, fp_tap, params.nlos_first_path_gain * params.noise_floor,
                 dominant.phase_rad + 1.0);
    }
    add_path(clean, pulse, detected_target, dominant.amplitude, dominant.phase_rad);
    for (std::size_t s = 1; s < params.paths.size(); ++s) {
        const auto& p = params.paths[s];
        const int tap = detected_target + static_cast<int>(std::lround(p.delay_s / kTapDurationS));
        add_path(clean, pulse, tap, p.amplitude, p.phase_rad);
    }

    RawCir raw;
    std::vector<double> rssi(kCirLength);
    for (int attempt = 0; attempt < kMaxSynthesisAttempts; ++attempt) {
        if (component_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, component_sigma);
            for (int i = 0; i < kCirLength; ++i) {
                const double re = noise(rng);
                const double im = noise(rng);
                raw.taps[i] = clean[i] + Complex(re, im);
            }
        } else {
            raw.taps = clean;
        }
        for (int i = 0; i < kCirLength; ++i) rssi[i] = iq_to_rssi(raw.taps[i]);
        try {
            raw.detected_fp_index = detect_first_path(rssi, params.noise_floor);
        } catch (const NoPathDetected&) {
            if (component_sigma == 0.0) throw;
            continue;
        }
        if (raw.detected_fp_index == detected_target) return raw;
        if (component_sigma == 0.0) break;
    }
    throw NoPathDetected("leading edge did not land on tap " + std::to_string(detected_target) +
                         " after repeated synthesis");
}

}  // namespace uwbrl
