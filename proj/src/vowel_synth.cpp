#include "accent/vowel_synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace accent::formants {

dsp::SoundWave synth_vowel(const VowelSpec& spec, int rate) {
    if (spec.freqs.size() != spec.bands.size() || spec.freqs.empty())
        throw std::invalid_argument("synth_vowel: need matched resonator freqs/bands");
    if (spec.f0 <= 0 || spec.seconds <= 0) throw std::invalid_argument("synth_vowel: bad f0/length");
    const int n = int(spec.seconds * rate);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);

    // pulse train by phase accumulation (handles non-integer periods)
    double phase = 1.0;  // fire on the first sample
    for (int i = 0; i < n; ++i) {
        phase += spec.f0 / rate;
        if (phase >= 1.0) {
            phase -= 1.0;
            x[i] = 1.0;
        }
    }

    // one real pole of glottal tilt; the tracker's pre-emphasis undoes it
    for (int i = 1; i < n; ++i) x[i] += 0.97 * x[i - 1];

    for (size_t s = 0; s < spec.freqs.size(); ++s) {
        double r = std::exp(-std::numbers::pi * spec.bands[s] / rate);
        double th = 2.0 * std::numbers::pi * spec.freqs[s] / rate;
        double a1 = 2.0 * r * std::cos(th), a2 = -r * r;
        double y1 = 0.0, y2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double y = x[i] + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            x[i] = y;
        }
    }

    int ramp = std::min(n / 2, int(spec.fade * rate));
    for (int i = 0; i < ramp; ++i) {
        double g = 0.5 * (1.0 - std::cos(std::numbers::pi * i / ramp));
        x[i] *= g;
        x[n - 1 - i] *= g;
    }

    double peak = x.cwiseAbs().maxCoeff();
    if (peak > 0) x *= spec.amp / peak;

    dsp::SoundWave w;
    w.rate = rate;
    w.samples = std::move(x);
    return w;
}

}  // namespace accent::formants
