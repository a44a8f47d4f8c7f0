#pragma once

#include "accent/dsp.hpp"

#include <vector>

namespace accent::formants {

// All-pole vowel model: pulse train -> glottal tilt pole -> resonator cascade.
struct VowelSpec {
    double f0 = 120.0;          // pitch, Hz
    std::vector<double> freqs;  // resonator centers, Hz
    std::vector<double> bands;  // matching -3 dB bandwidths, Hz
    double seconds = 0.4;
    double amp = 0.5;           // peak after normalization
    double fade = 0.005;        // raised-cosine edge ramps, s
};

dsp::SoundWave synth_vowel(const VowelSpec& spec, int rate);

}  // namespace accent::formants
