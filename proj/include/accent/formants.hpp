#pragma once

#include "accent/dsp.hpp"

#include <vector>

namespace accent::formants {

struct FormantTrack {
    Eigen::MatrixXd values;    // frames x 4, Hz, F1 < F2 < F3 < F4 per frame
    double frame_rate = 0.0;   // frames per second
    std::vector<bool> voiced;  // frame produced enough resonance candidates
    bool degenerate = false;   // under half the frames voiced
};

// Autocorrelation LPC on pre-emphasized 20 ms frames at 200/s; roots of the
// prediction polynomial give candidate resonances, narrow-bandwidth ones are
// kept and the four lowest become F1..F4. Frames short of four candidates
// inherit the missing slots from the previous frame.
FormantTrack track_formants(const dsp::SoundWave& wave);

// exposed for tests
std::vector<double> lpc_autocorrelation(const Eigen::VectorXd& frame, int order);
std::vector<std::pair<double, double>> lpc_resonances(const std::vector<double>& a, int rate);

}  // namespace accent::formants
