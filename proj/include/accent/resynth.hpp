#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "accent/dsp.hpp"
#include "accent/fpca.hpp"
#include "accent/models.hpp"

namespace accent::resynth {

// Accent direction in MFCC space: the PLR weights pushed back through the
// FPC basis, one row per grid time, one column per coefficient curve.
struct PerturbationMatrix {
    Eigen::MatrixXd values;       // T x M
    std::uint64_t plr_ref = 0;
    std::uint64_t fpca_ref = 0;
};

// sum_k beta_k phi_k reshaped to the grid; throws if the PLR was trained on
// a different basis than the one supplied.
PerturbationMatrix build_perturbation(const models::PlrModel& plr,
                                      const fpca::FpcaModel& basis);

// Inner products with the FPCs; recovers the PLR weights by orthonormality.
Eigen::VectorXd project_perturbation(const PerturbationMatrix& pert,
                                     const fpca::FpcaModel& basis);

// Multiple that moves the PLR linear predictor by exactly delta.
double perturbation_scale(const models::PlrModel& plr, double delta);

// Frame rows of the spectral analysis whose centers fall inside [t0, t1].
struct FrameSpan {
    int first = 0;
    int count = 0;
};
FrameSpan vowel_frames(double frame_rate, int n_frames, double t0, double t1);

// Shift the vowel rows of a full-word MFCC matrix by delta logit units along
// the accent direction: warp the stored perturbation onto the vowel's own
// time axis (inverse of the alignment of its first coefficient curve to the
// corpus mean), resample to the vowel rows, scale, add. Rows outside the
// span are returned untouched.
dsp::MfccMatrix perturb_mfcc(const dsp::MfccMatrix& coef, double t0, double t1, double delta,
                             const models::PlrModel& plr, const fpca::FpcaModel& basis,
                             const Eigen::VectorXd& mean_mfcc1);

// Full word-in, word-out procedure: analyse, perturb, decode.
dsp::SoundWave perturb_word(const dsp::SoundWave& wave, double t0, double t1, double delta,
                            const models::PlrModel& plr, const fpca::FpcaModel& basis,
                            const Eigen::VectorXd& mean_mfcc1, int gl_iterations = 40);

}  // namespace accent::resynth
