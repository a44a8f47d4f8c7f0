#include "accent/resynth.hpp"

#include <cmath>
#include <stdexcept>

#include "accent/curveprep.hpp"
#include "accent/numeric.hpp"

namespace accent::resynth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PerturbationMatrix build_perturbation(const models::PlrModel& plr,
                                      const fpca::FpcaModel& basis) {
    const std::uint64_t basis_hash = fpca::fpca_hash(basis);
    if (plr.fpca_ref != basis_hash)
        throw std::invalid_argument("build_perturbation: PLR was trained on a different basis");
    if (plr.beta.size() > basis.K())
        throw std::invalid_argument("build_perturbation: more weights than components");

    PerturbationMatrix pert;
    pert.plr_ref = models::plr_hash(plr);
    pert.fpca_ref = basis_hash;
    Eigen::RowVectorXd flat = Eigen::RowVectorXd::Zero(basis.components.cols());
    for (int k = 0; k < plr.beta.size(); ++k)
        if (plr.beta[k] != 0.0) flat += plr.beta[k] * basis.components.row(k);
    pert.values = fpca::unstack_rows(flat.transpose(), basis.T, basis.M);
    return pert;
}

Eigen::VectorXd project_perturbation(const PerturbationMatrix& pert,
                                     const fpca::FpcaModel& basis) {
    if (pert.fpca_ref != fpca::fpca_hash(basis))
        throw std::invalid_argument("project_perturbation: basis mismatch");
    VectorXd flat = fpca::stack_rows(pert.values);
    return basis.components * flat * basis.quad_weight();
}

double perturbation_scale(const models::PlrModel& plr, double delta) {
    double norm2 = plr.beta.squaredNorm();
    if (norm2 == 0.0) {
        if (delta == 0.0) return 0.0;
        throw std::invalid_argument("perturbation_scale: PLR has no nonzero weights");
    }
    return delta / norm2;
}

FrameSpan vowel_frames(double frame_rate, int n_frames, double t0, double t1) {
    if (!(t0 < t1)) throw std::invalid_argument("vowel_frames: need t0 < t1");
    int first = int(std::ceil(t0 * frame_rate - 1e-9));
    int last = int(std::floor(t1 * frame_rate + 1e-9));
    first = std::max(first, 0);
    last = std::min(last, n_frames - 1);
    FrameSpan span;
    span.first = first;
    span.count = last - first + 1;
    if (span.count < 5)
        throw std::invalid_argument("vowel_frames: span covers fewer than 5 frames");
    return span;
}

dsp::MfccMatrix perturb_mfcc(const dsp::MfccMatrix& coef, double t0, double t1, double delta,
                             const models::PlrModel& plr, const fpca::FpcaModel& basis,
                             const Eigen::VectorXd& mean_mfcc1) {
    const int T = basis.T;
    if (mean_mfcc1.size() != T)
        throw std::invalid_argument("perturb_mfcc: mean curve is not on the model grid");
    if (int(coef.values.cols()) != basis.M)
        throw std::invalid_argument("perturb_mfcc: coefficient count differs from the basis");

    auto span = vowel_frames(coef.frame_rate, int(coef.values.rows()), t0, t1);
    auto pert = build_perturbation(plr, basis);

    // the vowel's own first coefficient curve, prepared like the corpus was
    VectorXd raw = coef.values.col(0).segment(span.first, span.count);
    VectorXd curve = curveprep::resample(curveprep::smooth_spline_cv(raw), T);
    auto gamma = curveprep::align_pair(curve, mean_mfcc1);

    curveprep::CurveSet on_grid;
    on_grid.values = pert.values;
    auto unwarped = curveprep::apply_warp(on_grid, curveprep::invert_warp(gamma));

    // monotone cubic down to the vowel's frame count
    VectorXd grid_T = numeric::unit_grid(T);
    VectorXd grid_v = numeric::unit_grid(span.count);
    MatrixXd local(span.count, basis.M);
    for (int j = 0; j < basis.M; ++j) {
        numeric::PchipInterpolant pch(grid_T, unwarped.values.col(j));
        local.col(j) = pch.eval(grid_v);
    }

    dsp::MfccMatrix out = coef;
    out.values.block(span.first, 0, span.count, basis.M) +=
        perturbation_scale(plr, delta) * local;
    return out;
}

dsp::SoundWave perturb_word(const dsp::SoundWave& wave, double t0, double t1, double delta,
                            const models::PlrModel& plr, const fpca::FpcaModel& basis,
                            const Eigen::VectorXd& mean_mfcc1, int gl_iterations) {
    auto cfg = dsp::SpectralConfig::standard(wave.rate);
    auto bank = dsp::MelFilterBank::build(40, cfg.fft_size, wave.rate);
    auto X = dsp::stft(wave, cfg);
    Eigen::MatrixXd power = X.cwiseAbs2();
    auto mel = dsp::mel_spectrogram({power, {}, {}}, bank);
    auto coef = dsp::mfcc(mel, basis.M, dsp::default_floor(mel),
                          double(wave.rate) / double(cfg.hop));
    auto shifted = perturb_mfcc(coef, t0, t1, delta, plr, basis, mean_mfcc1);

    // Decoding the shifted coefficients alone yields a whispery word: the
    // filterbank preimage cannot carry harmonic fine structure, and its
    // re-analysis defeats the formant tracker.  Instead reshape the word's
    // own spectrogram by the envelope ratio the shift implies and let the
    // inversion run from the source phases; a zero shift then returns the
    // word untouched.
    Eigen::MatrixXd env_src = dsp::mel_to_power(dsp::mfcc_to_mel(coef, bank.F), bank);
    Eigen::MatrixXd env_new = dsp::mel_to_power(dsp::mfcc_to_mel(shifted, bank.F), bank);
    const double eps = 1e-9 * env_src.maxCoeff();
    Eigen::MatrixXd target =
        power.array() * (env_new.array() + eps) / (env_src.array() + eps);
    return dsp::griffin_lim(target, cfg, wave.rate, gl_iterations, nullptr, &X);
}

}  // namespace accent::resynth
