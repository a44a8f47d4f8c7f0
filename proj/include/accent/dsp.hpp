#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "accent/csvio.hpp"

namespace accent::dsp {

struct SoundWave {
    Eigen::VectorXd samples;  // amplitude, nominal full scale [-1, 1]
    int rate = 0;             // Hz
};

// Analysis geometry: 20 ms window, 200 frames/s, FFT padded to a power of 2.
struct SpectralConfig {
    int window_len = 0;      // M, samples
    int hop = 0;             // samples between frame centers
    int fft_size = 0;        // N >= M, power of 2
    Eigen::VectorXd window;  // taper of length window_len

    static SpectralConfig standard(int rate);  // periodic Hann, rate must divide by 200
};

struct Spectrogram {
    Eigen::MatrixXd values;  // frames x (N/2+1), power
    Eigen::VectorXd times;   // frame centers, s
    Eigen::VectorXd freqs;   // Hz, 0 .. rate/2
};

struct MelFilterBank {
    int F = 0;                // bank has F+1 triangular filters, f = 0..F
    int fft_size = 0;
    int rate = 0;
    Eigen::MatrixXd weights;  // (F+1) x (N/2+1), unit peak height

    static MelFilterBank build(int F, int fft_size, int rate);
};

struct MfccMatrix {
    Eigen::MatrixXd values;   // frames x M; column j holds coefficient m = j+1
    double frame_rate = 0.0;  // frames per second
};

// ---- waveform I/O ----

// Reads RIFF PCM16 or IEEE-float WAV; mixes channels down and resamples to
// 16 kHz so every downstream stage sees one rate.
SoundWave read_wav(const std::string& path);
void write_wav(const std::string& path, const SoundWave& wave);

SoundWave resample(const SoundWave& wave, int new_rate);  // windowed sinc

// ---- spectral path ----

double hz_to_mel(double f);
double mel_to_hz(double m);

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Frames centered at i*hop, i = 0..ceil(len/hop)-1, signal zero outside.
Eigen::MatrixXcd stft(const SoundWave& wave, const SpectralConfig& cfg);
Spectrogram spectrogram(const SoundWave& wave, const SpectralConfig& cfg);

Eigen::MatrixXd mel_spectrogram(const Spectrogram& spec, const MelFilterBank& bank);

double default_floor(const Eigen::MatrixXd& melspec);
MfccMatrix mfcc(const Eigen::MatrixXd& melspec, int M, double floor, double frame_rate);

// ---- inverse path ----

// Even-part cepstral inversion back to mel power (exp of reconstructed log).
Eigen::MatrixXd mfcc_to_mel(const MfccMatrix& coef, int F);

// Clamped least-squares lift from mel power to linear power bins.
Eigen::MatrixXd mel_to_power(const Eigen::MatrixXd& melspec, const MelFilterBank& bank);

// Iterative phase recovery against a target power spectrogram; the relative
// magnitude residual per iteration lands in *residuals when given.  A phase
// seed (same shape as power) starts the iteration from those angles instead
// of zero phase — when modifying an existing recording, seeding with its own
// analysis phases keeps the result speech-like.
SoundWave griffin_lim(const Eigen::MatrixXd& power, const SpectralConfig& cfg, int rate,
                      int iterations, std::vector<double>* residuals = nullptr,
                      const Eigen::MatrixXcd* phase_seed = nullptr);

SoundWave resynthesize(const MfccMatrix& coef, const MelFilterBank& bank,
                       const SpectralConfig& cfg, int iterations,
                       std::vector<double>* residuals = nullptr,
                       const Eigen::MatrixXcd* phase_seed = nullptr);

// ---- feature persistence (CSV matrix + JSON header) ----

void save_matrix_artifact(const std::string& base, const Eigen::MatrixXd& m,
                          csvio::Json header);
std::pair<Eigen::MatrixXd, csvio::Json> load_matrix_artifact(const std::string& base);

}  // namespace accent::dsp
