#include "doctest.h"

#include "accent/dsp.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <random>

using namespace accent;
namespace fs = std::filesystem;

namespace {

dsp::SoundWave sine(double freq, double amp, double seconds, int rate) {
    dsp::SoundWave w;
    w.rate = rate;
    w.samples.resize(int(seconds * rate));
    for (int i = 0; i < w.samples.size(); ++i)
        w.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / rate);
    return w;
}

// harmonic source with two spectral humps, enough structure for codec tests
dsp::SoundWave toy_vowel(double f0, double r1, double r2, double seconds, int rate) {
    dsp::SoundWave w;
    w.rate = rate;
    w.samples = Eigen::VectorXd::Zero(int(seconds * rate));
    for (int k = 1; k * f0 < rate / 2.0 - 200.0; ++k) {
        double f = k * f0;
        double g1 = std::exp(-std::pow((f - r1) / 220.0, 2));
        double g2 = 0.6 * std::exp(-std::pow((f - r2) / 300.0, 2));
        double a = (g1 + g2 + 0.003) / std::sqrt(double(k));
        for (int i = 0; i < w.samples.size(); ++i)
            w.samples[i] += a * std::sin(2.0 * M_PI * f * i / rate + 0.3 * k);
    }
    w.samples *= 0.5 / w.samples.cwiseAbs().maxCoeff();
    return w;
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("pcm16 write/read roundtrip within one quantization step") {
    auto path = (fs::temp_directory_path() / "accent_rt.wav").string();
    auto w = sine(440.0, 0.9, 0.05, 16000);
    dsp::write_wav(path, w);
    auto back = dsp::read_wav(path);
    REQUIRE(back.rate == 16000);
    REQUIRE(back.samples.size() == w.samples.size());
    CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
    fs::remove(path);
}

TEST_CASE("stereo file with identical channels mixes to either channel") {
    auto path = (fs::temp_directory_path() / "accent_st.wav").string();
    auto w = sine(300.0, 0.5, 0.02, 16000);
    {
        // hand-rolled 2-channel PCM16 container
        std::ofstream out(path, std::ios::binary);
        auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
        auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
        uint32_t n = uint32_t(w.samples.size());
        out.write("RIFF", 4); u32(36 + 4 * n); out.write("WAVE", 4);
        out.write("fmt ", 4); u32(16); u16(1); u16(2); u32(16000); u32(16000 * 4); u16(4); u16(16);
        out.write("data", 4); u32(4 * n);
        for (uint32_t i = 0; i < n; ++i) {
            int16_t v = int16_t(std::clamp(std::round(w.samples[i] * 32768.0), -32768.0, 32767.0));
            u16(uint16_t(v)); u16(uint16_t(v));
        }
    }
    auto back = dsp::read_wav(path);
    REQUIRE(back.samples.size() == w.samples.size());
    CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
    fs::remove(path);
}

TEST_CASE("8 kHz input is resampled to 16 kHz with doubled length") {
    dsp::SoundWave ramp;
    ramp.rate = 8000;
    ramp.samples.resize(800);
    for (int i = 0; i < 800; ++i) ramp.samples[i] = i / 800.0 - 0.5;
    auto up = dsp::resample(ramp, 16000);
    CHECK(std::abs(int(up.samples.size()) - 1600) <= 1);
    CHECK(up.rate == 16000);
    // interior of the ramp survives (edges taper from zero extension)
    for (int i = 400; i < 1200; ++i)
        CHECK(up.samples[i] == doctest::Approx(i / 1600.0 - 0.5).epsilon(0.01));
}

TEST_CASE("mel scale formula and inverse") {
    CHECK(dsp::hz_to_mel(0.0) == 0.0);
    CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
    for (double f : {100.0, 1000.0, 8000.0})
        CHECK(std::abs(dsp::mel_to_hz(dsp::hz_to_mel(f)) - f) < 1e-9);
    CHECK_THROWS(dsp::hz_to_mel(-1.0));
    // strictly increasing and concave on [0, 8000]
    double prev = dsp::hz_to_mel(0.0), prev_diff = 1e9;
    for (int i = 1; i <= 200; ++i) {
        double m = dsp::hz_to_mel(8000.0 * i / 200.0);
        CHECK(m > prev);
        double diff = m - prev;
        CHECK(diff < prev_diff + 1e-12);
        prev = m; prev_diff = diff;
    }
}

TEST_CASE("spectrogram basics") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    CHECK(cfg.window_len == 320);
    CHECK(cfg.hop == 80);
    CHECK(cfg.fft_size == 512);

    dsp::SoundWave zero;
    zero.rate = 16000;
    zero.samples = Eigen::VectorXd::Zero(1600);
    auto sp = dsp::spectrogram(zero, cfg);
    CHECK(sp.values.maxCoeff() == 0.0);
    CHECK(sp.freqs[0] == 0.0);
    CHECK(sp.freqs[sp.freqs.size() - 1] == doctest::Approx(8000.0));

    dsp::SoundWave tiny;
    tiny.rate = 16000;
    tiny.samples = Eigen::VectorXd::Zero(100);
    CHECK_THROWS(dsp::spectrogram(tiny, cfg));
}

TEST_CASE("pure tone at an exact bin peaks at that bin in every frame") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    const int k0 = 50;  // 50 * 16000/512 = 1562.5 Hz
    auto w = sine(double(k0) * 16000.0 / 512.0, 1.0, 0.1, 16000);
    auto sp = dsp::spectrogram(w, cfg);
    // skip edge frames where zero extension dominates the window
    for (int t = 2; t < sp.values.rows() - 2; ++t) {
        int arg = 0;
        sp.values.row(t).maxCoeff(&arg);
        CHECK(arg == k0);
    }
}

TEST_CASE("per-frame Parseval identity") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    std::mt19937 rng(11);
    std::normal_distribution<double> gauss;
    dsp::SoundWave w;
    w.rate = 16000;
    w.samples.resize(1600);
    for (int i = 0; i < 1600; ++i) w.samples[i] = gauss(rng);
    auto sp = dsp::spectrogram(w, cfg);
    const int N = cfg.fft_size;
    for (int t = 0; t < sp.values.rows(); ++t) {
        // full-spectrum sum via Hermitian symmetry of the stored half
        double lhs = sp.values(t, 0) + sp.values(t, N / 2);
        for (int k = 1; k < N / 2; ++k) lhs += 2.0 * sp.values(t, k);
        double rhs = 0.0;
        int start = t * cfg.hop - cfg.window_len / 2;
        for (int j = 0; j < cfg.window_len; ++j) {
            int u = start + j;
            double s = (u >= 0 && u < 1600) ? w.samples[u] : 0.0;
            rhs += s * s * cfg.window[j] * cfg.window[j];
        }
        rhs *= N;
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(rhs, 1.0));
    }
}

TEST_CASE("spectrogram power scales quadratically") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    auto w = toy_vowel(120.0, 700.0, 1400.0, 0.08, 16000);
    auto s1 = dsp::spectrogram(w, cfg);
    dsp::SoundWave w2 = w;
    w2.samples *= 2.0;
    auto s2 = dsp::spectrogram(w2, cfg);
    CHECK((s2.values - 4.0 * s1.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mel filterbank shape and coverage") {
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    REQUIRE(bank.weights.rows() == 41);
    REQUIRE(bank.weights.cols() == 257);
    CHECK(bank.weights.minCoeff() >= 0.0);
    for (int f = 0; f <= 40; ++f) CHECK(bank.weights.row(f).maxCoeff() > 0.0);
    // centers ordered: weighted mean frequency increases with f
    double prev = -1.0;
    for (int f = 0; f <= 40; ++f) {
        double num = 0.0, den = 0.0;
        for (int k = 0; k < 257; ++k) {
            num += bank.weights(f, k) * k;
            den += bank.weights(f, k);
        }
        double center = num / den;
        CHECK(center > prev);
        prev = center;
    }
    // every bin between the first and last filter peaks is covered
    int first_peak = 0, last_peak = 0;
    bank.weights.row(0).maxCoeff(&first_peak);
    bank.weights.row(40).maxCoeff(&last_peak);
    Eigen::VectorXd total = bank.weights.colwise().sum();
    for (int k = first_peak; k <= last_peak; ++k) CHECK(total[k] > 0.0);
}

TEST_CASE("mel spectrogram equals the naive double loop") {
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    dsp::Spectrogram sp;
    sp.values.resize(6, 257);
    for (int t = 0; t < 6; ++t)
        for (int k = 0; k < 257; ++k) sp.values(t, k) = unif(rng);
    auto mel = dsp::mel_spectrogram(sp, bank);
    REQUIRE(mel.rows() == 6);
    REQUIRE(mel.cols() == 41);
    for (int t = 0; t < 6; ++t)
        for (int f = 0; f <= 40; ++f) {
            double acc = 0.0;
            for (int k = 0; k < 257; ++k) acc += sp.values(t, k) * bank.weights(f, k);
            CHECK(mel(t, f) == doctest::Approx(acc).epsilon(1e-12));
        }
    // all-ones spectrogram: rows equal per-filter weight sums
    dsp::Spectrogram ones;
    ones.values = Eigen::MatrixXd::Ones(2, 257);
    auto msum = dsp::mel_spectrogram(ones, bank);
    Eigen::VectorXd wsum = bank.weights.rowwise().sum();
    CHECK((msum.row(0).transpose() - wsum).cwiseAbs().maxCoeff() < 1e-12);
    // one-hot bin k: column f equals b_{f,k} * value
    dsp::Spectrogram hot;
    hot.values = Eigen::MatrixXd::Zero(1, 257);
    hot.values(0, 100) = 3.5;
    auto mhot = dsp::mel_spectrogram(hot, bank);
    for (int f = 0; f <= 40; ++f)
        CHECK(mhot(0, f) == doctest::Approx(3.5 * bank.weights(f, 100)).epsilon(1e-14));
}

TEST_CASE("mfcc of a flat mel row isolates the first coefficient") {
    const int F = 40;
    double c = 1.7;
    Eigen::MatrixXd mel = Eigen::MatrixXd::Constant(1, F + 1, std::exp(c));
    auto out = dsp::mfcc(mel, 40, 1e-20, 200.0);
    CHECK(std::abs(out.values(0, 0) - c * (F + 1) / double(F)) < 1e-10);
    for (int m = 2; m <= 40; ++m) CHECK(std::abs(out.values(0, m - 1)) < 1e-10);
    // scaling the row by alpha moves only the first coefficient
    auto out2 = dsp::mfcc(Eigen::MatrixXd(3.0 * mel), 40, 1e-20, 200.0);
    CHECK(out2.values(0, 0) - out.values(0, 0) ==
          doctest::Approx(std::log(3.0) * (F + 1) / double(F)).epsilon(1e-10));
    for (int m = 2; m <= 40; ++m)
        CHECK(std::abs(out2.values(0, m - 1) - out.values(0, m - 1)) < 1e-10);
}

TEST_CASE("mfcc matches the direct complex-sum oracle") {
    const int F = 40;
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> unif(0.01, 5.0);
    Eigen::MatrixXd mel(2, F + 1);
    for (int t = 0; t < 2; ++t)
        for (int f = 0; f <= F; ++f) mel(t, f) = unif(rng);
    double floor = 1e-12;
    auto out = dsp::mfcc(mel, 40, floor, 200.0);
    for (int t = 0; t < 2; ++t)
        for (int m = 1; m <= 40; ++m) {
            std::complex<double> acc(0, 0);
            for (int f = 0; f <= F; ++f)
                acc += std::log(std::max(mel(t, f), floor)) *
                       std::exp(std::complex<double>(0.0, 2.0 * M_PI * (m - 1) * f / (F + 1)));
            CHECK(out.values(t, m - 1) == doctest::Approx(acc.real() / F).epsilon(1e-12));
        }
    CHECK_THROWS(dsp::mfcc(mel, F + 2, floor, 200.0));
}

TEST_CASE("mfcc forward path is deterministic") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    auto w = toy_vowel(110.0, 600.0, 1500.0, 0.1, 16000);
    auto mel = dsp::mel_spectrogram(dsp::spectrogram(w, cfg), bank);
    auto a = dsp::mfcc(mel, 40, dsp::default_floor(mel), 200.0);
    auto b = dsp::mfcc(mel, 40, dsp::default_floor(mel), 200.0);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cepstral inversion keeps the analysis coefficients") {
    // re-analysis of the even-part reconstruction reproduces the MFCCs
    const int F = 40;
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> unif(0.05, 4.0);
    Eigen::MatrixXd mel(3, F + 1);
    for (int t = 0; t < 3; ++t)
        for (int f = 0; f <= F; ++f) mel(t, f) = unif(rng);
    auto coef = dsp::mfcc(mel, 40, 1e-12, 200.0);
    Eigen::MatrixXd back = dsp::mfcc_to_mel(coef, F);
    auto coef2 = dsp::mfcc(back, 40, 1e-12, 200.0);
    CHECK((coef.values - coef2.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mel power lift is a right inverse of the filterbank") {
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    auto cfg = dsp::SpectralConfig::standard(16000);
    auto w = toy_vowel(125.0, 800.0, 1300.0, 0.06, 16000);
    auto mel = dsp::mel_spectrogram(dsp::spectrogram(w, cfg), bank);
    Eigen::MatrixXd p = dsp::mel_to_power(mel, bank);
    CHECK(p.minCoeff() >= 0.0);
    Eigen::MatrixXd again = p * bank.weights.transpose();
    double rel = (again - mel).norm() / mel.norm();
    CHECK(rel < 0.05);  // clamping can bend the exact least-squares fit a little
}

TEST_CASE("griffin-lim residual is monotone and silence stays silent") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    auto w = toy_vowel(120.0, 700.0, 1400.0, 0.12, 16000);
    auto power = dsp::spectrogram(w, cfg).values;
    std::vector<double> res;
    auto out = dsp::griffin_lim(power, cfg, 16000, 25, &res);
    REQUIRE(res.size() == 25);
    for (size_t i = 1; i < res.size(); ++i) CHECK(res[i] <= res[i - 1] + 1e-12);
    CHECK(out.samples.cwiseAbs().maxCoeff() > 0.0);
    CHECK_THROWS(dsp::griffin_lim(power, cfg, 16000, 0));

    // all-floor MFCCs decode to (near) silence
    Eigen::MatrixXd mel = Eigen::MatrixXd::Constant(50, 41, 1e-12);
    auto coef = dsp::mfcc(mel, 40, 1e-12, 200.0);
    auto quiet = dsp::resynthesize(coef, bank, cfg, 5);
    double rms = std::sqrt(quiet.samples.squaredNorm() / quiet.samples.size());
    CHECK(rms < 1e-3);
}

TEST_CASE("analysis-resynthesis roundtrip preserves mfcc 2..13") {
    auto cfg = dsp::SpectralConfig::standard(16000);
    auto bank = dsp::MelFilterBank::build(40, 512, 16000);
    auto w = toy_vowel(120.0, 650.0, 1700.0, 0.3, 16000);
    auto mel = dsp::mel_spectrogram(dsp::spectrogram(w, cfg), bank);
    auto coef = dsp::mfcc(mel, 40, dsp::default_floor(mel), 200.0);
    std::vector<double> res;
    auto rebuilt = dsp::resynthesize(coef, bank, cfg, 60, &res);
    auto mel2 = dsp::mel_spectrogram(dsp::spectrogram(rebuilt, cfg), bank);
    auto coef2 = dsp::mfcc(mel2, 40, dsp::default_floor(mel), 200.0);
    int T = int(std::min(coef.values.rows(), coef2.values.rows()));
    for (int m = 2; m <= 13; ++m) {
        double sq = 0.0;
        for (int t = 0; t < T; ++t)
            sq += std::pow(coef.values(t, m - 1) - coef2.values(t, m - 1), 2);
        double rmse = std::sqrt(sq / T);
        CHECK(rmse <= 0.5);
    }
}

TEST_CASE("matrix artifact persists with header") {
    auto base = (fs::temp_directory_path() / "accent_artifact").string();
    Eigen::MatrixXd m(3, 4);
    m.setRandom();
    csvio::Json h;
    h["rate"] = 16000;
    h["frame_rate"] = 200;
    dsp::save_matrix_artifact(base, m, h);
    auto [back, header] = dsp::load_matrix_artifact(base);
    CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
    CHECK(header["rate"].get<int>() == 16000);
    fs::remove(base + ".csv");
    fs::remove(base + ".json");
}

}  // TEST_SUITE
