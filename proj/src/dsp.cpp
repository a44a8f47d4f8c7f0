#include "accent/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace accent::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

SpectralConfig SpectralConfig::standard(int rate) {
    if (rate <= 0 || rate % 200 != 0 || rate % 50 != 0)
        throw std::invalid_argument("SpectralConfig: rate must be a multiple of 200 Hz");
    SpectralConfig cfg;
    cfg.window_len = rate / 50;  // 20 ms
    cfg.hop = rate / 200;        // 200 frames/s
    cfg.fft_size = next_pow2(cfg.window_len);
    cfg.window.resize(cfg.window_len);
    for (int j = 0; j < cfg.window_len; ++j)
        cfg.window[j] = 0.5 * (1.0 - std::cos(2.0 * kPi * j / cfg.window_len));
    return cfg;
}

// ---- WAV ----

namespace {

uint32_t rd_u32(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

}  // namespace

SoundWave read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open wav: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("not a RIFF/WAVE file: " + path);

    uint16_t fmt_tag = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char* data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        uint32_t chunk_len = rd_u32(&bytes[pos + 4]);
        const unsigned char* body = &bytes[pos + 8];
        if (pos + 8 + chunk_len > bytes.size())
            chunk_len = uint32_t(bytes.size() - pos - 8);  // tolerate truncated size fields
        if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
            if (chunk_len < 16) throw std::runtime_error("corrupt fmt chunk: " + path);
            fmt_tag = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
            data = body;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }
    if (!data || rate == 0 || channels == 0)
        throw std::runtime_error("missing fmt/data chunk: " + path);

    size_t bytes_per_sample;
    if (fmt_tag == 1 && bits == 16) bytes_per_sample = 2;
    else if (fmt_tag == 3 && bits == 32) bytes_per_sample = 4;
    else throw std::runtime_error("unsupported wav codec (want PCM16 or float32): " + path);

    size_t n_frames = data_len / (bytes_per_sample * channels);
    if (n_frames == 0) throw std::runtime_error("empty wav: " + path);

    SoundWave w;
    w.rate = int(rate);
    w.samples.resize(Eigen::Index(n_frames));
    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data + (i * channels + c) * bytes_per_sample;
            if (bytes_per_sample == 2) {
                int16_t v = int16_t(uint16_t(p[0]) | uint16_t(p[1]) << 8);
                acc += double(v) / 32768.0;
            } else {
                uint32_t u = rd_u32(p);
                float f;
                std::memcpy(&f, &u, 4);
                acc += double(f);
            }
        }
        w.samples[Eigen::Index(i)] = acc / channels;
    }
    if (w.rate != 16000) w = resample(w, 16000);
    return w;
}

void write_wav(const std::string& path, const SoundWave& wave) {
    if (wave.rate <= 0 || wave.samples.size() == 0)
        throw std::invalid_argument("write_wav: empty wave");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write wav: " + path);
    auto wr_u32 = [&](uint32_t v) {
        unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                              (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    auto wr_u16 = [&](uint16_t v) {
        unsigned char b[2] = {(unsigned char)(v), (unsigned char)(v >> 8)};
        out.write(reinterpret_cast<char*>(b), 2);
    };
    uint32_t n = uint32_t(wave.samples.size());
    out.write("RIFF", 4);
    wr_u32(36 + 2 * n);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    wr_u32(16);
    wr_u16(1);  // PCM
    wr_u16(1);  // mono
    wr_u32(uint32_t(wave.rate));
    wr_u32(uint32_t(wave.rate) * 2);
    wr_u16(2);
    wr_u16(16);
    out.write("data", 4);
    wr_u32(2 * n);
    for (uint32_t i = 0; i < n; ++i) {
        double s = std::round(wave.samples[i] * 32768.0);
        int16_t v = int16_t(std::clamp(s, -32768.0, 32767.0));
        wr_u16(uint16_t(v));
    }
}

SoundWave resample(const SoundWave& wave, int new_rate) {
    if (new_rate <= 0) throw std::invalid_argument("resample: bad rate");
    if (new_rate == wave.rate) return wave;
    const int in_len = int(wave.samples.size());
    const double ratio = double(wave.rate) / double(new_rate);  // input samples per output
    const int out_len = int(std::llround(double(in_len) / ratio));
    // cutoff at the narrower Nyquist; widen the kernel when decimating
    const double fc = std::min(1.0, 1.0 / ratio);  // relative to input Nyquist
    const int half = int(std::ceil(32.0 / fc));
    SoundWave out;
    out.rate = new_rate;
    out.samples.resize(std::max(out_len, 1));
    for (int n = 0; n < out.samples.size(); ++n) {
        double t = n * ratio;
        int m0 = int(std::floor(t)) - half + 1;
        int m1 = int(std::floor(t)) + half;
        double acc = 0.0, norm = 0.0;
        for (int m = m0; m <= m1; ++m) {
            double x = t - m;
            double sinc = (x == 0.0) ? 1.0 : std::sin(kPi * fc * x) / (kPi * fc * x);
            double win = 0.5 * (1.0 + std::cos(kPi * x / half));  // Hann taper
            double h = fc * sinc * win;
            norm += h;
            if (m >= 0 && m < in_len) acc += wave.samples[m] * h;
        }
        out.samples[n] = norm > 0 ? acc / norm : 0.0;
    }
    return out;
}

// ---- spectral path ----

double hz_to_mel(double f) {
    if (f < 0) throw std::invalid_argument("hz_to_mel: negative frequency");
    return 2595.0 * std::log10(1.0 + f / 700.0);
}

double mel_to_hz(double m) {
    if (m < 0) throw std::invalid_argument("mel_to_hz: negative mel");
    return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const int n = int(a.size());
    if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of 2");
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (int j = 0; j < len / 2; ++j) {
                auto u = a[i + j];
                auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= n;
}

Eigen::MatrixXcd stft(const SoundWave& wave, const SpectralConfig& cfg) {
    const int len = int(wave.samples.size());
    const int M = cfg.window_len, N = cfg.fft_size, hop = cfg.hop;
    if (len < M) throw std::invalid_argument("stft: wave shorter than one window");
    if (N < M || !is_pow2(N)) throw std::invalid_argument("stft: bad fft size");
    const int n_frames = (len + hop - 1) / hop;
    const int bins = N / 2 + 1;
    Eigen::MatrixXcd out(n_frames, bins);
    std::vector<std::complex<double>> buf(N);
    for (int t = 0; t < n_frames; ++t) {
        const int start = t * hop - M / 2;
        for (int j = 0; j < N; ++j) buf[j] = 0.0;
        for (int j = 0; j < M; ++j) {
            int u = start + j;
            if (u >= 0 && u < len) buf[j] = wave.samples[u] * cfg.window[j];
        }
        fft_inplace(buf, false);
        for (int k = 0; k < bins; ++k) out(t, k) = buf[k];
    }
    return out;
}

Spectrogram spectrogram(const SoundWave& wave, const SpectralConfig& cfg) {
    Eigen::MatrixXcd X = stft(wave, cfg);
    Spectrogram s;
    s.values = X.cwiseAbs2();
    s.times.resize(X.rows());
    for (int t = 0; t < X.rows(); ++t) s.times[t] = double(t) * cfg.hop / wave.rate;
    s.freqs.resize(X.cols());
    for (int k = 0; k < X.cols(); ++k)
        s.freqs[k] = double(k) * wave.rate / cfg.fft_size;
    return s;
}

MelFilterBank MelFilterBank::build(int F, int fft_size, int rate) {
    if (F < 1 || fft_size < 4 || rate <= 0) throw std::invalid_argument("MelFilterBank: bad args");
    const int bins = fft_size / 2 + 1;
    // F+1 filters need F+3 evenly spaced mel breakpoints over [0, rate/2]
    Eigen::VectorXd edges(F + 3);
    double mel_max = hz_to_mel(rate / 2.0);
    for (int i = 0; i < F + 3; ++i) edges[i] = mel_max * double(i) / double(F + 2);
    MelFilterBank bank;
    bank.F = F;
    bank.fft_size = fft_size;
    bank.rate = rate;
    bank.weights = Eigen::MatrixXd::Zero(F + 1, bins);
    for (int f = 0; f <= F; ++f) {
        double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
        bool any = false;
        for (int k = 0; k < bins; ++k) {
            double m = hz_to_mel(double(k) * rate / fft_size);
            double w = 0.0;
            if (m > lo && m < hi)
                w = m <= mid ? (m - lo) / (mid - lo) : (hi - m) / (hi - mid);
            bank.weights(f, k) = w;
            any = any || w > 0;
        }
        if (!any) throw std::runtime_error("MelFilterBank: filter with no support; too many filters for this FFT size");
    }
    return bank;
}

Eigen::MatrixXd mel_spectrogram(const Spectrogram& spec, const MelFilterBank& bank) {
    if (spec.values.cols() != bank.weights.cols())
        throw std::invalid_argument("mel_spectrogram: bin count mismatch");
    return spec.values * bank.weights.transpose();
}

double default_floor(const Eigen::MatrixXd& melspec) {
    double mx = melspec.size() ? melspec.maxCoeff() : 0.0;
    return mx > 0 ? 1e-10 * mx : 1e-30;
}

MfccMatrix mfcc(const Eigen::MatrixXd& melspec, int M, double floor, double frame_rate) {
    const int F = int(melspec.cols()) - 1;
    if (M > F + 1) throw std::invalid_argument("mfcc: M exceeds filter count");
    if (!(floor > 0)) throw std::invalid_argument("mfcc: floor must be positive");
    MfccMatrix out;
    out.frame_rate = frame_rate;
    out.values.resize(melspec.rows(), M);
    for (int t = 0; t < melspec.rows(); ++t) {
        for (int m = 1; m <= M; ++m) {
            std::complex<double> acc(0.0, 0.0);
            for (int f = 0; f <= F; ++f) {
                double ang = 2.0 * kPi * double(m - 1) * f / double(F + 1);
                acc += std::log(std::max(melspec(t, f), floor)) *
                       std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out.values(t, m - 1) = acc.real() / double(F);
        }
    }
    return out;
}

// ---- inverse path ----

Eigen::MatrixXd mfcc_to_mel(const MfccMatrix& coef, int F) {
    const int M = int(coef.values.cols());
    if (M > F + 1) throw std::invalid_argument("mfcc_to_mel: M exceeds filter count");
    const int P = F + 1;
    Eigen::MatrixXd mel(coef.values.rows(), P);
    std::vector<double> re(P);
    for (int t = 0; t < coef.values.rows(); ++t) {
        // real parts of all P transform coefficients: the first M directly,
        // the rest mirrored (real input means Hermitian coefficients)
        for (int j = 0; j < P; ++j) re[j] = 0.0;
        for (int j = 0; j < M; ++j) re[j] = coef.values(t, j) * double(F);
        for (int j = M; j < P; ++j) re[j] = re[P - j];
        for (int f = 0; f < P; ++f) {
            double acc = 0.0;
            for (int j = 0; j < P; ++j)
                acc += re[j] * std::cos(2.0 * kPi * double(j) * f / double(P));
            mel(t, f) = std::exp(acc / double(P));
        }
    }
    return mel;
}

Eigen::MatrixXd mel_to_power(const Eigen::MatrixXd& melspec, const MelFilterBank& bank) {
    if (melspec.cols() != bank.weights.rows())
        throw std::invalid_argument("mel_to_power: filter count mismatch");
    const Eigen::MatrixXd& B = bank.weights;
    Eigen::MatrixXd G = B * B.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("mel_to_power: singular filterbank Gram matrix");
    // least-squares preimage, clamped to the nonnegative cone
    Eigen::MatrixXd P = (llt.solve(melspec.transpose()).transpose() * B).cwiseMax(0.0);
    return P;
}

namespace {

// least-squares ISTFT: per-sample overlap-add weighted by the window, then
// divided by the accumulated squared window
SoundWave istft_ls(const Eigen::MatrixXcd& X, const SpectralConfig& cfg, int rate, int len) {
    const int M = cfg.window_len, N = cfg.fft_size, hop = cfg.hop;
    const int n_frames = int(X.rows());
    Eigen::VectorXd num = Eigen::VectorXd::Zero(len);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(len);
    std::vector<std::complex<double>> buf(N);
    for (int t = 0; t < n_frames; ++t) {
        for (int k = 0; k <= N / 2; ++k) buf[k] = X(t, k);
        for (int k = N / 2 + 1; k < N; ++k) buf[k] = std::conj(X(t, N - k));
        fft_inplace(buf, true);
        const int start = t * hop - M / 2;
        for (int j = 0; j < M; ++j) {
            int u = start + j;
            if (u < 0 || u >= len) continue;
            num[u] += cfg.window[j] * buf[j].real();
            den[u] += cfg.window[j] * cfg.window[j];
        }
    }
    SoundWave out;
    out.rate = rate;
    out.samples = Eigen::VectorXd::Zero(len);
    for (int u = 0; u < len; ++u)
        if (den[u] > 1e-12) out.samples[u] = num[u] / den[u];
    return out;
}

}  // namespace

SoundWave griffin_lim(const Eigen::MatrixXd& power, const SpectralConfig& cfg, int rate,
                      int iterations, std::vector<double>* residuals,
                      const Eigen::MatrixXcd* phase_seed) {
    if (iterations < 1) throw std::invalid_argument("griffin_lim: iterations < 1");
    const int n_frames = int(power.rows());
    const int len = n_frames * cfg.hop;
    Eigen::MatrixXd mag = power.cwiseMax(0.0).cwiseSqrt();
    const double mag_norm = std::max(mag.norm(), 1e-300);
    if (residuals) residuals->clear();
    // zero initial phase unless seeded; either way the procedure stays
    // deterministic
    Eigen::MatrixXcd X = mag.cast<std::complex<double>>();
    if (phase_seed) {
        if (phase_seed->rows() != mag.rows() || phase_seed->cols() != mag.cols())
            throw std::invalid_argument("griffin_lim: phase seed shape mismatch");
        for (int t = 0; t < X.rows(); ++t)
            for (int k = 0; k < X.cols(); ++k) {
                double a = std::abs((*phase_seed)(t, k));
                if (a > 0.0) X(t, k) = (*phase_seed)(t, k) / a * mag(t, k);
            }
    }
    SoundWave x;
    for (int it = 0; it < iterations; ++it) {
        x = istft_ls(X, cfg, rate, len);
        Eigen::MatrixXcd Y = stft(x, cfg);
        if (residuals)
            residuals->push_back((Y.cwiseAbs() - mag).norm() / mag_norm);
        for (int t = 0; t < Y.rows(); ++t)
            for (int k = 0; k < Y.cols(); ++k) {
                double a = std::abs(Y(t, k));
                X(t, k) = a > 0 ? Y(t, k) / a * mag(t, k)
                                : std::complex<double>(mag(t, k), 0.0);
            }
    }
    return istft_ls(X, cfg, rate, len);
}

SoundWave resynthesize(const MfccMatrix& coef, const MelFilterBank& bank,
                       const SpectralConfig& cfg, int iterations,
                       std::vector<double>* residuals,
                       const Eigen::MatrixXcd* phase_seed) {
    Eigen::MatrixXd mel = mfcc_to_mel(coef, bank.F);
    Eigen::MatrixXd power = mel_to_power(mel, bank);
    return griffin_lim(power, cfg, bank.rate, iterations, residuals, phase_seed);
}

// ---- persistence ----

void save_matrix_artifact(const std::string& base, const Eigen::MatrixXd& m,
                          csvio::Json header) {
    header["format_version"] = 1;
    header["rows"] = m.rows();
    header["cols"] = m.cols();
    csvio::write_json(base + ".json", header);
    csvio::write_matrix_csv(base + ".csv", m);
}

std::pair<Eigen::MatrixXd, csvio::Json> load_matrix_artifact(const std::string& base) {
    csvio::Json header = csvio::read_json(base + ".json");
    if (!header.contains("format_version") || header["format_version"].get<int>() != 1)
        throw std::runtime_error("unsupported artifact version: " + base);
    Eigen::MatrixXd m = csvio::read_matrix_csv(base + ".csv");
    if (m.rows() != header["rows"].get<Eigen::Index>() ||
        m.cols() != header["cols"].get<Eigen::Index>())
        throw std::runtime_error("artifact shape mismatch: " + base);
    return {m, header};
}

}  // namespace accent::dsp
