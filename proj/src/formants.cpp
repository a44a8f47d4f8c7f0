#include "accent/formants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace accent::formants {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPreEmphasis = 0.97;
constexpr int kLpcOrder = 12;
constexpr double kMaxBandwidth = 400.0;     // Hz, poles sharp enough to place a slot
constexpr double kVoicedBandwidth = 800.0;  // Hz, poles still counted as resonances
// starting point for slot assignment before any frame has been seen
const double kNeutralTract[4] = {500.0, 1500.0, 2500.0, 3500.0};

}  // namespace

std::vector<double> lpc_autocorrelation(const Eigen::VectorXd& frame, int order) {
    const int n = int(frame.size());
    if (n <= order) throw std::invalid_argument("lpc: frame shorter than order");
    std::vector<double> r(order + 1, 0.0);
    for (int k = 0; k <= order; ++k)
        for (int i = 0; i + k < n; ++i) r[k] += frame[i] * frame[i + k];
    std::vector<double> a(order + 1, 0.0);
    a[0] = 1.0;
    double err = r[0] * (1.0 + 1e-9);  // light ridge keeps Levinson stable
    if (err <= 0.0) return a;          // silent frame: trivial predictor
    for (int i = 1; i <= order; ++i) {
        double acc = r[i];
        for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
        double k = -acc / err;
        std::vector<double> next(a);
        for (int j = 1; j < i; ++j) next[j] = a[j] + k * a[i - j];
        next[i] = k;
        a = std::move(next);
        err *= (1.0 - k * k);
        if (err <= 0.0) break;
    }
    return a;
}

std::vector<std::pair<double, double>> lpc_resonances(const std::vector<double>& a, int rate) {
    const int p = int(a.size()) - 1;
    // roots of z^p + a1 z^{p-1} + ... + ap via the companion matrix
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
    for (int i = 1; i < p; ++i) C(i, i - 1) = 1.0;
    for (int i = 0; i < p; ++i) C(i, p - 1) = -a[p - i];
    Eigen::EigenSolver<Eigen::MatrixXd> es(C, /*computeEigenvectors=*/false);
    std::vector<std::pair<double, double>> out;  // (freq Hz, bandwidth Hz)
    for (int i = 0; i < p; ++i) {
        std::complex<double> z = es.eigenvalues()[i];
        if (z.imag() <= 0.0) continue;  // one of each conjugate pair
        double mag = std::abs(z);
        if (mag <= 0.0 || mag >= 1.0) continue;  // outside-unit poles are not resonances
        double f = std::arg(z) * rate / (2.0 * kPi);
        double bw = -rate / kPi * std::log(mag);
        if (f > 0.0 && f < rate / 2.0) out.emplace_back(f, bw);
    }
    std::sort(out.begin(), out.end());
    return out;
}

FormantTrack track_formants(const dsp::SoundWave& wave) {
    const int rate = wave.rate;
    if (rate % 200 != 0) throw std::invalid_argument("track_formants: rate must divide by 200");
    const int len = int(wave.samples.size());
    const int M = rate / 50;   // 20 ms
    const int hop = rate / 200;
    if (len < rate / 40) throw std::invalid_argument("track_formants: wave shorter than 25 ms");

    Eigen::VectorXd pre(len);
    pre[0] = wave.samples[0];
    for (int i = 1; i < len; ++i) pre[i] = wave.samples[i] - kPreEmphasis * wave.samples[i - 1];

    Eigen::VectorXd window(M);
    for (int j = 0; j < M; ++j)
        window[j] = 0.54 - 0.46 * std::cos(2.0 * kPi * j / (M - 1));

    const int n_frames = (len + hop - 1) / hop;
    const double silence_gate = 1e-6;

    FormantTrack track;
    track.frame_rate = double(rate) / hop;
    track.values.resize(n_frames, 4);
    track.voiced.assign(n_frames, false);

    double slots[4] = {kNeutralTract[0], kNeutralTract[1], kNeutralTract[2], kNeutralTract[3]};
    int n_voiced = 0;

    Eigen::VectorXd frame(M);
    for (int t = 0; t < n_frames; ++t) {
        const int start = t * hop - M / 2;
        for (int j = 0; j < M; ++j) {
            int u = start + j;
            frame[j] = (u >= 0 && u < len) ? pre[u] * window[j] : 0.0;
        }
        std::vector<std::pair<double, double>> poles;
        if (std::sqrt(frame.squaredNorm() / M) > silence_gate) {
            auto a = lpc_autocorrelation(frame, kLpcOrder);
            poles = lpc_resonances(a, rate);
        }
        // voicing asks only that resonances exist; slots demand sharp ones,
        // since back vowels with close F1/F2 blur the second pole well past
        // the placement gate
        int n_res = 0;
        std::vector<std::pair<double, double>> cand;
        for (const auto& [f, bw] : poles) {
            if (bw < kVoicedBandwidth) ++n_res;
            if (bw < kMaxBandwidth) cand.emplace_back(f, bw);
        }
        if (cand.size() > 4) cand.resize(4);  // four lowest

        // greedy nearest-slot assignment against the running track
        bool taken[4] = {false, false, false, false};
        for (const auto& [f, bw] : cand) {
            (void)bw;
            int best = -1;
            double best_d = 0.0;
            for (int s = 0; s < 4; ++s) {
                if (taken[s]) continue;
                double d = std::abs(f - slots[s]);
                if (best < 0 || d < best_d) { best = s; best_d = d; }
            }
            slots[best] = f;
            taken[best] = true;
        }
        // strict ordering repair: unclaimed slots carried forward may collide
        std::sort(std::begin(slots), std::end(slots));
        for (int s = 1; s < 4; ++s)
            if (slots[s] <= slots[s - 1]) slots[s] = slots[s - 1] + 1.0;

        for (int s = 0; s < 4; ++s) track.values(t, s) = slots[s];
        track.voiced[t] = n_res >= 2;
        if (track.voiced[t]) ++n_voiced;
    }

    if (n_voiced == 0) throw std::runtime_error("track_formants: no voiced frames");
    track.degenerate = n_voiced * 2 < n_frames;
    return track;
}

}  // namespace accent::formants
