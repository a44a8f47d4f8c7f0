#include "accent/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <utility>

#include "accent/curveprep.hpp"
#include "accent/dsp.hpp"
#include "accent/formants.hpp"
#include "accent/fpca.hpp"
#include "accent/geo.hpp"
#include "accent/numeric.hpp"
#include "accent/resynth.hpp"
#include "accent/vowel_synth.hpp"

namespace accent::pipeline {

namespace fs = std::filesystem;
using csvio::Json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const char* kManifestMagic = "# accent manifest v1";
const std::vector<std::string> kManifestColumns = {
    "wav_path", "word",       "speaker_id", "age", "sex",      "dialect",
    "occupation", "activity", "lon",        "lat", "duration", "label"};

std::string strip_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

std::string quote_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += "\"\"";
        else q += c;
    }
    return q + "\"";
}

bool in_list(const std::vector<std::string>& list, const std::string& s) {
    return std::find(list.begin(), list.end(), s) != list.end();
}

int label_code(const std::string& label) {
    if (label == "North") return 0;
    if (label == "South") return 1;
    return -1;
}

Json mat_json(const MatrixXd& m) {
    Json rows = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(csvio::num(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd json_mat(const Json& j) {
    int rows = int(j.size());
    int cols = rows ? int(j[0].size()) : 0;
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = csvio::as_num(j[size_t(r)][size_t(c)]);
    return m;
}

Json vec_json(const VectorXd& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(csvio::num(v[i]));
    return a;
}

VectorXd json_vec(const Json& j) {
    VectorXd v(int(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = csvio::as_num(j[size_t(i)]);
    return v;
}

Json str_array(const std::vector<std::string>& v) {
    Json a = Json::array();
    for (const auto& s : v) a.push_back(s);
    return a;
}

std::vector<std::string> json_strs(const Json& j) {
    std::vector<std::string> v;
    for (const auto& e : j) v.push_back(e.get<std::string>());
    return v;
}

double get_num(const Json& j, const std::string& key, double fallback) {
    return j.contains(key) ? csvio::as_num(j.at(key)) : fallback;
}

// uniform bits -> standard normal, pinned so corpora do not depend on the
// library's distribution internals
double gaussian(std::mt19937_64& rng) {
    double u1 = (double(rng() >> 11) + 1.0) / 9007199254740993.0;
    double u2 = double(rng() >> 11) / 9007199254740992.0;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::string pad_int(int v, int width) {
    std::string s = std::to_string(v);
    while (int(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

// "dir/file.csv" -> "dir/file" for naming sidecars
std::string strip_ext(const std::string& path) {
    auto slash = path.find_last_of("/\\");
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
    return path.substr(0, dot);
}

void make_parent_dirs(const std::string& path) {
    auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void embed_config(const std::string& json_path, const RunConfig& cfg) {
    Json j = csvio::read_json(json_path);
    j["config"] = cfg.to_json();
    csvio::write_json(json_path, j);
}

curveprep::CurveSet combined_set(const models::SoundData& s) {
    curveprep::CurveSet c;
    c.kind = curveprep::CurveKind::mfcc;
    c.values.resize(s.mfcc.values.rows(), s.mfcc.values.cols() + s.formant.values.cols());
    c.values << s.mfcc.values, s.formant.values;
    return c;
}

void truncate_basis(fpca::FpcaModel& basis, int K) {
    if (K <= 0 || basis.K() <= K) return;
    basis.components = basis.components.topRows(K).eval();
    basis.eigenvalues = basis.eigenvalues.head(K).eval();
}

std::vector<models::SoundData> labelled_sounds(const PrepData& prep) {
    std::vector<models::SoundData> out;
    for (const auto& s : prep.aligned)
        if (s.label >= 0) out.push_back(s);
    if (out.empty()) throw std::runtime_error("no labelled sounds in the prepared corpus");
    return out;
}

}  // namespace

// ---- manifests ----

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != kManifestMagic)
        throw std::runtime_error("manifest " + path + ": missing '" + kManifestMagic + "' line");
    if (!std::getline(in, line))
        throw std::runtime_error("manifest " + path + ": missing header row");

    auto header = csvio::split_csv_line(strip_cr(line));
    std::map<std::string, int> pos;
    for (int i = 0; i < int(header.size()); ++i) pos[header[size_t(i)]] = i;
    std::vector<int> required;
    for (const auto& name : kManifestColumns) {
        auto it = pos.find(name);
        if (it == pos.end())
            throw std::runtime_error("manifest " + path + ": missing column " + name);
        required.push_back(it->second);
    }

    Manifest man;
    std::vector<int> extra_pos;
    for (int i = 0; i < int(header.size()); ++i)
        if (!in_list(kManifestColumns, header[size_t(i)])) {
            man.extra_columns.push_back(header[size_t(i)]);
            extra_pos.push_back(i);
        }

    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto cells = csvio::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("manifest " + path + ": line " + std::to_string(line_no) +
                                     " has " + std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        auto cell = [&](int k) { return cells[size_t(required[size_t(k)])]; };
        ManifestRow row;
        row.wav_path = cell(0);
        row.word = cell(1);
        row.speaker_id = cell(2);
        std::string age = cell(3);
        if (age.empty() || age == "unknown" || age == "NA") {
            row.age = -1;
        } else {
            try {
                row.age = std::stoi(age);
            } catch (...) {
                throw std::runtime_error("manifest " + path + ": line " + std::to_string(line_no) +
                                         ": bad age '" + age + "'");
            }
        }
        row.sex = cell(4);
        row.dialect = cell(5);
        row.occupation = cell(6);
        row.activity = cell(7);
        try {
            row.lon = cell(8).empty() ? 0.0 : std::stod(cell(8));
            row.lat = cell(9).empty() ? 0.0 : std::stod(cell(9));
            row.duration = std::stod(cell(10));
        } catch (...) {
            throw std::runtime_error("manifest " + path + ": line " + std::to_string(line_no) +
                                     ": bad numeric field");
        }
        if (!(row.duration > 0.0))
            throw std::runtime_error("manifest " + path + ": line " + std::to_string(line_no) +
                                     ": duration must be positive");
        row.label = cell(11).empty() ? "unknown" : cell(11);
        if (row.label != "North" && row.label != "South" && row.label != "unknown")
            throw std::runtime_error("manifest " + path + ": line " + std::to_string(line_no) +
                                     ": bad label '" + row.label + "'");
        for (int p : extra_pos) row.extras.push_back(cells[size_t(p)]);
        man.rows.push_back(std::move(row));
    }
    return man;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
    make_parent_dirs(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << kManifestMagic << "\n";
    std::string header;
    for (const auto& name : kManifestColumns) header += name + ",";
    for (const auto& name : manifest.extra_columns) header += quote_cell(name) + ",";
    header.pop_back();
    out << header << "\n";
    for (const auto& r : manifest.rows) {
        if (r.extras.size() != manifest.extra_columns.size())
            throw std::runtime_error("manifest row extras do not match the extra columns");
        std::vector<std::string> cells = {
            r.wav_path, r.word,       r.speaker_id,
            r.age < 0 ? std::string("unknown") : std::to_string(r.age),
            r.sex,      r.dialect,    r.occupation, r.activity,
            csvio::fmt_double(r.lon), csvio::fmt_double(r.lat),
            csvio::fmt_double(r.duration), r.label};
        for (const auto& e : r.extras) cells.push_back(e);
        std::string line;
        for (const auto& c : cells) line += quote_cell(c) + ",";
        line.pop_back();
        out << line << "\n";
    }
}

// ---- cleaning ----

int DropReport::total_dropped() const {
    int t = 0;
    for (const auto& [rule, n] : counts) t += n;
    return t;
}

Manifest clean_manifest(const Manifest& manifest, const CleanConfig& cfg, DropReport* report) {
    int region_col = -1, snr_col = -1;
    for (int i = 0; i < int(manifest.extra_columns.size()); ++i) {
        if (manifest.extra_columns[size_t(i)] == "region") region_col = i;
        if (manifest.extra_columns[size_t(i)] == "snr") snr_col = i;
    }

    // first matching rule claims the row, so the counts sum to in - out
    std::vector<std::pair<std::string, std::function<bool(const ManifestRow&)>>> rules;
    rules.emplace_back("duration", [&](const ManifestRow& r) {
        return r.duration < cfg.min_duration || r.duration > cfg.max_duration;
    });
    rules.emplace_back("age", [&](const ManifestRow& r) {
        return r.age >= 0 && r.age < cfg.min_age;
    });
    rules.emplace_back("dialect", [&](const ManifestRow& r) {
        return in_list(cfg.exclude_dialects, r.dialect);
    });
    rules.emplace_back("occupation", [&](const ManifestRow& r) {
        return in_list(cfg.exclude_occupations, r.occupation);
    });
    rules.emplace_back("activity", [&](const ManifestRow& r) {
        return in_list(cfg.exclude_activities, r.activity);
    });
    rules.emplace_back("region", [&](const ManifestRow& r) {
        return region_col >= 0 && in_list(cfg.exclude_regions, r.extras[size_t(region_col)]);
    });
    rules.emplace_back("snr", [&](const ManifestRow& r) {
        if (!cfg.snr_filter || snr_col < 0) return false;
        try {
            return std::stod(r.extras[size_t(snr_col)]) < cfg.min_snr_db;
        } catch (...) {
            return false;
        }
    });

    std::vector<int> counts(rules.size(), 0);
    Manifest out;
    out.extra_columns = manifest.extra_columns;
    for (const auto& row : manifest.rows) {
        int hit = -1;
        for (int k = 0; k < int(rules.size()) && hit < 0; ++k)
            if (rules[size_t(k)].second(row)) hit = k;
        if (hit < 0) out.rows.push_back(row);
        else ++counts[size_t(hit)];
    }

    if (report) {
        report->counts.clear();
        for (size_t k = 0; k < rules.size(); ++k)
            report->counts.emplace_back(rules[k].first, counts[k]);
        report->in_rows = int(manifest.rows.size());
        report->out_rows = int(out.rows.size());
    }
    return out;
}

// ---- run configuration ----

Json RunConfig::to_json() const {
    Json j;
    j["version"] = 1;
    j["seed"] = seed;
    j["T"] = T;
    j["M"] = M;
    j["F"] = F;
    j["K"] = K;
    j["kind"] = kind;
    Json c;
    c["min_duration"] = csvio::num(clean.min_duration);
    c["max_duration"] = csvio::num(clean.max_duration);
    c["min_age"] = clean.min_age;
    c["exclude_dialects"] = str_array(clean.exclude_dialects);
    c["exclude_occupations"] = str_array(clean.exclude_occupations);
    c["exclude_activities"] = str_array(clean.exclude_activities);
    c["exclude_regions"] = str_array(clean.exclude_regions);
    c["snr_filter"] = clean.snr_filter;
    c["min_snr_db"] = csvio::num(clean.min_snr_db);
    j["clean"] = std::move(c);
    j["plr_lambda"] = csvio::num(plr_lambda);
    j["cell_km"] = csvio::num(cell_km);
    j["ci_level"] = csvio::num(ci_level);
    j["gl_iterations"] = gl_iterations;
    return j;
}

RunConfig RunConfig::from_json(const Json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw std::runtime_error("run config: unsupported version");
    RunConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.T = j.value("T", cfg.T);
    cfg.M = j.value("M", cfg.M);
    cfg.F = j.value("F", cfg.F);
    cfg.K = j.value("K", cfg.K);
    cfg.kind = j.value("kind", cfg.kind);
    if (j.contains("clean")) {
        const Json& c = j.at("clean");
        cfg.clean.min_duration = get_num(c, "min_duration", cfg.clean.min_duration);
        cfg.clean.max_duration = get_num(c, "max_duration", cfg.clean.max_duration);
        cfg.clean.min_age = c.value("min_age", cfg.clean.min_age);
        if (c.contains("exclude_dialects")) cfg.clean.exclude_dialects = json_strs(c.at("exclude_dialects"));
        if (c.contains("exclude_occupations"))
            cfg.clean.exclude_occupations = json_strs(c.at("exclude_occupations"));
        if (c.contains("exclude_activities"))
            cfg.clean.exclude_activities = json_strs(c.at("exclude_activities"));
        if (c.contains("exclude_regions")) cfg.clean.exclude_regions = json_strs(c.at("exclude_regions"));
        cfg.clean.snr_filter = c.value("snr_filter", cfg.clean.snr_filter);
        cfg.clean.min_snr_db = get_num(c, "min_snr_db", cfg.clean.min_snr_db);
    }
    cfg.plr_lambda = get_num(j, "plr_lambda", cfg.plr_lambda);
    cfg.cell_km = get_num(j, "cell_km", cfg.cell_km);
    cfg.ci_level = get_num(j, "ci_level", cfg.ci_level);
    cfg.gl_iterations = j.value("gl_iterations", cfg.gl_iterations);
    return cfg;
}

models::ClassifierKind parse_kind(const std::string& kind) {
    if (kind == "flr") return models::ClassifierKind::flr;
    if (kind == "plr") return models::ClassifierKind::plr;
    if (kind == "combined") return models::ClassifierKind::combined;
    throw std::invalid_argument("unknown model kind: " + kind);
}

std::string cache_dir() {
    const char* env = std::getenv("ACCENT_CACHE");
    return env && *env ? env : "accent_cache";
}

// ---- synthetic corpus ----

std::string synth_corpus(const std::string& dir, int speakers, int per_speaker,
                         std::uint64_t seed) {
    if (speakers < 2 || per_speaker < 1)
        throw std::invalid_argument("synth_corpus: need at least two speakers");
    fs::create_directories(fs::path(dir) / "wav");
    std::mt19937_64 rng(seed);

    const std::vector<std::string> words = {"class", "bath", "grass", "last"};
    const double north_f[4] = {780.0, 1580.0, 2500.0, 3350.0};
    const double south_f[4] = {780.0, 1210.0, 2500.0, 3350.0};
    const double offset_sd[4] = {30.0, 40.0, 60.0, 80.0};
    const double jitter_sd[4] = {10.0, 12.0, 15.0, 20.0};

    Manifest man;
    for (int s = 0; s < speakers; ++s) {
        // each speaker produces both classes, so held-out-speaker evaluation
        // measures the acoustic signal and not speaker identity
        bool home_north = s % 2 == 0;
        double offset[4];
        for (int k = 0; k < 4; ++k) offset[k] = offset_sd[k] * gaussian(rng);
        double f0_speaker = 110.0 + 8.0 * gaussian(rng);
        double lon0 = (home_north ? -1.8 : -0.4) + 0.25 * gaussian(rng);
        double lat0 = (home_north ? 53.8 : 51.4) + 0.25 * gaussian(rng);

        for (int i = 0; i < per_speaker; ++i) {
            bool north = i % 2 == 0;
            const double* base = north ? north_f : south_f;
            formants::VowelSpec spec;
            spec.freqs.resize(4);
            spec.bands = {90.0, 110.0, 160.0, 200.0};
            for (int k = 0; k < 4; ++k)
                spec.freqs[size_t(k)] = base[k] + offset[k] + jitter_sd[k] * gaussian(rng);
            spec.f0 = f0_speaker + 4.0 * gaussian(rng);
            spec.seconds = 0.4;
            auto wave = formants::synth_vowel(spec, 16000);
            for (int t = 0; t < wave.samples.size(); ++t) {
                wave.samples[t] += 0.004 * gaussian(rng);
                wave.samples[t] = std::min(1.0, std::max(-1.0, wave.samples[t]));
            }
            std::string name = "wav/sp" + pad_int(s, 2) + "_" + pad_int(i, 4) + ".wav";
            dsp::write_wav((fs::path(dir) / name).string(), wave);

            ManifestRow row;
            row.wav_path = name;
            row.word = words[size_t(i) % words.size()];
            row.speaker_id = "sp" + pad_int(s, 2);
            row.age = 20 + s;
            row.sex = s % 2 ? "f" : "m";
            row.dialect = "none";
            row.occupation = "none";
            row.activity = "interview";
            row.lon = lon0 + 0.05 * gaussian(rng);
            row.lat = lat0 + 0.05 * gaussian(rng);
            row.duration = spec.seconds;
            row.label = north ? "North" : "South";
            man.rows.push_back(std::move(row));
        }
    }
    std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
    write_manifest(manifest_path, man);
    return manifest_path;
}

// ---- stages ----

void extract_stage(const std::string& manifest_path, const std::string& wav_root,
                   const std::string& out_dir, const RunConfig& cfg) {
    auto man = read_manifest(manifest_path);
    if (man.rows.empty()) throw std::runtime_error("manifest has no rows");
    fs::create_directories(fs::path(out_dir) / "sounds");

    std::map<int, dsp::MelFilterBank> banks;
    Json index;
    index["version"] = 1;
    index["config"] = cfg.to_json();
    index["sounds"] = Json::array();

    for (int i = 0; i < int(man.rows.size()); ++i) {
        const auto& row = man.rows[size_t(i)];
        fs::path wav = row.wav_path;
        if (wav.is_relative() && !wav_root.empty()) wav = fs::path(wav_root) / wav;
        if (!fs::exists(wav))
            throw std::runtime_error("row " + std::to_string(i) + " (" + row.speaker_id + ", " +
                                     row.wav_path + "): wav file not found");
        auto wave = dsp::read_wav(wav.string());
        auto spec_cfg = dsp::SpectralConfig::standard(wave.rate);
        auto spec = dsp::spectrogram(wave, spec_cfg);
        auto bank_it = banks.find(wave.rate);
        if (bank_it == banks.end())
            bank_it = banks.emplace(wave.rate,
                                    dsp::MelFilterBank::build(cfg.F, spec_cfg.fft_size, wave.rate))
                          .first;
        auto mel = dsp::mel_spectrogram(spec, bank_it->second);
        auto coef = dsp::mfcc(mel, cfg.M, dsp::default_floor(mel),
                              double(wave.rate) / spec_cfg.hop);
        auto track = formants::track_formants(wave);

        std::string id = pad_int(i, 4);
        Json sj;
        sj["version"] = 1;
        sj["id"] = id;
        sj["speaker"] = row.speaker_id;
        sj["word"] = row.word;
        sj["label"] = row.label;
        sj["lon"] = csvio::num(row.lon);
        sj["lat"] = csvio::num(row.lat);
        sj["duration"] = csvio::num(row.duration);
        sj["frame_rate"] = csvio::num(coef.frame_rate);
        sj["degenerate"] = track.degenerate;
        sj["mfcc"] = mat_json(coef.values);
        sj["formant"] = mat_json(track.values);
        sj["config"] = cfg.to_json();
        csvio::write_json((fs::path(out_dir) / "sounds" / (id + ".json")).string(), sj);

        Json e;
        e["id"] = id;
        e["speaker"] = row.speaker_id;
        e["word"] = row.word;
        e["label"] = row.label;
        e["lon"] = csvio::num(row.lon);
        e["lat"] = csvio::num(row.lat);
        index["sounds"].push_back(std::move(e));
    }
    csvio::write_json((fs::path(out_dir) / "index.json").string(), index);
}

void prep_stage(const std::string& extract_dir, const std::string& out_path,
                const RunConfig& cfg) {
    Json index = csvio::read_json((fs::path(extract_dir) / "index.json").string());
    if (!index.contains("sounds") || index["sounds"].empty())
        throw std::runtime_error("extract index lists no sounds");

    std::map<int, curveprep::SplineSmoother> smoothers;
    auto smoother_for = [&](int n) -> const curveprep::SplineSmoother& {
        auto it = smoothers.find(n);
        if (it == smoothers.end()) it = smoothers.emplace(n, curveprep::SplineSmoother(n)).first;
        return it->second;
    };

    struct Meta {
        std::string id, word, label, speaker;
        double lon, lat;
    };
    std::vector<Meta> metas;
    std::vector<models::SoundData> sounds;
    for (const auto& e : index["sounds"]) {
        std::string id = e.at("id").get<std::string>();
        Json sj = csvio::read_json((fs::path(extract_dir) / "sounds" / (id + ".json")).string());
        MatrixXd mfcc_raw = json_mat(sj.at("mfcc"));
        MatrixXd formant_raw = json_mat(sj.at("formant"));

        models::SoundData sd;
        sd.mfcc.kind = curveprep::CurveKind::mfcc;
        sd.mfcc.values.resize(cfg.T, mfcc_raw.cols());
        for (int c = 0; c < mfcc_raw.cols(); ++c) {
            auto smooth = smoother_for(int(mfcc_raw.rows())).smooth_gcv(mfcc_raw.col(c));
            sd.mfcc.values.col(c) = curveprep::resample(smooth, cfg.T);
        }
        sd.formant.kind = curveprep::CurveKind::formant;
        sd.formant.values.resize(cfg.T, formant_raw.cols());
        for (int c = 0; c < formant_raw.cols(); ++c) {
            auto smooth = curveprep::smooth_loess_robust(formant_raw.col(c));
            sd.formant.values.col(c) = curveprep::resample(smooth, cfg.T);
        }
        sd.label = label_code(sj.at("label").get<std::string>());
        sd.speaker = sj.at("speaker").get<std::string>();
        sounds.push_back(std::move(sd));
        metas.push_back({id, sj.at("word").get<std::string>(), sj.at("label").get<std::string>(),
                         sj.at("speaker").get<std::string>(), csvio::as_num(sj.at("lon")),
                         csvio::as_num(sj.at("lat"))});
    }

    // register every sound on the common clock via its first MFCC curve
    std::vector<VectorXd> energy;
    for (const auto& s : sounds) energy.push_back(s.mfcc.values.col(0));
    auto alignment = curveprep::align_corpus(energy);

    Json out;
    out["version"] = 1;
    out["config"] = cfg.to_json();
    out["mean_mfcc1"] = vec_json(alignment.mean);
    out["sounds"] = Json::array();
    for (int i = 0; i < int(sounds.size()); ++i) {
        auto aligned_mfcc = curveprep::apply_warp(sounds[size_t(i)].mfcc, alignment.warps[size_t(i)]);
        auto aligned_formant =
            curveprep::apply_warp(sounds[size_t(i)].formant, alignment.warps[size_t(i)]);
        Json e;
        e["id"] = metas[size_t(i)].id;
        e["word"] = metas[size_t(i)].word;
        e["label"] = metas[size_t(i)].label;
        e["speaker"] = metas[size_t(i)].speaker;
        e["lon"] = csvio::num(metas[size_t(i)].lon);
        e["lat"] = csvio::num(metas[size_t(i)].lat);
        e["mfcc"] = mat_json(aligned_mfcc.values);
        e["formant"] = mat_json(aligned_formant.values);
        out["sounds"].push_back(std::move(e));
    }
    make_parent_dirs(out_path);
    csvio::write_json(out_path, out);
}

PrepData load_prep(const std::string& path) {
    Json j = csvio::read_json(path);
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw std::runtime_error("prep artifact: unsupported version");
    PrepData prep;
    prep.config = RunConfig::from_json(j.at("config"));
    prep.mean_mfcc1 = json_vec(j.at("mean_mfcc1"));
    for (const auto& e : j.at("sounds")) {
        prep.ids.push_back(e.at("id").get<std::string>());
        prep.words.push_back(e.at("word").get<std::string>());
        prep.labels.push_back(e.at("label").get<std::string>());
        prep.lon.push_back(csvio::as_num(e.at("lon")));
        prep.lat.push_back(csvio::as_num(e.at("lat")));
        models::SoundData sd;
        sd.mfcc.kind = curveprep::CurveKind::mfcc;
        sd.mfcc.values = json_mat(e.at("mfcc"));
        sd.formant.kind = curveprep::CurveKind::formant;
        sd.formant.values = json_mat(e.at("formant"));
        sd.label = label_code(prep.labels.back());
        sd.speaker = e.at("speaker").get<std::string>();
        prep.aligned.push_back(std::move(sd));
    }
    return prep;
}

void train_stage(const std::string& prep_path, const std::string& out_dir,
                 const RunConfig& cfg) {
    auto prep = load_prep(prep_path);
    auto sounds = labelled_sounds(prep);
    fs::create_directories(out_dir);
    auto kind = parse_kind(cfg.kind);

    std::vector<int> labels;
    std::vector<std::string> speakers;
    for (const auto& s : sounds) {
        labels.push_back(s.label);
        speakers.push_back(s.speaker);
    }

    if (kind == models::ClassifierKind::flr) {
        MatrixXd f2(int(sounds.size()), cfg.T);
        for (int i = 0; i < int(sounds.size()); ++i)
            f2.row(i) = sounds[size_t(i)].formant.values.col(1).transpose();
        auto model = models::fit_flr(f2, labels, speakers);
        models::save_flr((fs::path(out_dir) / "flr").string(), model);
        embed_config((fs::path(out_dir) / "flr.json").string(), cfg);
        return;
    }

    std::vector<curveprep::CurveSet> sets;
    for (const auto& s : sounds)
        sets.push_back(kind == models::ClassifierKind::combined ? combined_set(s) : s.mfcc);
    auto basis = fpca::fit_fpca(sets, true);
    truncate_basis(basis, cfg.K);
    MatrixXd scores(int(sets.size()), basis.K());
    for (int i = 0; i < int(sets.size()); ++i)
        scores.row(i) = fpca::project(basis, sets[size_t(i)]).scores.transpose();
    auto model = models::fit_plr(scores, labels, cfg.plr_lambda, unsigned(cfg.seed));
    model.fpca_ref = fpca::fpca_hash(basis);
    fpca::save_fpca((fs::path(out_dir) / "fpca").string(), basis);
    models::save_plr((fs::path(out_dir) / "plr").string(), model);
    embed_config((fs::path(out_dir) / "fpca.json").string(), cfg);
    embed_config((fs::path(out_dir) / "plr.json").string(), cfg);
}

void eval_stage(const std::string& prep_path, const std::string& out_dir, const RunConfig& cfg) {
    auto prep = load_prep(prep_path);
    auto sounds = labelled_sounds(prep);
    fs::create_directories(out_dir);
    auto report = models::evaluate_loso(sounds, parse_kind(cfg.kind), unsigned(cfg.seed));
    models::save_report((fs::path(out_dir) / "report").string(), report);
    embed_config((fs::path(out_dir) / "report.json").string(), cfg);
}

namespace {

// per-sound logit under the trained model in model_dir
std::function<double(const models::SoundData&)> make_scorer(const std::string& model_dir,
                                                            models::ClassifierKind kind) {
    if (kind == models::ClassifierKind::flr) {
        auto model = models::load_flr((fs::path(model_dir) / "flr").string());
        return [model](const models::SoundData& s) {
            return models::predict_flr(model, s.formant.values.col(1));
        };
    }
    auto basis = fpca::load_fpca((fs::path(model_dir) / "fpca").string());
    auto model = models::load_plr((fs::path(model_dir) / "plr").string());
    if (model.fpca_ref != 0 && model.fpca_ref != fpca::fpca_hash(basis))
        throw std::runtime_error("model directory " + model_dir +
                                 ": plr was trained on a different fpca basis");
    bool combined = kind == models::ClassifierKind::combined;
    return [basis, model, combined](const models::SoundData& s) {
        auto set = combined ? combined_set(s) : s.mfcc;
        return models::predict_plr(model, fpca::project(basis, set).scores);
    };
}

}  // namespace

void predict_stage(const std::string& prep_path, const std::string& model_dir,
                   const std::string& out_csv, const RunConfig& cfg) {
    auto prep = load_prep(prep_path);
    auto scorer = make_scorer(model_dir, parse_kind(cfg.kind));
    csvio::Table t;
    t.header = {"id", "speaker", "word", "label", "p"};
    for (int i = 0; i < int(prep.aligned.size()); ++i) {
        double p = numeric::ilogit(scorer(prep.aligned[size_t(i)]));
        t.rows.push_back({prep.ids[size_t(i)], prep.aligned[size_t(i)].speaker,
                          prep.words[size_t(i)], prep.labels[size_t(i)], csvio::fmt_double(p)});
    }
    make_parent_dirs(out_csv);
    csvio::write_table(out_csv, t);
    Json side;
    side["version"] = 1;
    side["config"] = cfg.to_json();
    csvio::write_json(strip_ext(out_csv) + "_run.json", side);
}

void map_stage(const std::string& prep_path, const std::string& model_dir,
               const std::string& boundary_geojson, const std::string& out_dir,
               const RunConfig& cfg) {
    auto prep = load_prep(prep_path);
    auto scorer = make_scorer(model_dir, parse_kind(cfg.kind));

    std::vector<geo::LocatedSound> located;
    for (int i = 0; i < int(prep.aligned.size()); ++i)
        located.push_back({prep.aligned[size_t(i)], prep.lon[size_t(i)], prep.lat[size_t(i)]});
    auto points = geo::speaker_average(located, scorer);

    auto domain = geo::read_boundary_geojson(boundary_geojson, cfg.cell_km);
    auto surface = geo::fit_soap_beta(points, domain);

    fs::create_directories(out_dir);
    geo::write_surface_csv((fs::path(out_dir) / "surface.csv").string(), surface, cfg.ci_level);
    geo::write_points_csv((fs::path(out_dir) / "points.csv").string(), points);
    geo::write_surface_ppm((fs::path(out_dir) / "map").string(), surface);
    Json j;
    j["version"] = 1;
    j["config"] = cfg.to_json();
    j["speakers"] = int(points.size());
    j["nu"] = csvio::num(surface.nu);
    j["lambda"] = csvio::num(surface.lambda);
    j["edf"] = csvio::num(surface.edf);
    j["converged"] = surface.converged;
    csvio::write_json((fs::path(out_dir) / "map.json").string(), j);
}

void perturb_stage(const std::string& wav_path, double t0, double t1, double delta,
                   const std::string& model_dir, const std::string& prep_path,
                   const std::string& out_wav, const RunConfig& cfg) {
    auto prep = load_prep(prep_path);
    auto basis = fpca::load_fpca((fs::path(model_dir) / "fpca").string());
    auto model = models::load_plr((fs::path(model_dir) / "plr").string());
    auto wave = dsp::read_wav(wav_path);
    auto shifted =
        resynth::perturb_word(wave, t0, t1, delta, model, basis, prep.mean_mfcc1,
                              cfg.gl_iterations);
    make_parent_dirs(out_wav);
    dsp::write_wav(out_wav, shifted);
    Json j;
    j["version"] = 1;
    j["config"] = cfg.to_json();
    j["t0"] = csvio::num(t0);
    j["t1"] = csvio::num(t1);
    j["delta"] = csvio::num(delta);
    csvio::write_json(strip_ext(out_wav) + "_run.json", j);
}

DropReport clean_stage(const std::string& manifest_in, const std::string& manifest_out,
                       const RunConfig& cfg) {
    auto man = read_manifest(manifest_in);
    DropReport report;
    auto cleaned = clean_manifest(man, cfg.clean, &report);
    write_manifest(manifest_out, cleaned);

    csvio::Table t;
    t.header = {"rule", "dropped"};
    for (const auto& [rule, n] : report.counts) t.rows.push_back({rule, std::to_string(n)});
    t.rows.push_back({"total", std::to_string(report.total_dropped())});
    std::string base = strip_ext(manifest_out);
    csvio::write_table(base + "_drops.csv", t);

    Json j;
    j["version"] = 1;
    j["config"] = cfg.to_json();
    j["in_rows"] = report.in_rows;
    j["out_rows"] = report.out_rows;
    Json drops;
    for (const auto& [rule, n] : report.counts) drops[rule] = n;
    j["drops"] = std::move(drops);
    csvio::write_json(base + "_run.json", j);
    return report;
}

// ---- orchestration ----

void run_pipeline(const RunPaths& paths, const RunConfig& cfg) {
    if (paths.manifest.empty() || paths.out_dir.empty())
        throw std::invalid_argument("run_pipeline: manifest and out_dir are required");
    fs::create_directories(paths.out_dir);
    fs::path out = paths.out_dir;
    std::string wav_root =
        paths.wav_root.empty() ? fs::path(paths.manifest).parent_path().string() : paths.wav_root;

    auto stage = [](const char* name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(name) + ": " + e.what());
        }
    };

    std::string cleaned = (out / "manifest_clean.csv").string();
    stage("clean", [&] { clean_stage(paths.manifest, cleaned, cfg); });
    stage("extract", [&] { extract_stage(cleaned, wav_root, (out / "extract").string(), cfg); });
    stage("prep", [&] { prep_stage((out / "extract").string(), (out / "prep.json").string(), cfg); });
    stage("train", [&] { train_stage((out / "prep.json").string(), (out / "model").string(), cfg); });
    stage("eval", [&] { eval_stage((out / "prep.json").string(), (out / "eval").string(), cfg); });
    if (!paths.boundary.empty())
        stage("map", [&] {
            map_stage((out / "prep.json").string(), (out / "model").string(), paths.boundary,
                      (out / "map").string(), cfg);
        });
}

}  // namespace accent::pipeline
