#pragma once

#include "accent/csvio.hpp"
#include "accent/models.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace accent::pipeline {

// ---- manifests ----

struct ManifestRow {
    std::string wav_path;
    std::string word;
    std::string speaker_id;
    int age = -1;  // -1 = unknown
    std::string sex;
    std::string dialect;
    std::string occupation;
    std::string activity;
    double lon = 0.0;
    double lat = 0.0;
    double duration = 0.0;            // seconds
    std::string label = "unknown";    // North | South | unknown
    std::vector<std::string> extras;  // unknown columns, verbatim
};

struct Manifest {
    std::vector<ManifestRow> rows;
    std::vector<std::string> extra_columns;  // preserved header names
};

// CSV with a leading "# accent manifest v1" version line; unknown columns
// ride along untouched and come back out of write_manifest verbatim.
Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// ---- cleaning ----

struct CleanConfig {
    double min_duration = 0.2;  // s
    double max_duration = 1.0;
    int min_age = 10;  // unknown ages are kept
    std::vector<std::string> exclude_dialects;
    std::vector<std::string> exclude_occupations;
    std::vector<std::string> exclude_activities;
    std::vector<std::string> exclude_regions;  // matches a preserved "region" column
    // Stand-in noise screen on a numeric "snr" column when present. The
    // corpus-specific noise removal we mirror is documented elsewhere and not
    // reproduced here.
    bool snr_filter = false;
    double min_snr_db = 0.0;
};

struct DropReport {
    std::vector<std::pair<std::string, int>> counts;  // rule -> rows dropped
    int in_rows = 0;
    int out_rows = 0;
    int total_dropped() const;
};

// First matching rule wins, so the per-rule counts always sum to in - out.
Manifest clean_manifest(const Manifest& manifest, const CleanConfig& cfg,
                        DropReport* report = nullptr);

// ---- run configuration ----

struct RunConfig {
    std::uint64_t seed = 1234;
    int T = 40;  // common curve grid
    int M = 40;  // MFCC coefficients
    int F = 40;  // mel filters
    int K = 400; // FPC cap
    std::string kind = "plr";  // flr | plr | combined
    CleanConfig clean;
    double plr_lambda = -1.0;  // < 0 selects by 10-fold CV
    double cell_km = 10.0;     // map raster spacing
    double ci_level = 0.95;
    int gl_iterations = 40;

    csvio::Json to_json() const;
    static RunConfig from_json(const csvio::Json& j);
};

models::ClassifierKind parse_kind(const std::string& kind);

// Cache root: $ACCENT_CACHE or ./accent_cache.
std::string cache_dir();

// ---- synthetic corpus ----

// Bundled demo corpus: two vowel classes separated by an F2 band shift, a
// per-speaker resonance offset, per-sound jitter and additive noise. Writes
// WAVs plus a manifest and returns the manifest path. Everything flows from
// the one seed.
std::string synth_corpus(const std::string& dir, int speakers = 4, int per_speaker = 100,
                         std::uint64_t seed = 1234);

// ---- stages ----

// Reads the manifest, analyses every WAV (MFCC matrix + formant track) and
// writes one JSON per sound plus an index. Aborts naming the row when a WAV
// is missing.
void extract_stage(const std::string& manifest_path, const std::string& wav_root,
                   const std::string& out_dir, const RunConfig& cfg);

// Smooths, resamples and aligns the extracted curves; writes a single
// prep.json with aligned and unaligned curve sets and the alignment mean.
void prep_stage(const std::string& extract_dir, const std::string& out_path,
                const RunConfig& cfg);

struct PrepData {
    std::vector<std::string> ids;
    std::vector<std::string> words;
    std::vector<std::string> labels;  // North | South | unknown
    std::vector<double> lon, lat;
    std::vector<models::SoundData> aligned;  // label < 0 where unknown
    Eigen::VectorXd mean_mfcc1;
    RunConfig config;
};

PrepData load_prep(const std::string& path);

// Fits the configured classifier on the labelled sounds; writes model
// artifacts (flr.json, or fpca_* plus plr.json) into out_dir.
void train_stage(const std::string& prep_path, const std::string& out_dir,
                 const RunConfig& cfg);

// Leave-one-speaker-out evaluation; writes report.json + report_roc.csv.
void eval_stage(const std::string& prep_path, const std::string& out_dir,
                const RunConfig& cfg);

// Per-sound probabilities from a trained model directory.
void predict_stage(const std::string& prep_path, const std::string& model_dir,
                   const std::string& out_csv, const RunConfig& cfg);

// Speaker-averaged probabilities smoothed over a boundary-masked raster.
void map_stage(const std::string& prep_path, const std::string& model_dir,
               const std::string& boundary_geojson, const std::string& out_dir,
               const RunConfig& cfg);

// Vowel-interval accent shift of one recording by delta logit units.
void perturb_stage(const std::string& wav_path, double t0, double t1, double delta,
                   const std::string& model_dir, const std::string& prep_path,
                   const std::string& out_wav, const RunConfig& cfg);

// Applies the cleaning rules and writes the cleaned manifest plus a
// drop-report CSV next to it.
DropReport clean_stage(const std::string& manifest_in, const std::string& manifest_out,
                       const RunConfig& cfg);

// ---- orchestration ----

struct RunPaths {
    std::string manifest;
    std::string wav_root;
    std::string out_dir;
    std::string boundary;  // optional; enables the map stage
};

// clean -> extract -> prep -> train -> eval (-> map); any stage failure is
// rethrown with the stage name prefixed.
void run_pipeline(const RunPaths& paths, const RunConfig& cfg);

}  // namespace accent::pipeline
