// accent — command line front end for the analysis pipeline.
//
// Each subcommand wraps one stage; outputs default into the cache directory
// ($ACCENT_CACHE, or ./accent_cache) so stages chain without repeating paths.

#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <string>

#include "accent/csvio.hpp"
#include "accent/pipeline.hpp"

namespace fs = std::filesystem;
using accent::pipeline::RunConfig;

namespace {

std::string cache_path(const char* leaf) {
    return (fs::path(accent::pipeline::cache_dir()) / leaf).string();
}

// run one stage, tagging any failure with its name; returns the exit code
int guarded(const char* stage, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "accent %s: %s\n", stage, e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vowel accent analysis pipeline"};
    app.require_subcommand(1);

    RunConfig cfg;
    app.add_option("--seed", cfg.seed, "master RNG seed")->capture_default_str();
    app.add_option("--grid-points", cfg.T, "resampled points per curve")->capture_default_str();
    app.add_option("--mfcc-coefs", cfg.M, "MFCC coefficients per frame")->capture_default_str();
    app.add_option("--mel-filters", cfg.F, "mel filters in the bank")->capture_default_str();
    app.add_option("--max-components", cfg.K, "FPCA components kept")->capture_default_str();
    app.add_option("--kind", cfg.kind, "model kind: flr, plr or combined")
        ->check(CLI::IsMember({"flr", "plr", "combined"}))
        ->capture_default_str();
    app.add_option("--plr-lambda", cfg.plr_lambda,
                   "penalty for the score model (negative = pick by cross validation)")
        ->capture_default_str();
    app.add_option("--cell-km", cfg.cell_km, "map raster cell size, km")->capture_default_str();
    app.add_option("--ci-level", cfg.ci_level, "confidence level for map bands")
        ->capture_default_str();
    app.add_option("--gl-iterations", cfg.gl_iterations, "phase recovery iterations")
        ->capture_default_str();
    app.add_option("--min-duration", cfg.clean.min_duration, "cleaning: shortest kept sound, s")
        ->capture_default_str();
    app.add_option("--max-duration", cfg.clean.max_duration, "cleaning: longest kept sound, s")
        ->capture_default_str();
    app.add_option("--min-age", cfg.clean.min_age, "cleaning: youngest kept speaker")
        ->capture_default_str();
    app.add_option("--exclude-dialect", cfg.clean.exclude_dialects, "cleaning: drop this dialect");
    app.add_option("--exclude-occupation", cfg.clean.exclude_occupations,
                   "cleaning: drop this occupation");
    app.add_option("--exclude-activity", cfg.clean.exclude_activities,
                   "cleaning: drop this activity");
    app.add_option("--exclude-region", cfg.clean.exclude_regions,
                   "cleaning: drop this region (needs a 'region' column)");
    app.add_flag("--snr-filter", cfg.clean.snr_filter,
                 "cleaning: drop rows whose 'snr' column falls below --min-snr-db "
                 "(a crude stand-in screen, not the corpus' published procedure)");
    app.add_option("--min-snr-db", cfg.clean.min_snr_db, "cleaning: threshold for --snr-filter")
        ->capture_default_str();

    // synth-corpus
    auto* synth = app.add_subcommand("synth-corpus", "generate a labelled synthetic vowel corpus");
    std::string synth_dir = cache_path("synth");
    int synth_speakers = 4, synth_per = 100;
    synth->add_option("dir", synth_dir, "corpus directory")->capture_default_str();
    synth->add_option("--speakers", synth_speakers, "speaker count")->capture_default_str();
    synth->add_option("--per-speaker", synth_per, "sounds per speaker")->capture_default_str();

    // clean
    auto* clean = app.add_subcommand("clean", "filter a manifest by the cleaning rules");
    std::string clean_in, clean_out = cache_path("manifest_clean.csv");
    clean->add_option("manifest", clean_in, "input manifest")->required();
    clean->add_option("out", clean_out, "cleaned manifest")->capture_default_str();

    // extract
    auto* extract = app.add_subcommand("extract", "read audio and write per-sound features");
    std::string ex_manifest, ex_out = cache_path("extract"), ex_root;
    extract->add_option("manifest", ex_manifest, "manifest of wav files")->required();
    extract->add_option("out", ex_out, "feature directory")->capture_default_str();
    extract->add_option("--wav-root", ex_root, "base for relative wav paths (default: manifest directory)");

    // prep
    auto* prep = app.add_subcommand("prep", "smooth, resample and align extracted curves");
    std::string prep_in = cache_path("extract"), prep_out = cache_path("prep.json");
    prep->add_option("extract_dir", prep_in, "feature directory")->capture_default_str();
    prep->add_option("out", prep_out, "prepared corpus file")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "fit the selected classifier");
    std::string train_prep = cache_path("prep.json"), train_out = cache_path("model");
    train->add_option("prep", train_prep, "prepared corpus file")->capture_default_str();
    train->add_option("out", train_out, "model directory")->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "leave-one-speaker-out evaluation");
    std::string eval_prep = cache_path("prep.json"), eval_out = cache_path("eval");
    eval->add_option("prep", eval_prep, "prepared corpus file")->capture_default_str();
    eval->add_option("out", eval_out, "report directory")->capture_default_str();

    // predict
    auto* predict = app.add_subcommand("predict", "score every prepared sound");
    std::string pr_prep = cache_path("prep.json"), pr_model = cache_path("model");
    std::string pr_out = cache_path("predictions.csv");
    predict->add_option("prep", pr_prep, "prepared corpus file")->capture_default_str();
    predict->add_option("model", pr_model, "model directory")->capture_default_str();
    predict->add_option("out", pr_out, "prediction table")->capture_default_str();

    // map
    auto* map_cmd = app.add_subcommand("map", "fit the spatial accent surface");
    std::string map_prep = cache_path("prep.json"), map_model = cache_path("model");
    std::string map_boundary, map_out = cache_path("map");
    map_cmd->add_option("boundary", map_boundary, "boundary polygon, GeoJSON")->required();
    map_cmd->add_option("prep", map_prep, "prepared corpus file")->capture_default_str();
    map_cmd->add_option("model", map_model, "model directory")->capture_default_str();
    map_cmd->add_option("out", map_out, "map output directory")->capture_default_str();

    // perturb
    auto* perturb = app.add_subcommand("perturb", "resynthesize a word along the accent axis");
    std::string pe_wav, pe_out;
    std::string pe_model = cache_path("model"), pe_prep = cache_path("prep.json");
    double pe_t0 = 0.0, pe_t1 = 0.0, pe_delta = 0.0;
    perturb->add_option("wav", pe_wav, "input word recording")->required();
    perturb->add_option("out", pe_out, "output wav")->required();
    perturb->add_option("--t0", pe_t0, "vowel start, s")->required();
    perturb->add_option("--t1", pe_t1, "vowel end, s")->required();
    perturb->add_option("--delta", pe_delta, "signed shift along the accent axis")->required();
    perturb->add_option("--model", pe_model, "model directory")->capture_default_str();
    perturb->add_option("--prep", pe_prep, "prepared corpus file")->capture_default_str();

    // shared options may appear after the subcommand name
    for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    using namespace accent;

    if (app.got_subcommand(synth)) {
        return guarded("synth-corpus", [&] {
            auto manifest = pipeline::synth_corpus(synth_dir, synth_speakers, synth_per, cfg.seed);
            std::printf("%s\n", manifest.c_str());
        });
    }
    if (app.got_subcommand(clean)) {
        return guarded("clean", [&] {
            auto rep = pipeline::clean_stage(clean_in, clean_out, cfg);
            for (const auto& [rule, n] : rep.counts)
                if (n) std::printf("dropped %d (%s)\n", n, rule.c_str());
            std::printf("kept %d of %d -> %s\n", rep.out_rows, rep.in_rows, clean_out.c_str());
        });
    }
    if (app.got_subcommand(extract)) {
        return guarded("extract", [&] {
            std::string root = ex_root.empty() ? fs::path(ex_manifest).parent_path().string() : ex_root;
            pipeline::extract_stage(ex_manifest, root, ex_out, cfg);
            std::printf("%s\n", ex_out.c_str());
        });
    }
    if (app.got_subcommand(prep)) {
        return guarded("prep", [&] {
            pipeline::prep_stage(prep_in, prep_out, cfg);
            std::printf("%s\n", prep_out.c_str());
        });
    }
    if (app.got_subcommand(train)) {
        return guarded("train", [&] {
            pipeline::train_stage(train_prep, train_out, cfg);
            std::printf("%s\n", train_out.c_str());
        });
    }
    if (app.got_subcommand(eval)) {
        return guarded("eval", [&] {
            pipeline::eval_stage(eval_prep, eval_out, cfg);
            auto report = csvio::read_json((fs::path(eval_out) / "report.json").string());
            std::printf("accuracy %.4f auc %.4f -> %s\n", csvio::as_num(report.at("accuracy")),
                        csvio::as_num(report.at("auc")), eval_out.c_str());
        });
    }
    if (app.got_subcommand(predict)) {
        return guarded("predict", [&] {
            pipeline::predict_stage(pr_prep, pr_model, pr_out, cfg);
            std::printf("%s\n", pr_out.c_str());
        });
    }
    if (app.got_subcommand(map_cmd)) {
        return guarded("map", [&] {
            pipeline::map_stage(map_prep, map_model, map_boundary, map_out, cfg);
            auto j = csvio::read_json((fs::path(map_out) / "map.json").string());
            std::printf("speakers %d lambda %g nu %g -> %s\n", j.at("speakers").get<int>(),
                        csvio::as_num(j.at("lambda")), csvio::as_num(j.at("nu")), map_out.c_str());
        });
    }
    if (app.got_subcommand(perturb)) {
        return guarded("perturb", [&] {
            pipeline::perturb_stage(pe_wav, pe_t0, pe_t1, pe_delta, pe_model, pe_prep, pe_out, cfg);
            std::printf("%s\n", pe_out.c_str());
        });
    }
    return 1;  // unreachable: a subcommand is required
}
