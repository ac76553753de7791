// Command-line front end: one subcommand per pipeline stage plus the triage server.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "optimus.hpp"
#include "service.hpp"

namespace fs = std::filesystem;
using namespace optimus;

namespace {

constexpr int usage_exit = 2;

struct TrainFlags {
    TrainConfig config;

    void add(CLI::App* cmd) {
        cmd->add_option("--epochs", config.epochs, "training epochs")->capture_default_str();
        cmd->add_option("--batch-size", config.batch_size, "triplets per optimizer step")->capture_default_str();
        cmd->add_option("--lr", config.learning_rate, "AdamW learning rate")->capture_default_str();
        cmd->add_option("--weight-decay", config.weight_decay, "decoupled weight decay")->capture_default_str();
        cmd->add_option("--context", config.context, "anchor context size c")->capture_default_str()->check(CLI::Range(1, 16));
        cmd->add_option("--triplets-per-series", config.triplets_per_series, "triplets drawn per training series per epoch")
            ->capture_default_str();
        cmd->add_option("--train-fraction", config.train_fraction, "series-level train share")->capture_default_str();
        cmd->add_option("--stages", config.stages, "encoder stage widths")->capture_default_str();
    }
};

void log_epoch(const EpochStats& s) {
    std::fprintf(stderr, "epoch %d: %ld steps, train loss %.4f, validation loss %.4f, validation accuracy %.3f\n", s.epoch,
                 s.steps, s.train_loss, s.validation_loss, s.validation_accuracy);
}

std::vector<int> manifest_labels(const Dataset& ds) {
    std::vector<int> labels;
    for (const auto& e : ds.manifest.series) {
        if (!e.changed)
            throw Error("manifest entry '" + e.id + "' carries no change label");
        labels.push_back(*e.changed ? 1 : 0);
    }
    return labels;
}

std::vector<std::optional<ChangeEvent>> manifest_events(const Dataset& ds) {
    std::vector<std::optional<ChangeEvent>> ev;
    for (const auto& e : ds.manifest.series)
        ev.push_back(e.event);
    return ev;
}

/// Labels keyed by target id from a manifest or a JSON-lines label log.
/// In a log, the last record for a target wins regardless of annotator.
std::map<std::string, int> load_labels(const fs::path& path) {
    std::map<std::string, int> out;
    if (path.extension() == ".jsonl") {
        for (const auto& r : parse_label_log(read_file(path), path.string()))
            out[r.target] = r.label;
        return out;
    }
    for (const auto& e : load_manifest(path).series)
        if (e.changed)
            out[e.id] = *e.changed ? 1 : 0;
    return out;
}

std::vector<ChangeResult> read_results(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path.string());
    return read_change_results_csv(in, path.string());
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    write_file(path, text);
}

int run_generate(const fs::path& out, BenchmarkOptions o, double max_cloud) {
    Dataset ds;
    for (const auto& spec : benchmark_specs(o)) {
        auto s = filter_series(generate_scene(spec), max_cloud, static_cast<std::size_t>(min_series_length(1)));
        quantize_in_place(s);
        ds.manifest.series.push_back(manifest_entry(s, spec));
        ds.series.push_back(std::move(s));
    }
    save_dataset(ds, out);
    std::size_t changed = 0;
    for (const auto& e : ds.manifest.series)
        changed += e.changed.value_or(false);
    std::fprintf(stderr, "wrote %zu series (%zu changed) to %s\n", ds.series.size(), changed, out.c_str());
    return 0;
}

int run_train(const fs::path& data, const fs::path& out, const std::optional<fs::path>& report, TrainConfig cfg) {
    const auto ds = load_dataset(data);
    const auto result = train(ds.series, cfg, log_epoch);
    save_checkpoint(out, result.model, cfg);
    if (report)
        write_text(*report, to_json(result.report).dump(2) + "\n");
    return 0;
}

int run_score(const fs::path& model_path, const fs::path& data, Measure measure, AnchorMode mode, const fs::path& out,
              const std::optional<fs::path>& series_out) {
    const auto ck = load_checkpoint(model_path);
    const auto ds = load_dataset(data);
    std::vector<ChangeResult> results;
    std::vector<ScoreSeries> all;
    for (const auto& s : ds.series) {
        all.push_back(score_series(ck.model, s, mode));
        results.push_back(apply_measure(all.back(), measure));
    }
    std::ostringstream csv;
    write_change_results_csv(csv, results);
    write_text(out, csv.str());
    if (series_out) {
        std::ostringstream scsv;
        write_score_series_csv(scsv, all);
        write_text(*series_out, scsv.str());
    }
    return 0;
}

int run_evaluate(const fs::path& scores, const fs::path& labels_path, const std::optional<fs::path>& out) {
    const auto results = read_results(scores);
    const auto labels = load_labels(labels_path);
    std::vector<LabeledScore> items;
    for (const auto& r : results) {
        auto it = labels.find(r.series_id);
        if (it == labels.end())
            throw Error("no label for series '" + r.series_id + "' in " + labels_path.string());
        items.push_back({r.series_id, r.score, it->second});
    }
    const auto text = to_json(evaluate(items)).dump(2) + "\n";
    std::cout << text;
    if (out)
        write_text(*out, text);
    return 0;
}

int run_ablate(const fs::path& train_data, const fs::path& eval_data, const std::vector<int>& contexts,
               const std::vector<std::string>& measure_names, const fs::path& out, const TrainConfig& base) {
    std::vector<Measure> measures;
    for (const auto& m : measure_names)
        measures.push_back(measure_from_string(m));
    const auto tr = load_dataset(train_data);
    const auto ev = load_dataset(eval_data);
    const auto labels = manifest_labels(ev);
    const auto rows = run_ablation(tr.series, ev.series, labels, contexts, measures, base, base.seed, log_epoch);
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    write_text(out, csv.str());
    std::cout << csv.str();
    return 0;
}

int run_localize(const fs::path& data, const fs::path& out, const std::optional<fs::path>& model_path, const TrainConfig& cfg,
                 int patch_edge, double fraction, double threshold) {
    const auto ds = load_dataset(data);
    fs::create_directories(out / "maps");
    SiameseModel<float> patch_model;
    if (model_path) {
        patch_model = load_checkpoint(*model_path).model;
    } else {
        auto result = iterative_train(ds.series, cfg, patch_edge, fraction, log_epoch);
        TrainConfig stage2 = cfg;
        stage2.seed = patch_stage_seed(cfg.seed);
        save_checkpoint(out / "full_image.ckpt", result.full_image.model, cfg);
        save_checkpoint(out / "patch.ckpt", result.patch.model, stage2);
        std::string kept = "series_id,score\n";
        for (const auto& k : result.kept) {
            char buf[64];
            std::snprintf(buf, sizeof buf, ",%.17g\n", k.score);
            kept += k.id + buf;
        }
        write_file(out / "kept.csv", kept);
        patch_model = std::move(result.patch.model);
    }
    for (const auto& s : ds.series) {
        const auto map = patch_change_map(patch_model, s, patch_edge, threshold);
        std::ostringstream labels, scores;
        write_patch_map_csv(labels, map);
        write_patch_scores_csv(scores, map);
        write_file(out / "maps" / (s.id + ".csv"), labels.str());
        write_file(out / "maps" / (s.id + "_scores.csv"), scores.str());
        write_file(out / "maps" / (s.id + "_overlay.ppm"), encode_ppm(overlay_change_map(s.images.back(), map)));
    }
    bool labeled = true;
    for (const auto& e : ds.manifest.series)
        labeled = labeled && e.changed.has_value() && (!*e.changed || e.event.has_value());
    if (labeled) {
        const auto labels = manifest_labels(ds);
        const auto events = manifest_events(ds);
        const auto items = patch_labeled_scores(patch_model, ds.series, labels, events, patch_edge);
        std::size_t pos = 0;
        for (const auto& it : items)
            pos += static_cast<std::size_t>(it.label);
        if (pos > 0 && pos < items.size()) {
            const auto text = to_json(evaluate(items)).dump(2) + "\n";
            write_file(out / "patch_report.json", text);
        }
    }
    return 0;
}

int run_serve(const fs::path& data, const fs::path& scores, const std::optional<fs::path>& series_scores, const fs::path& labels_path,
              const std::string& host, int port, const std::optional<fs::path>& ui) {
    std::vector<ChangeResult> results = read_results(scores);
    std::vector<ScoreSeries> series;
    if (series_scores) {
        std::ifstream in(*series_scores);
        if (!in)
            throw Error("cannot open " + series_scores->string());
        series = read_score_series_csv(in, series_scores->string());
    }
    LabelStore store(labels_path);
    const auto state = make_serve_state(data, results, series, store);
    httplib::Server server;
    register_routes(server, state);
    if (ui && !server.set_mount_point("/", ui->string()))
        throw Error("cannot serve UI directory " + ui->string());
    std::fprintf(stderr, "serving %zu series on http://%s:%d\n", state.manifest.series.size(), host.c_str(), port);
    if (!server.listen(host, port))
        throw Error("cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised persistent change detection for image time series"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "simulate a labeled synthetic benchmark");
    fs::path gen_out;
    BenchmarkOptions bench;
    double max_cloud = 0.2;
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("--num-series", bench.num_series)->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--changed-fraction", bench.changed_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    gen->add_option("--images", bench.n_images, "images per series before cloud filtering")->capture_default_str();
    gen->add_option("--span-months", bench.span_months)->capture_default_str();
    gen->add_option("--height", bench.height)->capture_default_str();
    gen->add_option("--width", bench.width)->capture_default_str();
    gen->add_option("--noise", bench.noise_sigma)->capture_default_str();
    gen->add_option("--cloud-probability", bench.cloud_probability)->capture_default_str();
    gen->add_option("--max-cloud", max_cloud, "drop images whose cloud fraction exceeds this")->capture_default_str();
    gen->add_option("--id-prefix", bench.id_prefix)->capture_default_str();
    gen->add_option("--seed", bench.seed)->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train the temporal-ordering classifier");
    fs::path tr_data, tr_out;
    std::optional<fs::path> tr_report;
    TrainFlags tr_flags;
    tr->add_option("--data", tr_data)->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--report", tr_report, "per-epoch JSON report");
    tr->add_option("--seed", tr_flags.config.seed)->capture_default_str();
    tr_flags.add(tr);

    // score
    auto* sc = app.add_subcommand("score", "compute change scores");
    fs::path sc_model, sc_data, sc_out;
    std::optional<fs::path> sc_series;
    std::string sc_measure = "pivot", sc_anchor = "context";
    sc->add_option("--model", sc_model)->required()->check(CLI::ExistingFile);
    sc->add_option("--data", sc_data)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--measure", sc_measure)->capture_default_str()->check(CLI::IsMember({"pivot", "spearman"}));
    sc->add_option("--anchors", sc_anchor, "anchor windows: context or single")
        ->capture_default_str()
        ->check(CLI::IsMember({"context", "single"}));
    sc->add_option("--out", sc_out, "change result CSV")->required();
    sc->add_option("--series-out", sc_series, "per-query score CSV");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "AUROC and max-F1 of change scores");
    fs::path ev_scores, ev_labels;
    std::optional<fs::path> ev_out;
    ev->add_option("--scores", ev_scores)->required()->check(CLI::ExistingFile);
    ev->add_option("--labels", ev_labels, "manifest.json or labels.jsonl")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "also write the report here");

    // ablate
    auto* ab = app.add_subcommand("ablate", "context size x change measure table");
    fs::path ab_train, ab_eval, ab_out;
    std::vector<int> ab_contexts{1, 3, 5};
    std::vector<std::string> ab_measures{"pivot", "spearman"};
    TrainFlags ab_flags;
    ab->add_option("--train-data", ab_train)->required()->check(CLI::ExistingDirectory);
    ab->add_option("--eval-data", ab_eval)->required()->check(CLI::ExistingDirectory);
    ab->add_option("--contexts", ab_contexts)->capture_default_str()->delimiter(',');
    ab->add_option("--measures", ab_measures)->capture_default_str()->delimiter(',')->check(CLI::IsMember({"pivot", "spearman"}));
    ab->add_option("--out", ab_out, "ablation CSV")->required();
    ab->add_option("--seed", ab_flags.config.seed, "master seed")->capture_default_str();
    ab_flags.add(ab);

    // localize
    auto* lo = app.add_subcommand("localize", "iterative patch retraining and change maps");
    fs::path lo_data, lo_out;
    std::optional<fs::path> lo_model;
    TrainFlags lo_flags;
    int patch_edge = 16;
    double keep_fraction = 0.5, threshold = 0.3;
    lo->add_option("--data", lo_data)->required()->check(CLI::ExistingDirectory);
    lo->add_option("--out", lo_out, "output directory")->required();
    lo->add_option("--model", lo_model, "existing patch checkpoint; skips training")->check(CLI::ExistingFile);
    lo->add_option("--patch-edge", patch_edge)->capture_default_str()->check(CLI::PositiveNumber);
    lo->add_option("--keep-fraction", keep_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    lo->add_option("--threshold", threshold, "patch change score threshold")->capture_default_str();
    lo->add_option("--seed", lo_flags.config.seed)->capture_default_str();
    lo_flags.add(lo);

    // serve
    auto* sv = app.add_subcommand("serve", "HTTP/JSON triage service");
    fs::path sv_data, sv_scores, sv_labels = "labels.jsonl";
    std::optional<fs::path> sv_series, sv_ui;
    std::string host = "127.0.0.1";
    int port = 8080;
    sv->add_option("--data", sv_data)->required()->check(CLI::ExistingDirectory);
    sv->add_option("--scores", sv_scores, "change result CSV")->required()->check(CLI::ExistingFile);
    sv->add_option("--series-scores", sv_series, "per-query score CSV")->check(CLI::ExistingFile);
    sv->add_option("--labels", sv_labels, "append-only label log")->capture_default_str();
    sv->add_option("--host", host)->capture_default_str();
    sv->add_option("--port", port)->capture_default_str()->check(CLI::Range(1, 65535));
    sv->add_option("--ui", sv_ui, "static UI directory mounted at /")->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage_exit;
    }

    try {
        if (*gen)
            return run_generate(gen_out, bench, max_cloud);
        if (*tr)
            return run_train(tr_data, tr_out, tr_report, tr_flags.config);
        if (*sc)
            return run_score(sc_model, sc_data, measure_from_string(sc_measure),
                             sc_anchor == "single" ? AnchorMode::single : AnchorMode::context, sc_out, sc_series);
        if (*ev)
            return run_evaluate(ev_scores, ev_labels, ev_out);
        if (*ab)
            return run_ablate(ab_train, ab_eval, ab_contexts, ab_measures, ab_out, ab_flags.config);
        if (*lo)
            return run_localize(lo_data, lo_out, lo_model, lo_flags.config, patch_edge, keep_fraction, threshold);
        if (*sv)
            return run_serve(sv_data, sv_scores, sv_series, sv_labels, host, port, sv_ui);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
