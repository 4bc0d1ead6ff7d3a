#include "kronmark_cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "kronmark/checkpoint.hpp"
#include "kronmark/dataset_io.hpp"
#include "kronmark/digest.hpp"
#include "kronmark/errors.hpp"
#include "kronmark/kcl.hpp"
#include "kronmark/landmark_net.hpp"
#include "kronmark/metrics.hpp"
#include "kronmark/morphometrics.hpp"
#include "kronmark/weight.hpp"
#include "svg.hpp"

namespace kronmark::cli {

using json = nlohmann::ordered_json;
using io::format_exact;

std::uint64_t default_seed() {
    const char* env = std::getenv(kSeedEnv);
    if (!env || !*env) return 7;
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto res = std::from_chars(env, end, v);
    if (res.ec != std::errc{} || res.ptr != end) return 7;
    return v;
}

namespace {

class UsageError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Collects the resolved configuration and output files of one run.
class Manifest {
   public:
    Manifest(std::string command, std::uint64_t seed) : command_(std::move(command)), seed_(seed) {}

    json& config() { return config_; }
    void add_output(const fs::path& file) { outputs_.push_back(file); }

    void write(const fs::path& dir) const {
        json j;
        j["command"] = command_;
        j["version"] = kVersion;
        j["seed"] = seed_;
        j["config"] = config_;
        j["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json digests = json::object();
        for (const auto& f : outputs_) digests[fs::relative(f, dir).generic_string()] = sha256_file_hex(f);
        j["outputs"] = digests;
        std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
        os << j.dump(2) << '\n';
    }

   private:
    std::string command_;
    std::uint64_t seed_;
    json config_ = json::object();
    std::vector<fs::path> outputs_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFileError(path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Comma-separated rows joined with LF.
class Csv {
   public:
    explicit Csv(std::vector<std::string> header) { row(header); }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }
    const std::string& str() const { return text_; }

   private:
    std::string text_;
};

void ensure_dir(const fs::path& dir) {
    if (dir.empty()) throw UsageError("--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

int guarded(std::ostream& err, const char* command, const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const CompatibilityError& e) {
        err << command << ": incompatible checkpoint: " << e.what() << '\n';
        return kCompatibility;
    } catch (const MissingFileError& e) {
        err << command << ": " << e.what() << '\n';
        return kIo;
    } catch (const ParseError& e) {
        err << command << ": " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << command << ": " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        err << command << ": " << e.what() << '\n';
        return kUsage;
    } catch (const std::logic_error& e) {
        err << command << ": " << e.what() << '\n';
        return kUsage;
    } catch (const std::runtime_error& e) {
        err << command << ": " << e.what() << '\n';
        return kIo;
    }
}

std::vector<synth::SpecimenRecord> load_data(const fs::path& dir) {
    if (dir.empty()) throw UsageError("--data is required");
    if (!fs::is_directory(dir)) throw MissingFileError(dir.string());
    return io::load_dataset(dir);
}

json generator_json(const synth::GeneratorConfig& g) {
    auto range = [](const synth::Range& r) { return json::array({r.lo, r.hi}); };
    json j;
    j["length_mm"] = range(g.length_mm);
    j["curvature"] = range(g.curvature);
    j["width_scale"] = range(g.width_scale);
    j["tilt_deg"] = range(g.tilt_deg);
    j["center_jitter_px"] = g.center_jitter_px;
    j["allometric_a"] = g.allometric_a;
    j["allometric_b"] = g.allometric_b;
    j["width_coupling"] = g.width_coupling;
    j["noise_sd"] = g.noise_sd;
    j["mm_per_px"] = g.mm_per_px;
    j["lighting"] = range(g.lighting);
    j["max_clutter"] = g.max_clutter;
    j["seed"] = g.seed;
    return j;
}

const std::array<double, 3> kSplitFractions = {0.4, 0.2, 0.4};

net::KpfemConfig load_config(const std::optional<fs::path>& path, std::size_t order) {
    if (path) return net::KpfemConfig::from_json(read_text(*path));
    return order == 3 ? net::KpfemConfig::defaults() : net::KpfemConfig::defaults_with_order(order);
}

}  // namespace

// ---- gen -------------------------------------------------------------------------

int cmd_gen(const GenOptions& opts, std::ostream& err) {
    return guarded(err, "gen", [&] {
        if (opts.count == 0) throw UsageError("--count must be at least 1");
        synth::GeneratorConfig g = opts.generator;
        g.seed = opts.seed;
        synth::validate(g);
        ensure_dir(opts.out);
        const auto records = synth::generate_dataset(g, opts.count);
        io::save_dataset(records, opts.out);

        Manifest m("gen", opts.seed);
        m.config()["count"] = opts.count;
        m.config()["generator"] = generator_json(g);
        m.add_output(opts.out / "index.jsonl");
        std::vector<fs::path> images;
        for (const auto& entry : fs::directory_iterator(opts.out / "images")) images.push_back(entry.path());
        std::sort(images.begin(), images.end());
        for (const auto& f : images) m.add_output(f);
        m.write(opts.out);
    });
}

// ---- train -----------------------------------------------------------------------

int cmd_train(const TrainOptions& opts, std::ostream& err) {
    return guarded(err, "train", [&] {
        const net::KpfemConfig cfg = load_config(opts.config, opts.order);
        cfg.validate();
        net::TrainConfig tc = opts.literal_decay ? net::TrainConfig::literal_schedule() : net::TrainConfig{};
        tc.learning_rate = opts.lr;
        tc.epochs = opts.epochs;
        tc.batch_size = opts.batch;
        tc.seed = opts.seed;
        tc.augment = opts.augment;
        tc.heatmap_sigma = opts.sigma;
        tc.workers = opts.workers;
        tc.validate();

        auto records = load_data(opts.data);
        ensure_dir(opts.out);
        const auto parts = synth::split(std::move(records), kSplitFractions, opts.seed);

        Csv history({"epoch", "train_coords", "train_heatmap", "train_avg", "val_avg"});
        const auto result = net::train(parts.train, parts.val, cfg, tc, [&](const net::EpochStats& s) {
            history.row({std::to_string(s.epoch), format_exact(s.train_coords), format_exact(s.train_heatmap),
                         format_exact(s.train_avg), format_exact(s.val_avg)});
        });

        const fs::path ckpt = opts.out / "model.kmck", hist = opts.out / "loss_history.csv", conf = opts.out / "config.json";
        save_checkpoint(ckpt, net::to_checkpoint(cfg, result.params));
        write_text(hist, history.str());
        write_text(conf, cfg.to_json() + "\n");

        Manifest m("train", opts.seed);
        m.config()["data"] = opts.data.generic_string();
        m.config()["model"] = json::parse(cfg.to_json());
        m.config()["lr"] = tc.learning_rate;
        m.config()["epochs"] = tc.epochs;
        m.config()["batch"] = tc.batch_size;
        m.config()["decay_factor"] = tc.decay_factor;
        m.config()["decay_period"] = tc.decay_period;
        m.config()["augment"] = tc.augment;
        m.config()["heatmap_sigma"] = tc.heatmap_sigma;
        m.config()["split"] = kSplitFractions;
        m.config()["best_epoch"] = result.best_epoch;
        m.config()["config_digest"] = to_hex(cfg.digest());
        m.add_output(ckpt);
        m.add_output(hist);
        m.add_output(conf);
        m.write(opts.out);
    });
}

// ---- eval ------------------------------------------------------------------------

int cmd_eval(const EvalOptions& opts, std::ostream& err) {
    return guarded(err, "eval", [&] {
        if (!opts.oracle && !opts.checkpoint) throw UsageError("--checkpoint is required unless --oracle is given");
        std::optional<fs::path> config_path = opts.config;
        if (!config_path && opts.checkpoint) {
            const fs::path beside = opts.checkpoint->parent_path() / "config.json";
            if (fs::exists(beside)) config_path = beside;
        }
        const net::KpfemConfig cfg = load_config(config_path, 3);

        std::vector<synth::SpecimenRecord> records = load_data(opts.data);
        std::vector<synth::SpecimenRecord> chosen;
        if (opts.split == "all") {
            chosen = std::move(records);
        } else {
            auto parts = synth::split(std::move(records), kSplitFractions, opts.seed);
            if (opts.split == "train") chosen = std::move(parts.train);
            else if (opts.split == "val") chosen = std::move(parts.val);
            else if (opts.split == "test") chosen = std::move(parts.test);
            else throw UsageError("--split must be train, val, test or all");
        }
        if (chosen.empty()) throw InputError("eval: the selected split is empty");

        std::vector<LandmarkSet> predicted;
        std::string source = "oracle";
        if (opts.oracle) {
            for (const auto& r : chosen) {
                const auto heat = synth::make_heatmap_targets(r.landmarks, opts.sigma, cfg.input_size, cfg.input_size,
                                                              cfg.heatmap_size);
                predicted.push_back(net::decode_peak(heat, cfg.input_size, cfg.input_size));
            }
        } else {
            if (!fs::exists(*opts.checkpoint)) throw MissingFileError(opts.checkpoint->string());
            const Checkpoint ck = load_checkpoint(*opts.checkpoint);
            if (ck.config_digest != cfg.digest()) {
                throw CompatibilityError("checkpoint digest " + to_hex(ck.config_digest) + " != configuration digest " +
                                         to_hex(cfg.digest()));
            }
            const auto params = net::from_checkpoint(cfg, ck);
            predicted = net::predict_landmarks(chosen, cfg, params, opts.workers);
            source = opts.checkpoint->generic_string();
        }

        ensure_dir(opts.out);
        std::vector<double> oks_values;
        Csv per_image({"id", "oks"});
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            oks_values.push_back(metrics::oks(predicted[i], chosen[i].landmarks));
            per_image.row({std::to_string(chosen[i].id), format_exact(oks_values.back())});
        }
        const auto rep = metrics::ap_ar(oks_values);
        Csv report({"AP", "AP50", "AP75", "AR", "AR50", "AR75"});
        report.row({format_exact(rep.ap), format_exact(rep.ap50), format_exact(rep.ap75), format_exact(rep.ar),
                    format_exact(rep.ar50), format_exact(rep.ar75)});

        std::array<std::vector<double>, 5> manual, automatic;
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const auto a = morpho::extract_traits(chosen[i].landmarks, chosen[i].mm_per_px).values();
            const auto b = morpho::extract_traits(predicted[i], chosen[i].mm_per_px).values();
            for (std::size_t k = 0; k < 5; ++k) {
                manual[k].push_back(a[k]);
                automatic[k].push_back(b[k]);
            }
        }
        std::vector<std::string> header = {"metric"};
        std::vector<std::string> row = {"mad_mm"};
        for (std::size_t k = 0; k < 5; ++k) {
            header.push_back(morpho::kTraitNames[k]);
            row.push_back(format_exact(metrics::mad(manual[k], automatic[k])));
        }
        Csv mad(header);
        mad.row(row);

        const fs::path f1 = opts.out / "eval_report.csv", f2 = opts.out / "per_image_oks.csv", f3 = opts.out / "trait_mad.csv";
        write_text(f1, report.str());
        write_text(f2, per_image.str());
        write_text(f3, mad.str());
        Manifest m("eval", opts.seed);
        m.config()["data"] = opts.data.generic_string();
        m.config()["split"] = opts.split;
        m.config()["source"] = source;
        m.config()["config_digest"] = to_hex(cfg.digest());
        m.config()["oks_falloff"] = 0.1;
        m.config()["oks_scale"] = "sqrt_bbox_area";
        for (const auto& f : {f1, f2, f3}) m.add_output(f);
        m.write(opts.out);
    });
}

// ---- weight ----------------------------------------------------------------------

int cmd_weight(const WeightOptions& opts, std::ostream& err) {
    return guarded(err, "weight", [&] {
        if (opts.mode != "compare" && opts.mode != "ablation") throw UsageError("--mode must be compare or ablation");
        if (opts.epochs == 0) throw UsageError("--epochs must be at least 1");
        auto records = load_data(opts.data);
        ensure_dir(opts.out);
        const auto parts = synth::split(std::move(records), kSplitFractions, opts.seed);
        weight::TrainHyper hyper;
        hyper.epochs = opts.epochs;
        hyper.seed = opts.seed;

        fs::path file;
        if (opts.mode == "compare") {
            weight::CompareOptions co;
            co.threshold = opts.threshold;
            co.wrm = hyper;
            co.pixel_mlp.seed = opts.seed;
            co.workers = opts.workers;
            Csv csv({"method", "MAE", "MSE", "R2"});
            for (const auto& r : weight::compare_methods(parts, co)) {
                if (r.result) {
                    csv.row({r.method, format_exact(r.result->mae), format_exact(r.result->mse), format_exact(r.result->r2)});
                } else {
                    err << "weight: " << r.method << ": " << r.error << '\n';
                    csv.row({r.method, "NA", "NA", "NA"});
                }
            }
            file = opts.out / "weight_compare.csv";
            write_text(file, csv.str());
        } else {
            std::array<std::vector<weight::Sample>, 3> s;
            const std::array<const std::vector<synth::SpecimenRecord>*, 3> src = {&parts.train, &parts.val, &parts.test};
            for (std::size_t p = 0; p < 3; ++p)
                for (const auto& r : *src[p]) s[p].push_back({weight::distance_features(r.landmarks, r.mm_per_px), r.weight_g});
            Csv csv({"components", "MAE", "MSE", "R2"});
            for (const auto& r : weight::pca_ablation(s[0], s[1], s[2], hyper)) {
                csv.row({r.components ? std::to_string(*r.components) : "none", format_exact(r.result.mae),
                         format_exact(r.result.mse), format_exact(r.result.r2)});
            }
            file = opts.out / "weight_ablation.csv";
            write_text(file, csv.str());
        }
        Manifest m("weight", opts.seed);
        m.config()["data"] = opts.data.generic_string();
        m.config()["mode"] = opts.mode;
        m.config()["epochs"] = opts.epochs;
        m.config()["threshold"] = opts.threshold;
        m.config()["split"] = kSplitFractions;
        m.add_output(file);
        m.write(opts.out);
    });
}

// ---- pca -------------------------------------------------------------------------

int cmd_pca(const PcaOptions& opts, std::ostream& err) {
    return guarded(err, "pca", [&] {
        const auto records = load_data(opts.data);
        if (records.size() < 2) throw InputError("pca: need at least two specimens");
        ensure_dir(opts.out);
        std::vector<morpho::DistanceMatrix> rows;
        for (const auto& r : records) {
            auto d = morpho::distance_matrix(r.landmarks);
            for (auto& v : d) v *= r.mm_per_px;
            rows.push_back(d);
        }
        const auto result = morpho::pca(morpho::to_matrix(rows), opts.components);
        const std::size_t k = result.sd.size();

        std::vector<std::string> pcs;
        for (std::size_t j = 0; j < k; ++j) pcs.push_back("PC" + std::to_string(j + 1));
        auto with_first = [](std::string first, const std::vector<std::string>& rest) {
            std::vector<std::string> v{std::move(first)};
            v.insert(v.end(), rest.begin(), rest.end());
            return v;
        };
        auto numbers = [&](std::string label, const std::vector<double>& values) {
            std::vector<std::string> v{std::move(label)};
            for (double x : values) v.push_back(format_exact(x));
            return v;
        };
        Csv variance(with_first("statistic", pcs));
        variance.row(numbers("Standard deviation", result.sd));
        variance.row(numbers("Proportion of Variance", result.proportion));
        variance.row(numbers("Cumulative Proportion", result.cumulative));

        Csv scores(with_first("id", pcs));
        for (std::size_t r = 0; r < records.size(); ++r) {
            std::vector<double> s(result.scores.data.begin() + r * k, result.scores.data.begin() + (r + 1) * k);
            scores.row(numbers(std::to_string(records[r].id), s));
        }
        Csv loadings(with_first("distance", pcs));
        const auto names = morpho::distance_header();
        for (std::size_t v = 0; v < names.size(); ++v) {
            std::vector<double> l(result.loadings.data.begin() + v * k, result.loadings.data.begin() + (v + 1) * k);
            loadings.row(numbers(names[v], l));
        }
        std::vector<ScatterPoint> pts;
        for (std::size_t r = 0; r < records.size(); ++r) {
            pts.push_back({result.scores(r, 0), k > 1 ? result.scores(r, 1) : 0.0});
        }
        const std::string svg = scatter_svg(pts, "Dim1 (" + format_percent(result.proportion[0]) + ")",
                                            k > 1 ? "Dim2 (" + format_percent(result.proportion[1]) + ")" : "Dim2");

        const fs::path f1 = opts.out / "pca_variance.csv", f2 = opts.out / "pca_scores.csv",
                       f3 = opts.out / "pca_loadings.csv", f4 = opts.out / "pca_scatter.svg";
        write_text(f1, variance.str());
        write_text(f2, scores.str());
        write_text(f3, loadings.str());
        write_text(f4, svg);
        Manifest m("pca", 0);
        m.config()["data"] = opts.data.generic_string();
        m.config()["components"] = k;
        m.config()["variables"] = "pairwise distances in mm";
        for (const auto& f : {f1, f2, f3, f4}) m.add_output(f);
        m.write(opts.out);
    });
}

// ---- bench -----------------------------------------------------------------------

namespace {

struct NetworkCost {
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

NetworkCost network_cost(const net::KpfemConfig& cfg) {
    NetworkCost c;
    const auto shapes = cfg.layer_output_shapes();
    std::size_t size = cfg.input_size;
    std::vector<std::size_t> input_extent;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        input_extent.push_back(size);
        const auto& l = cfg.layers[i];
        const auto lc = layer_cost(KclShape{l.in_channels, l.out_channels, l.kernel, l.order}, size, size);
        c.params += lc.param_count;
        c.flops += lc.flop_count;
        size = shapes[i][1];
    }
    for (const auto& s : cfg.skips) {
        if (!cfg.needs_projection(s)) continue;
        const std::size_t extent = input_extent[s.to - 1];
        const auto lc = layer_cost(KclShape{cfg.layers[s.from - 1].out_channels, cfg.layers[s.to - 1].in_channels, 1,
                                            cfg.projection_order(s)},
                                   extent, extent);
        c.params += lc.param_count;
        c.flops += lc.flop_count;
    }
    const std::uint64_t ch = cfg.feature_shape()[0], g = cfg.heatmap_size, lm = cfg.landmarks;
    c.params += lm * ch + lm + 2 * lm * ch + 2 * lm;
    c.flops += 2 * g * g * ch * lm + 2 * ch * 2 * lm;
    return c;
}

}  // namespace

int cmd_bench(const BenchOptions& opts, std::ostream& err) {
    return guarded(err, "bench", [&] {
        if (opts.passes < 100) throw UsageError("--passes must be at least 100");
        net::KpfemConfig base = load_config(opts.config, 3);
        base.input_size = opts.input_size;
        base.validate();
        ensure_dir(opts.out);

        std::vector<synth::SpecimenRecord> val;
        std::optional<Checkpoint> ck;
        if (opts.data) {
            auto parts = synth::split(load_data(*opts.data), kSplitFractions, opts.seed);
            val = std::move(parts.val);
        }
        if (opts.checkpoint) {
            if (!fs::exists(*opts.checkpoint)) throw MissingFileError(opts.checkpoint->string());
            ck = load_checkpoint(*opts.checkpoint);
        }

        Csv csv({"network", "order", "flops", "params", "size_mb", "throughput_img_s", "coords", "heatmap", "avg"});
        std::vector<std::size_t> orders;
        for (const auto& l : base.layers) orders.push_back(l.order);
        const bool uniform = std::all_of(orders.begin(), orders.end(), [&](std::size_t n) { return n == orders[0]; });
        std::vector<std::pair<std::string, net::KpfemConfig>> variants;
        {
            net::KpfemConfig dense = base;
            for (auto& l : dense.layers) l.order = 1;
            variants.emplace_back("KPFEM", dense);
        }
        if (!(uniform && orders[0] == 1)) variants.emplace_back("KPFEM", base);

        for (const auto& [name, cfg] : variants) {
            const NetworkCost cost = network_cost(cfg);
            auto params = net::init_params<float>(cfg, opts.seed);
            if (ck && ck->config_digest == cfg.digest()) params = net::from_checkpoint(cfg, *ck);
            if (params.parameter_count() != cost.params) {
                throw ContractError("bench: counted " + std::to_string(cost.params) + " parameters but the network holds " +
                                    std::to_string(params.parameter_count()));
            }
            const std::size_t bytes = serialize_checkpoint(net::to_checkpoint(cfg, params)).size();

            Tensor<float> image(Shape{cfg.input_channels, cfg.input_size, cfg.input_size}, 0.5f);
            for (std::size_t i = 0; i < opts.warmup; ++i) (void)net::predict(image, cfg, params);
            const auto t0 = std::chrono::steady_clock::now();
            for (std::size_t i = 0; i < opts.passes; ++i) (void)net::predict(image, cfg, params);
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double throughput = static_cast<double>(opts.passes) / sec;

            std::string coords, heat, avg;
            if (!val.empty() && ck && ck->config_digest == cfg.digest()) {
                const auto loss = net::evaluate_loss(val, cfg, params, 1.5);
                coords = format_exact(loss.coords);
                heat = format_exact(loss.heatmap);
                avg = format_exact(loss.total);
            }
            char size_mb[32], tput[32];
            std::snprintf(size_mb, sizeof size_mb, "%.3f", static_cast<double>(bytes) / 1e6);
            std::snprintf(tput, sizeof tput, "%.2f", throughput);
            const bool same = std::all_of(cfg.layers.begin(), cfg.layers.end(),
                                          [&](const net::KpfemLayer& l) { return l.order == cfg.layers[0].order; });
            const std::string order = same ? std::to_string(cfg.layers[0].order) : "mixed";
            csv.row({name, order, std::to_string(cost.flops), std::to_string(cost.params), size_mb, tput, coords, heat, avg});
        }
        const fs::path file = opts.out / "bench.csv";
        write_text(file, csv.str());
        Manifest m("bench", opts.seed);
        m.config()["model"] = json::parse(base.to_json());
        m.config()["passes"] = opts.passes;
        m.config()["warmup"] = opts.warmup;
        m.config()["flops_convention"] = "2*h*w*s*d*k^2 + n*s*d*k^2 per KCL layer, same padding, stride 1";
        m.add_output(file);
        m.write(opts.out);
    });
}

// ---- argument parsing -------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Kronecker landmark detection and prawn morphometrics toolkit", "kronmark"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    const std::uint64_t seed = default_seed();

    GenOptions gen;
    gen.seed = seed;
    auto* g = app.add_subcommand("gen", "Generate a synthetic specimen dataset");
    g->add_option("--count", gen.count, "Number of specimens")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed (default from KRONMARK_SEED or 7)")->capture_default_str();
    g->add_option("--out", gen.out, "Output dataset directory")->required();
    g->add_option("--length-min", gen.generator.length_mm.lo, "Shortest body length in mm")->capture_default_str();
    g->add_option("--length-max", gen.generator.length_mm.hi, "Longest body length in mm")->capture_default_str();
    g->add_option("--curvature-min", gen.generator.curvature.lo)->capture_default_str();
    g->add_option("--curvature-max", gen.generator.curvature.hi)->capture_default_str();
    g->add_option("--allometric-a", gen.generator.allometric_a)->capture_default_str();
    g->add_option("--allometric-b", gen.generator.allometric_b)->capture_default_str();
    g->add_option("--noise-sd", gen.generator.noise_sd, "Multiplicative weight noise")->capture_default_str();
    g->add_option("--mm-per-px", gen.generator.mm_per_px)->capture_default_str();

    TrainOptions train;
    train.seed = seed;
    auto* t = app.add_subcommand("train", "Train the landmark network");
    t->add_option("--data", train.data, "Dataset directory")->required();
    t->add_option("--out", train.out, "Output directory")->required();
    t->add_option("--epochs", train.epochs)->capture_default_str();
    t->add_option("--lr", train.lr)->capture_default_str();
    t->add_option("--batch", train.batch)->capture_default_str();
    t->add_option("--seed", train.seed)->capture_default_str();
    t->add_option("--order", train.order, "Kronecker order n of every layer")->capture_default_str();
    t->add_option("--sigma", train.sigma, "Heatmap Gaussian sigma in cells")->capture_default_str();
    t->add_option("--workers", train.workers, "Threads (0 = hardware)")->capture_default_str();
    t->add_option("--config", train.config, "Network configuration JSON");
    t->add_flag("--literal-decay", train.literal_decay, "Multiply the learning rate by 0.001 every 50 epochs");
    bool no_augment = false;
    t->add_flag("--no-augment", no_augment, "Disable augmentation");

    EvalOptions eval;
    eval.seed = seed;
    auto* e = app.add_subcommand("eval", "Evaluate landmark predictions with OKS");
    e->add_option("--data", eval.data)->required();
    e->add_option("--checkpoint", eval.checkpoint);
    e->add_option("--config", eval.config);
    e->add_option("--out", eval.out)->required();
    e->add_option("--split", eval.split)->capture_default_str();
    e->add_option("--seed", eval.seed)->capture_default_str();
    e->add_option("--sigma", eval.sigma)->capture_default_str();
    e->add_option("--workers", eval.workers)->capture_default_str();
    e->add_flag("--oracle", eval.oracle, "Evaluate ground truth re-encoded through heatmaps");

    WeightOptions wopt;
    wopt.seed = seed;
    auto* w = app.add_subcommand("weight", "Weight estimation comparison or PCA ablation");
    w->add_option("--data", wopt.data)->required();
    w->add_option("--out", wopt.out)->required();
    w->add_option("--mode", wopt.mode)->capture_default_str();
    w->add_option("--seed", wopt.seed)->capture_default_str();
    w->add_option("--epochs", wopt.epochs)->capture_default_str();
    w->add_option("--threshold", wopt.threshold)->capture_default_str();
    w->add_option("--workers", wopt.workers)->capture_default_str();

    PcaOptions popt;
    auto* p = app.add_subcommand("pca", "Principal components of inter-landmark distances");
    p->add_option("--data", popt.data)->required();
    p->add_option("--out", popt.out)->required();
    p->add_option("--components", popt.components, "Components to keep (0 = all)")->capture_default_str();

    BenchOptions bopt;
    bopt.seed = seed;
    auto* b = app.add_subcommand("bench", "Cost and throughput table for n = 1 and the configured order");
    b->add_option("--config", bopt.config);
    b->add_option("--input-size", bopt.input_size)->capture_default_str();
    b->add_option("--passes", bopt.passes)->capture_default_str();
    b->add_option("--warmup", bopt.warmup)->capture_default_str();
    b->add_option("--out", bopt.out)->required();
    b->add_option("--data", bopt.data);
    b->add_option("--checkpoint", bopt.checkpoint);
    b->add_option("--seed", bopt.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::ParseError& ex) {
        err << ex.what() << '\n';
        return kUsage;
    }

    if (g->parsed()) return cmd_gen(gen, err);
    if (t->parsed()) {
        train.augment = !no_augment;
        return cmd_train(train, err);
    }
    if (e->parsed()) return cmd_eval(eval, err);
    if (w->parsed()) return cmd_weight(wopt, err);
    if (p->parsed()) return cmd_pca(popt, err);
    if (b->parsed()) return cmd_bench(bopt, err);
    return kUsage;
}

}  // namespace kronmark::cli
