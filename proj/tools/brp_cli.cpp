// brp — command-line driver for random-projection bilinear pooling:
// kernel verification suites, complexity micro-benchmarks, synthetic data
// generation, and the temporal segmentation demo.

#include "brp/brp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Run manifest: command echo, seed, timings, outputs. Written on success and
// failure alike, next to the primary output.
// ---------------------------------------------------------------------------
struct Manifest {
    json doc;
    std::string path;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    Manifest(const std::string& command, const std::string& out_path) {
        doc["command"] = command;
        doc["tool_version"] = brp::version;
        doc["outputs"] = json::array();
        doc["timings_sec"] = json::object();
        path = out_path;
    }
    void config(const json& cfg) { doc["config"] = cfg; }
    void output(const std::string& p) { doc["outputs"].push_back(p); }
    void phase(const std::string& name) {
        const auto now = std::chrono::steady_clock::now();
        doc["timings_sec"][name] = std::chrono::duration<double>(now - t0).count();
        t0 = now;
    }
    void finish(const std::string& status, const std::string& error = "") {
        doc["status"] = status;
        if (!error.empty()) doc["error"] = error;
        std::ofstream out(path, std::ios::trunc);
        if (out) out << doc.dump(2) << "\n";
    }
};

brp::Vec unit_axis(std::size_t d, std::size_t axis) {
    brp::Vec v(d, 0.0);
    v[axis] = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// verify-kernel
// ---------------------------------------------------------------------------

std::vector<brp::KernelReport> suite_rademacher(const brp::Rng& rng, std::size_t d,
                                                std::size_t rows, std::size_t rank,
                                                std::size_t samples) {
    using brp::Vec;
    struct Quad {
        const char* name;
        Vec x1, x2, y1, y2;
    };
    Vec e0 = unit_axis(d, 0), e1 = unit_axis(d, 1), e5 = unit_axis(d, 5 % d);
    Vec x_mix(d, 0.0), y_a(d, 0.0), y_b(d, 0.0), x_neg(d, 0.0);
    x_mix[0] = 0.6;
    x_mix[1] = 0.8;
    x_neg[0] = 0.6;
    x_neg[1] = -0.8;
    y_a[1] = 0.28;
    y_a[2] = 0.96;
    y_b[1] = 0.96;
    y_b[2] = 0.28;
    const std::vector<Quad> quads = {
        {"orthogonal", e0, e1, e0, e0},
        {"identical", e0, e0, e0, e0},
        {"cos_0.6", e0, x_mix, e0, e0},
        {"negative", x_mix, x_neg, e5, e5},
        {"mixed", e0, e0, y_a, y_b},
    };
    std::vector<brp::KernelReport> reports;
    for (const auto& q : quads) {
        reports.push_back(brp::estimate_linear_kernel(
            rng, d, d, rows, rows, rank, q.x1, q.x2, q.y1, q.y2, samples,
            std::string("rademacher_r") + std::to_string(rank) + "_" + q.name));
    }
    return reports;
}

std::vector<brp::KernelReport> suite_concentration(const brp::Rng& rng, std::size_t samples) {
    const brp::ConcentrationInputs in = brp::default_concentration_inputs(rng);
    return brp::check_concentration(rng, {{4, 4}, {16, 16}}, {0.5}, samples, in);
}

std::vector<brp::KernelReport> suite_gaussian(const brp::Rng& rng, std::size_t samples) {
    const std::size_t d = 8, m = 8;
    brp::Vec x1 = unit_axis(d, 0), x2 = unit_axis(d, 0), y1 = unit_axis(d, 1),
             y2 = unit_axis(d, 1);
    x2[0] += 1.0;  // ‖x1-x2‖ = 1
    y2[1] += 0.5;  // ‖y1-y2‖ = 0.5
    std::vector<brp::KernelReport> reports;
    reports.push_back(brp::check_gaussian_product(rng, d, d, m, m, 1.0, 1.0, x1, x2, y1, y2,
                                                  samples, "gaussian_separated"));
    reports.push_back(brp::check_gaussian_product(rng, d, d, m, m, 1.0, 1.0, x1, x1, y1, y1,
                                                  samples / 10, "gaussian_identical"));
    reports.push_back(brp::check_gaussian_product(rng, d, d, m, m, 1000.0, 1000.0, x1, x2, y1,
                                                  y1, samples, "gaussian_wide_bandwidth"));
    return reports;
}

std::vector<brp::KernelReport> suite_variance(const brp::Rng& rng, std::size_t samples) {
    brp::VarianceStructureConfig cfg;
    cfg.dx = cfg.dy = 32;
    brp::Rng gen = rng.split(999);
    auto unit = [&](std::size_t d) {
        brp::Vec v(d);
        for (double& t : v) t = gen.normal();
        const double nrm = brp::norm2(v);
        for (double& t : v) t /= nrm;
        return v;
    };
    cfg.x1 = unit(cfg.dx);
    cfg.x2 = unit(cfg.dx);
    cfg.y1 = unit(cfg.dy);
    cfg.y2 = unit(cfg.dy);

    std::vector<brp::KernelReport> reports;
    cfg.m = cfg.n = 8;
    const auto small = brp::check_variance_structure(rng, cfg, samples, 5.0,
                                                     "variance_identity_m8");
    reports.push_back(small.identity);
    cfg.m = cfg.n = 32;
    const auto large = brp::check_variance_structure(rng, cfg, samples, 5.0,
                                                     "variance_identity_m32");
    reports.push_back(large.identity);
    // Var(k) must shrink when M, N grow.
    reports.push_back(brp::mc::one_sided("variance_decay_m8_to_m32", large.var_k_direct,
                                         small.var_k_direct, 0.0, samples, rng.seed()));
    return reports;
}

std::vector<brp::KernelReport> suite_simplified(const brp::Rng& rng, std::size_t d,
                                                std::size_t rows, std::size_t rank,
                                                std::size_t samples) {
    brp::Vec e0 = unit_axis(d, 0), e1 = unit_axis(d, 1);
    std::vector<brp::KernelReport> reports;
    reports.push_back(brp::check_simplified_gaussian(rng, d, d, rows, rows, rank, 1.0, 1.0, e0,
                                                     e0, e0, e0, samples,
                                                     "simplified_identical"));
    reports.push_back(brp::check_simplified_gaussian(rng, d, d, rows, rows, rank, 1.0, 1.0, e0,
                                                     e1, e0, e0, samples,
                                                     "simplified_orthogonal"));
    reports.push_back(brp::check_simplified_gaussian(rng, d, d, rows, rows, rank, 2.0, 2.0, e0,
                                                     e0, e0, e0, samples,
                                                     "simplified_sigma2"));
    return reports;
}

int cmd_verify_kernel(const std::string& suite, std::uint64_t seed, std::size_t samples,
                      std::size_t rank, std::size_t rows, std::size_t dims,
                      const std::string& out_path) {
    Manifest manifest("verify-kernel", out_path + ".manifest.json");
    manifest.config({{"suite", suite},
                     {"seed", seed},
                     {"samples", samples},
                     {"rank", rank},
                     {"rows", rows},
                     {"dims", dims},
                     {"out", out_path}});
    try {
        const brp::Rng rng(seed);
        std::vector<brp::KernelReport> reports;
        auto append = [&](std::vector<brp::KernelReport> r) {
            for (auto& x : r) reports.push_back(std::move(x));
        };
        if (suite == "rademacher" || suite == "all")
            append(suite_rademacher(rng, dims, rows, rank, samples));
        if (suite == "concentration" || suite == "all")
            append(suite_concentration(rng, std::min<std::size_t>(samples, 50000)));
        if (suite == "gaussian" || suite == "all") append(suite_gaussian(rng, samples));
        if (suite == "variance" || suite == "all")
            append(suite_variance(rng, std::min<std::size_t>(samples, 100000)));
        if (suite == "simplified" || suite == "all")
            append(suite_simplified(rng, dims, rows, rank, samples));
        manifest.phase("sampling");
        brp::write_reports_jsonl(reports, out_path);
        manifest.output(out_path);
        manifest.phase("write");
        bool all_pass = true;
        for (const auto& r : reports) {
            std::printf("%-36s mean=%+.6f target=%+.6f z=%+.3f  %s\n", r.test_name.c_str(),
                        r.empirical_mean, r.target, r.z_score, r.pass ? "PASS" : "FAIL");
            all_pass = all_pass && r.pass;
        }
        manifest.finish(all_pass ? "ok" : "check_failed");
        return all_pass ? kExitOk : kExitCheckFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "verify-kernel: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitUsage;
    }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchRow {
    std::string variant;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    double median_ns = 0.0;
    brp::FlopCount flops = 0;
};

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return (v.size() % 2) ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

template <typename Fn>
double time_median_ns(Fn&& call, std::size_t reps, std::size_t inner) {
    for (std::size_t i = 0; i < 10; ++i) call(); // warmup
    std::vector<double> times;
    times.reserve(reps);
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < inner; ++i) call();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() /
                        static_cast<double>(inner));
    }
    return median_of(std::move(times));
}

std::vector<BenchRow> run_bench(std::uint64_t seed, std::size_t d_in,
                                const std::vector<std::size_t>& d_grid, std::size_t rank,
                                std::size_t reps) {
    std::vector<BenchRow> rows;
    volatile double sink = 0.0;
    for (std::size_t d_out : d_grid) {
        const auto m = static_cast<std::size_t>(std::llround(std::sqrt(double(d_out))));
        brp::Rng rng(seed);
        brp::Vec x(d_in), y(d_in);
        for (double& t : x) t = rng.normal();
        for (double& t : y) t = rng.normal();

        // ours: rank-R random projection + outer product
        brp::ProjectionStack stack = brp::build_rademacher(rng, rank, m, m, d_in, d_in);
        brp::BilinearConfig cfg{brp::PoolVariant::Rademacher, rank, m, m, d_in, d_in, true};
        BenchRow ours;
        ours.variant = "rp_outer";
        ours.d_in = d_in;
        ours.d_out = m * m;
        ours.flops = brp::forward_rp_flops(rank, m, m, d_in, d_in, true);
        ours.median_ns = time_median_ns(
            [&] {
                const brp::Vec z = brp::forward_rp(stack, cfg, x, y);
                sink = sink + z[0];
            },
            reps, std::max<std::size_t>(1, 2'000'000 / ours.flops));
        rows.push_back(ours);

        // hadamard baseline: lift both inputs to d_out, elementwise product
        brp::Rng hrng(seed + 1);
        brp::Mat u(m * m, d_in), v(m * m, d_in);
        for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = hrng.normal();
        for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = hrng.normal();
        BenchRow had;
        had.variant = "hadamard";
        had.d_in = d_in;
        had.d_out = m * m;
        had.flops = brp::forward_hadamard_flops(m * m, d_in, d_in, 0);
        had.median_ns = time_median_ns(
            [&] {
                const brp::Vec z = brp::forward_hadamard(u, v, x, y);
                sink = sink + z[0];
            },
            reps, std::max<std::size_t>(1, 2'000'000 / had.flops));
        rows.push_back(had);
    }
    (void)sink;
    return rows;
}

int cmd_bench(std::uint64_t seed, std::size_t d_in, const std::vector<std::size_t>& d_grid,
              std::size_t rank, std::size_t reps, const std::string& out_path) {
    Manifest manifest("bench", out_path + ".manifest.json");
    manifest.config({{"seed", seed},
                     {"input_dim", d_in},
                     {"d_grid", d_grid},
                     {"rank", rank},
                     {"reps", reps},
                     {"out", out_path}});
    try {
        const std::vector<BenchRow> rows = run_bench(seed, d_in, d_grid, rank, reps);
        manifest.phase("bench");
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw brp::io_error(brp::io_error::kind::open_failed,
                                      "cannot open for write: " + out_path);
        out << "variant,D,d,median_ns,flops\n";
        for (const auto& r : rows) {
            char line[160];
            std::snprintf(line, sizeof line, "%s,%zu,%zu,%.1f,%llu\n", r.variant.c_str(), r.d_in,
                          r.d_out, r.median_ns, static_cast<unsigned long long>(r.flops));
            out << line;
            std::fputs(line, stdout);
        }
        manifest.output(out_path);
        manifest.finish("ok");
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bench: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitUsage;
    }
}

// ---------------------------------------------------------------------------
// gen-data / train / eval
// ---------------------------------------------------------------------------

int cmd_gen_data(const brp::SynthConfig& cfg, std::size_t sequences, std::size_t folds,
                 bool labels_text, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Manifest manifest("gen-data", (fs::path(out_dir) / "manifest.json").string());
    manifest.config({{"out", out_dir},
                     {"seed", cfg.seed},
                     {"sequences", sequences},
                     {"classes", cfg.n_classes},
                     {"dims", cfg.dim},
                     {"t_min", cfg.t_min},
                     {"t_max", cfg.t_max},
                     {"stickiness", cfg.stickiness},
                     {"noise_std", cfg.noise_std},
                     {"mean_separation", cfg.mean_separation},
                     {"folds", folds}});
    try {
        const std::vector<brp::FeatureSequence> seqs = brp::gen_synthetic(cfg, sequences);
        manifest.phase("generate");
        for (const auto& seq : seqs) {
            const std::string path = (fs::path(out_dir) / (seq.id + ".brpf")).string();
            brp::write_features(path, seq, cfg.n_classes);
            if (labels_text)
                brp::write_labels_text((fs::path(out_dir) / (seq.id + ".labels.txt")).string(),
                                       seq);
            manifest.output(path);
        }
        const std::vector<brp::Fold> fold_list = brp::make_folds(sequences, folds);
        json fj;
        fj["n_sequences"] = sequences;
        fj["k"] = folds;
        fj["n_classes"] = cfg.n_classes;
        fj["dim"] = cfg.dim;
        fj["folds"] = json::array();
        for (const auto& f : fold_list) {
            json one;
            one["train"] = json::array();
            one["test"] = json::array();
            for (std::size_t i : f.train_ids) one["train"].push_back(seqs[i].id);
            for (std::size_t i : f.test_ids) one["test"].push_back(seqs[i].id);
            fj["folds"].push_back(one);
        }
        const std::string folds_path = (fs::path(out_dir) / "folds.json").string();
        std::ofstream fo(folds_path, std::ios::trunc);
        fo << fj.dump(2) << "\n";
        manifest.output(folds_path);
        manifest.phase("write");
        manifest.finish("ok");
        std::printf("gen-data: wrote %zu sequences + folds.json to %s\n", seqs.size(),
                    out_dir.c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "gen-data: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitUsage;
    }
}

struct Dataset {
    std::vector<brp::FeatureSequence> train, test;
    std::size_t n_classes = 0;
    std::size_t dim = 0;
};

Dataset load_fold(const std::string& dir, std::size_t fold) {
    const std::string folds_path = (fs::path(dir) / "folds.json").string();
    std::ifstream in(folds_path);
    if (!in)
        throw brp::io_error(brp::io_error::kind::open_failed,
                            "missing fold manifest: " + folds_path);
    json fj = json::parse(in);
    if (fold >= fj["folds"].size())
        throw brp::config_error("fold index " + std::to_string(fold) + " out of range (k=" +
                                std::to_string(fj["folds"].size()) + ")");
    Dataset ds;
    ds.n_classes = fj["n_classes"].get<std::size_t>();
    ds.dim = fj["dim"].get<std::size_t>();
    auto load_list = [&](const json& ids, std::vector<brp::FeatureSequence>& dst) {
        for (const auto& id : ids) {
            const std::string path =
                (fs::path(dir) / (id.get<std::string>() + ".brpf")).string();
            brp::ReadResult r = brp::read_features(path);
            if (r.n_classes != ds.n_classes || r.seq.dim() != ds.dim)
                throw brp::io_error(brp::io_error::kind::malformed,
                                    path + ": header disagrees with fold manifest");
            dst.push_back(std::move(r.seq));
        }
    };
    load_list(fj["folds"][fold]["train"], ds.train);
    load_list(fj["folds"][fold]["test"], ds.test);
    return ds;
}

brp::PoolVariant parse_variant(const std::string& name) {
    if (name == "rpbinary") return brp::PoolVariant::Rademacher;
    if (name == "rpgaussian") return brp::PoolVariant::OrthGaussianSimplified;
    if (name == "rpgaussianfull") return brp::PoolVariant::OrthGaussianFull;
    if (name == "learnable") return brp::PoolVariant::Learnable;
    if (name == "hadamard") return brp::PoolVariant::HadamardBaseline;
    throw brp::config_error("unknown variant: " + name);
}

double split_accuracy(const brp::StageParams& p, const std::vector<brp::FeatureSequence>& seqs) {
    std::size_t correct = 0, total = 0;
    for (const auto& seq : seqs) {
        const brp::SegmentLabeling pred = brp::predict(p, seq.features);
        for (std::size_t t = 0; t < seq.labels.size(); ++t)
            if (pred.frames[t] == seq.labels[t]) ++correct;
        total += seq.labels.size();
    }
    return total ? 100.0 * double(correct) / double(total) : 0.0;
}

int cmd_train(const std::string& data_dir, std::size_t fold, const std::string& variant,
              brp::TrainConfig tcfg, double dropout, double block_dropout, std::size_t hidden,
              std::size_t layers, std::size_t rank, std::size_t rows, std::size_t khead,
              const std::string& out_path, const std::string& log_path) {
    Manifest manifest("train", out_path + ".manifest.json");
    manifest.config({{"data", data_dir},
                     {"fold", fold},
                     {"variant", variant},
                     {"epochs", tcfg.epochs},
                     {"lr", tcfg.learning_rate},
                     {"dropout", dropout},
                     {"block_dropout", block_dropout},
                     {"seed", tcfg.seed},
                     {"hidden", hidden},
                     {"layers", layers},
                     {"rank", rank},
                     {"rows", rows},
                     {"khead", khead},
                     {"out", out_path},
                     {"log", log_path}});
    try {
        const Dataset ds = load_fold(data_dir, fold);
        manifest.phase("load");

        brp::StageConfig cfg;
        cfg.in_dim = ds.dim;
        cfg.hidden = hidden;
        cfg.layers = layers;
        cfg.n_classes = ds.n_classes;
        cfg.dropout = dropout;
        cfg.block_dropout = block_dropout;
        cfg.head_kernel = khead;
        if (variant == "baseline") {
            cfg.head = brp::HeadKind::Conv1x1;
        } else {
            cfg.head = brp::HeadKind::Bilinear;
            cfg.pool_variant = parse_variant(variant);
            cfg.pool_rank = rank;
            cfg.pool_rows = rows ? rows : hidden / 2;
        }
        brp::Rng rng(tcfg.seed);
        brp::StageParams params = brp::init_stage(rng, cfg);
        brp::StageGrads grads = brp::make_grads(params);
        brp::Adam opt(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.adam_eps);

        std::ofstream log(log_path, std::ios::trunc);
        if (!log)
            throw brp::io_error(brp::io_error::kind::open_failed,
                                "cannot open for write: " + log_path);
        log << "epoch,loss,train_acc,val_acc\n";
        for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
            const brp::EpochStats st = brp::train_epoch(params, opt, ds.train, rng, grads);
            const double val_acc = split_accuracy(params, ds.test);
            char line[128];
            std::snprintf(line, sizeof line, "%zu,%.6f,%.4f,%.4f\n", epoch, st.mean_loss,
                          st.train_acc, val_acc);
            log << line;
            std::printf("epoch %3zu  loss %.4f  train_acc %.2f  val_acc %.2f\n", epoch,
                        st.mean_loss, st.train_acc, val_acc);
        }
        manifest.phase("train");
        brp::save_checkpoint(params, out_path);
        manifest.output(out_path);
        manifest.output(log_path);
        manifest.finish("ok");
        return kExitOk;
    } catch (const brp::train_error& e) {
        std::fprintf(stderr, "train: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitCheckFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "train: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitUsage;
    }
}

int cmd_eval(const std::string& data_dir, std::size_t fold, const std::string& ckpt_path,
             const std::string& out_path) {
    Manifest manifest("eval", out_path + ".manifest.json");
    manifest.config(
        {{"data", data_dir}, {"fold", fold}, {"ckpt", ckpt_path}, {"out", out_path}});
    try {
        const Dataset ds = load_fold(data_dir, fold);
        const brp::StageParams params = brp::load_checkpoint(ckpt_path);
        manifest.phase("load");
        std::vector<brp::SegmentLabeling> preds, gts;
        for (const auto& seq : ds.test) {
            preds.push_back(brp::predict(params, seq.features));
            gts.push_back(brp::segments_from_frames(seq.labels));
        }
        const brp::MetricsReport report = brp::evaluate_split(preds, gts);
        manifest.phase("eval");
        std::ofstream out(out_path, std::ios::trunc);
        if (!out)
            throw brp::io_error(brp::io_error::kind::open_failed,
                                "cannot open for write: " + out_path);
        out << brp::to_json(report).dump(2) << "\n";
        manifest.output(out_path);
        std::printf("acc %.2f  edit %.2f  f1@0.10 %.2f  f1@0.25 %.2f  f1@0.50 %.2f\n",
                    report.acc, report.edit, report.f1_10, report.f1_25, report.f1_50);
        manifest.finish("ok");
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "eval: %s\n", e.what());
        manifest.finish("error", e.what());
        return kExitUsage;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-projection bilinear pooling toolkit"};
    app.require_subcommand(0, 1);

    // verify-kernel
    auto* vk = app.add_subcommand("verify-kernel", "run Monte-Carlo kernel checks");
    std::string vk_suite = "all";
    std::uint64_t vk_seed = 1;
    std::size_t vk_samples = 200000, vk_rank = 1, vk_rows = 8, vk_dims = 16;
    std::string vk_out = "kernel_reports.jsonl";
    vk->add_option("--suite", vk_suite, "rademacher|concentration|gaussian|variance|simplified|all")
        ->check(CLI::IsMember({"rademacher", "concentration", "gaussian", "variance",
                               "simplified", "all"}));
    vk->add_option("--seed", vk_seed);
    vk->add_option("--samples", vk_samples)->check(CLI::Range(std::size_t{1000}, std::size_t{100000000}));
    vk->add_option("--rank", vk_rank)->check(CLI::PositiveNumber);
    vk->add_option("--rows", vk_rows)->check(CLI::PositiveNumber);
    vk->add_option("--dims", vk_dims)->check(CLI::PositiveNumber);
    vk->add_option("--out", vk_out);

    // bench
    auto* bn = app.add_subcommand("bench", "flop-count and wall-clock comparison vs hadamard");
    std::uint64_t bn_seed = 1;
    std::size_t bn_din = 64, bn_rank = 1, bn_reps = 100;
    std::vector<std::size_t> bn_grid = {256, 1024, 4096, 16384};
    std::string bn_out = "bench.csv";
    bn->add_option("--seed", bn_seed);
    bn->add_option("--input-dim", bn_din)->check(CLI::PositiveNumber);
    bn->add_option("--dims", bn_grid, "output-dimension grid");
    bn->add_option("--rank", bn_rank)->check(CLI::PositiveNumber);
    bn->add_option("--reps", bn_reps)->check(CLI::Range(std::size_t{10}, std::size_t{100000}));
    bn->add_option("--out", bn_out);

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "generate a synthetic segmentation dataset");
    brp::SynthConfig synth;
    std::size_t gd_sequences = 80, gd_folds = 4;
    bool gd_labels_text = false;
    std::string gd_out = "data";
    gd->add_option("--out", gd_out)->required();
    gd->add_option("--seed", synth.seed);
    gd->add_option("--sequences", gd_sequences)->check(CLI::PositiveNumber);
    gd->add_option("--classes", synth.n_classes)->check(CLI::PositiveNumber);
    gd->add_option("--dims", synth.dim)->check(CLI::PositiveNumber);
    gd->add_option("--t-min", synth.t_min)->check(CLI::PositiveNumber);
    gd->add_option("--t-max", synth.t_max)->check(CLI::PositiveNumber);
    gd->add_option("--stickiness", synth.stickiness);
    gd->add_option("--noise-std", synth.noise_std);
    gd->add_option("--separation", synth.mean_separation);
    gd->add_option("--folds", gd_folds)->check(CLI::PositiveNumber);
    gd->add_flag("--export-labels-text", gd_labels_text);

    // train
    auto* tr = app.add_subcommand("train", "train the single-stage network on one fold");
    std::string tr_data, tr_variant = "rpgaussian", tr_out = "model.brpc", tr_log = "train.csv";
    std::size_t tr_fold = 0, tr_hidden = 32, tr_layers = 6, tr_rank = 4, tr_rows = 0,
                tr_khead = 25;
    double tr_dropout = 0.25, tr_block_dropout = 0.5;
    brp::TrainConfig tcfg;
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--fold", tr_fold);
    tr->add_option("--variant", tr_variant)
        ->check(CLI::IsMember({"rpbinary", "rpgaussian", "rpgaussianfull", "learnable",
                               "hadamard", "baseline"}));
    tr->add_option("--epochs", tcfg.epochs);
    tr->add_option("--lr", tcfg.learning_rate)->check(CLI::PositiveNumber);
    tr->add_option("--dropout", tr_dropout)->check(CLI::Range(0.0, 0.999));
    tr->add_option("--block-dropout", tr_block_dropout)->check(CLI::Range(0.0, 0.999));
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--hidden", tr_hidden)->check(CLI::PositiveNumber);
    tr->add_option("--layers", tr_layers)->check(CLI::PositiveNumber);
    tr->add_option("--rank", tr_rank)->check(CLI::PositiveNumber);
    tr->add_option("--rows", tr_rows, "M = N (default hidden/2)");
    tr->add_option("--khead", tr_khead, "head receptive field (odd)");
    tr->add_option("--out", tr_out);
    tr->add_option("--log", tr_log);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one fold's test split");
    std::string ev_data, ev_ckpt, ev_out = "metrics.json";
    std::size_t ev_fold = 0;
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--fold", ev_fold);
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--out", ev_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (vk->parsed()) {
        if (vk_suite == "gaussian" && vk_rank != 1) {
            std::fprintf(stderr,
                         "verify-kernel: the gaussian exactness suite requires --rank 1\n");
            return kExitUsage;
        }
        return cmd_verify_kernel(vk_suite, vk_seed, vk_samples, vk_rank, vk_rows, vk_dims,
                                 vk_out);
    }
    if (bn->parsed()) return cmd_bench(bn_seed, bn_din, bn_grid, bn_rank, bn_reps, bn_out);
    if (gd->parsed()) return cmd_gen_data(synth, gd_sequences, gd_folds, gd_labels_text, gd_out);
    if (tr->parsed())
        return cmd_train(tr_data, tr_fold, tr_variant, tcfg, tr_dropout, tr_block_dropout,
                         tr_hidden, tr_layers, tr_rank, tr_rows, tr_khead, tr_out, tr_log);
    if (ev->parsed()) return cmd_eval(ev_data, ev_fold, ev_ckpt, ev_out);

    std::fputs(app.help().c_str(), stderr);
    return kExitUsage;
}
