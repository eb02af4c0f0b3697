// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

// Exit codes: 0 success, 1 verification failure, 2 invalid spec, 3 I/O failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "acceptance/acceptance_suite.hpp"
#include "gtp/gtp.hpp"
#include "report_io.hpp"
#include "run_spec.hpp"

namespace fs = std::filesystem;
using namespace gtp;
using namespace gtp::cli;

namespace {

constexpr int kExitVerify = 1;
constexpr int kExitSpec = 2;
constexpr int kExitIo = 3;

void add_spec_flags(CLI::App& cmd, RunSpec& s) {
    cmd.add_option("--preset", s.preset, "model preset")->check(CLI::IsMember(presets::names()));
    cmd.add_option("--config", s.config, "JSON object or file; overrides flags");
    cmd.add_option("--seed", s.seed, "fixture and random-selection seed");
    cmd.add_option("--p", s.p, "tokens propagated per layer");
    cmd.add_option("--alpha", s.alpha, "propagation strength");
    cmd.add_option("--theta", s.theta, "attention keep fraction in (0, 1]");
    cmd.add_option("--m", s.m_neighbors, "semantic neighbours per token");
    cmd.add_option("--graph", s.graph_kind, "spatial | semantic | mixed");
    cmd.add_option("--strategy", s.strategy, "token selection strategy");
    cmd.add_option("--aggregator", s.aggregator, "head aggregator: max | mean");
    cmd.add_option("--score-source", s.score_source, "sparse | dense");
}

Image image_from_store(const WeightStore& store, const std::string& path) {
    const auto it = store.find("image");
    if (it == store.end() || it->second.dims.size() != 3) {
        throw SchemaError("'" + path + "' has no [H, W, C] tensor named 'image'");
    }
    const Tensor& t = it->second;
    return Image{t.dims[0], t.dims[1], t.dims[2], {t.data.begin(), t.data.end()}};
}

WeightStore image_to_store(const Image& img) {
    Tensor t{{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width),
              static_cast<std::uint32_t>(img.channels)},
             {}};
    t.data.reserve(img.pixels.size());
    for (double p : img.pixels) t.data.push_back(static_cast<float>(p));
    return {{"image", std::move(t)}};
}

WeightStore read_store(const std::string& path) {
    if (!fs::is_regular_file(path)) throw IoError("cannot read '" + path + "'");
    return load_weights(path);
}

// ---------------------------------------------------------------- forward

struct ForwardArgs {
    RunSpec spec;
    std::string weights_path;
    std::string image_path;
    bool masks = true;
};

nlohmann::ordered_json summary_json(const ModelConfig& cfg, std::uint64_t seed, const ForwardResult& r) {
    const auto cost = complexity::backbone_macs(cfg);
    nlohmann::ordered_json j;
    j["config"] = to_json(cfg);
    j["seed"] = seed;
    j["logits"] = r.logits;
    j["final_token_ids"] = r.final_token_ids;
    j["macs"] = {{"instrumented", r.macs},
                 {"analytic_backbone", cost.backbone_total},
                 {"analytic_overhead", cost.overhead_total},
                 {"matching", r.matching_macs}};
    j["graph_builds"] = r.graph_builds;
    std::vector<double> trace;
    for (const auto& d : r.layers) trace.push_back(d.oversmoothing);
    j["oversmoothing"] = trace;
    j["logits_checksum"] = checksum(r.logits);
    return j;
}

std::string diagnostics_csv(const ForwardResult& r) {
    std::string out = csv_row({"layer", "live_image_tokens", "kept_ids", "propagated_ids", "oversmoothing", "size_mass"});
    for (const auto& d : r.layers) {
        out += csv_row({std::to_string(d.layer), std::to_string(d.live_image_tokens), join(d.kept_ids),
                        join(d.propagated_ids), num(d.oversmoothing), num(d.size_mass)});
    }
    return out;
}

std::string plans_csv(const ForwardResult& r) {
    std::string out = "layer,kept,propagated,scores\n";
    for (const auto& d : r.layers) {
        if (d.plan) out += d.plan->csv_line(d.layer) + "\n";
    }
    return out;
}

int run_forward(ForwardArgs& a) {
    const ModelConfig cfg = resolve(a.spec);
    const WeightStore store =
        a.weights_path.empty() ? generate_weights(a.spec.seed, cfg) : read_store(a.weights_path);
    const Image img = a.image_path.empty() ? generate_image(a.spec.seed, cfg)
                                           : image_from_store(read_store(a.image_path), a.image_path);
    const ModelWeights w = load_model_weights(cfg, store);

    ForwardResult r;
    for (std::size_t i = 0; i < a.spec.repeat; ++i) {
        ForwardResult next = forward(cfg, w, img, {.seed = a.spec.seed});
        if (i > 0 && next.logits != r.logits) throw std::runtime_error("repeated forward is not deterministic");
        r = std::move(next);
    }

    const auto summary = summary_json(cfg, a.spec.seed, r);
    if (a.spec.out.empty()) {
        std::cout << summary.dump(2) << "\n";
        return 0;
    }
    const fs::path out = a.spec.out;
    ensure_dir(out);
    write_text(out / "summary.json", summary.dump(2) + "\n");
    write_text(out / "diagnostics.csv", diagnostics_csv(r));
    write_text(out / "plans.csv", plans_csv(r));
    if (a.masks) {
        ensure_dir(out / "masks");
        for (const auto& d : r.layers) {
            char name[32];
            std::snprintf(name, sizeof name, "layer_%02zu.pgm", d.layer);
            write_text(out / "masks" / name, pgm_mask(cfg.grid(), d.kept_ids));  // ids are grid indices
        }
    }
    std::cout << "wrote " << out.string() << " (" << r.layers.size() << " layers, final live "
              << r.final_token_ids.size() << ")\n";
    return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    RunSpec spec;
    std::string p_list, alpha_list, theta_list, m_list, graph_list, strategy_list;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) throw ConfigError("empty entry in list '" + s + "'");
        out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<std::optional<T>> parse_list(const std::string& s, const std::optional<T>& fallback) {
    if (s.empty()) return {fallback};
    std::vector<std::optional<T>> out;
    for (const auto& item : split_list(s)) {
        if constexpr (std::is_same_v<T, std::string>) {
            out.emplace_back(item);
        } else {
            std::istringstream is(item);
            T v{};
            if (!(is >> v) || !is.eof()) throw ConfigError("cannot parse '" + item + "' in list '" + s + "'");
            if constexpr (std::is_unsigned_v<T>) {
                if (item.front() == '-') throw ConfigError("negative value '" + item + "'");
            }
            out.emplace_back(v);
        }
    }
    return out;
}

struct SweepCell {
    RunSpec spec;
    ModelConfig cfg;
};

int run_sweep(SweepArgs& a) {
    const ModelConfig base = resolve(a.spec);
    const auto ps = parse_list<std::size_t>(a.p_list, base.reduction.p_per_layer);
    const auto alphas = parse_list<double>(a.alpha_list, base.reduction.alpha);
    const auto thetas = parse_list<double>(a.theta_list, base.reduction.theta);
    const auto ms = parse_list<std::size_t>(a.m_list, base.reduction.m_neighbors);
    const auto graphs = parse_list<std::string>(a.graph_list, std::string(to_string(base.reduction.graph_kind)));
    const auto strategies = parse_list<std::string>(a.strategy_list, std::string(to_string(base.reduction.strategy)));

    // every cell is resolved before any work starts
    std::vector<SweepCell> cells;
    for (const auto& p : ps)
        for (const auto& al : alphas)
            for (const auto& th : thetas)
                for (const auto& m : ms)
                    for (const auto& g : graphs)
                        for (const auto& s : strategies) {
                            RunSpec cs = a.spec;
                            cs.p = p, cs.alpha = al, cs.theta = th, cs.m_neighbors = m, cs.graph_kind = g,
                            cs.strategy = s;
                            ModelConfig cfg = resolve(cs);
                            cells.push_back({std::move(cs), std::move(cfg)});
                        }

    const Fixture fx = generate_fixture(a.spec.seed, base);
    const ModelWeights w = load_model_weights(base, fx.weights);

    std::vector<std::string> rows(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
            try {
                const auto& [cs, cfg] = cells[i];
                const ForwardResult r = forward(cfg, w, fx.image, {.seed = cs.seed});
                const auto cost = complexity::backbone_macs(cfg);
                double lo = r.layers.empty() ? 0.0 : r.layers.front().oversmoothing;
                double hi = r.layers.empty() ? 0.0 : r.layers.back().oversmoothing;
                double mean = 0.0;
                for (const auto& d : r.layers) mean += d.oversmoothing / static_cast<double>(r.layers.size());
                const auto& red = cfg.reduction;
                rows[i] = csv_row({cfg.name, std::to_string(red.p_per_layer), num(red.alpha), num(red.theta),
                                   std::to_string(red.m_neighbors), std::string(to_string(red.graph_kind)),
                                   std::string(to_string(red.strategy)), num(cost.grand_total / 1e9),
                                   num(cost.overhead_total / 1e6), std::to_string(r.final_token_ids.size()), num(lo),
                                   num(hi), num(mean), checksum(r.logits)});
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GTP_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v < 1) throw ConfigError(std::string("GTP_THREADS must be a positive integer, got '") + env + "'");
        threads = static_cast<std::size_t>(v);
    }
    threads = std::min(threads, cells.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::string csv = csv_row({"preset", "p", "alpha", "theta", "m", "graph", "strategy", "gmacs", "overhead_mmacs",
                               "final_tokens", "oversmoothing_first", "oversmoothing_last", "oversmoothing_mean",
                               "logits_fnv1a"});
    for (const auto& r : rows) csv += r;
    if (a.spec.out.empty()) {
        std::cout << csv;
    } else {
        write_text(a.spec.out, csv);
        std::cout << "wrote " << cells.size() << " rows to " << a.spec.out << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- bench-overhead

int run_bench(const BenchSpec& spec, const std::string& json_out) {
    const BenchReport r = bench_overhead(spec);
    std::printf("tokens %zu  channels %zu  heads %zu  P %zu  repeats %zu\n", r.tokens, spec.channels, spec.heads,
                spec.p, spec.repeats);
    std::printf("%-10s %12s %10s %12s %12s %18s\n", "method", "median_us", "mad_us", "min_us", "max_us",
                "analytic_mmacs");
    std::printf("%-10s %12.1f %10.1f %12.1f %12.1f %18.3f\n", "gtp", r.gtp.median_us, r.gtp.mad_us, r.gtp.min_us,
                r.gtp.max_us, r.analytic_gtp / 1e6);
    std::printf("%-10s %12.1f %10.1f %12.1f %12.1f %18.3f\n", "tome", r.tome.median_us, r.tome.mad_us, r.tome.min_us,
                r.tome.max_us, r.analytic_tome / 1e6);
    if (!json_out.empty()) write_text(json_out, to_json(r).dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------- verify

int run_verify() {
    const auto results = acceptance::run_all(&std::cout);
    std::vector<int> failed;
    for (const auto& r : results) {
        if (!r.pass) failed.push_back(r.id);
    }
    std::cout << results.size() - failed.size() << "/" << results.size() << " criteria passed\n";
    if (failed.empty()) return 0;
    std::cout << "failing criteria: " << join(failed, ", ") << "\n";
    return kExitVerify;
}

// ---------------------------------------------------------------- gen-fixture

int run_gen_fixture(RunSpec& spec, const std::string& weights_out, const std::string& image_out) {
    const ModelConfig cfg = resolve(spec);
    const Fixture fx = generate_fixture(spec.seed, cfg);
    try {
        save_weights(fx.weights, weights_out);
        save_weights(image_to_store(fx.image), image_out);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    std::cout << "wrote " << fx.weights.size() << " tensors to " << weights_out << " and image to " << image_out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-based token propagation engine for vision transformers"};
    app.require_subcommand(1);

    ForwardArgs fwd;
    auto* forward_cmd = app.add_subcommand("forward", "run one forward pass and write diagnostics");
    add_spec_flags(*forward_cmd, fwd.spec);
    forward_cmd->add_option("--repeat", fwd.spec.repeat, "repeat and check the logits are identical");
    forward_cmd->add_option("--weights", fwd.weights_path, "GTPW weight file instead of the seeded fixture");
    forward_cmd->add_option("--image", fwd.image_path, "GTPW file holding an [H, W, C] 'image' tensor");
    forward_cmd->add_option("--out", fwd.spec.out, "output directory (summary to stdout when omitted)");
    forward_cmd->add_flag("!--no-masks", fwd.masks, "skip the per-layer PGM masks");

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "grid over comma-separated parameter lists");
    add_spec_flags(*sweep_cmd, sw.spec);
    sweep_cmd->add_option("--p-list", sw.p_list, "e.g. 0,4,8");
    sweep_cmd->add_option("--alpha-list", sw.alpha_list);
    sweep_cmd->add_option("--theta-list", sw.theta_list);
    sweep_cmd->add_option("--m-list", sw.m_list);
    sweep_cmd->add_option("--graph-list", sw.graph_list);
    sweep_cmd->add_option("--strategy-list", sw.strategy_list);
    sweep_cmd->add_option("--out", sw.spec.out, "CSV path (stdout when omitted)");

    BenchSpec bench;
    std::string bench_json;
    auto* bench_cmd = app.add_subcommand("bench-overhead", "time one reduction step against bipartite merging");
    bench_cmd->add_option("--grid", bench.grid, "image tokens per side");
    bench_cmd->add_option("--channels", bench.channels);
    bench_cmd->add_option("--heads", bench.heads);
    bench_cmd->add_option("--depth", bench.depth, "layers for the analytical totals");
    bench_cmd->add_option("--p", bench.p);
    bench_cmd->add_option("--m", bench.m_neighbors);
    bench_cmd->add_option("--alpha", bench.alpha);
    bench_cmd->add_option("--repeats", bench.repeats);
    bench_cmd->add_option("--seed", bench.seed);
    bench_cmd->add_option("--json", bench_json, "also write the report as JSON");

    auto* verify_cmd = app.add_subcommand("verify", "run the acceptance criteria");

    RunSpec gen;
    std::string gen_weights = "weights.gtpw", gen_image = "image.gtpw";
    auto* gen_cmd = app.add_subcommand("gen-fixture", "write seeded weights and image as GTPW files");
    gen_cmd->add_option("--preset", gen.preset)->check(CLI::IsMember(presets::names()));
    gen_cmd->add_option("--config", gen.config);
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--weights-out", gen_weights);
    gen_cmd->add_option("--image-out", gen_image);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitSpec;
    }

    try {
        if (*forward_cmd) return run_forward(fwd);
        if (*sweep_cmd) return run_sweep(sw);
        if (*bench_cmd) return run_bench(bench, bench_json);
        if (*verify_cmd) return run_verify();
        if (*gen_cmd) return run_gen_fixture(gen, gen_weights, gen_image);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid spec: " << e.what() << "\n";
        return kExitSpec;
    } catch (const FormatError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitSpec;
    } catch (const SchemaError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitSpec;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "invalid spec: " << e.what() << "\n";
        return kExitSpec;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
