#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbn/harness.hpp"

namespace sbn {

namespace {

std::vector<std::string> metric_names(const ExperimentConfig& cfg) {
    std::vector<std::string> names;
    if (cfg.experiment == "gan") {
        names = {"l_g", "l_d", "g_inter.s0", "g_inter.s1", "grad_norm_std.s0",
                 "grad_norm_std.s1"};
        for (std::size_t k = 0; k < cfg.classes; ++k)
            names.push_back("mode_dist.c" + std::to_string(k));
    } else if (cfg.experiment == "nas") {
        names = {"train_loss", "val_loss", "arch.e0", "arch.e1", "arch.e2"};
    } else if (cfg.experiment == "adv") {
        names = {"total_loss", "clean_loss", "adv_loss", "sa.b0",
                 "ra.b0",      "sa.b1",      "ra.b1",    "ra_untrained"};
    } else {
        names = {"content_train", "style_train", "content_val", "style_val"};
    }
    return names;
}

void run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                  const std::string& out_dir) {
    if (cfg.experiment == "gan")
        run_gan_seed(cfg, seed, out_dir);
    else if (cfg.experiment == "nas")
        run_nas_seed(cfg, seed, out_dir);
    else if (cfg.experiment == "adv")
        run_adv_seed(cfg, seed, out_dir);
    else
        run_style_seed(cfg, seed, out_dir);
}

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    // seeds own disjoint state and output files; the manifest write below is
    // the only shared-file step and happens after the joins
    std::size_t workers = std::min<std::size_t>(
        cfg.seeds.size(),
        std::max<std::size_t>(1, std::thread::hardware_concurrency()));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex next_mutex;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                std::size_t i;
                {
                    std::lock_guard lock(next_mutex);
                    if (next >= cfg.seeds.size()) return;
                    i = next++;
                }
                try {
                    run_one_seed(cfg, cfg.seeds[i], out_dir);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    nlohmann::ordered_json manifest;
    manifest["experiment"] = cfg.experiment;
    manifest["variant"] = cfg.variant;
    manifest["seeds"] = cfg.seeds;
    manifest["prng"] = Rng::kAlgorithm;
    manifest["metrics"] = metric_names(cfg);
    manifest["timestamp"] = iso_timestamp();
    std::ofstream os(fs::path(out_dir) / "manifest.json");
    os << manifest.dump(2) << "\n";
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Sandwich-normalization experiment runner"};
    app.require_subcommand(1);

    struct SubArgs {
        std::string config;
        std::string out;
    };
    std::map<std::string, SubArgs> args;
    const std::vector<std::pair<std::string, std::string>> subs = {
        {"run-gan", "conditional generation on a gaussian mixture"},
        {"run-nas", "weight-sharing architecture search on the planted task"},
        {"run-adv", "two-branch adversarial training"},
        {"run-style", "statistic-transfer training on texture patches"},
        {"export", "convert run metrics to per-metric CSV plot data"},
    };
    for (const auto& [name, desc] : subs) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", args[name].config, "experiment config (JSON)")
            ->required();
        sub->add_option("--out", args[name].out, "run directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    const std::string sub_name = app.get_subcommands().front()->get_name();
    const SubArgs& sa = args[sub_name];
    try {
        ExperimentConfig cfg = parse_config_file(sa.config);
        const std::string expected = sub_name == "export" ? cfg.experiment
                                                          : sub_name.substr(4);
        if (cfg.experiment != expected)
            throw ConfigInvalid("config is for experiment '" + cfg.experiment +
                                "', subcommand expects '" + expected + "'");
        std::string out_dir = sa.out.empty() ? cfg.out_dir : sa.out;
        if (out_dir.empty())
            throw ConfigInvalid("no output directory: pass --out or set out_dir");
        if (sub_name == "export")
            export_plotdata(out_dir);
        else
            run_experiment(cfg, out_dir);
        return 0;
    } catch (const ConfigInvalid& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const MissingMetrics& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const CorruptRecord& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const NonFiniteValue& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const NonFiniteGradient& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

}  // namespace sbn
