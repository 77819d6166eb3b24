#include <fstream>
#include <set>

#include <json.hpp>

#include "sbn/harness.hpp"

namespace sbn {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigInvalid(msg); }

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto& [key, _] : obj.items())
        if (!allowed.count(key)) fail("unknown key '" + key + "' in " + where);
}

double need_number(const json& obj, const std::string& key, double lo, double hi) {
    if (!obj.contains(key)) fail("missing key '" + key + "'");
    if (!obj[key].is_number()) fail("'" + key + "' must be a number");
    double v = obj[key].get<double>();
    if (v < lo || v > hi) fail("'" + key + "' out of range");
    return v;
}

double opt_number(const json& obj, const std::string& key, double fallback, double lo,
                  double hi) {
    return obj.contains(key) ? need_number(obj, key, lo, hi) : fallback;
}

std::size_t need_count(const json& obj, const std::string& key, std::size_t lo,
                       std::size_t hi) {
    if (!obj.contains(key)) fail("missing key '" + key + "'");
    if (!obj[key].is_number_unsigned()) fail("'" + key + "' must be a non-negative integer");
    auto v = obj[key].get<std::uint64_t>();
    if (v < lo || v > hi) fail("'" + key + "' out of range");
    return static_cast<std::size_t>(v);
}

std::size_t opt_count(const json& obj, const std::string& key, std::size_t fallback,
                      std::size_t lo, std::size_t hi) {
    return obj.contains(key) ? need_count(obj, key, lo, hi) : fallback;
}

const std::set<std::string> kVariants[4] = {
    {"ccbn", "sabn"},                            // gan
    {"none-affine", "affine", "ccbn", "sabn"},   // nas
    {"bn", "auxbn", "sa_auxbn"},                 // adv
    {"adain", "saadain"},                        // style
};

}  // namespace

ExperimentConfig parse_config_json(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded()) fail("config is not valid JSON");
    if (!root.is_object()) fail("config must be a JSON object");

    ExperimentConfig cfg;
    if (!root.contains("experiment") || !root["experiment"].is_string())
        fail("missing string key 'experiment'");
    cfg.experiment = root["experiment"].get<std::string>();
    int exp_idx = cfg.experiment == "gan"     ? 0
                  : cfg.experiment == "nas"   ? 1
                  : cfg.experiment == "adv"   ? 2
                  : cfg.experiment == "style" ? 3
                                              : -1;
    if (exp_idx < 0) fail("experiment must be one of gan|nas|adv|style");

    if (!root.contains("variant") || !root["variant"].is_string())
        fail("missing string key 'variant'");
    cfg.variant = root["variant"].get<std::string>();
    if (!kVariants[exp_idx].count(cfg.variant))
        fail("variant '" + cfg.variant + "' is not valid for experiment '" +
             cfg.experiment + "'");

    if (!root.contains("seeds") || !root["seeds"].is_array() || root["seeds"].empty())
        fail("'seeds' must be a non-empty array");
    for (auto& s : root["seeds"]) {
        if (!s.is_number_unsigned()) fail("seeds must be non-negative integers");
        cfg.seeds.push_back(s.get<std::uint64_t>());
    }

    cfg.batch_size = need_count(root, "batch_size", 1, 1 << 16);
    if (root.contains("out_dir")) {
        if (!root["out_dir"].is_string()) fail("'out_dir' must be a string");
        cfg.out_dir = root["out_dir"].get<std::string>();
    }

    std::set<std::string> allowed = {"experiment", "variant", "seeds", "batch_size",
                                     "out_dir"};
    switch (exp_idx) {
        case 0:  // gan
            allowed.insert({"steps", "lr", "classes", "latent_dim", "diag_every"});
            cfg.steps = need_count(root, "steps", 0, 1 << 24);
            cfg.lr = opt_number(root, "lr", 0.05, 1e-9, 10.0);
            cfg.classes = opt_count(root, "classes", 4, 2, 64);
            cfg.latent_dim = opt_count(root, "latent_dim", 4, 1, 256);
            cfg.diag_every = opt_count(root, "diag_every", 50, 1, 1 << 24);
            break;
        case 1:  // nas
            allowed.insert({"epochs", "lr_w", "lr_alpha"});
            cfg.epochs = need_count(root, "epochs", 0, 1 << 16);
            cfg.lr_w = opt_number(root, "lr_w", 0.2, 0.0, 10.0);
            cfg.lr_alpha = opt_number(root, "lr_alpha", 0.15, 0.0, 10.0);
            break;
        case 2: {  // adv
            allowed.insert({"steps", "lr", "classes", "pgd", "eval_pgd_iters",
                            "eval_size"});
            cfg.steps = need_count(root, "steps", 0, 1 << 24);
            cfg.lr = opt_number(root, "lr", 0.1, 1e-9, 10.0);
            cfg.classes = opt_count(root, "classes", 4, 2, 64);
            cfg.eval_pgd_iters = opt_count(root, "eval_pgd_iters", 20, 1, 1 << 12);
            cfg.eval_size = opt_count(root, "eval_size", 256, 4, 1 << 16);
            if (root.contains("pgd")) {
                const json& p = root["pgd"];
                if (!p.is_object()) fail("'pgd' must be an object");
                reject_unknown(p, {"epsilon", "step_size", "iters", "clamp_lo", "clamp_hi"},
                               "pgd");
                cfg.pgd.epsilon = opt_number(p, "epsilon", 8.0 / 255.0, 0.0, 1e6);
                cfg.pgd.step_size = opt_number(p, "step_size", 2.0 / 255.0, 1e-12, 1e6);
                cfg.pgd.iters = opt_count(p, "iters", 10, 1, 1 << 12);
                cfg.pgd.clamp_lo = opt_number(p, "clamp_lo", 0.0, -1e6, 1e6);
                cfg.pgd.clamp_hi = opt_number(p, "clamp_hi", 1.0, -1e6, 1e6);
                if (!(cfg.pgd.clamp_lo < cfg.pgd.clamp_hi)) fail("empty pgd clamp range");
            }
            break;
        }
        case 3:  // style
            allowed.insert({"steps", "lr", "identity_sandwich"});
            cfg.steps = need_count(root, "steps", 0, 1 << 24);
            cfg.lr = opt_number(root, "lr", 0.05, 1e-9, 10.0);
            if (root.contains("identity_sandwich")) {
                if (!root["identity_sandwich"].is_boolean())
                    fail("'identity_sandwich' must be a boolean");
                cfg.identity_sandwich = root["identity_sandwich"].get<bool>();
            }
            break;
    }
    reject_unknown(root, allowed, "config");
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigInvalid("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    return parse_config_json(text);
}

}  // namespace sbn
