#pragma once
// JSON run configuration. Unknown keys are rejected; token quantities accept
// k/M/B suffixes (powers of ten, e.g. "600M" = 6e8).

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "smallbatch/harness.hpp"
#include "smallbatch/optimizers.hpp"

namespace smallbatch {

using Json = nlohmann::json;

// "400k" -> 4e5, "2M" -> 2e6, "1.5B" -> 1.5e9; plain numbers pass through.
inline double parse_token_quantity(const Json& v, const std::string& key) {
    if (v.is_number()) return v.get<double>();
    if (!v.is_string()) {
        throw std::invalid_argument(key + ": expected a number or a string with k/M/B suffix");
    }
    const std::string s = v.get<std::string>();
    if (s.empty()) throw std::invalid_argument(key + ": empty token quantity");
    double scale = 1.0;
    std::string digits = s;
    const char suffix = s.back();
    if (suffix == 'k') scale = 1e3;
    else if (suffix == 'M') scale = 1e6;
    else if (suffix == 'B') scale = 1e9;
    if (scale != 1.0) digits = s.substr(0, s.size() - 1);
    std::size_t used = 0;
    double base = 0.0;
    try {
        base = std::stod(digits, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": cannot parse token quantity '" + s + "'");
    }
    if (used != digits.size()) {
        throw std::invalid_argument(key + ": cannot parse token quantity '" + s + "'");
    }
    return base * scale;
}

inline std::int64_t parse_token_count(const Json& v, const std::string& key) {
    const double d = parse_token_quantity(v, key);
    if (!(d >= 0) || d > 9.2e18) throw std::invalid_argument(key + ": token count out of range");
    return static_cast<std::int64_t>(d);
}

namespace detail {

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& allowed,
                                const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw std::invalid_argument("unknown config key: " + context + "." + key);
        }
    }
}

}  // namespace detail

inline OptimizerConfig parse_optimizer(const Json& j, const std::string& context,
                                       std::optional<double>* t1_tokens = nullptr,
                                       std::optional<double>* t2_tokens = nullptr) {
    if (!j.is_object()) throw std::invalid_argument(context + " must be an object");
    detail::reject_unknown_keys(
        j,
        {"variant", "lr", "momentum", "beta1", "beta2", "t1_tokens", "t2_tokens", "epsilon",
         "weight_decay", "bias_correction", "schedule", "ns_iters", "momentum_ema",
         "factored_delta", "aux"},
        context);
    OptimizerConfig cfg;
    if (j.contains("variant")) cfg.variant = variant_from_name(j["variant"].get<std::string>());
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("bias_correction")) cfg.bias_correction = j["bias_correction"].get<bool>();
    if (j.contains("ns_iters")) cfg.ns_iters = j["ns_iters"].get<int>();
    if (j.contains("momentum_ema")) cfg.momentum_ema = j["momentum_ema"].get<bool>();
    if (j.contains("factored_delta")) cfg.factored_delta = j["factored_delta"].get<double>();
    if (j.contains("t1_tokens")) {
        if (!t1_tokens) throw std::invalid_argument(context + ".t1_tokens not allowed here");
        *t1_tokens = parse_token_quantity(j["t1_tokens"], context + ".t1_tokens");
    }
    if (j.contains("t2_tokens")) {
        if (!t2_tokens) throw std::invalid_argument(context + ".t2_tokens not allowed here");
        *t2_tokens = parse_token_quantity(j["t2_tokens"], context + ".t2_tokens");
    }
    if (j.contains("schedule")) {
        const Json& s = j["schedule"];
        if (s.is_string()) {
            if (s.get<std::string>() != "constant") {
                throw std::invalid_argument(context + ".schedule: unknown schedule " +
                                            s.get<std::string>());
            }
            cfg.schedule = Schedule::constant;
        } else if (s.is_object()) {
            detail::reject_unknown_keys(s, {"warmup_cosine"}, context + ".schedule");
            const Json& wc = s.at("warmup_cosine");
            detail::reject_unknown_keys(wc, {"warmup_steps", "total_steps"},
                                        context + ".schedule.warmup_cosine");
            cfg.schedule = Schedule::warmup_cosine;
            cfg.warmup_steps = wc.value("warmup_steps", std::int64_t{0});
            cfg.total_steps = wc.at("total_steps").get<std::int64_t>();
        } else {
            throw std::invalid_argument(context + ".schedule must be a string or object");
        }
    }
    if (j.contains("aux")) {
        cfg.aux = std::make_shared<OptimizerConfig>(parse_optimizer(j["aux"], context + ".aux"));
    }
    if (cfg.variant == OptVariant::muon && !cfg.aux) {
        // adam handles the non-hidden tensors unless the config says otherwise
        auto aux = std::make_shared<OptimizerConfig>();
        aux->variant = OptVariant::adam;
        aux->lr = cfg.lr;
        aux->epsilon = cfg.epsilon;
        cfg.aux = std::move(aux);
    }
    return cfg;
}

inline RunConfig parse_run_config(const Json& j, const std::string& context = "config") {
    if (!j.is_object()) throw std::invalid_argument(context + " must be an object");
    detail::reject_unknown_keys(j,
                                {"config_id", "task", "model", "optimizer", "batch_size",
                                 "seq_len", "token_budget", "accum_steps", "seed",
                                 "eval_every_tokens", "eval_tokens"},
                                context);
    RunConfig cfg;
    if (j.contains("config_id")) cfg.config_id = j["config_id"].get<std::string>();
    if (j.contains("task")) {
        const Json& t = j["task"];
        detail::reject_unknown_keys(t, {"n_states", "kind", "chain_seed", "sharpness"},
                                    context + ".task");
        if (t.contains("n_states")) cfg.task.n_states = t["n_states"].get<int>();
        if (t.contains("kind")) cfg.task.kind = t["kind"].get<std::string>();
        if (t.contains("chain_seed")) cfg.task.chain_seed = t["chain_seed"].get<std::uint64_t>();
        if (t.contains("sharpness")) cfg.task.sharpness = t["sharpness"].get<double>();
    }
    if (j.contains("model")) {
        const Json& m = j["model"];
        detail::reject_unknown_keys(m, {"d_model", "d_hidden"}, context + ".model");
        if (m.contains("d_model")) cfg.model.d_model = m["d_model"].get<int>();
        if (m.contains("d_hidden")) cfg.model.d_hidden = m["d_hidden"].get<int>();
    }
    if (j.contains("optimizer")) {
        cfg.opt = parse_optimizer(j["optimizer"], context + ".optimizer", &cfg.t1_tokens,
                                  &cfg.t2_tokens);
    }
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::int64_t>();
    if (j.contains("seq_len")) cfg.seq_len = j["seq_len"].get<std::int64_t>();
    if (j.contains("token_budget")) {
        cfg.token_budget = parse_token_count(j["token_budget"], context + ".token_budget");
    }
    if (j.contains("accum_steps")) cfg.accum_steps = j["accum_steps"].get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("eval_every_tokens")) {
        cfg.eval_every_tokens = parse_token_count(j["eval_every_tokens"],
                                                  context + ".eval_every_tokens");
    }
    if (j.contains("eval_tokens")) {
        cfg.eval_tokens = parse_token_count(j["eval_tokens"], context + ".eval_tokens");
    }
    return cfg;
}

// {"base": <run config>, "grid": {"lr": [...], "batch_size": [...], ...}}
// expands to the cartesian product over the listed axes.
inline std::vector<RunConfig> parse_sweep_config(const Json& j) {
    if (!j.is_object()) throw std::invalid_argument("sweep config must be an object");
    detail::reject_unknown_keys(j, {"base", "grid"}, "sweep");
    std::vector<RunConfig> grid{parse_run_config(j.at("base"), "sweep.base")};
    if (!j.contains("grid")) return grid;

    const std::set<std::string> axes = {"lr",        "batch_size", "seq_len",  "seed",
                                        "t1_tokens", "t2_tokens",  "beta1",    "beta2",
                                        "variant",   "accum_steps", "weight_decay", "momentum"};
    detail::reject_unknown_keys(j["grid"], axes, "sweep.grid");
    for (const auto& [axis, values] : j["grid"].items()) {
        if (!values.is_array() || values.empty()) {
            throw std::invalid_argument("sweep.grid." + axis + " must be a non-empty array");
        }
        std::vector<RunConfig> expanded;
        expanded.reserve(grid.size() * values.size());
        for (const auto& base : grid) {
            for (const auto& v : values) {
                RunConfig cfg = base;
                cfg.config_id.clear();  // ids regenerate per grid point
                if (axis == "lr") cfg.opt.lr = v.get<double>();
                else if (axis == "batch_size") cfg.batch_size = v.get<std::int64_t>();
                else if (axis == "seq_len") cfg.seq_len = v.get<std::int64_t>();
                else if (axis == "seed") cfg.seed = v.get<std::uint64_t>();
                else if (axis == "t1_tokens") cfg.t1_tokens = parse_token_quantity(v, axis);
                else if (axis == "t2_tokens") cfg.t2_tokens = parse_token_quantity(v, axis);
                else if (axis == "beta1") { cfg.opt.beta1 = v.get<double>(); cfg.t1_tokens.reset(); }
                else if (axis == "beta2") { cfg.opt.beta2 = v.get<double>(); cfg.t2_tokens.reset(); }
                else if (axis == "variant") cfg.opt.variant = variant_from_name(v.get<std::string>());
                else if (axis == "accum_steps") cfg.accum_steps = v.get<std::int64_t>();
                else if (axis == "weight_decay") cfg.opt.weight_decay = v.get<double>();
                else if (axis == "momentum") cfg.opt.momentum = v.get<double>();
                expanded.push_back(std::move(cfg));
            }
        }
        grid = std::move(expanded);
    }
    return grid;
}

// {"base": <run config>, "target": "lr", "multipliers": [0.25, 1, 4]}
inline SensitivitySpec parse_sensitivity_config(const Json& j) {
    if (!j.is_object()) throw std::invalid_argument("sensitivity config must be an object");
    detail::reject_unknown_keys(j, {"base", "target", "multipliers"}, "sensitivity");
    SensitivitySpec spec;
    spec.base = parse_run_config(j.at("base"), "sensitivity.base");
    spec.target = j.at("target").get<std::string>();
    for (const auto& v : j.at("multipliers")) spec.multipliers.push_back(v.get<double>());
    spec.validate();
    return spec;
}

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument("config file " + path + ": " + e.what());
    }
    return j;
}

}  // namespace smallbatch
