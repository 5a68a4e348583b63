#pragma once
// Command-line front end. Exit codes: 0 success, 2 usage/config error,
// 1 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "smallbatch/config.hpp"
#include "smallbatch/halflife.hpp"
#include "smallbatch/harness.hpp"
#include "smallbatch/memory_model.hpp"
#include "smallbatch/report.hpp"

namespace smallbatch::cli {

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument(flag + ": cannot parse number '" + item + "'");
        }
    }
    if (out.empty()) throw std::invalid_argument(flag + ": empty list");
    return out;
}

inline double parse_tokens_flag(const std::string& s, const std::string& flag) {
    return parse_token_quantity(Json(s), flag);
}

inline void print_run_summary(const RunResult& result, std::ostream& out) {
    out << "config: " << result.cfg.config_id << "\n";
    out << "seed: " << result.cfg.seed << "\n";
    out << "steps: " << result.records.size() << "\n";
    if (!result.error.empty()) {
        out << "error: " << result.error << "\n";
        return;
    }
    out << "final eval loss: " << fmt("%.9g", result.final_eval_loss) << "\n";
}

inline std::vector<SvgSeries> loss_series(const std::vector<RunResult>& results) {
    std::vector<SvgSeries> series;
    for (const auto& run : results) {
        SvgSeries s;
        s.label = run.cfg.config_id;
        for (const auto& rec : run.records) {
            if (rec.eval_loss) {
                s.points.emplace_back(static_cast<double>(rec.tokens_seen), *rec.eval_loss);
            }
        }
        if (s.points.empty()) {
            for (const auto& rec : run.records) {
                s.points.emplace_back(static_cast<double>(rec.tokens_seen), rec.train_loss);
            }
        }
        series.push_back(std::move(s));
    }
    return series;
}

}  // namespace detail

// Flag overrides applied on top of an optional JSON config.
struct RunFlags {
    std::string config_path;
    std::string variant;
    double lr = 0;
    std::int64_t batch_size = 0;
    std::int64_t seq_len = 0;
    std::string budget;
    std::int64_t accum_steps = 0;
    std::uint64_t seed = 0;
    double beta1 = -1, beta2 = -1, weight_decay = -1, momentum = -1;
    std::string t1_tokens, t2_tokens, eval_every, eval_tokens;
};

inline void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run config file");
    cmd->add_option("--variant", f.variant, "optimizer: sgd, adam, adafactor, muon");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--batch-size", f.batch_size, "sequences per micro-batch");
    cmd->add_option("--seq-len", f.seq_len, "tokens per sequence");
    cmd->add_option("--budget", f.budget, "training token budget (k/M/B suffixes ok)");
    cmd->add_option("--accum-steps", f.accum_steps, "gradient accumulation micro-steps");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--beta1", f.beta1, "first-moment decay rate");
    cmd->add_option("--beta2", f.beta2, "second-moment decay rate");
    cmd->add_option("--t1-tokens", f.t1_tokens, "first-moment half-life in tokens");
    cmd->add_option("--t2-tokens", f.t2_tokens, "second-moment half-life in tokens");
    cmd->add_option("--weight-decay", f.weight_decay, "decoupled weight decay");
    cmd->add_option("--momentum", f.momentum, "sgd/muon momentum in [0,1)");
    cmd->add_option("--eval-every", f.eval_every, "eval cadence in tokens (default budget/10)");
    cmd->add_option("--eval-tokens", f.eval_tokens, "tokens per evaluation (default 64k)");
}

inline RunConfig build_run_config(const CLI::App* cmd, const RunFlags& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg = parse_run_config(load_json_file(f.config_path));
    if (cmd->count("--variant")) cfg.opt.variant = variant_from_name(f.variant);
    if (cmd->count("--lr")) cfg.opt.lr = f.lr;
    if (cmd->count("--batch-size")) cfg.batch_size = f.batch_size;
    if (cmd->count("--seq-len")) cfg.seq_len = f.seq_len;
    if (cmd->count("--budget")) {
        cfg.token_budget =
            static_cast<std::int64_t>(detail::parse_tokens_flag(f.budget, "--budget"));
    }
    if (cmd->count("--accum-steps")) cfg.accum_steps = f.accum_steps;
    if (cmd->count("--seed")) cfg.seed = f.seed;
    if (cmd->count("--beta1")) { cfg.opt.beta1 = f.beta1; cfg.t1_tokens.reset(); }
    if (cmd->count("--beta2")) { cfg.opt.beta2 = f.beta2; cfg.t2_tokens.reset(); }
    if (cmd->count("--t1-tokens")) {
        cfg.t1_tokens = detail::parse_tokens_flag(f.t1_tokens, "--t1-tokens");
    }
    if (cmd->count("--t2-tokens")) {
        cfg.t2_tokens = detail::parse_tokens_flag(f.t2_tokens, "--t2-tokens");
    }
    if (cmd->count("--weight-decay")) cfg.opt.weight_decay = f.weight_decay;
    if (cmd->count("--momentum")) cfg.opt.momentum = f.momentum;
    if (cmd->count("--eval-every")) {
        cfg.eval_every_tokens =
            static_cast<std::int64_t>(detail::parse_tokens_flag(f.eval_every, "--eval-every"));
    }
    if (cmd->count("--eval-tokens")) {
        cfg.eval_tokens =
            static_cast<std::int64_t>(detail::parse_tokens_flag(f.eval_tokens, "--eval-tokens"));
    }
    if (cfg.opt.variant == OptVariant::muon && !cfg.opt.aux) {
        auto aux = std::make_shared<OptimizerConfig>();
        aux->variant = OptVariant::adam;
        aux->lr = cfg.opt.lr;
        aux->epsilon = cfg.opt.epsilon;
        cfg.opt.aux = std::move(aux);
    }
    return cfg;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"small-batch optimizer library and experiment harness"};
    app.require_subcommand(1);

    // ---- halflife
    auto* hl = app.add_subcommand("halflife",
                                  "convert between a decay rate and its token half-life");
    double hl_beta = 0;
    std::string hl_tokens;
    std::uint64_t hl_batch = 1, hl_seq = 1;
    auto* hl_beta_opt = hl->add_option("--beta", hl_beta, "decay rate in (0,1) to convert");
    auto* hl_tok_opt =
        hl->add_option("--halflife", hl_tokens, "half-life in tokens (k/M/B suffixes ok)");
    hl->add_option("--batch", hl_batch, "batch size B (sequences per step)");
    hl->add_option("--seq-len", hl_seq, "sequence length T (tokens per sequence)");
    hl_beta_opt->excludes(hl_tok_opt);

    // ---- scale-beta2
    auto* sb = app.add_subcommand("scale-beta2",
                                  "rescale beta2 to a new batch size at fixed token half-life");
    double sb_beta2 = 0;
    std::uint64_t sb_from = 0, sb_to = 0, sb_seq = 1, sb_to_seq = 0;
    sb->add_option("--beta2", sb_beta2, "current beta2 in (0,1)")->required();
    sb->add_option("--from-batch", sb_from, "current batch size (sequences)")->required();
    sb->add_option("--to-batch", sb_to, "new batch size (sequences)")->required();
    sb->add_option("--seq-len", sb_seq, "sequence length in tokens (both sides unless overridden)");
    sb->add_option("--to-seq-len", sb_to_seq, "new sequence length in tokens, if it changes");

    // ---- memory
    auto* mem = app.add_subcommand("memory", "estimate minimum training memory");
    std::string mem_preset, mem_params, mem_optimizer = "adam", mem_batch_tokens = "4096";
    std::string mem_out;
    std::int64_t mem_vocab = 0, mem_dmodel = 0, mem_hidden = 0, mem_head = 128, mem_layers = 0,
                 mem_seq = 2048;
    int mem_bytes = 2;
    double mem_momentum = 0.0, mem_device_gb = 0.0;
    bool mem_accum = false, mem_tied = false;
    mem->add_option("--preset", mem_preset, "model preset: 30m, 19m, gpt2-124m, gpt3-1.3b");
    mem->add_option("--params", mem_params,
                    "trainable parameter count override (k/M/B suffixes ok); layer dims "
                    "default to a 13B-class model for the activation term");
    mem->add_option("--vocab", mem_vocab, "vocabulary size");
    mem->add_option("--d-model", mem_dmodel, "model/embedding dimension");
    mem->add_option("--hidden", mem_hidden, "MLP hidden dimension");
    mem->add_option("--head-dim", mem_head, "attention head dimension");
    mem->add_option("--layers", mem_layers, "number of transformer layers");
    mem->add_option("--seq-len", mem_seq, "sequence length in tokens");
    mem->add_flag("--tied", mem_tied, "tie input and output embeddings");
    mem->add_option("--optimizer", mem_optimizer, "sgd, adam, adafactor, or muon");
    mem->add_option("--momentum", mem_momentum, "sgd momentum (adds a buffer to the state)");
    mem->add_option("--bytes", mem_bytes, "bytes per stored value: 2, 4, or 8");
    mem->add_option("--batch-tokens", mem_batch_tokens, "tokens per batch, B*T (suffixes ok)");
    mem->add_flag("--accumulation", mem_accum, "include an accumulated-gradient buffer");
    mem->add_option("--device-gb", mem_device_gb, "device memory in GB (1 GB = 1e9 bytes)");
    mem->add_option("--out", mem_out, "write the breakdown as CSV to this path");

    // ---- train
    auto* tr = app.add_subcommand("train", "run one fixed-token-budget training run");
    RunFlags tr_flags;
    add_run_flags(tr, tr_flags);
    std::string tr_out, tr_svg;
    tr->add_option("--out", tr_out, "write per-step records as CSV to this path");
    tr->add_option("--svg", tr_svg, "write the loss curve as SVG to this path");

    // ---- sweep
    auto* sw = app.add_subcommand("sweep", "run a learning grid and report the best per batch size");
    std::string sw_config, sw_out, sw_svg;
    int sw_jobs = 1;
    sw->add_option("--config", sw_config, "JSON sweep config ({base, grid})")->required();
    sw->add_option("--jobs", sw_jobs, "parallel runs");
    sw->add_option("--out", sw_out, "write all run records as CSV to this path");
    sw->add_option("--svg", sw_svg, "write per-config loss curves as SVG to this path");

    // ---- sensitivity
    auto* se = app.add_subcommand("sensitivity",
                                  "sweep one hyperparameter multiplicatively around a base run");
    std::string se_config, se_target, se_mults, se_out, se_svg;
    int se_jobs = 1;
    RunFlags se_flags;
    add_run_flags(se, se_flags);
    se->add_option("--sensitivity-config", se_config,
                   "JSON sensitivity config ({base, target, multipliers})");
    se->add_option("--target", se_target, "hyperparameter: lr, t1, t2, beta1, beta2");
    se->add_option("--multipliers", se_mults, "comma-separated multipliers, e.g. 0.25,1,4");
    se->add_option("--jobs", se_jobs, "parallel runs");
    se->add_option("--out", se_out, "write run records as CSV to this path");
    se->add_option("--svg", se_svg, "write the sensitivity curve as SVG to this path");

    // ---- toy
    auto* toy = app.add_subcommand("toy", "noisy two-variable toy problem, SGD with/without momentum");
    double toy_sigma = 0.2;
    int toy_steps = 10, toy_seeds = 64;
    std::uint64_t toy_seed = 0;
    std::string toy_lrs = "0.3,0.15,0.075,0.0375,0.01875,0.009375", toy_momenta = "0,0.9";
    std::string toy_out;
    bool toy_per_component = false;
    toy->add_option("--sigma", toy_sigma, "gradient noise scale (multiplier ~ N(1, sigma^2))");
    toy->add_option("--steps", toy_steps, "optimizer steps per trajectory");
    toy->add_option("--lrs", toy_lrs, "comma-separated learning rates");
    toy->add_option("--momenta", toy_momenta, "comma-separated momentum values");
    toy->add_option("--seeds", toy_seeds, "number of random seeds (>= 8)");
    toy->add_option("--seed", toy_seed, "base seed");
    toy->add_flag("--per-component", toy_per_component,
                  "draw one noise multiplier per gradient component");
    toy->add_option("--out", toy_out, "write the quartile table as CSV to this path");

    try {
        // help is resolved before parsing so the right scope prints
        for (const auto& a : args) {
            if (a == "--help" || a == "-h") {
                if (!args.empty() && args.front()[0] != '-') {
                    if (CLI::App* sub = app.get_subcommand_no_throw(args.front())) {
                        out << sub->help();
                        return 0;
                    }
                }
                out << app.help();
                return 0;
            }
        }
        std::vector<const char*> argv;
        argv.push_back("smallbatch");
        for (const auto& a : args) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            err << "error: " << e.what() << "\n";
            return 2;
        }

        if (hl->parsed()) {
            const TokensPerStep tps(hl_batch, hl_seq);
            if (hl->count("--beta")) {
                const TokenHalfLife t = beta_to_halflife(DecayRate(hl_beta), tps);
                out << "t_half = " << detail::fmt("%.9g", t.tokens) << " tokens\n";
            } else if (hl->count("--halflife")) {
                const double tokens = detail::parse_tokens_flag(hl_tokens, "--halflife");
                const DecayRate beta = halflife_to_beta(TokenHalfLife(tokens), tps);
                out << "beta = " << detail::fmt("%.9g", beta.value) << "\n";
            } else {
                err << "error: halflife needs --beta or --halflife\n";
                return 2;
            }
            return 0;
        }

        if (sb->parsed()) {
            const TokensPerStep from(sb_from, sb_seq);
            const TokensPerStep to(sb_to, sb_to_seq ? sb_to_seq : sb_seq);
            const DecayRate scaled = scale_beta2(DecayRate(sb_beta2), from, to);
            out << detail::fmt("%.6f", scaled.value) << "\n";
            return 0;
        }

        if (mem->parsed()) {
            ModelDims dims;
            if (!mem_preset.empty()) {
                dims = preset_dims(mem_preset);
            } else if (!mem_params.empty()) {
                // layer dims only feed the activation term here
                dims = ModelDims{50257, 5120, 20480, 128, 40, mem_seq};
                dims.param_count_override = static_cast<std::int64_t>(
                    detail::parse_tokens_flag(mem_params, "--params"));
            } else {
                dims = ModelDims{mem_vocab, mem_dmodel, mem_hidden, mem_head, mem_layers, mem_seq};
            }
            if (mem->count("--vocab")) dims.vocab_size = mem_vocab;
            if (mem->count("--d-model")) dims.model_dim = mem_dmodel;
            if (mem->count("--hidden")) dims.hidden_dim = mem_hidden;
            if (mem->count("--head-dim")) dims.head_dim = mem_head;
            if (mem->count("--layers")) dims.n_layers = mem_layers;
            if (mem->count("--seq-len")) dims.seq_len = mem_seq;
            dims.tied_embeddings = mem_tied;

            OptimizerConfig opt;
            opt.variant = variant_from_name(mem_optimizer);
            opt.momentum = mem_momentum;
            if (opt.variant == OptVariant::muon) {
                opt.aux = std::make_shared<OptimizerConfig>();
            }
            const auto batch_tokens = static_cast<std::int64_t>(
                detail::parse_tokens_flag(mem_batch_tokens, "--batch-tokens"));
            const MemoryEstimate est = estimate_memory(dims, opt, batch_tokens, mem_bytes, mem_accum);

            if (dims.param_count_override == 0) {
                const ParamCounts counts = count_params(dims);
                out << "embedding params:      " << counts.embedding << "\n";
                out << "non-embedding params:  " << counts.non_embedding << "\n";
                out << "active params:         " << counts.active << "\n";
                out << "total trainable:       " << counts.total_trainable << "\n";
            } else {
                out << "total trainable:       " << dims.param_count_override << " (override)\n";
            }
            out << "params:           " << detail::fmt("%12.3f", to_gb(est.params_bytes)) << " GB\n";
            out << "optimizer state:  " << detail::fmt("%12.3f", to_gb(est.optimizer_state_bytes))
                << " GB\n";
            out << "activations:      " << detail::fmt("%12.3f", to_gb(est.activation_bytes))
                << " GB\n";
            out << "gradient buffer:  " << detail::fmt("%12.3f", to_gb(est.grad_buffer_bytes))
                << " GB\n";
            out << "total:            " << detail::fmt("%12.3f", to_gb(est.total_bytes)) << " GB\n";
            if (mem->count("--device-gb")) {
                const auto device_bytes = static_cast<std::uint64_t>(mem_device_gb * 1e9);
                out << "fits: " << (fits(est, device_bytes) ? "true" : "false") << "\n";
            }
            if (!mem_out.empty()) {
                std::ofstream os(mem_out);
                if (!os) throw std::runtime_error("cannot write CSV file: " + mem_out);
                os << "component,bytes\n";
                os << "params," << est.params_bytes << "\n";
                os << "optimizer_state," << est.optimizer_state_bytes << "\n";
                os << "activations," << est.activation_bytes << "\n";
                os << "grad_buffer," << est.grad_buffer_bytes << "\n";
                os << "total," << est.total_bytes << "\n";
            }
            return 0;
        }

        if (tr->parsed()) {
            RunConfig cfg = build_run_config(tr, tr_flags);
            RunResult result = train(cfg);
            detail::print_run_summary(result, out);
            std::vector<RunResult> results{std::move(result)};
            if (!tr_out.empty()) emit_csv(results, tr_out);
            if (!tr_svg.empty()) {
                emit_svg_lines(detail::loss_series(results),
                               SvgAxes{"training run", "tokens", "loss"}, tr_svg);
            }
            return results.front().ok() ? 0 : 1;
        }

        if (sw->parsed()) {
            const std::vector<RunConfig> grid = parse_sweep_config(load_json_file(sw_config));
            out << "runs: " << grid.size() << "\n";
            out << "seed: " << (grid.empty() ? 0 : grid.front().seed) << "\n";
            const std::vector<RunResult> results = sweep(grid, sw_jobs);
            for (const auto& row : summarize_sweep(results)) {
                out << row.config_id << ": ";
                if (!row.error.empty()) {
                    out << "error: " << row.error;
                } else {
                    out << detail::fmt("%.9g", row.final_eval_loss);
                    if (row.best_for_batch) out << "  <- best for B=" << row.batch_size;
                }
                out << "\n";
            }
            if (!sw_out.empty()) emit_csv(results, sw_out);
            if (!sw_svg.empty()) {
                emit_svg_lines(detail::loss_series(results),
                               SvgAxes{"sweep", "tokens", "eval loss"}, sw_svg);
            }
            return 0;
        }

        if (se->parsed()) {
            SensitivitySpec spec;
            if (!se_config.empty()) {
                spec = parse_sensitivity_config(load_json_file(se_config));
            } else {
                spec.base = build_run_config(se, se_flags);
                spec.target = se_target;
                spec.multipliers = detail::parse_double_list(se_mults, "--multipliers");
                spec.validate();
            }
            out << "seed: " << spec.base.seed << "\n";
            const SensitivityResult result = sensitivity(spec, se_jobs);
            for (const auto& p : result.curve) {
                out << "x" << detail::fmt("%.6g", p.multiplier) << ": ";
                if (p.present) out << detail::fmt("%.9g", p.final_eval_loss);
                else out << "absent";
                out << "\n";
            }
            out << "robustness score: " << detail::fmt("%.9g", result.robustness_score) << "\n";
            if (!se_out.empty()) emit_csv(result.runs, se_out);
            if (!se_svg.empty()) {
                SvgSeries curve;
                curve.label = spec.target;
                for (const auto& p : result.curve) {
                    if (p.present && std::isfinite(p.final_eval_loss)) {
                        curve.points.emplace_back(p.multiplier, p.final_eval_loss);
                    }
                }
                SvgAxes axes{"sensitivity: " + spec.target, "multiplier", "final eval loss"};
                axes.log_x = true;
                emit_svg_lines({curve}, axes, se_svg);
            }
            return 0;
        }

        if (toy->parsed()) {
            out << "seed: " << toy_seed << "\n";
            const auto cells = toy_experiment(
                toy_sigma, toy_steps, detail::parse_double_list(toy_lrs, "--lrs"),
                detail::parse_double_list(toy_momenta, "--momenta"), toy_seeds, toy_seed,
                toy_per_component);
            std::ostringstream table;
            table << "lr,momentum,loss_q25,loss_q50,loss_q75,flips_q25,flips_q50,flips_q75\n";
            for (const auto& c : cells) {
                table << detail::fmt("%.9g", c.lr) << ',' << detail::fmt("%.9g", c.momentum) << ','
                      << detail::fmt("%.9g", c.loss_q25) << ',' << detail::fmt("%.9g", c.loss_q50)
                      << ',' << detail::fmt("%.9g", c.loss_q75) << ','
                      << detail::fmt("%.9g", c.flips_q25) << ','
                      << detail::fmt("%.9g", c.flips_q50) << ','
                      << detail::fmt("%.9g", c.flips_q75) << "\n";
            }
            out << table.str();
            if (!toy_out.empty()) {
                std::ofstream os(toy_out);
                if (!os) throw std::runtime_error("cannot write CSV file: " + toy_out);
                os << table.str();
            }
            return 0;
        }

        err << "error: no subcommand given\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace smallbatch::cli
