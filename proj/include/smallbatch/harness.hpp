#pragma once
// Experiment driver: fixed-token-budget training runs, grid sweeps,
// single-hyperparameter sensitivity ablations, and the noisy toy problem.
// Runs are deterministic in their seed and independent of execution order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "smallbatch/accumulation.hpp"
#include "smallbatch/halflife.hpp"
#include "smallbatch/models.hpp"
#include "smallbatch/optimizers.hpp"
#include "smallbatch/prng.hpp"

namespace smallbatch {

struct TaskSpec {
    int n_states = 64;
    std::string kind = "random";  // random | uniform | cycle
    std::uint64_t chain_seed = 42;
    double sharpness = 2.0;

    MarkovTask build() const {
        if (kind == "random") return MarkovTask::random(n_states, chain_seed, sharpness);
        if (kind == "uniform") return MarkovTask::uniform(n_states);
        if (kind == "cycle") return MarkovTask::cycle(n_states);
        throw std::invalid_argument("unknown task kind: " + kind);
    }
};

struct ModelSpec {
    int d_model = 32;
    int d_hidden = 128;
};

struct RunConfig {
    std::string config_id;  // auto-generated when empty
    TaskSpec task;
    ModelSpec model;
    OptimizerConfig opt;
    // Decay rates may be given as token half-lives instead; resolved against
    // the effective tokens per optimizer step.
    std::optional<double> t1_tokens;
    std::optional<double> t2_tokens;
    std::int64_t batch_size = 1;  // micro-batch size when accum_steps > 1
    std::int64_t seq_len = 256;
    std::int64_t token_budget = 0;
    std::int64_t accum_steps = 1;
    std::uint64_t seed = 0;
    std::int64_t eval_every_tokens = 0;  // 0 -> every 10% of the budget
    std::int64_t eval_tokens = 65536;

    std::int64_t effective_batch() const { return batch_size * accum_steps; }
    std::int64_t tokens_per_opt_step() const { return batch_size * seq_len * accum_steps; }
    std::int64_t steps() const { return token_budget / tokens_per_opt_step(); }

    TokensPerStep effective_tps() const {
        return TokensPerStep(static_cast<std::uint64_t>(effective_batch()),
                             static_cast<std::uint64_t>(seq_len));
    }

    // Fills betas from half-lives (and vice versa for reporting), assigns a
    // config id, and validates.
    RunConfig resolved() const {
        RunConfig r = *this;
        if (r.batch_size < 1 || r.seq_len < 1 || r.accum_steps < 1) {
            throw std::invalid_argument("batch_size, seq_len, and accum_steps must be >= 1");
        }
        // a half-life of 0 encodes beta = 0 (no moving average), matching the
        // CSV convention, so resolving an already-resolved config is a no-op
        const TokensPerStep tps = r.effective_tps();
        if (r.t1_tokens) {
            r.opt.beta1 =
                *r.t1_tokens > 0.0 ? halflife_to_beta(TokenHalfLife(*r.t1_tokens), tps).value
                                   : 0.0;
        } else {
            r.t1_tokens = r.opt.beta1 > 0.0
                              ? beta_to_halflife(DecayRate(r.opt.beta1), tps).tokens
                              : 0.0;
        }
        if (r.t2_tokens) {
            r.opt.beta2 =
                *r.t2_tokens > 0.0 ? halflife_to_beta(TokenHalfLife(*r.t2_tokens), tps).value
                                   : 0.0;
        } else {
            r.t2_tokens = r.opt.beta2 > 0.0
                              ? beta_to_halflife(DecayRate(r.opt.beta2), tps).tokens
                              : 0.0;
        }
        r.opt.validate();
        if (r.token_budget < r.tokens_per_opt_step()) {
            throw std::invalid_argument("token budget smaller than one effective batch");
        }
        if (r.config_id.empty()) r.config_id = r.auto_id();
        if (r.config_id.find(',') != std::string::npos) {
            throw std::invalid_argument("config_id must not contain commas");
        }
        return r;
    }

    std::string auto_id() const {
        std::ostringstream os;
        os << variant_name(opt.variant) << "-B" << batch_size << "-T" << seq_len;
        if (accum_steps > 1) os << "-acc" << accum_steps;
        os.precision(6);
        os << "-lr" << opt.lr << "-b1." << opt.beta1 << "-b2." << opt.beta2;
        if (opt.weight_decay > 0.0) os << "-wd" << opt.weight_decay;
        os << "-seed" << seed;
        return os.str();
    }
};

struct RunRecord {
    std::int64_t step = 0;
    std::int64_t tokens_seen = 0;
    double train_loss = 0.0;
    std::optional<double> eval_loss;
};

struct RunResult {
    RunConfig cfg;
    std::vector<RunRecord> records;
    double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
};

// Trains one configuration for floor(budget / (B*T*accum)) optimizer steps.
inline RunResult train(const RunConfig& cfg) {
    RunResult result;
    result.cfg = cfg.resolved();
    const RunConfig& r = result.cfg;

    const MarkovTask task = r.task.build();
    MlpLm model = MlpLm::create(r.task.n_states, r.model.d_model, r.model.d_hidden, r.seed);
    OptimizerState state = make_state(model.params, r.opt);
    GradAccumulator acc(model.params);
    Prng data_rng(r.seed, streams::data);
    Prng eval_rng(r.seed, streams::eval);

    const std::int64_t steps = r.steps();
    const std::int64_t tokens_per_step = r.tokens_per_opt_step();
    const std::int64_t eval_every =
        r.eval_every_tokens > 0 ? r.eval_every_tokens : std::max<std::int64_t>(1, r.token_budget / 10);
    std::int64_t next_eval = eval_every;

    GradSet micro_grads = model.params.zeros_like();
    MlpWorkspace ws;
    result.records.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t t = 0; t < steps; ++t) {
        double micro_loss_sum = 0.0;
        for (std::int64_t m = 0; m < r.accum_steps; ++m) {
            TokenBatch batch = sample_batch(task, data_rng, r.batch_size, r.seq_len);
            const double loss = loss_and_grad(model, batch, micro_grads, ws);
            acc.add_microbatch(micro_grads, r.batch_size);
            micro_loss_sum += loss * static_cast<double>(r.batch_size);
        }
        GradSet grad = acc.finalize();
        step(model.params, grad, r.opt, state);

        RunRecord rec;
        rec.step = t + 1;
        rec.tokens_seen = (t + 1) * tokens_per_step;
        rec.train_loss = micro_loss_sum / static_cast<double>(r.effective_batch());

        const bool last = (t == steps - 1) || !std::isfinite(rec.train_loss);
        if (rec.tokens_seen >= next_eval || last) {
            rec.eval_loss = perplexity_eval(model, task, eval_rng, r.eval_tokens, r.seq_len);
            while (next_eval <= rec.tokens_seen) next_eval += eval_every;
        }
        result.records.push_back(rec);
        if (!std::isfinite(rec.train_loss)) break;  // diverged; keep the record honest
    }
    if (!result.records.empty() && result.records.back().eval_loss) {
        result.final_eval_loss = *result.records.back().eval_loss;
    }
    return result;
}

// Runs every configuration, optionally across threads. Results sit in input
// order regardless of scheduling, then get sorted by config id; per-run
// failures land in RunResult::error without aborting siblings.
inline std::vector<RunResult> sweep(const std::vector<RunConfig>& grid, int jobs = 1) {
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    std::vector<RunResult> results(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= grid.size()) return;
            try {
                results[i] = train(grid[i]);
            } catch (const std::exception& e) {
                results[i].cfg = grid[i];
                if (results[i].cfg.config_id.empty()) {
                    results[i].cfg.config_id = grid[i].auto_id();
                }
                results[i].error = e.what();
            }
        }
    };
    if (jobs == 1 || grid.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(grid.size()));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::stable_sort(results.begin(), results.end(),
                     [](const RunResult& a, const RunResult& b) {
                         return a.cfg.config_id < b.cfg.config_id;
                     });
    return results;
}

struct SweepRow {
    std::string config_id;
    std::int64_t batch_size = 0;
    double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
    bool best_for_batch = false;
    std::string error;
};

// Per-batch-size best is the minimum final eval loss over that grid slice.
inline std::vector<SweepRow> summarize_sweep(const std::vector<RunResult>& results) {
    std::vector<SweepRow> rows;
    rows.reserve(results.size());
    for (const auto& r : results) {
        rows.push_back({r.cfg.config_id, r.cfg.batch_size, r.final_eval_loss, false, r.error});
    }
    for (auto& row : rows) {
        if (!row.error.empty() || !std::isfinite(row.final_eval_loss)) continue;
        bool best = true;
        for (const auto& other : rows) {
            if (other.batch_size != row.batch_size || !other.error.empty()) continue;
            if (std::isfinite(other.final_eval_loss) &&
                other.final_eval_loss < row.final_eval_loss) {
                best = false;
                break;
            }
        }
        row.best_for_batch = best;
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sensitivity ablations

struct SensitivitySpec {
    RunConfig base;
    std::string target;  // lr | t1 | t2 | beta1 | beta2
    std::vector<double> multipliers;

    void validate() const {
        if (target != "lr" && target != "t1" && target != "t2" && target != "beta1" &&
            target != "beta2") {
            throw std::invalid_argument("sensitivity target must be lr, t1, t2, beta1, or beta2");
        }
        if (std::find(multipliers.begin(), multipliers.end(), 1.0) == multipliers.end()) {
            throw std::invalid_argument("multiplier list must include 1");
        }
        for (double m : multipliers) {
            if (!(m > 0.0)) throw std::invalid_argument("multipliers must be > 0");
        }
    }
};

struct SensitivityPoint {
    double multiplier = 1.0;
    bool present = false;  // false when the scaled value left (0, 1)
    double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
};

struct SensitivityResult {
    std::vector<SensitivityPoint> curve;
    double robustness_score = 0.0;  // max - min over the curve; diverged runs count as 1e9
    std::vector<RunResult> runs;
};

inline constexpr double kDivergedLoss = 1e9;

// One run per multiplier, everything else fixed. Beta-type targets are scaled
// multiplicatively in half-life space so the converted decay rate stays
// inside (0, 1); a conversion that still leaves (0, 1) numerically skips the
// point.
inline SensitivityResult sensitivity(const SensitivitySpec& spec, int jobs = 1) {
    spec.validate();
    const RunConfig base = spec.base.resolved();
    SensitivityResult out;
    out.curve.resize(spec.multipliers.size());

    std::vector<RunConfig> grid;
    std::vector<std::size_t> grid_to_point;
    for (std::size_t i = 0; i < spec.multipliers.size(); ++i) {
        const double m = spec.multipliers[i];
        out.curve[i].multiplier = m;
        RunConfig cfg = base;
        try {
            if (spec.target == "lr") {
                cfg.opt.lr = base.opt.lr * m;
            } else if (spec.target == "t1" || spec.target == "beta1") {
                if (!(*base.t1_tokens > 0.0)) {
                    throw std::invalid_argument("beta1 is 0; no half-life to scale");
                }
                cfg.t1_tokens = *base.t1_tokens * m;
                cfg.opt.beta1 =
                    halflife_to_beta(TokenHalfLife(*cfg.t1_tokens), cfg.effective_tps()).value;
            } else {
                cfg.t2_tokens = *base.t2_tokens * m;
                cfg.opt.beta2 =
                    halflife_to_beta(TokenHalfLife(*cfg.t2_tokens), cfg.effective_tps()).value;
            }
        } catch (const std::invalid_argument&) {
            continue;  // absent point
        }
        std::ostringstream id;
        id.precision(6);
        id << spec.target << "-x" << m << "-" << cfg.auto_id();
        cfg.config_id = id.str();
        grid_to_point.push_back(i);
        grid.push_back(std::move(cfg));
    }

    out.runs = sweep(grid, jobs);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<bool> used(grid.size(), false);
    for (const auto& run : out.runs) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            if (used[g] || grid[g].config_id != run.cfg.config_id) continue;
            used[g] = true;
            auto& point = out.curve[grid_to_point[g]];
            point.present = run.ok();
            point.final_eval_loss = run.final_eval_loss;
            if (point.present) {
                const double l =
                    std::isfinite(run.final_eval_loss) ? run.final_eval_loss : kDivergedLoss;
                lo = std::min(lo, l);
                hi = std::max(hi, l);
            }
            break;
        }
    }
    out.robustness_score = (hi >= lo) ? hi - lo : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Toy problem experiment (SGD on x + 10 y^2 with multiplicative noise)

struct ToyCell {
    double lr = 0.0;
    double momentum = 0.0;
    double loss_q25 = 0.0, loss_q50 = 0.0, loss_q75 = 0.0;
    double flips_q25 = 0.0, flips_q50 = 0.0, flips_q75 = 0.0;
};

namespace detail {

inline double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double idx = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

// Runs SGD from (x, y) = (0, 1) for every (lr, momentum) cell and seed;
// reports quartiles of the final loss and of the count of y sign flips.
// Seeds share noise sequences across cells, pairing the comparisons.
inline std::vector<ToyCell> toy_experiment(double sigma, int n_steps,
                                           const std::vector<double>& lrs,
                                           const std::vector<double>& momenta, int n_seeds,
                                           std::uint64_t base_seed = 0,
                                           bool per_component_noise = false) {
    if (n_seeds < 8) throw std::invalid_argument("toy experiment needs n_seeds >= 8");
    if (n_steps < 1) throw std::invalid_argument("toy experiment needs n_steps >= 1");
    std::vector<ToyCell> cells;
    for (double lr : lrs) {
        for (double mu : momenta) {
            OptimizerConfig cfg;
            cfg.variant = OptVariant::sgd;
            cfg.lr = lr;
            cfg.momentum = mu;
            std::vector<double> finals(static_cast<std::size_t>(n_seeds));
            std::vector<double> flips(static_cast<std::size_t>(n_seeds));
            for (int s = 0; s < n_seeds; ++s) {
                Prng rng(base_seed + static_cast<std::uint64_t>(s), streams::noise);
                ToyProblem toy;
                toy.noise_sigma = sigma;
                ParamSet params;
                auto& xy = params.add(Tensor::vector("xy", 2));
                xy.data = {toy.x, toy.y};
                OptimizerState state = make_state(params, cfg);
                GradSet grads = params.zeros_like();
                int flip_count = 0;
                double prev_sign = xy.data[1] > 0.0 ? 1.0 : (xy.data[1] < 0.0 ? -1.0 : 0.0);
                for (int t = 0; t < n_steps; ++t) {
                    toy.x = xy.data[0];
                    toy.y = xy.data[1];
                    const ToyGrad g = toy_noisy_grad(toy, rng, per_component_noise);
                    grads[0].data[0] = g.gx;
                    grads[0].data[1] = g.gy;
                    step(params, grads, cfg, state);
                    const double sign =
                        xy.data[1] > 0.0 ? 1.0 : (xy.data[1] < 0.0 ? -1.0 : 0.0);
                    if (sign != 0.0 && prev_sign != 0.0 && sign != prev_sign) ++flip_count;
                    if (sign != 0.0) prev_sign = sign;
                }
                toy.x = xy.data[0];
                toy.y = xy.data[1];
                finals[static_cast<std::size_t>(s)] = toy.loss();
                flips[static_cast<std::size_t>(s)] = flip_count;
            }
            ToyCell cell;
            cell.lr = lr;
            cell.momentum = mu;
            cell.loss_q25 = detail::percentile(finals, 0.25);
            cell.loss_q50 = detail::percentile(finals, 0.50);
            cell.loss_q75 = detail::percentile(finals, 0.75);
            cell.flips_q25 = detail::percentile(flips, 0.25);
            cell.flips_q50 = detail::percentile(flips, 0.50);
            cell.flips_q75 = detail::percentile(flips, 0.75);
            cells.push_back(cell);
        }
    }
    return cells;
}

}  // namespace smallbatch
