#pragma once
// Four update rules behind one step interface: SGD (with optional momentum),
// Adam/AdamW, Adafactor (factored second moment, no first moment), and Muon
// (Newton-Schulz orthogonalized momentum for 2-D hidden tensors, with a
// nested auxiliary optimizer for everything else).

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "smallbatch/tensor.hpp"

namespace smallbatch {

enum class OptVariant { sgd, adam, adafactor, muon };

inline const char* variant_name(OptVariant v) {
    switch (v) {
        case OptVariant::sgd: return "sgd";
        case OptVariant::adam: return "adam";
        case OptVariant::adafactor: return "adafactor";
        case OptVariant::muon: return "muon";
    }
    return "?";
}

inline OptVariant variant_from_name(const std::string& s) {
    if (s == "sgd") return OptVariant::sgd;
    if (s == "adam") return OptVariant::adam;
    if (s == "adafactor") return OptVariant::adafactor;
    if (s == "muon") return OptVariant::muon;
    throw std::invalid_argument("unknown optimizer variant: " + s);
}

enum class Schedule { constant, warmup_cosine };

struct OptimizerConfig {
    OptVariant variant = OptVariant::adam;
    double lr = 1e-3;
    double momentum = 0.0;       // sgd buffer decay; also muon's buffer decay
    double beta1 = 0.9;          // 0 disables the first moment
    double beta2 = 0.95;
    double epsilon = 1e-8;
    double weight_decay = 0.0;   // decoupled (AdamW semantics), applies to all variants
    bool bias_correction = true;
    Schedule schedule = Schedule::constant;
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 0;
    int ns_iters = 5;            // muon Newton-Schulz iterations
    bool momentum_ema = false;   // muon buffer: b = mu*b + (1-mu)*g instead of b = mu*b + g
    double factored_delta = 1e-30;  // adafactor: added to g^2 before row/col accumulation
    std::shared_ptr<OptimizerConfig> aux;  // muon: optimizer for non-hidden tensors

    void validate() const {
        // lr = 0 is allowed as the degenerate identity optimizer
        if (!(lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
        if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
        if (ns_iters < 1) throw std::invalid_argument("ns_iters must be >= 1");
        if (schedule == Schedule::warmup_cosine && total_steps < 1) {
            throw std::invalid_argument("warmup_cosine schedule needs total_steps >= 1");
        }
        if (variant == OptVariant::muon) {
            if (!aux) throw std::invalid_argument("muon config requires an aux optimizer");
            if (aux->variant == OptVariant::muon) {
                throw std::invalid_argument("muon aux optimizer cannot itself be muon");
            }
            aux->validate();
        }
    }
};

struct OptimizerState {
    struct Slot {
        std::vector<double> m;    // adam first moment
        std::vector<double> v;    // adam / unfactored adafactor second moment
        std::vector<double> row;  // adafactor row accumulator (length d1)
        std::vector<double> col;  // adafactor column accumulator (length d2)
        std::vector<double> buf;  // sgd / muon momentum buffer

        std::int64_t element_count() const {
            return static_cast<std::int64_t>(m.size() + v.size() + row.size() + col.size() +
                                             buf.size());
        }
    };

    std::int64_t step_count = 0;
    std::vector<Slot> slots;            // parallel to the ParamSet
    std::vector<OptimizerState> aux;    // muon: 0 or 1 nested state, same slot indexing
};

inline OptimizerState make_state(const ParamSet& params, const OptimizerConfig& cfg) {
    cfg.validate();
    OptimizerState state;
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        auto& slot = state.slots[i];
        const auto n = static_cast<std::size_t>(p.numel());
        switch (cfg.variant) {
            case OptVariant::sgd:
                if (cfg.momentum > 0.0) slot.buf.assign(n, 0.0);
                break;
            case OptVariant::adam:
                slot.m.assign(n, 0.0);
                slot.v.assign(n, 0.0);
                break;
            case OptVariant::adafactor:
                if (p.rank == 2) {
                    slot.row.assign(static_cast<std::size_t>(p.rows), 0.0);
                    slot.col.assign(static_cast<std::size_t>(p.cols), 0.0);
                } else {
                    slot.v.assign(n, 0.0);
                }
                break;
            case OptVariant::muon:
                if (p.hidden) {
                    if (p.rank != 2) {
                        throw std::invalid_argument("muon cannot train rank-1 tensor tagged hidden: " +
                                                    p.name);
                    }
                    slot.buf.assign(n, 0.0);
                }
                break;
        }
    }
    if (cfg.variant == OptVariant::muon) {
        // Nested state over the same tensor list; only non-hidden slots get storage.
        OptimizerState aux_state;
        aux_state.slots.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].hidden) continue;
            ParamSet one;
            one.add(params[i]);
            OptimizerState sub = make_state(one, *cfg.aux);
            aux_state.slots[i] = std::move(sub.slots[0]);
        }
        state.aux.push_back(std::move(aux_state));
    }
    return state;
}

// Effective learning rate at 0-based step t.
inline double scheduled_lr(const OptimizerConfig& cfg, std::int64_t t) {
    if (cfg.schedule == Schedule::constant) return cfg.lr;
    if (t < cfg.warmup_steps) {
        return cfg.lr * static_cast<double>(t + 1) / static_cast<double>(cfg.warmup_steps);
    }
    const auto span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    if (span <= 0.0) return cfg.lr;
    double frac = static_cast<double>(t - cfg.warmup_steps) / span;
    if (frac > 1.0) frac = 1.0;
    return cfg.lr * 0.5 * (1.0 + std::cos(frac * 3.14159265358979323846));
}

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Drives the singular values of a normalized matrix toward 1 with the quintic
// iteration X <- a*X + (b*X + c*X*(X^T X)) * (X^T X). Tall inputs are
// processed transposed. Output shape equals input shape.
inline MatrixRM newton_schulz(const MatrixRM& input, int iters) {
    if (iters < 1) throw std::invalid_argument("newton_schulz: iters must be >= 1");
    const double a = 3.4445, b = -4.7750, c = 2.0315;
    const double norm = input.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("newton_schulz: zero matrix");
    const bool tall = input.rows() > input.cols();
    MatrixRM x = tall ? MatrixRM(input.transpose() / norm) : MatrixRM(input / norm);
    for (int k = 0; k < iters; ++k) {
        // (b*X + c*X*S)*S with S = X^T X equals (b*A + c*A*A)*X with A = X X^T;
        // A is the smaller Gram matrix once tall inputs are transposed.
        MatrixRM gram = x * x.transpose();
        x = (a * x + (b * gram + c * gram * gram) * x).eval();
    }
    return tall ? MatrixRM(x.transpose()) : x;
}

inline Tensor newton_schulz(const Tensor& m, int iters) {
    if (m.rank != 2) throw std::invalid_argument("newton_schulz expects a rank-2 tensor");
    Eigen::Map<const MatrixRM> view(m.data.data(), m.rows, m.cols);
    MatrixRM out = newton_schulz(MatrixRM(view), iters);
    Tensor result = m;
    Eigen::Map<MatrixRM>(result.data.data(), m.rows, m.cols) = out;
    return result;
}

namespace detail {

inline void apply_weight_decay(Tensor& p, double lr_t, double weight_decay) {
    if (weight_decay <= 0.0) return;
    const double shrink = 1.0 - lr_t * weight_decay;
    for (auto& w : p.data) w *= shrink;
}

inline void sgd_update(Tensor& p, const Tensor& g, const OptimizerConfig& cfg,
                       OptimizerState::Slot& slot, double lr_t) {
    apply_weight_decay(p, lr_t, cfg.weight_decay);
    if (cfg.momentum > 0.0) {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            slot.buf[i] = cfg.momentum * slot.buf[i] + g.data[i];
            p.data[i] -= lr_t * slot.buf[i];
        }
    } else {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            p.data[i] -= lr_t * g.data[i];
        }
    }
}

inline void adam_update(Tensor& p, const Tensor& g, const OptimizerConfig& cfg,
                        OptimizerState::Slot& slot, double lr_t, std::int64_t t) {
    apply_weight_decay(p, lr_t, cfg.weight_decay);
    const double bc1 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta1, static_cast<double>(t)) : 1.0;
    const double bc2 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta2, static_cast<double>(t)) : 1.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double gi = g.data[i];
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * gi;
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        p.data[i] -= lr_t * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

inline void adafactor_update(Tensor& p, const Tensor& g, const OptimizerConfig& cfg,
                             OptimizerState::Slot& slot, double lr_t, std::int64_t t) {
    apply_weight_decay(p, lr_t, cfg.weight_decay);
    const double bc2 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta2, static_cast<double>(t)) : 1.0;
    if (p.rank == 2) {
        const auto d1 = static_cast<std::size_t>(p.rows);
        const auto d2 = static_cast<std::size_t>(p.cols);
        // R <- beta2 R + (1-beta2) rowsum(g^2 + delta), likewise for columns.
        for (std::size_t i = 0; i < d1; ++i) slot.row[i] *= cfg.beta2;
        for (std::size_t j = 0; j < d2; ++j) slot.col[j] *= cfg.beta2;
        for (std::size_t i = 0; i < d1; ++i) {
            const double* grow = g.data.data() + i * d2;
            double rsum = 0.0;
            for (std::size_t j = 0; j < d2; ++j) {
                const double sq = grow[j] * grow[j] + cfg.factored_delta;
                rsum += sq;
                slot.col[j] += (1.0 - cfg.beta2) * sq;
            }
            slot.row[i] += (1.0 - cfg.beta2) * rsum;
        }
        double col_total = 0.0;
        for (std::size_t j = 0; j < d2; ++j) col_total += slot.col[j];
        // V_ij = R_i C_j / sum(C); delta > 0 keeps the denominator positive.
        const double inv_total = col_total > 0.0 ? 1.0 / col_total : 0.0;
        for (std::size_t i = 0; i < d1; ++i) {
            double* prow = p.data.data() + i * d2;
            const double* grow = g.data.data() + i * d2;
            const double ri = slot.row[i] * inv_total;
            for (std::size_t j = 0; j < d2; ++j) {
                const double vhat = ri * slot.col[j] / bc2;
                prow[j] -= lr_t * grow[j] / (std::sqrt(vhat) + cfg.epsilon);
            }
        }
    } else {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i];
            slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * (gi * gi + cfg.factored_delta);
            p.data[i] -= lr_t * gi / (std::sqrt(slot.v[i] / bc2) + cfg.epsilon);
        }
    }
}

inline void muon_update(Tensor& p, const Tensor& g, const OptimizerConfig& cfg,
                        OptimizerState::Slot& slot, double lr_t) {
    apply_weight_decay(p, lr_t, cfg.weight_decay);
    const double keep = cfg.momentum_ema ? 1.0 - cfg.momentum : 1.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        slot.buf[i] = cfg.momentum * slot.buf[i] + keep * g.data[i];
    }
    Eigen::Map<const MatrixRM> buf(slot.buf.data(), p.rows, p.cols);
    MatrixRM ortho = newton_schulz(MatrixRM(buf), cfg.ns_iters);
    const double shape_scale =
        std::sqrt(std::max(1.0, static_cast<double>(p.rows) / static_cast<double>(p.cols)));
    Eigen::Map<MatrixRM> pv(p.data.data(), p.rows, p.cols);
    pv -= lr_t * shape_scale * ortho;
}

}  // namespace detail

// Applies one optimizer step in place. Deterministic function of its inputs;
// increments state.step_count.
inline void step(ParamSet& params, const GradSet& grads, const OptimizerConfig& cfg,
                 OptimizerState& state) {
    require_same_structure(params, grads, "optimizer step");
    if (state.slots.size() != params.size()) {
        throw std::invalid_argument("optimizer state does not match parameter set");
    }
    const double lr_t = scheduled_lr(cfg, state.step_count);
    const std::int64_t t = state.step_count + 1;
    switch (cfg.variant) {
        case OptVariant::sgd:
            for (std::size_t i = 0; i < params.size(); ++i) {
                detail::sgd_update(params[i], grads[i], cfg, state.slots[i], lr_t);
            }
            break;
        case OptVariant::adam:
            for (std::size_t i = 0; i < params.size(); ++i) {
                detail::adam_update(params[i], grads[i], cfg, state.slots[i], lr_t, t);
            }
            break;
        case OptVariant::adafactor:
            for (std::size_t i = 0; i < params.size(); ++i) {
                detail::adafactor_update(params[i], grads[i], cfg, state.slots[i], lr_t, t);
            }
            break;
        case OptVariant::muon: {
            if (!cfg.aux || state.aux.empty()) {
                throw std::invalid_argument("muon step requires an aux optimizer and state");
            }
            OptimizerState& aux_state = state.aux.front();
            const double aux_lr = scheduled_lr(*cfg.aux, aux_state.step_count);
            const std::int64_t aux_t = aux_state.step_count + 1;
            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor& p = params[i];
                if (p.hidden) {
                    if (p.rank != 2) {
                        throw std::invalid_argument("muon cannot train rank-1 hidden tensor: " + p.name);
                    }
                    detail::muon_update(p, grads[i], cfg, state.slots[i], lr_t);
                } else {
                    switch (cfg.aux->variant) {
                        case OptVariant::sgd:
                            detail::sgd_update(p, grads[i], *cfg.aux, aux_state.slots[i], aux_lr);
                            break;
                        case OptVariant::adam:
                            detail::adam_update(p, grads[i], *cfg.aux, aux_state.slots[i], aux_lr, aux_t);
                            break;
                        case OptVariant::adafactor:
                            detail::adafactor_update(p, grads[i], *cfg.aux, aux_state.slots[i], aux_lr,
                                                     aux_t);
                            break;
                        case OptVariant::muon:
                            throw std::invalid_argument("muon aux cannot be muon");
                    }
                }
            }
            aux_state.step_count += 1;
            break;
        }
    }
    state.step_count += 1;
}

struct StateElementCount {
    std::vector<std::pair<std::string, std::int64_t>> per_tensor;
    std::int64_t total = 0;
};

// Closed-form state footprint from shapes alone: sgd stores nothing (or one
// buffer with momentum), adam two full moments, adafactor d1+d2 per matrix
// and a full vector otherwise, muon one buffer per hidden matrix plus
// whatever the aux optimizer stores for the rest.
inline StateElementCount state_element_count(const ShapeSet& shapes, const OptimizerConfig& cfg) {
    cfg.validate();
    StateElementCount out;
    for (const auto& s : shapes) {
        std::int64_t n = 0;
        switch (cfg.variant) {
            case OptVariant::sgd:
                n = cfg.momentum > 0.0 ? s.numel() : 0;
                break;
            case OptVariant::adam:
                n = 2 * s.numel();
                break;
            case OptVariant::adafactor:
                n = s.rank == 2 ? s.rows + s.cols : s.numel();
                break;
            case OptVariant::muon:
                if (s.hidden) {
                    if (s.rank != 2) {
                        throw std::invalid_argument("muon cannot train rank-1 hidden tensor: " +
                                                    s.name);
                    }
                    n = s.numel();
                } else {
                    n = state_element_count(ShapeSet{s}, *cfg.aux).total;
                }
                break;
        }
        out.per_tensor.emplace_back(s.name, n);
        out.total += n;
    }
    return out;
}

// Footprint of a live state, for cross-checking against the closed form.
inline StateElementCount state_element_count(const ParamSet& params, const OptimizerState& state) {
    if (state.slots.size() != params.size()) {
        throw std::invalid_argument("state_element_count: state does not match parameter set");
    }
    StateElementCount out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::int64_t n = state.slots[i].element_count();
        if (!state.aux.empty()) n += state.aux.front().slots[i].element_count();
        out.per_tensor.emplace_back(params[i].name, n);
        out.total += n;
    }
    return out;
}

}  // namespace smallbatch
