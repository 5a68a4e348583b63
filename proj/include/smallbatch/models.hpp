#pragma once
// Desk-scale stand-ins for language-model training: the two-variable toy
// problem with multiplicative gradient noise, a synthetic Markov next-token
// task, and a one-hidden-layer MLP language model with exact manual
// backpropagation.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "smallbatch/prng.hpp"
#include "smallbatch/tensor.hpp"

namespace smallbatch {

// ---------------------------------------------------------------------------
// Toy problem: loss(x, y) = x + 10 y^2

struct ToyProblem {
    double x = 0.0;
    double y = 1.0;
    double noise_sigma = 0.0;

    double loss() const { return x + 10.0 * y * y; }
};

struct ToyGrad {
    double gx;
    double gy;
};

// Exact gradient (1, 20y) times a multiplier drawn from N(1, sigma^2). One
// scalar multiplier per call by default; per_component draws one per entry.
inline ToyGrad toy_noisy_grad(const ToyProblem& p, Prng& rng, bool per_component = false) {
    if (p.noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
    const double nx = rng.normal(1.0, p.noise_sigma);
    const double ny = per_component ? rng.normal(1.0, p.noise_sigma) : nx;
    return ToyGrad{1.0 * nx, 20.0 * p.y * ny};
}

// ---------------------------------------------------------------------------
// Markov next-token task

struct MarkovTask {
    int n_states = 0;
    std::vector<double> transition;  // row-major K x K, rows sum to 1
    std::uint64_t seed = 0;

    static MarkovTask from_matrix(int k, std::vector<double> matrix, std::uint64_t seed = 0) {
        if (k < 1 || matrix.size() != static_cast<std::size_t>(k) * k) {
            throw std::invalid_argument("transition matrix must be K x K with K >= 1");
        }
        for (int i = 0; i < k; ++i) {
            double row = 0.0;
            for (int j = 0; j < k; ++j) {
                const double p = matrix[static_cast<std::size_t>(i) * k + j];
                if (p < 0.0) throw std::invalid_argument("transition probabilities must be >= 0");
                row += p;
            }
            if (std::abs(row - 1.0) > 1e-12) {
                throw std::invalid_argument("transition row does not sum to 1");
            }
        }
        MarkovTask t;
        t.n_states = k;
        t.transition = std::move(matrix);
        t.seed = seed;
        return t;
    }

    // Rows are softmax(sharpness * z) with z standard normal, derived
    // deterministically from the seed.
    static MarkovTask random(int k, std::uint64_t seed, double sharpness = 2.0) {
        if (k < 1) throw std::invalid_argument("n_states must be >= 1");
        Prng rng(seed, streams::task);
        std::vector<double> m(static_cast<std::size_t>(k) * k);
        for (int i = 0; i < k; ++i) {
            double* row = m.data() + static_cast<std::size_t>(i) * k;
            double mx = -1e300;
            for (int j = 0; j < k; ++j) {
                row[j] = sharpness * rng.normal();
                mx = std::max(mx, row[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < k; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int j = 0; j < k; ++j) row[j] /= sum;
        }
        MarkovTask t;
        t.n_states = k;
        t.transition = std::move(m);
        t.seed = seed;
        return t;
    }

    static MarkovTask uniform(int k) {
        std::vector<double> m(static_cast<std::size_t>(k) * k, 1.0 / k);
        return from_matrix(k, std::move(m));
    }

    // Deterministic cycle: state s always transitions to (s + 1) mod K.
    static MarkovTask cycle(int k) {
        std::vector<double> m(static_cast<std::size_t>(k) * k, 0.0);
        for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i) * k + (i + 1) % k] = 1.0;
        return from_matrix(k, std::move(m));
    }

    double prob(int from, int to) const {
        return transition[static_cast<std::size_t>(from) * n_states + to];
    }

    std::vector<double> stationary(int iters = 4000) const {
        std::vector<double> pi(n_states, 1.0 / n_states), next(n_states);
        for (int it = 0; it < iters; ++it) {
            std::fill(next.begin(), next.end(), 0.0);
            for (int i = 0; i < n_states; ++i) {
                const double w = pi[i];
                const double* row = transition.data() + static_cast<std::size_t>(i) * n_states;
                for (int j = 0; j < n_states; ++j) next[j] += w * row[j];
            }
            double sum = 0.0;
            for (double v : next) sum += v;
            for (auto& v : next) v /= sum;
            pi.swap(next);
        }
        return pi;
    }

    // Conditional entropy of the next token under the stationary distribution,
    // in nats. No model can evaluate below this on fresh samples, in
    // expectation.
    double entropy_rate() const {
        const auto pi = stationary();
        double h = 0.0;
        for (int i = 0; i < n_states; ++i) {
            double row_h = 0.0;
            for (int j = 0; j < n_states; ++j) {
                const double p = prob(i, j);
                if (p > 0.0) row_h -= p * std::log(p);
            }
            h += pi[i] * row_h;
        }
        return h;
    }
};

// B sequences of T+1 tokens each: positions [0, T) are inputs, [1, T] targets.
struct TokenBatch {
    std::int64_t batch_size = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int32_t> tokens;  // row-major B x (T+1)

    std::int32_t token(std::int64_t b, std::int64_t t) const {
        return tokens[static_cast<std::size_t>(b * (seq_len + 1) + t)];
    }
};

// Sampling consumes exactly (T + 1) draws per sequence, in sequence order, so
// one call with B sequences consumes the same draws as B/b successive calls
// with b sequences. Gradient-accumulation equivalence tests rely on this.
inline TokenBatch sample_batch(const MarkovTask& task, Prng& rng, std::int64_t batch_size,
                               std::int64_t seq_len) {
    if (batch_size < 1 || seq_len < 1) {
        throw std::invalid_argument("batch size and sequence length must be >= 1");
    }
    TokenBatch batch;
    batch.batch_size = batch_size;
    batch.seq_len = seq_len;
    batch.tokens.resize(static_cast<std::size_t>(batch_size * (seq_len + 1)));
    const int k = task.n_states;
    for (std::int64_t b = 0; b < batch_size; ++b) {
        auto* seq = batch.tokens.data() + b * (seq_len + 1);
        int s = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k)));
        seq[0] = s;
        for (std::int64_t t = 0; t < seq_len; ++t) {
            const double u = rng.uniform();
            const double* row = task.transition.data() + static_cast<std::size_t>(s) * k;
            double acc = 0.0;
            int next = k - 1;
            for (int j = 0; j < k; ++j) {
                acc += row[j];
                if (u < acc) {
                    next = j;
                    break;
                }
            }
            s = next;
            seq[t + 1] = s;
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// One-hidden-layer MLP language model
//
// x = embed[token]; u = rmsnorm(x) .* gain1; h = gelu(u W1);
// v = rmsnorm(h) .* gain2; logits = v W2; loss = mean cross-entropy.

inline constexpr double kRmsNormEps = 1e-8;

struct MlpLm {
    int n_states = 0;
    int d_model = 0;
    int d_hidden = 0;
    ParamSet params;  // embed, w1 (hidden), w2 (hidden), gain1, gain2

    static MlpLm create(int n_states, int d_model, int d_hidden, std::uint64_t seed) {
        if (n_states < 1 || d_model < 1 || d_hidden < 1) {
            throw std::invalid_argument("model dimensions must be >= 1");
        }
        MlpLm m;
        m.n_states = n_states;
        m.d_model = d_model;
        m.d_hidden = d_hidden;
        m.params.add(Tensor::matrix("embed", n_states, d_model));
        m.params.add(Tensor::matrix("w1", d_model, d_hidden, true));
        m.params.add(Tensor::matrix("w2", d_hidden, n_states, true));
        m.params.add(Tensor::vector("gain1", d_model));
        m.params.add(Tensor::vector("gain2", d_hidden));
        Tensor& embed = m.params.find("embed");
        Tensor& w1 = m.params.find("w1");
        Tensor& w2 = m.params.find("w2");
        m.params.find("gain1").data.assign(static_cast<std::size_t>(d_model), 1.0);
        m.params.find("gain2").data.assign(static_cast<std::size_t>(d_hidden), 1.0);

        Prng rng(seed, streams::init);
        for (auto& v : embed.data) v = rng.normal();
        const double w1_std = 1.0 / std::sqrt(static_cast<double>(d_model));
        for (auto& v : w1.data) v = rng.normal() * w1_std;
        // The output head starts an order of magnitude below 1/sqrt(fan_in) so
        // a fresh model predicts a near-uniform distribution.
        const double w2_std = 0.1 / std::sqrt(static_cast<double>(d_hidden));
        for (auto& v : w2.data) v = rng.normal() * w2_std;
        return m;
    }
};

namespace detail {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// tanh-form GELU (the GPT-2 convention): 0.5 z (1 + tanh(c (z + 0.044715 z^3)))
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

// tanh(w) = sign(w) (1 - e^(-2|w|)) / (1 + e^(-2|w|)): Eigen vectorizes exp
// for doubles but not tanh. t is kept for the backward pass.
inline void gelu_forward(const MatRM& z, MatRM& t, MatRM& h) {
    MatRM w = kGeluC * (z.array() + kGeluA * z.array().cube());
    MatRM e = (-2.0 * w.array().abs()).exp();
    t = w.array().sign() * (1.0 - e.array()) / (1.0 + e.array());
    h = 0.5 * z.array() * (1.0 + t.array());
}

// dz = dh * [0.5 (1 + t) + 0.5 z (1 - t^2) c (1 + 3 a z^2)]
inline void gelu_backward(const MatRM& z, const MatRM& t, const MatRM& dh, MatRM& dz) {
    dz = dh.array() *
         (0.5 * (1.0 + t.array()) +
          0.5 * z.array() * (1.0 - t.array().square()) * kGeluC *
              (1.0 + 3.0 * kGeluA * z.array().square()));
}

inline double gelu(double z) {
    return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
}

// y_i = x_i / r with r = sqrt(mean(x^2) + eps), returns r per row.
inline void rmsnorm_rows(const MatRM& x, MatRM& y, Eigen::VectorXd& r) {
    const auto d = static_cast<double>(x.cols());
    r = ((x.array().square().rowwise().sum() / d) + kRmsNormEps).sqrt();
    y = x.array().colwise() / r.array();
}

// dx_j = dy_j / r - x_j * sum_i(dy_i x_i) / (d r^3)
inline void rmsnorm_backward(const MatRM& x, const MatRM& dy, const Eigen::VectorXd& r,
                             MatRM& dx) {
    const auto d = static_cast<double>(x.cols());
    Eigen::VectorXd s = (dy.array() * x.array()).rowwise().sum();
    dx = dy.array().colwise() / r.array();
    dx.array() -= x.array().colwise() * (s.array() / (d * r.array().cube()));
}

}  // namespace detail

// Reusable buffers for loss_and_grad; one per training loop avoids
// reallocating activation matrices every micro-batch.
struct MlpWorkspace {
    detail::MatRM x, xn, u, z1, gelu_t, h, hn, v, logits, dlogits;
    detail::MatRM dv, dhn, dact, dz1, du, dxn, dx;
    Eigen::VectorXd r1, r2;
    std::vector<std::int32_t> inputs, targets;
};

// Mean cross-entropy over all B*T positions plus exact analytic gradients for
// every parameter tensor (mean-reduced, as gradient accumulation requires).
// Writes into a caller-held GradSet and workspace.
inline double loss_and_grad(const MlpLm& model, const TokenBatch& batch, GradSet& grads,
                            MlpWorkspace& ws) {
    using detail::MatRM;
    const std::int64_t n = batch.batch_size * batch.seq_len;
    if (n < 1) throw std::invalid_argument("empty batch");
    const int k = model.n_states, dm = model.d_model, dh = model.d_hidden;
    require_same_structure(model.params, grads, "loss_and_grad");

    const Tensor& embed = model.params.find("embed");
    Eigen::Map<const MatRM> w1(model.params.find("w1").data.data(), dm, dh);
    Eigen::Map<const MatRM> w2(model.params.find("w2").data.data(), dh, k);
    Eigen::Map<const Eigen::VectorXd> g1(model.params.find("gain1").data.data(), dm);
    Eigen::Map<const Eigen::VectorXd> g2(model.params.find("gain2").data.data(), dh);

    ws.inputs.resize(static_cast<std::size_t>(n));
    ws.targets.resize(static_cast<std::size_t>(n));
    for (std::int64_t b = 0, pos = 0; b < batch.batch_size; ++b) {
        for (std::int64_t t = 0; t < batch.seq_len; ++t, ++pos) {
            const auto tok = batch.token(b, t);
            const auto tgt = batch.token(b, t + 1);
            if (tok < 0 || tok >= k || tgt < 0 || tgt >= k) {
                throw std::invalid_argument("token id outside [0, n_states)");
            }
            ws.inputs[static_cast<std::size_t>(pos)] = tok;
            ws.targets[static_cast<std::size_t>(pos)] = tgt;
        }
    }

    // forward
    ws.x.resize(n, dm);
    for (std::int64_t i = 0; i < n; ++i) {
        ws.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(
            embed.data.data() + static_cast<std::size_t>(ws.inputs[i]) * dm, dm);
    }
    detail::rmsnorm_rows(ws.x, ws.xn, ws.r1);
    ws.u = ws.xn.array().rowwise() * g1.transpose().array();
    ws.z1.noalias() = ws.u * w1;
    detail::gelu_forward(ws.z1, ws.gelu_t, ws.h);
    detail::rmsnorm_rows(ws.h, ws.hn, ws.r2);
    ws.v = ws.hn.array().rowwise() * g2.transpose().array();
    ws.logits.noalias() = ws.v * w2;

    // softmax cross-entropy (max-shifted) and dlogits = (softmax - onehot)/n
    Eigen::VectorXd mx = ws.logits.rowwise().maxCoeff();
    ws.dlogits = (ws.logits.array().colwise() - mx.array()).exp();
    Eigen::VectorXd zsum = ws.dlogits.rowwise().sum();
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        loss += std::log(zsum[i]) + mx[i] - ws.logits(i, ws.targets[i]);
    }
    loss /= static_cast<double>(n);
    ws.dlogits.array().colwise() /= zsum.array();
    for (std::int64_t i = 0; i < n; ++i) ws.dlogits(i, ws.targets[i]) -= 1.0;
    ws.dlogits /= static_cast<double>(n);

    // backward
    Eigen::Map<MatRM> g_embed(grads.find("embed").data.data(), k, dm);
    Eigen::Map<MatRM> g_w1(grads.find("w1").data.data(), dm, dh);
    Eigen::Map<MatRM> g_w2(grads.find("w2").data.data(), dh, k);
    Eigen::Map<Eigen::VectorXd> g_g1(grads.find("gain1").data.data(), dm);
    Eigen::Map<Eigen::VectorXd> g_g2(grads.find("gain2").data.data(), dh);

    g_w2.noalias() = ws.v.transpose() * ws.dlogits;
    ws.dv.noalias() = ws.dlogits * w2.transpose();
    g_g2 = (ws.dv.array() * ws.hn.array()).colwise().sum();
    ws.dhn = ws.dv.array().rowwise() * g2.transpose().array();
    detail::rmsnorm_backward(ws.h, ws.dhn, ws.r2, ws.dact);
    detail::gelu_backward(ws.z1, ws.gelu_t, ws.dact, ws.dz1);
    g_w1.noalias() = ws.u.transpose() * ws.dz1;
    ws.du.noalias() = ws.dz1 * w1.transpose();
    g_g1 = (ws.du.array() * ws.xn.array()).colwise().sum();
    ws.dxn = ws.du.array().rowwise() * g1.transpose().array();
    detail::rmsnorm_backward(ws.x, ws.dxn, ws.r1, ws.dx);
    g_embed.setZero();
    for (std::int64_t i = 0; i < n; ++i) {
        g_embed.row(ws.inputs[i]) += ws.dx.row(i);
    }
    return loss;
}

inline std::pair<double, GradSet> loss_and_grad(const MlpLm& model, const TokenBatch& batch) {
    GradSet grads = model.params.zeros_like();
    MlpWorkspace ws;
    const double loss = loss_and_grad(model, batch, grads, ws);
    return {loss, std::move(grads)};
}

// Forward-only mean cross-entropy.
inline double loss_only(const MlpLm& model, const TokenBatch& batch) {
    using detail::MatRM;
    const std::int64_t n = batch.batch_size * batch.seq_len;
    if (n < 1) throw std::invalid_argument("empty batch");
    const int k = model.n_states, dm = model.d_model, dh = model.d_hidden;
    const Tensor& embed = model.params.find("embed");
    Eigen::Map<const MatRM> w1(model.params.find("w1").data.data(), dm, dh);
    Eigen::Map<const MatRM> w2(model.params.find("w2").data.data(), dh, k);
    Eigen::Map<const Eigen::VectorXd> g1(model.params.find("gain1").data.data(), dm);
    Eigen::Map<const Eigen::VectorXd> g2(model.params.find("gain2").data.data(), dh);

    MatRM x(n, dm);
    std::vector<std::int32_t> targets(static_cast<std::size_t>(n));
    for (std::int64_t b = 0, pos = 0; b < batch.batch_size; ++b) {
        for (std::int64_t t = 0; t < batch.seq_len; ++t, ++pos) {
            const auto tok = batch.token(b, t);
            const auto tgt = batch.token(b, t + 1);
            if (tok < 0 || tok >= k || tgt < 0 || tgt >= k) {
                throw std::invalid_argument("token id outside [0, n_states)");
            }
            x.row(pos) = Eigen::Map<const Eigen::RowVectorXd>(
                embed.data.data() + static_cast<std::size_t>(tok) * dm, dm);
            targets[static_cast<std::size_t>(pos)] = tgt;
        }
    }
    MatRM xn(n, dm);
    Eigen::VectorXd r1;
    detail::rmsnorm_rows(x, xn, r1);
    MatRM z1 = MatRM(xn.array().rowwise() * g1.transpose().array()) * w1;
    MatRM gelu_t, h;
    detail::gelu_forward(z1, gelu_t, h);
    MatRM hn(n, dh);
    Eigen::VectorXd r2;
    detail::rmsnorm_rows(h, hn, r2);
    MatRM logits = MatRM(hn.array().rowwise() * g2.transpose().array()) * w2;
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(logits(i, j) - mx);
        loss += std::log(z) + mx - logits(i, targets[i]);
    }
    return loss / static_cast<double>(n);
}

// Mean cross-entropy on freshly sampled held-out sequences. Bounded below by
// the chain's entropy rate in expectation.
inline double perplexity_eval(const MlpLm& model, const MarkovTask& task, Prng& rng,
                              std::int64_t n_tokens, std::int64_t seq_len = 256) {
    if (n_tokens < 1) throw std::invalid_argument("n_tokens must be >= 1");
    const std::int64_t n_seqs = std::max<std::int64_t>(1, n_tokens / seq_len);
    double total = 0.0;
    std::int64_t count = 0;
    // chunked so memory stays bounded for large eval sets
    const std::int64_t chunk = 256;
    for (std::int64_t done = 0; done < n_seqs; done += chunk) {
        const std::int64_t b = std::min(chunk, n_seqs - done);
        TokenBatch batch = sample_batch(task, rng, b, seq_len);
        total += loss_only(model, batch) * static_cast<double>(b * seq_len);
        count += b * seq_len;
    }
    return total / static_cast<double>(count);
}

}  // namespace smallbatch
