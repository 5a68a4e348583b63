#pragma once
// Closed-form floor on training memory: parameters, optimizer state,
// checkpointed activations (D values per layer per token), and the optional
// accumulated-gradient buffer. Also counts transformer parameters from layer
// dimensions.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "smallbatch/optimizers.hpp"
#include "smallbatch/tensor.hpp"

namespace smallbatch {

struct ModelDims {
    std::int64_t vocab_size = 0;
    std::int64_t model_dim = 0;
    std::int64_t hidden_dim = 0;
    std::int64_t head_dim = 0;
    std::int64_t n_layers = 0;
    std::int64_t seq_len = 0;
    bool tied_embeddings = false;
    std::int64_t param_count_override = 0;  // 0 = derive from dims

    void validate() const {
        if (vocab_size < 1 || model_dim < 1 || hidden_dim < 1 || head_dim < 1 || seq_len < 1 ||
            n_layers < 0) {
            throw std::invalid_argument("model dims must be positive (n_layers may be 0)");
        }
        if (model_dim % head_dim != 0) {
            throw std::invalid_argument("head_dim must divide model_dim");
        }
        if (param_count_override < 0) {
            throw std::invalid_argument("param_count_override must be positive when set");
        }
    }
};

struct ParamCounts {
    std::int64_t embedding = 0;       // input + output embedding matrices
    std::int64_t non_embedding = 0;   // attention, MLP, norm gains, final norm
    std::int64_t active = 0;          // parameters touched per token forward pass
    std::int64_t total_trainable = 0;
};

// Per layer: 4 attention projections (D x D), two MLP matrices (D x H and
// H x D), two RMSNorm gains; one final norm gain. The embedding lookup is not
// active; the output head is.
inline ParamCounts count_params(const ModelDims& d) {
    d.validate();
    const std::int64_t V = d.vocab_size, D = d.model_dim, H = d.hidden_dim, L = d.n_layers;
    ParamCounts c;
    c.embedding = (d.tied_embeddings ? 1 : 2) * V * D;
    c.non_embedding = L * (4 * D * D + 2 * D * H + 2 * D) + D;
    c.active = c.non_embedding + V * D;
    c.total_trainable = c.embedding + c.non_embedding;
    return c;
}

// Tensor shapes of the model above, for optimizer-state accounting. Hidden
// (Muon-routed) tensors are the per-layer matrices; embeddings and gains are
// not.
inline ShapeSet transformer_shapes(const ModelDims& d) {
    d.validate();
    ShapeSet set;
    set.push_back(TensorShape::matrix("embed_in", d.vocab_size, d.model_dim));
    if (!d.tied_embeddings) {
        set.push_back(TensorShape::matrix("embed_out", d.vocab_size, d.model_dim));
    }
    for (std::int64_t l = 0; l < d.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        set.push_back(TensorShape::matrix(p + "wq", d.model_dim, d.model_dim, true));
        set.push_back(TensorShape::matrix(p + "wk", d.model_dim, d.model_dim, true));
        set.push_back(TensorShape::matrix(p + "wv", d.model_dim, d.model_dim, true));
        set.push_back(TensorShape::matrix(p + "wo", d.model_dim, d.model_dim, true));
        set.push_back(TensorShape::matrix(p + "mlp_in", d.model_dim, d.hidden_dim, true));
        set.push_back(TensorShape::matrix(p + "mlp_out", d.hidden_dim, d.model_dim, true));
        set.push_back(TensorShape::vector(p + "norm1", d.model_dim));
        set.push_back(TensorShape::vector(p + "norm2", d.model_dim));
    }
    set.push_back(TensorShape::vector("final_norm", d.model_dim));
    return set;
}

// With a parameter-count override the layer shapes are unknown; stand in a
// single square-ish hidden matrix with (at least) that many elements.
inline ShapeSet override_shapes(std::int64_t param_count) {
    if (param_count < 1) throw std::invalid_argument("param count override must be >= 1");
    std::int64_t d1 = static_cast<std::int64_t>(std::sqrt(static_cast<double>(param_count)));
    if (d1 < 1) d1 = 1;
    const std::int64_t d2 = (param_count + d1 - 1) / d1;
    return {TensorShape::matrix("weights", d1, d2, true)};
}

struct MemoryEstimate {
    std::uint64_t params_bytes = 0;
    std::uint64_t optimizer_state_bytes = 0;
    std::uint64_t activation_bytes = 0;
    std::uint64_t grad_buffer_bytes = 0;
    std::uint64_t total_bytes = 0;
};

inline MemoryEstimate estimate_memory(const ModelDims& dims, const OptimizerConfig& optimizer,
                                      std::int64_t batch_tokens, int bytes_per_value,
                                      bool use_accumulation) {
    dims.validate();
    optimizer.validate();
    if (bytes_per_value != 2 && bytes_per_value != 4 && bytes_per_value != 8) {
        throw std::invalid_argument("bytes_per_value must be 2, 4, or 8");
    }
    if (batch_tokens < 1) throw std::invalid_argument("batch_tokens must be >= 1");

    const bool overridden = dims.param_count_override > 0;
    const std::int64_t param_count =
        overridden ? dims.param_count_override : count_params(dims).total_trainable;
    const ShapeSet shapes =
        overridden ? override_shapes(dims.param_count_override) : transformer_shapes(dims);
    const std::int64_t state_elements = state_element_count(shapes, optimizer).total;

    const auto b = static_cast<std::uint64_t>(bytes_per_value);
    MemoryEstimate est;
    est.params_bytes = static_cast<std::uint64_t>(param_count) * b;
    est.optimizer_state_bytes = static_cast<std::uint64_t>(state_elements) * b;
    est.activation_bytes = static_cast<std::uint64_t>(batch_tokens) *
                           static_cast<std::uint64_t>(dims.n_layers) *
                           static_cast<std::uint64_t>(dims.model_dim) * b;
    est.grad_buffer_bytes = use_accumulation ? est.params_bytes : 0;
    est.total_bytes =
        est.params_bytes + est.optimizer_state_bytes + est.activation_bytes + est.grad_buffer_bytes;
    return est;
}

// Inclusive: a model that exactly fills the device fits.
inline bool fits(const MemoryEstimate& estimate, std::uint64_t device_bytes) {
    return estimate.total_bytes <= device_bytes;
}

// 1 GB = 1e9 bytes, the device marketing convention.
inline double to_gb(std::uint64_t bytes) { return static_cast<double>(bytes) * 1e-9; }

// Known configurations, keyed by informal model size names.
inline ModelDims preset_dims(const std::string& name) {
    ModelDims d;
    d.head_dim = 128;
    if (name == "30m") {
        d.vocab_size = 50257; d.model_dim = 384; d.hidden_dim = 1536; d.n_layers = 6; d.seq_len = 512;
    } else if (name == "19m") {
        d.vocab_size = 32101; d.model_dim = 512; d.hidden_dim = 2048; d.n_layers = 6; d.seq_len = 512;
    } else if (name == "gpt2-124m") {
        d.vocab_size = 50257; d.model_dim = 768; d.hidden_dim = 3072; d.n_layers = 12; d.seq_len = 1024;
    } else if (name == "gpt3-1.3b") {
        d.vocab_size = 50257; d.model_dim = 2048; d.hidden_dim = 8192; d.n_layers = 24; d.seq_len = 2048;
    } else {
        throw std::invalid_argument("unknown model preset: " + name +
                                    " (expected 30m, 19m, gpt2-124m, or gpt3-1.3b)");
    }
    return d;
}

}  // namespace smallbatch
