#pragma once
// Gradient accumulation over micro-batches. Micro-batch gradients are
// mean-reduced, so the accumulator keeps a sample-weighted running sum and
// finalize() returns the exact large-batch mean gradient.

#include <cstdint>
#include <stdexcept>

#include "smallbatch/tensor.hpp"

namespace smallbatch {

struct MicroBatchPlan {
    std::int64_t micro_batch_size;
    std::int64_t accum_steps;

    MicroBatchPlan(std::int64_t micro, std::int64_t steps)
        : micro_batch_size(micro), accum_steps(steps) {
        if (micro < 1 || steps < 1) {
            throw std::invalid_argument("micro batch size and accumulation steps must be >= 1");
        }
    }

    std::int64_t effective_batch() const { return micro_batch_size * accum_steps; }
};

class GradAccumulator {
  public:
    explicit GradAccumulator(const TensorSet& structure) : sums_(structure.zeros_like()) {}

    void add_microbatch(const GradSet& grads, std::int64_t n_samples) {
        if (n_samples < 1) throw std::invalid_argument("micro-batch must contain >= 1 samples");
        require_same_structure(sums_, grads, "gradient accumulation");
        const auto w = static_cast<double>(n_samples);
        for (std::size_t i = 0; i < sums_.size(); ++i) {
            const auto& src = grads[i].data;
            auto& dst = sums_[i].data;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
        }
        weight_ += w;
    }

    // Returns the mean-reduced gradient over every accumulated sample and
    // resets the accumulator.
    GradSet finalize() {
        if (!(weight_ > 0.0)) {
            throw std::runtime_error("finalize called on an empty gradient accumulator");
        }
        GradSet out = sums_;
        const double inv = 1.0 / weight_;
        for (auto& t : out.tensors) {
            for (auto& x : t.data) x *= inv;
        }
        for (auto& t : sums_.tensors) t.data.assign(t.data.size(), 0.0);
        weight_ = 0.0;
        return out;
    }

    double total_weight() const { return weight_; }

  private:
    TensorSet sums_;
    double weight_ = 0.0;
};

}  // namespace smallbatch
