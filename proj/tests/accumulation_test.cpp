#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "smallbatch/accumulation.hpp"
#include "smallbatch/optimizers.hpp"
#include "smallbatch/prng.hpp"

using namespace smallbatch;

namespace {

TensorSet structure() {
    TensorSet s;
    s.add(Tensor::matrix("w", 2, 3));
    s.add(Tensor::vector("b", 4));
    return s;
}

GradSet random_grads(const TensorSet& structure, Prng& rng) {
    GradSet g = structure.zeros_like();
    for (auto& t : g.tensors) {
        for (auto& v : t.data) v = rng.normal();
    }
    return g;
}

double max_rel_diff(const TensorSet& a, const TensorSet& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i].data.size(); ++k) {
            const double x = a[i].data[k], y = b[i].data[k];
            const double denom = std::max({std::abs(x), std::abs(y), 1e-300});
            worst = std::max(worst, std::abs(x - y) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST(MicroBatchPlan, EffectiveBatch) {
    EXPECT_EQ(MicroBatchPlan(4, 8).effective_batch(), 32);
    EXPECT_THROW(MicroBatchPlan(0, 1), std::invalid_argument);
    EXPECT_THROW(MicroBatchPlan(1, 0), std::invalid_argument);
}

TEST(Accumulator, SingleMicroBatchIsIdentity) {
    TensorSet s = structure();
    Prng rng(1, streams::noise);
    GradSet g = random_grads(s, rng);
    GradAccumulator acc(s);
    acc.add_microbatch(g, 7);
    GradSet out = acc.finalize();
    // scale-then-unscale by the sample weight costs at most an ulp
    EXPECT_LE(max_rel_diff(out, g), 1e-15);
}

TEST(Accumulator, OppositeGradientsCancel) {
    TensorSet s = structure();
    Prng rng(2, streams::noise);
    GradSet g = random_grads(s, rng);
    GradSet neg = g;
    for (auto& t : neg.tensors) {
        for (auto& v : t.data) v = -v;
    }
    GradAccumulator acc(s);
    acc.add_microbatch(g, 5);
    acc.add_microbatch(neg, 5);
    GradSet out = acc.finalize();
    for (const auto& t : out.tensors) {
        for (double v : t.data) EXPECT_NEAR(v, 0.0, 1e-15);
    }
}

TEST(Accumulator, WeightedMeanForUnequalMicroBatches) {
    // micro sizes (2, 6) with mean grads a, b -> (2a + 6b) / 8
    TensorSet s = structure();
    Prng rng(3, streams::noise);
    GradSet a = random_grads(s, rng);
    GradSet b = random_grads(s, rng);
    GradAccumulator acc(s);
    acc.add_microbatch(a, 2);
    acc.add_microbatch(b, 6);
    GradSet out = acc.finalize();
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < out[i].data.size(); ++k) {
            const double expected = (2.0 * a[i].data[k] + 6.0 * b[i].data[k]) / 8.0;
            EXPECT_NEAR(out[i].data[k], expected, 1e-15);
        }
    }
}

TEST(Accumulator, PartitionEquivalence) {
    // accumulating micro-batches that partition B samples reproduces the
    // full-batch mean gradient
    TensorSet s = structure();
    Prng rng(4, streams::noise);
    const int total = 12;
    std::vector<GradSet> per_sample;
    for (int i = 0; i < total; ++i) per_sample.push_back(random_grads(s, rng));

    GradSet full_mean = s.zeros_like();
    for (const auto& g : per_sample) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            for (std::size_t k = 0; k < full_mean[i].data.size(); ++k) {
                full_mean[i].data[k] += g[i].data[k] / total;
            }
        }
    }

    for (const std::vector<int>& split : {std::vector<int>{4, 4, 4},
                                          std::vector<int>{1, 11},
                                          std::vector<int>{3, 2, 6, 1}}) {
        GradAccumulator acc(s);
        int pos = 0;
        for (int size : split) {
            GradSet micro_mean = s.zeros_like();
            for (int j = 0; j < size; ++j, ++pos) {
                for (std::size_t i = 0; i < s.size(); ++i) {
                    for (std::size_t k = 0; k < micro_mean[i].data.size(); ++k) {
                        micro_mean[i].data[k] += per_sample[pos][i].data[k] / size;
                    }
                }
            }
            acc.add_microbatch(micro_mean, size);
        }
        GradSet out = acc.finalize();
        EXPECT_LE(max_rel_diff(out, full_mean), 1e-12);
    }
}

TEST(Accumulator, AdamStepEquivalence) {
    // one Adam step on the finalized gradient matches one step on the
    // directly computed batch mean
    TensorSet s = structure();
    Prng init(5, streams::init);
    ParamSet p1 = s;
    for (auto& t : p1.tensors) {
        for (auto& v : t.data) v = init.normal();
    }
    ParamSet p2 = p1;

    Prng rng(6, streams::noise);
    GradSet a = random_grads(s, rng);
    GradSet b = random_grads(s, rng);
    GradAccumulator acc(s);
    acc.add_microbatch(a, 3);
    acc.add_microbatch(b, 5);
    GradSet accumulated = acc.finalize();

    GradSet direct = s.zeros_like();
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < direct[i].data.size(); ++k) {
            direct[i].data[k] = (3.0 * a[i].data[k] + 5.0 * b[i].data[k]) / 8.0;
        }
    }

    OptimizerConfig cfg;
    cfg.variant = OptVariant::adam;
    cfg.lr = 0.1;
    OptimizerState st1 = make_state(p1, cfg), st2 = make_state(p2, cfg);
    step(p1, accumulated, cfg, st1);
    step(p2, direct, cfg, st2);
    EXPECT_LE(max_rel_diff(p1, p2), 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < st1.slots[i].m.size(); ++k) {
            EXPECT_NEAR(st1.slots[i].m[k], st2.slots[i].m[k], 1e-12);
            EXPECT_NEAR(st1.slots[i].v[k], st2.slots[i].v[k], 1e-12);
        }
    }
}

TEST(Accumulator, OrderIndependenceUpToRounding) {
    TensorSet s = structure();
    Prng rng(7, streams::noise);
    std::vector<GradSet> micros;
    std::vector<int> sizes = {2, 3, 5, 1, 4};
    for (std::size_t i = 0; i < sizes.size(); ++i) micros.push_back(random_grads(s, rng));

    GradAccumulator fwd(s), rev(s);
    for (std::size_t i = 0; i < sizes.size(); ++i) fwd.add_microbatch(micros[i], sizes[i]);
    for (std::size_t i = sizes.size(); i-- > 0;) rev.add_microbatch(micros[i], sizes[i]);
    GradSet f = fwd.finalize();
    GradSet r = rev.finalize();
    EXPECT_LE(max_rel_diff(f, r), 1e-10);
}

TEST(Accumulator, Errors) {
    TensorSet s = structure();
    GradAccumulator acc(s);
    EXPECT_THROW(acc.finalize(), std::runtime_error);

    TensorSet other;
    other.add(Tensor::matrix("w", 3, 2));
    other.add(Tensor::vector("b", 4));
    EXPECT_THROW(acc.add_microbatch(other, 1), std::invalid_argument);
    EXPECT_THROW(acc.add_microbatch(s.zeros_like(), 0), std::invalid_argument);

    acc.add_microbatch(s.zeros_like(), 2);
    acc.finalize();
    // accumulator resets after finalize
    EXPECT_THROW(acc.finalize(), std::runtime_error);
}
