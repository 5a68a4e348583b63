#pragma once
// Conversions between EMA decay rates and token-denominated half-lives,
// plus the batch-size scaling rule for the second-moment decay rate.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace smallbatch {

// A decay rate beta strictly inside (0, 1).
struct DecayRate {
    double value;

    explicit DecayRate(double v) : value(v) {
        if (!(v > 0.0 && v < 1.0)) {
            throw std::invalid_argument("decay rate must lie strictly in (0, 1), got " +
                                        std::to_string(v));
        }
    }
};

// Number of training tokens after which a gradient's EMA contribution halves.
struct TokenHalfLife {
    double tokens;

    explicit TokenHalfLife(double t) : tokens(t) {
        if (!(t > 0.0) || !std::isfinite(t)) {
            throw std::invalid_argument("half-life must be a positive finite token count, got " +
                                        std::to_string(t));
        }
    }
};

// One optimizer step observes batch_size * seq_len tokens.
struct TokensPerStep {
    std::uint64_t batch_size;
    std::uint64_t seq_len;

    TokensPerStep(std::uint64_t b, std::uint64_t t) : batch_size(b), seq_len(t) {
        if (b < 1 || t < 1) {
            throw std::invalid_argument("batch size and sequence length must be >= 1");
        }
    }

    double tokens() const { return static_cast<double>(batch_size) * static_cast<double>(seq_len); }
};

// Solves beta^(t / (B*T)) = 1/2 for t.
inline TokenHalfLife beta_to_halflife(DecayRate beta, TokensPerStep tps) {
    return TokenHalfLife(tps.tokens() * std::log(2.0) / -std::log(beta.value));
}

// Inverse of beta_to_halflife: beta = 2^(-(B*T) / t). Throws if the result
// rounds outside (0, 1) at 64-bit precision.
inline DecayRate halflife_to_beta(TokenHalfLife t, TokensPerStep tps) {
    return DecayRate(std::exp2(-tps.tokens() / t.tokens));
}

// beta2* = beta2^(B*T* / (B T)): preserves the token half-life across a
// change in tokens per step, exact by construction.
inline DecayRate scale_beta2(DecayRate beta, TokensPerStep old_tps, TokensPerStep new_tps) {
    return DecayRate(std::exp(std::log(beta.value) * new_tps.tokens() / old_tps.tokens()));
}

}  // namespace smallbatch
