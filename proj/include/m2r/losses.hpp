#pragma once
// Binary cross-entropy plus the four ratio terms of the joint hybrid loss.
//
// Inputs of rank 4 ([N,1,H,W]) are treated per batch item and averaged over
// the batch; any other rank is a single map.

#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

enum class BceReduction { mean, sum };

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double lambda4 = 1.0;
    double mu = 1.0;
    double eps = 1e-8;
    BceReduction bce_reduction = BceReduction::mean;
    /// Replace the negative-agreement term L4 by 1 - L4.
    bool l4_complement = false;

    void validate() const;
};

struct SaliencyPair {
    Tensor pred;
    Tensor gt;
};

struct JholTerms {
    Tensor l1, l2, l3, l4;
    /// Some denominator fell below eps and was clamped (e.g. empty gt for L2).
    bool degenerate = false;
};

Tensor bce_loss(const SaliencyPair& pair, BceReduction reduction = BceReduction::sum, double eps = 1e-8);

JholTerms jhol_terms(const SaliencyPair& pair, double eps = 1e-8);

/// lambda-weighted sum of the enabled terms; terms with zero weight are
/// never evaluated.
Tensor jhol_loss(const SaliencyPair& pair, const LossConfig& cfg);

/// BCE + mu * JHOL on the final prediction plus every side prediction.
/// With mu == 0 the result is exactly bce_loss(final).
Tensor total_loss(const SaliencyPair& final_pair, const std::vector<SaliencyPair>& side_pairs,
                  const LossConfig& cfg);

}  // namespace m2r
