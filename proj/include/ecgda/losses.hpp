#pragma once

#include <array>
#include <vector>

#include "ecgda/beat_types.hpp"
#include "ecgda/tape.hpp"

namespace ecgda::losses {

struct LossWeights {
  float alpha = 0.5f;
  float gamma1 = 0.1f;
  float gamma2 = 0.1f;
  float beta1 = 0.1f;
  float beta2 = 0.1f;
  float beta3 = 0.5f;
  float beta4 = 0.1f;
  float t_m = 10.0f;
};

enum class DroMode { Max, Ema };

// Exponentiated-gradient group weights for the smoothed DRO mode. Updated from
// detached group means each batch; only the weighted sum enters the graph.
struct DroState {
  std::array<double, kNumClasses> q{0.25, 0.25, 0.25, 0.25};
  double eta = 0.01;
};

// Per-sample weighted cross-entropy: -w_{y_i} * log softmax(logits_i)[y_i].
ad::Var weighted_ce(ad::Tape& tape, ad::Var logits, const std::vector<int>& labels,
                    const std::array<float, kNumClasses>& class_weights);

// Worst-group mean of the per-sample losses (groups = class labels).
ad::Var group_dro_max(ad::Tape& tape, ad::Var per_sample, const std::vector<int>& groups);

// Smoothed DRO: q_g <- q_g * exp(eta * mean_g), renormalized; returns sum of
// q_g * mean_g over groups present in the batch.
ad::Var group_dro_ema(ad::Tape& tape, ad::Var per_sample, const std::vector<int>& groups,
                      DroState& state);

ad::Var group_dro(ad::Tape& tape, ad::Var per_sample, const std::vector<int>& groups,
                  DroMode mode, DroState* state);

// Mean Euclidean distance between the two classifiers' probability rows.
ad::Var discrepancy(ad::Tape& tape, ad::Var probs1, ad::Var probs2);

// Sum of distances from each sample's feature row to its class centroid,
// divided by batch size. `centroids` is [K,D]; every present label needs one.
ad::Var compacting(ad::Tape& tape, ad::Var features, const std::vector<int>& labels,
                   ad::Var centroids);

// Hinge separation over ordered centroid pairs: sum_{k != l} max(T_m - d_kl, 0).
// Fewer than two rows yields constant zero (with a warning flag if provided).
ad::Var separating(ad::Tape& tape, ad::Var centroids, float t_m, bool* warned = nullptr);

// Sum over classes of the distance between paired source/target centroids.
ad::Var interdomain_cd(ad::Tape& tape, ad::Var cc_s, ad::Var cc_t);

// Sum over rows of distance between batch centroids and the matching global
// average centroids; both inputs are [P,D] aligned on the same class order.
ad::Var running_combined(ad::Tape& tape, ad::Var batch_centroids, ad::Var cc_m_rows);

// Stage objectives. Zero-weighted terms are skipped entirely so they cannot
// perturb gradients.
ad::Var pretrain_total(ad::Tape& tape, ad::Var l_cls, ad::Var l_dis, float alpha);
ad::Var cluster_total(ad::Tape& tape, ad::Var l_cls, ad::Var l_comp, ad::Var l_sep, float gamma1,
                      float gamma2);
ad::Var adapt_total(ad::Tape& tape, ad::Var l_cls, ad::Var l_comp_s, ad::Var l_comp_t,
                    ad::Var l_sep_s, ad::Var l_sep_t, ad::Var l_cd, ad::Var l_cmb,
                    const LossWeights& w);

}  // namespace ecgda::losses
