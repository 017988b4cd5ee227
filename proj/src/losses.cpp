#include "ecgda/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgda::losses {

using ad::Tape;
using ad::Var;

Var weighted_ce(Tape& tape, Var logits, const std::vector<int>& labels,
                const std::array<float, kNumClasses>& class_weights) {
  std::vector<float> w(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= kNumClasses)
      throw std::invalid_argument("weighted_ce: label " + std::to_string(labels[i]) +
                                  " out of range");
    w[i] = class_weights[static_cast<size_t>(labels[i])];
  }
  return tape.pick_nll(tape.log_softmax(logits), labels, w);
}

namespace {

// slot list + per-group mean over a [B] loss vector, as a [P] tape tensor
Var group_means(Tape& tape, Var per_sample, const std::vector<int>& groups,
                std::vector<int>* present) {
  const int B = per_sample.shape()[0];
  Var col = tape.reshape(per_sample, {B, 1});
  Var means = tape.group_mean_rows(col, groups, kNumClasses, present);
  return tape.reshape(means, {means.shape()[0]});
}

}  // namespace

Var group_dro_max(Tape& tape, Var per_sample, const std::vector<int>& groups) {
  if (groups.empty()) throw std::invalid_argument("group_dro: empty batch");
  return tape.reduce_max(group_means(tape, per_sample, groups, nullptr));
}

Var group_dro_ema(Tape& tape, Var per_sample, const std::vector<int>& groups, DroState& state) {
  if (groups.empty()) throw std::invalid_argument("group_dro: empty batch");
  std::vector<int> present;
  Var means = group_means(tape, per_sample, groups, &present);
  // exponentiated-gradient update on detached means, then renormalize
  const auto& mv = means.val();
  for (size_t p = 0; p < present.size(); ++p)
    state.q[static_cast<size_t>(present[p])] *= std::exp(state.eta * static_cast<double>(mv[p]));
  double total = 0.0;
  for (double q : state.q) total += q;
  for (double& q : state.q) q /= total;
  std::vector<float> qv(present.size());
  for (size_t p = 0; p < present.size(); ++p)
    qv[p] = static_cast<float>(state.q[static_cast<size_t>(present[p])]);
  Var qconst = tape.constant(std::move(qv), {static_cast<int>(present.size())});
  return tape.sum_all(tape.mul(means, qconst));
}

Var group_dro(Tape& tape, Var per_sample, const std::vector<int>& groups, DroMode mode,
              DroState* state) {
  if (mode == DroMode::Max) return group_dro_max(tape, per_sample, groups);
  if (!state) throw std::invalid_argument("group_dro: ema mode needs a DroState");
  return group_dro_ema(tape, per_sample, groups, *state);
}

Var discrepancy(Tape& tape, Var probs1, Var probs2) {
  return tape.mean_all(tape.row_euclidean(probs1, probs2));
}

Var compacting(Tape& tape, Var features, const std::vector<int>& labels, Var centroids) {
  const int B = features.shape()[0];
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("compacting: labels size mismatch");
  const int K = centroids.shape()[0];
  for (int y : labels)
    if (y < 0 || y >= K)
      throw std::invalid_argument("compacting: missing centroid for class " + std::to_string(y));
  Var anchors = tape.gather_rows(centroids, labels);
  Var dists = tape.row_euclidean(features, anchors);
  return tape.affine(tape.sum_all(dists), 1.0f / static_cast<float>(B), 0.0f);
}

Var separating(Tape& tape, Var centroids, float t_m, bool* warned) {
  if (t_m <= 0.0f) throw std::invalid_argument("separating: T_m must be positive");
  const int K = centroids.shape()[0];
  if (warned) *warned = K < 2;
  if (K < 2) return tape.constant_scalar(0.0f);
  std::vector<int> ks, ls;
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      if (k != l) {
        ks.push_back(k);
        ls.push_back(l);
      }
  Var a = tape.gather_rows(centroids, ks);
  Var b = tape.gather_rows(centroids, ls);
  Var hinge = tape.relu(tape.affine(tape.row_euclidean(a, b), -1.0f, t_m));
  return tape.sum_all(hinge);
}

Var interdomain_cd(Tape& tape, Var cc_s, Var cc_t) {
  if (cc_s.shape() != cc_t.shape())
    throw std::invalid_argument("interdomain_cd: centroid sets differ in shape " +
                                shape_str(cc_s.shape()) + " vs " + shape_str(cc_t.shape()));
  return tape.sum_all(tape.row_euclidean(cc_s, cc_t));
}

Var running_combined(Tape& tape, Var batch_centroids, Var cc_m_rows) {
  if (batch_centroids.shape() != cc_m_rows.shape())
    throw std::invalid_argument("running_combined: row sets differ in shape");
  return tape.sum_all(tape.row_euclidean(batch_centroids, cc_m_rows));
}

Var pretrain_total(Tape& tape, Var l_cls, Var l_dis, float alpha) {
  if (alpha == 0.0f) return l_cls;
  return tape.add(l_cls, tape.affine(l_dis, alpha, 0.0f));
}

Var cluster_total(Tape& tape, Var l_cls, Var l_comp, Var l_sep, float gamma1, float gamma2) {
  Var total = l_cls;
  if (gamma1 != 0.0f) total = tape.add(total, tape.affine(l_comp, gamma1, 0.0f));
  if (gamma2 != 0.0f) total = tape.add(total, tape.affine(l_sep, gamma2, 0.0f));
  return total;
}

Var adapt_total(Tape& tape, Var l_cls, Var l_comp_s, Var l_comp_t, Var l_sep_s, Var l_sep_t,
                Var l_cd, Var l_cmb, const LossWeights& w) {
  Var total = l_cls;
  if (w.beta1 != 0.0f) total = tape.add(total, tape.affine(tape.add(l_comp_s, l_comp_t), w.beta1, 0.0f));
  if (w.beta2 != 0.0f) total = tape.add(total, tape.affine(tape.add(l_sep_s, l_sep_t), w.beta2, 0.0f));
  if (w.beta3 != 0.0f) total = tape.add(total, tape.affine(l_cd, w.beta3, 0.0f));
  if (w.beta4 != 0.0f) total = tape.add(total, tape.affine(l_cmb, w.beta4, 0.0f));
  return total;
}

}  // namespace ecgda::losses
