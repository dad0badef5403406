#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "madeasd/classifier.hpp"
#include "madeasd/types.hpp"

namespace madeasd {

/// w_i = acc_i / sum(acc).
inline std::vector<double> compute_weights(std::span<const double> accuracies) {
  if (accuracies.empty()) throw ValidationError("compute_weights: no members");
  double sum = 0.0;
  for (double a : accuracies) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("compute_weights: accuracies must be finite and >= 0");
    sum += a;
  }
  if (!(sum > 0.0)) throw ValidationError("compute_weights: all member accuracies are zero");
  std::vector<double> w;
  w.reserve(accuracies.size());
  for (double a : accuracies) w.push_back(a / sum);
  return w;
}

struct EnsembleMember {
  MlpModel model;
  double accuracy = 0.0;
};

enum class VotingMode { Soft, Hard };

struct EnsembleModel {
  std::vector<EnsembleMember> members;
  std::vector<double> weights;
  VotingMode voting = VotingMode::Soft;

  static EnsembleModel from_members(std::vector<EnsembleMember> members, VotingMode voting = VotingMode::Soft) {
    EnsembleModel e;
    std::vector<double> acc;
    for (const auto& m : members) acc.push_back(m.accuracy);
    e.weights = compute_weights(acc);
    e.members = std::move(members);
    e.voting = voting;
    return e;
  }
};

/// Scores closer than this count as a tie (resolved to ASD); weighted sums of equal
/// rationals need not round to equal doubles.
inline constexpr double kVoteTieTolerance = 1e-12;

struct Vote {
  Label label = Label::ASD;
  std::array<double, kNumClasses> scores{};
};

/// Combines per-member class-probability rows [P(ASD), P(TC)].
inline Vote combine_votes(std::span<const double> weights, std::span<const Vector> member_probabilities,
                          VotingMode mode = VotingMode::Soft) {
  if (weights.size() != member_probabilities.size()) throw ValidationError("vote: weight/member count mismatch");
  Vote v;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& p = member_probabilities[i];
    if (p.size() != kNumClasses) throw ValidationError("vote: member " + std::to_string(i) + " emitted a bad vector");
    if (mode == VotingMode::Soft) {
      for (int c = 0; c < kNumClasses; ++c) v.scores[static_cast<std::size_t>(c)] += weights[i] * p(c);
    } else {
      v.scores[static_cast<std::size_t>(class_index(argmax_label(p(0), p(1))))] += weights[i];
    }
  }
  v.label = v.scores[0] >= v.scores[1] - kVoteTieTolerance ? Label::ASD : Label::TC;
  return v;
}

/// One subject: `masked_rows[i]` are the features already masked for member i.
inline Vote vote(const EnsembleModel& e, std::span<const Vector> masked_rows, const Demographics& d) {
  if (masked_rows.size() != e.members.size()) throw ValidationError("vote: expected one input per member");
  std::vector<Vector> probs;
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    try {
      probs.push_back(predict_proba(e.members[i].model, masked_rows[i], d));
    } catch (const std::exception& ex) {
      throw ValidationError("vote: member " + std::to_string(i) + " (" + e.members[i].model.atlas_id +
                            ") failed: " + ex.what());
    }
  }
  return combine_votes(e.weights, probs, e.voting);
}

/// Batch scoring. `full_features[i]` holds unmasked features for member i's atlas.
inline std::vector<Vote> vote_batch(const EnsembleModel& e, std::span<const Matrix> full_features,
                                    std::span<const Demographics> demographics) {
  if (full_features.size() != e.members.size()) throw ValidationError("vote: expected one matrix per member");
  std::vector<Matrix> probs;
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    const auto& m = e.members[i].model;
    try {
      probs.push_back(predict_proba(m, apply_mask(full_features[i], m.mask), demographics));
    } catch (const std::exception& ex) {
      throw ValidationError("vote: member " + std::to_string(i) + " (" + m.atlas_id + ") failed: " + ex.what());
    }
  }
  std::vector<Vote> out;
  std::vector<Vector> row(e.members.size());
  for (std::size_t r = 0; r < demographics.size(); ++r) {
    for (std::size_t i = 0; i < e.members.size(); ++i) row[i] = probs[i].row(static_cast<Index>(r)).transpose();
    out.push_back(combine_votes(e.weights, row, e.voting));
  }
  return out;
}

}  // namespace madeasd
