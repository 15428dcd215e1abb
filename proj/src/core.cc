// src/core.cc

// Copyright 2026  spkv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "spkv/core.h"

#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "spkv/error.h"

namespace spkv {

std::string_view LanguageName(Language lang) {
  return lang == Language::kL1 ? "L1" : "L2";
}

Language ParseLanguage(std::string_view name) {
  if (name == "L1") return Language::kL1;
  if (name == "L2") return Language::kL2;
  throw DataError("unknown language '" + std::string(name) + "'");
}

std::string_view LabelName(TrialLabel label) {
  switch (label) {
    case TrialLabel::kTC: return "TC";
    case TrialLabel::kTW: return "TW";
    case TrialLabel::kIC: return "IC";
    case TrialLabel::kIW: return "IW";
    case TrialLabel::kTarget: return "TGT";
    case TrialLabel::kNontarget: return "NTG";
  }
  return "?";
}

TrialLabel ParseLabel(std::string_view name) {
  if (name == "TC") return TrialLabel::kTC;
  if (name == "TW") return TrialLabel::kTW;
  if (name == "IC") return TrialLabel::kIC;
  if (name == "IW") return TrialLabel::kIW;
  if (name == "TGT") return TrialLabel::kTarget;
  if (name == "NTG") return TrialLabel::kNontarget;
  throw DataError("unknown trial label '" + std::string(name) + "'");
}

PhraseInventory::PhraseInventory(std::vector<PhraseEntry> entries)
    : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto &e : entries_) {
    if (e.phrase_id.empty())
      throw DataError("phrase inventory: empty phrase id");
    if (e.text.empty())
      throw DataError("phrase inventory: empty reference text for " +
                      e.phrase_id);
    if (!seen.insert(e.phrase_id).second)
      throw DataError("phrase inventory: duplicate phrase id " + e.phrase_id);
  }
}

std::optional<size_t> PhraseInventory::IndexOf(
    std::string_view phrase_id) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].phrase_id == phrase_id) return i;
  return std::nullopt;
}

EnrollModel BuildEnrollModel(const std::string &model_id,
                             std::span<const Embedding> embeddings) {
  if (embeddings.empty())
    throw UsageError("enroll model " + model_id + ": no embeddings");
  const Eigen::Index dim = embeddings.front().vec.size();
  Vector sum = Vector::Zero(dim);
  EnrollModel model;
  model.model_id = model_id;
  for (const auto &e : embeddings) {
    if (e.vec.size() != dim)
      throw DataError("enroll model " + model_id + ": dimension mismatch for " +
                      e.utt_id);
    sum += e.vec;
    model.utt_ids.push_back(e.utt_id);
  }
  const Vector mean = sum / static_cast<double>(embeddings.size());
  const double norm = mean.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NumericError("enroll model " + model_id + ": zero-norm centroid");
  model.centroid = mean / norm;
  return model;
}

std::string_view ViolationName(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDuplicateTrialId: return "duplicate id";
    case ViolationKind::kDuplicateKey: return "duplicate key";
    case ViolationKind::kMissingKey: return "missing key";
    case ViolationKind::kKeyWithoutTrial: return "key without trial";
    case ViolationKind::kDanglingModel: return "dangling model";
    case ViolationKind::kDanglingTestUtterance: return "dangling test utterance";
    case ViolationKind::kDanglingEnrollUtterance:
      return "dangling enroll utterance";
  }
  return "?";
}

std::vector<ProtocolViolation> ValidateProtocol(
    std::span<const Trial> trials, std::span<const TrialKey> keys,
    std::span<const UttMeta> metas, const EnrollMap &enroll_map) {
  std::vector<ProtocolViolation> out;
  std::unordered_set<std::string> utts;
  for (const auto &m : metas) utts.insert(m.utt_id);

  for (const auto &[model_id, utt_ids] : enroll_map)
    for (const auto &u : utt_ids)
      if (!utts.count(u))
        out.push_back({ViolationKind::kDanglingEnrollUtterance,
                       model_id + " -> " + u});

  std::unordered_set<std::string> trial_ids;
  for (const auto &t : trials) {
    if (!trial_ids.insert(t.trial_id).second)
      out.push_back({ViolationKind::kDuplicateTrialId, t.trial_id});
    if (!enroll_map.count(t.model_id))
      out.push_back({ViolationKind::kDanglingModel,
                     t.trial_id + " -> " + t.model_id});
    if (!utts.count(t.test_utt_id))
      out.push_back({ViolationKind::kDanglingTestUtterance,
                     t.trial_id + " -> " + t.test_utt_id});
  }

  std::unordered_map<std::string, int> key_count;
  for (const auto &k : keys) {
    if (++key_count[k.trial_id] == 2)
      out.push_back({ViolationKind::kDuplicateKey, k.trial_id});
    if (!trial_ids.count(k.trial_id))
      out.push_back({ViolationKind::kKeyWithoutTrial, k.trial_id});
  }
  std::unordered_set<std::string> reported;
  for (const auto &t : trials)
    if (!key_count.count(t.trial_id) && reported.insert(t.trial_id).second)
      out.push_back({ViolationKind::kMissingKey, t.trial_id});
  return out;
}

}  // namespace spkv
