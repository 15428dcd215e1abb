// include/spkv/core.h

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

#ifndef SPKV_CORE_H_
#define SPKV_CORE_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace spkv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Language { kL1 = 0, kL2 = 1 };
inline constexpr int kNumLanguages = 2;

std::string_view LanguageName(Language lang);
// Accepts "L1"/"L2"; throws DataError otherwise.
Language ParseLanguage(std::string_view name);

struct Embedding {
  std::string utt_id;
  Vector vec;
};

struct UttMeta {
  std::string utt_id;
  std::string speaker_id;
  std::optional<std::string> phrase_id;  // absent for text-independent data
  Language language = Language::kL1;
  std::optional<std::string> transcript;
};

struct EnrollModel {
  std::string model_id;
  std::vector<std::string> utt_ids;
  Vector centroid;  // unit norm
};

struct Trial {
  std::string trial_id;
  std::string model_id;
  std::string test_utt_id;
  std::optional<std::string> claimed_phrase_id;
};

// TC/TW/IC/IW are the text-dependent trial types (target/impostor speaker,
// correct/wrong phrase); kTarget/kNontarget are used for text-independent
// lists.  Only TC and kTarget are to be accepted.
enum class TrialLabel { kTC, kTW, kIC, kIW, kTarget, kNontarget };

std::string_view LabelName(TrialLabel label);  // "TC" ... "TGT", "NTG"
TrialLabel ParseLabel(std::string_view name);
inline bool IsTarget(TrialLabel label) {
  return label == TrialLabel::kTC || label == TrialLabel::kTarget;
}

struct TrialKey {
  std::string trial_id;
  TrialLabel label;
};

struct PhraseEntry {
  std::string phrase_id;
  std::string text;
  Language language = Language::kL1;
};

class PhraseInventory {
 public:
  PhraseInventory() = default;
  // Throws DataError on duplicate ids or empty reference texts.
  explicit PhraseInventory(std::vector<PhraseEntry> entries);

  const std::vector<PhraseEntry> &entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // Position of a phrase in the inventory, or nullopt.
  std::optional<size_t> IndexOf(std::string_view phrase_id) const;
  const PhraseEntry &at(size_t i) const { return entries_.at(i); }

 private:
  std::vector<PhraseEntry> entries_;
};

// Mean of the enrollment vectors, scaled to unit Euclidean norm.
// Throws UsageError for an empty list, DataError on dimension mismatch and
// NumericError when the mean has zero norm.
EnrollModel BuildEnrollModel(const std::string &model_id,
                             std::span<const Embedding> embeddings);

enum class ViolationKind {
  kDuplicateTrialId,
  kDuplicateKey,
  kMissingKey,
  kKeyWithoutTrial,
  kDanglingModel,
  kDanglingTestUtterance,
  kDanglingEnrollUtterance,
};

struct ProtocolViolation {
  ViolationKind kind;
  std::string detail;
};

std::string_view ViolationName(ViolationKind kind);

// model_id -> enrollment utterance ids.
using EnrollMap = std::map<std::string, std::vector<std::string>>;

// Reports every inconsistency between trials, keys, utterance metadata and
// the enrollment map; never throws.  Empty result iff the protocol is sound.
std::vector<ProtocolViolation> ValidateProtocol(
    std::span<const Trial> trials, std::span<const TrialKey> keys,
    std::span<const UttMeta> metas, const EnrollMap &enroll_map);

}  // namespace spkv

#endif  // SPKV_CORE_H_
