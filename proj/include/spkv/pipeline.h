// include/spkv/pipeline.h

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

#ifndef SPKV_PIPELINE_H_
#define SPKV_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace spkv {

// Key=value configuration.  Every key has a default; unknown keys are
// rejected with UsageError.
class PipelineConfig {
 public:
  PipelineConfig();

  // Lines of "key=value"; '#' starts a comment, blank lines are skipped.
  void ParseText(std::string_view text, std::string_view source);
  // One "key=value" override.
  void Set(std::string_view assignment);
  void Set(const std::string &key, const std::string &value);

  const std::string &Get(const std::string &key) const;
  double GetDouble(const std::string &key) const;
  int GetInt(const std::string &key) const;
  uint64_t GetSeed(const std::string &key) const;
  std::vector<std::string> GetList(const std::string &key) const;
  std::filesystem::path GetPath(const std::string &key) const;  // non-empty

  const std::map<std::string, std::string> &values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Deterministic per-stage seed derived from the global seed and a tag.
uint64_t DeriveSeed(uint64_t seed, std::string_view tag);

// Runs fn(i) for i in [0, n) on up to `workers` threads.  Callers write
// results by index so the outcome does not depend on the worker count.
void ParallelFor(size_t n, int workers, const std::function<void(size_t)> &fn);

// Hex SHA-256 of a byte string.
std::string Sha256Hex(std::string_view data);

void CmdGen(const PipelineConfig &config);
void CmdTrain(const PipelineConfig &config);
void CmdExtract(const PipelineConfig &config);
void CmdScore(const PipelineConfig &config);
void CmdNorm(const PipelineConfig &config);
void CmdFilter(const PipelineConfig &config);
void CmdFuse(const PipelineConfig &config);
// Returns the report text; also written to io.output when set.
std::string CmdEval(const PipelineConfig &config);
// Returns the manifest text, also written to <out_dir>/manifest.txt.
std::string CmdE2e(const PipelineConfig &config);

}  // namespace spkv

#endif  // SPKV_PIPELINE_H_
