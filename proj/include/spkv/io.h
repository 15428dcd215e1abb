// include/spkv/io.h

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

#ifndef SPKV_IO_H_
#define SPKV_IO_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spkv/backend.h"
#include "spkv/core.h"
#include "spkv/eval.h"
#include "spkv/extractor.h"
#include "spkv/norm.h"
#include "spkv/nplda.h"

// Line-oriented text formats: UTF-8, LF line endings, fields separated by a
// single space.  Reals are written as the shortest decimal that round-trips
// to the same 64-bit double.  Readers throw DataError naming
// "<source>:<line>:<column>" on malformed input.
namespace spkv {

std::string FormatDouble(double v);
// Parses a complete token as a finite double; nullopt otherwise.
std::optional<double> ParseDouble(std::string_view token);

// Embedding file: "EMB <dim>" then "<utt_id> <v1> ... <vD>".
void WriteEmbeddings(std::ostream &os, std::span<const Embedding> embeddings);
std::vector<Embedding> ReadEmbeddings(std::istream &is,
                                      std::string_view source);

// Metadata file: "META" then
// "<utt_id> <speaker_id> <phrase_id|-> <L1|L2> <transcript...|->".
void WriteMetas(std::ostream &os, std::span<const UttMeta> metas);
std::vector<UttMeta> ReadMetas(std::istream &is, std::string_view source);

// Phrase inventory: "PHRASES" then "<phrase_id> <L1|L2> <reference text...>".
void WritePhrases(std::ostream &os, const PhraseInventory &inventory);
PhraseInventory ReadPhrases(std::istream &is, std::string_view source);

// "<model_id> <utt_id1> <utt_id2> ..."
void WriteEnrollMap(std::ostream &os, const EnrollMap &enroll);
EnrollMap ReadEnrollMap(std::istream &is, std::string_view source);

// "<trial_id> <model_id> <test_utt_id> <claimed_phrase_id|->"
void WriteTrials(std::ostream &os, std::span<const Trial> trials);
std::vector<Trial> ReadTrials(std::istream &is, std::string_view source);

// "<trial_id> <TC|TW|IC|IW|TGT|NTG>"
void WriteKeys(std::ostream &os, std::span<const TrialKey> keys);
std::vector<TrialKey> ReadKeys(std::istream &is, std::string_view source);

// "<trial_id> <score>"
void WriteScores(std::ostream &os, const ScoreSet &scores);
ScoreSet ReadScores(std::istream &is, std::string_view source);

// Model container: a "SCALARS" block of "<name> <value>" lines and any number
// of "MAT <name> <rows> <cols>" blocks followed by their row lines.
struct ModelFile {
  std::vector<std::pair<std::string, std::string>> scalars;
  std::vector<std::pair<std::string, Matrix>> matrices;

  void SetScalar(const std::string &name, const std::string &value);
  void SetScalar(const std::string &name, double value);
  void AddMatrix(const std::string &name, Matrix m);
  void AddVector(const std::string &name, const Vector &v);  // 1 x D

  // Lookups throw DataError naming the missing entry.
  const std::string &Scalar(const std::string &name) const;
  double ScalarDouble(const std::string &name) const;
  bool HasMatrix(const std::string &name) const;
  const Matrix &GetMatrix(const std::string &name) const;
  Vector GetVector(const std::string &name) const;

  bool operator==(const ModelFile &other) const = default;
};

void WriteModelFile(std::ostream &os, const ModelFile &file);
ModelFile ReadModelFile(std::istream &is, std::string_view source);

// Typed containers; "type" scalar identifies the payload.
ModelFile PldaToFile(const PldaModel &model);
PldaModel PldaFromFile(const ModelFile &file);
ModelFile PldaBankToFile(const PhrasePldaBank &bank);
PhrasePldaBank PldaBankFromFile(const ModelFile &file);
ModelFile NpldaBankToFile(const std::map<std::string, NpldaParams> &bank);
std::map<std::string, NpldaParams> NpldaBankFromFile(const ModelFile &file);
ModelFile LangIdToFile(const LangClassifier &classifier);
LangClassifier LangIdFromFile(const ModelFile &file);

struct ExtractorCheckpoint {
  Extractor net;
  TrainedHeads heads;
  std::string strategy;
  uint64_t seed = 0;
};
ModelFile CheckpointToFile(const ExtractorCheckpoint &ckpt);
ExtractorCheckpoint CheckpointFromFile(const ModelFile &file);

// File helpers; failures to open raise DataError.
std::string ReadTextFile(const std::filesystem::path &path);
void WriteTextFile(const std::filesystem::path &path, std::string_view text);

template <typename Fn>
auto ReadFromFile(const std::filesystem::path &path, Fn reader);

}  // namespace spkv

#include <sstream>

namespace spkv {

template <typename Fn>
auto ReadFromFile(const std::filesystem::path &path, Fn reader) {
  std::istringstream is(ReadTextFile(path));
  return reader(is, path.string());
}

}  // namespace spkv

#endif  // SPKV_IO_H_
