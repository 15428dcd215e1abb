// src/io.cc

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

#include "spkv/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "spkv/error.h"

namespace spkv {

std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> ParseDouble(std::string_view token) {
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

namespace {

struct Token {
  std::string_view text;
  size_t column;  // 1-based
};

// Iterates the lines of a stream, tracking positions for diagnostics.
class LineReader {
 public:
  LineReader(std::istream &is, std::string_view source)
      : is_(is), source_(source) {}

  bool Next() {
    if (!std::getline(is_, line_)) return false;
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r')
      Fail(line_.size(), "CR line ending (expected LF)");
    return true;
  }

  const std::string &line() const { return line_; }
  size_t line_no() const { return line_no_; }

  // Splits on single spaces; empty fields are errors.
  std::vector<Token> Tokens() const {
    std::vector<Token> out;
    if (line_.empty()) Fail(1, "empty line");
    size_t start = 0;
    while (true) {
      const size_t end = line_.find(' ', start);
      const size_t stop = end == std::string::npos ? line_.size() : end;
      if (stop == start) Fail(start + 1, "empty field (double or edge space)");
      out.push_back({std::string_view(line_).substr(start, stop - start),
                     start + 1});
      if (end == std::string::npos) break;
      start = end + 1;
    }
    return out;
  }

  double Number(const Token &t) const {
    auto v = ParseDouble(t.text);
    if (!v || !std::isfinite(*v))
      Fail(t.column, "expected a finite number, got '" + std::string(t.text) +
                         "'");
    return *v;
  }

  long Integer(const Token &t) const {
    long v = 0;
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size())
      Fail(t.column, "expected an integer, got '" + std::string(t.text) + "'");
    return v;
  }

  [[noreturn]] void Fail(size_t column, const std::string &msg) const {
    throw DataError(std::string(source_) + ":" + std::to_string(line_no_) +
                    ":" + std::to_string(column) + ": " + msg);
  }

  [[noreturn]] void FailEof(const std::string &msg) const {
    throw DataError(std::string(source_) + ":" + std::to_string(line_no_ + 1) +
                    ":1: " + msg);
  }

 private:
  std::istream &is_;
  std::string_view source_;
  std::string line_;
  size_t line_no_ = 0;
};

void ExpectFields(const LineReader &r, const std::vector<Token> &t,
                  size_t n) {
  if (t.size() != n)
    r.Fail(t.size() > n ? t[n].column : r.line().size() + 1,
           "expected " + std::to_string(n) + " fields, found " +
               std::to_string(t.size()));
}

void WriteRow(std::ostream &os, const Eigen::Ref<const Vector> &v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    os << FormatDouble(v(i));
  }
}

std::string OptionalField(const std::optional<std::string> &v) {
  return v ? *v : "-";
}

std::optional<std::string> OptionalToken(std::string_view tok) {
  if (tok == "-") return std::nullopt;
  return std::string(tok);
}

}  // namespace

void WriteEmbeddings(std::ostream &os, std::span<const Embedding> embeddings) {
  const Eigen::Index dim = embeddings.empty() ? 0 : embeddings.front().vec.size();
  os << "EMB " << dim << '\n';
  for (const auto &e : embeddings) {
    if (e.vec.size() != dim)
      throw DataError("embedding file: dimension mismatch for " + e.utt_id);
    os << e.utt_id << ' ';
    WriteRow(os, e.vec);
    os << '\n';
  }
}

std::vector<Embedding> ReadEmbeddings(std::istream &is,
                                      std::string_view source) {
  LineReader r(is, source);
  if (!r.Next()) r.FailEof("missing EMB header");
  auto h = r.Tokens();
  if (h[0].text != "EMB") r.Fail(1, "expected header 'EMB <dim>'");
  ExpectFields(r, h, 2);
  const long dim = r.Integer(h[1]);
  if (dim < 0) r.Fail(h[1].column, "negative dimension");
  std::vector<Embedding> out;
  std::set<std::string> seen;
  while (r.Next()) {
    auto t = r.Tokens();
    ExpectFields(r, t, static_cast<size_t>(dim) + 1);
    Embedding e{std::string(t[0].text), Vector(dim)};
    if (!seen.insert(e.utt_id).second) r.Fail(1, "duplicate id " + e.utt_id);
    for (long i = 0; i < dim; ++i) e.vec(i) = r.Number(t[i + 1]);
    out.push_back(std::move(e));
  }
  return out;
}

void WriteMetas(std::ostream &os, std::span<const UttMeta> metas) {
  os << "META\n";
  for (const auto &m : metas)
    os << m.utt_id << ' ' << m.speaker_id << ' ' << OptionalField(m.phrase_id)
       << ' ' << LanguageName(m.language) << ' '
       << OptionalField(m.transcript) << '\n';
}

std::vector<UttMeta> ReadMetas(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  if (!r.Next()) r.FailEof("missing META header");
  if (r.line() != "META") r.Fail(1, "expected header 'META'");
  std::vector<UttMeta> out;
  std::set<std::string> seen;
  while (r.Next()) {
    const std::string &line = r.line();
    // The transcript is the remainder after the fourth separator.
    size_t pos = 0;
    std::vector<Token> head;
    for (int f = 0; f < 4; ++f) {
      const size_t end = line.find(' ', pos);
      if (end == std::string::npos) r.Fail(line.size() + 1, "expected 5 fields");
      if (end == pos) r.Fail(pos + 1, "empty field");
      head.push_back({std::string_view(line).substr(pos, end - pos), pos + 1});
      pos = end + 1;
    }
    if (pos >= line.size()) r.Fail(pos + 1, "missing transcript field");
    UttMeta m;
    m.utt_id = std::string(head[0].text);
    m.speaker_id = std::string(head[1].text);
    m.phrase_id = OptionalToken(head[2].text);
    if (head[3].text != "L1" && head[3].text != "L2")
      r.Fail(head[3].column, "language must be L1 or L2");
    m.language = ParseLanguage(head[3].text);
    m.transcript = OptionalToken(std::string_view(line).substr(pos));
    if (!seen.insert(m.utt_id).second) r.Fail(1, "duplicate id " + m.utt_id);
    out.push_back(std::move(m));
  }
  return out;
}

void WritePhrases(std::ostream &os, const PhraseInventory &inventory) {
  os << "PHRASES\n";
  for (const auto &e : inventory.entries())
    os << e.phrase_id << ' ' << LanguageName(e.language) << ' ' << e.text
       << '\n';
}

PhraseInventory ReadPhrases(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  if (!r.Next()) r.FailEof("missing PHRASES header");
  if (r.line() != "PHRASES") r.Fail(1, "expected header 'PHRASES'");
  std::vector<PhraseEntry> entries;
  while (r.Next()) {
    const std::string &line = r.line();
    const size_t a = line.find(' ');
    const size_t b = a == std::string::npos ? a : line.find(' ', a + 1);
    if (a == 0 || b == std::string::npos || b + 1 >= line.size())
      r.Fail(1, "expected '<phrase_id> <lang> <text>'");
    const std::string_view lang = std::string_view(line).substr(a + 1, b - a - 1);
    if (lang != "L1" && lang != "L2") r.Fail(a + 2, "language must be L1 or L2");
    entries.push_back(
        {line.substr(0, a), line.substr(b + 1), ParseLanguage(lang)});
  }
  try {
    return PhraseInventory(std::move(entries));
  } catch (const DataError &e) {
    throw DataError(std::string(source) + ": " + e.what());
  }
}

void WriteEnrollMap(std::ostream &os, const EnrollMap &enroll) {
  for (const auto &[model, utts] : enroll) {
    os << model;
    for (const auto &u : utts) os << ' ' << u;
    os << '\n';
  }
}

EnrollMap ReadEnrollMap(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  EnrollMap out;
  while (r.Next()) {
    auto t = r.Tokens();
    if (t.size() < 2) r.Fail(r.line().size() + 1, "model without utterances");
    auto [it, inserted] = out.emplace(std::string(t[0].text),
                                      std::vector<std::string>{});
    if (!inserted) r.Fail(1, "duplicate model id " + it->first);
    for (size_t i = 1; i < t.size(); ++i) it->second.emplace_back(t[i].text);
  }
  return out;
}

void WriteTrials(std::ostream &os, std::span<const Trial> trials) {
  for (const auto &t : trials)
    os << t.trial_id << ' ' << t.model_id << ' ' << t.test_utt_id << ' '
       << OptionalField(t.claimed_phrase_id) << '\n';
}

std::vector<Trial> ReadTrials(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  std::vector<Trial> out;
  while (r.Next()) {
    auto t = r.Tokens();
    ExpectFields(r, t, 4);
    out.push_back({std::string(t[0].text), std::string(t[1].text),
                   std::string(t[2].text), OptionalToken(t[3].text)});
  }
  return out;
}

void WriteKeys(std::ostream &os, std::span<const TrialKey> keys) {
  for (const auto &k : keys) os << k.trial_id << ' ' << LabelName(k.label) << '\n';
}

std::vector<TrialKey> ReadKeys(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  std::vector<TrialKey> out;
  while (r.Next()) {
    auto t = r.Tokens();
    ExpectFields(r, t, 2);
    TrialLabel label;
    try {
      label = ParseLabel(t[1].text);
    } catch (const DataError &) {
      r.Fail(t[1].column, "unknown label '" + std::string(t[1].text) + "'");
    }
    out.push_back({std::string(t[0].text), label});
  }
  return out;
}

void WriteScores(std::ostream &os, const ScoreSet &scores) {
  for (size_t i = 0; i < scores.size(); ++i)
    os << scores.ids()[i] << ' ' << FormatDouble(scores.scores()[i]) << '\n';
}

ScoreSet ReadScores(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  ScoreSet out;
  while (r.Next()) {
    auto t = r.Tokens();
    ExpectFields(r, t, 2);
    const std::string id(t[0].text);
    if (out.Contains(id)) r.Fail(1, "duplicate trial id " + id);
    out.Add(id, r.Number(t[1]));
  }
  return out;
}

void ModelFile::SetScalar(const std::string &name, const std::string &value) {
  for (auto &kv : scalars)
    if (kv.first == name) {
      kv.second = value;
      return;
    }
  scalars.emplace_back(name, value);
}

void ModelFile::SetScalar(const std::string &name, double value) {
  SetScalar(name, FormatDouble(value));
}

void ModelFile::AddMatrix(const std::string &name, Matrix m) {
  matrices.emplace_back(name, std::move(m));
}

void ModelFile::AddVector(const std::string &name, const Vector &v) {
  AddMatrix(name, v.transpose());
}

const std::string &ModelFile::Scalar(const std::string &name) const {
  for (const auto &kv : scalars)
    if (kv.first == name) return kv.second;
  throw DataError("model file: missing scalar '" + name + "'");
}

double ModelFile::ScalarDouble(const std::string &name) const {
  auto v = ParseDouble(Scalar(name));
  if (!v) throw DataError("model file: scalar '" + name + "' is not a number");
  return *v;
}

bool ModelFile::HasMatrix(const std::string &name) const {
  for (const auto &kv : matrices)
    if (kv.first == name) return true;
  return false;
}

const Matrix &ModelFile::GetMatrix(const std::string &name) const {
  for (const auto &kv : matrices)
    if (kv.first == name) return kv.second;
  throw DataError("model file: missing matrix '" + name + "'");
}

Vector ModelFile::GetVector(const std::string &name) const {
  const Matrix &m = GetMatrix(name);
  if (m.rows() != 1)
    throw DataError("model file: '" + name + "' is not a row vector");
  return m.row(0).transpose();
}

void WriteModelFile(std::ostream &os, const ModelFile &file) {
  os << "SCALARS\n";
  for (const auto &[name, value] : file.scalars)
    os << name << ' ' << value << '\n';
  for (const auto &[name, m] : file.matrices) {
    os << "MAT " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      WriteRow(os, m.row(r).transpose());
      os << '\n';
    }
  }
}

ModelFile ReadModelFile(std::istream &is, std::string_view source) {
  LineReader r(is, source);
  ModelFile f;
  bool in_scalars = false;
  std::set<std::string> names;
  while (r.Next()) {
    auto t = r.Tokens();
    if (t[0].text == "SCALARS") {
      ExpectFields(r, t, 1);
      in_scalars = true;
    } else if (t[0].text == "MAT") {
      in_scalars = false;
      ExpectFields(r, t, 4);
      const std::string name(t[1].text);
      if (!names.insert("mat:" + name).second)
        r.Fail(t[1].column, "duplicate matrix '" + name + "'");
      const long rows = r.Integer(t[2]), cols = r.Integer(t[3]);
      if (rows < 0 || cols < 0) r.Fail(t[2].column, "negative matrix size");
      Matrix m(rows, cols);
      for (long i = 0; i < rows; ++i) {
        if (!r.Next()) r.FailEof("truncated matrix '" + name + "'");
        auto row = r.Tokens();
        ExpectFields(r, row, static_cast<size_t>(cols));
        for (long j = 0; j < cols; ++j) m(i, j) = r.Number(row[j]);
      }
      f.matrices.emplace_back(name, std::move(m));
    } else if (in_scalars) {
      ExpectFields(r, t, 2);
      const std::string name(t[0].text);
      if (!names.insert("scalar:" + name).second)
        r.Fail(1, "duplicate scalar '" + name + "'");
      f.scalars.emplace_back(name, std::string(t[1].text));
    } else {
      r.Fail(1, "expected 'SCALARS' or 'MAT'");
    }
  }
  return f;
}

namespace {

void ExpectType(const ModelFile &f, const std::string &type) {
  if (f.Scalar("type") != type)
    throw DataError("model file: expected type '" + type + "', found '" +
                    f.Scalar("type") + "'");
}

void AddPlda(ModelFile &f, const std::string &prefix, const PldaModel &m) {
  f.AddVector(prefix + "mean", m.mean);
  f.AddMatrix(prefix + "between", m.between);
  f.AddMatrix(prefix + "within", m.within);
}

PldaModel GetPlda(const ModelFile &f, const std::string &prefix) {
  PldaModel m{f.GetVector(prefix + "mean"), f.GetMatrix(prefix + "between"),
              f.GetMatrix(prefix + "within")};
  m.Check();
  return m;
}

std::vector<std::string> SplitList(const std::string &s) {
  std::vector<std::string> out;
  if (s == "-") return out;
  size_t start = 0;
  while (true) {
    const size_t end = s.find(',', start);
    out.push_back(s.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::string JoinList(const std::vector<std::string> &v) {
  if (v.empty()) return "-";
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

}  // namespace

ModelFile PldaToFile(const PldaModel &model) {
  ModelFile f;
  f.SetScalar("type", "plda");
  f.SetScalar("dim", std::to_string(model.Dim()));
  AddPlda(f, "", model);
  return f;
}

PldaModel PldaFromFile(const ModelFile &file) {
  ExpectType(file, "plda");
  return GetPlda(file, "");
}

ModelFile PldaBankToFile(const PhrasePldaBank &bank) {
  ModelFile f;
  f.SetScalar("type", "plda-bank");
  std::vector<std::string> phrases;
  for (const auto &kv : bank.models) phrases.push_back(kv.first);
  f.SetScalar("phrases", JoinList(phrases));
  for (const auto &[p, m] : bank.models) AddPlda(f, p + ".", m);
  return f;
}

PhrasePldaBank PldaBankFromFile(const ModelFile &file) {
  ExpectType(file, "plda-bank");
  PhrasePldaBank bank;
  for (const auto &p : SplitList(file.Scalar("phrases")))
    bank.models[p] = GetPlda(file, p + ".");
  return bank;
}

ModelFile NpldaBankToFile(const std::map<std::string, NpldaParams> &bank) {
  ModelFile f;
  f.SetScalar("type", "nplda-bank");
  std::vector<std::string> phrases;
  for (const auto &kv : bank) phrases.push_back(kv.first);
  f.SetScalar("phrases", JoinList(phrases));
  for (const auto &[p, m] : bank) {
    f.SetScalar(p + ".offset", m.offset);
    f.AddMatrix(p + ".cross", m.cross);
    f.AddMatrix(p + ".self", m.self);
    f.AddVector(p + ".linear", m.linear);
  }
  return f;
}

std::map<std::string, NpldaParams> NpldaBankFromFile(const ModelFile &file) {
  ExpectType(file, "nplda-bank");
  std::map<std::string, NpldaParams> bank;
  for (const auto &p : SplitList(file.Scalar("phrases"))) {
    NpldaParams m{file.GetMatrix(p + ".cross"), file.GetMatrix(p + ".self"),
                  file.GetVector(p + ".linear"),
                  file.ScalarDouble(p + ".offset")};
    const Eigen::Index d = m.linear.size();
    if (m.cross.rows() != d || m.cross.cols() != d || m.self.rows() != d ||
        m.self.cols() != d)
      throw DataError("model file: NPLDA '" + p + "' has inconsistent sizes");
    bank[p] = std::move(m);
  }
  return bank;
}

ModelFile LangIdToFile(const LangClassifier &classifier) {
  ModelFile f;
  f.SetScalar("type", "langid");
  f.AddMatrix("weights", classifier.weights);
  f.AddVector("bias", classifier.bias);
  return f;
}

LangClassifier LangIdFromFile(const ModelFile &file) {
  ExpectType(file, "langid");
  LangClassifier c{file.GetMatrix("weights"), file.GetVector("bias")};
  if (c.weights.rows() != kNumLanguages || c.bias.size() != kNumLanguages)
    throw DataError("model file: language classifier needs one row per language");
  return c;
}

ModelFile CheckpointToFile(const ExtractorCheckpoint &ckpt) {
  ModelFile f;
  f.SetScalar("type", "extractor");
  f.SetScalar("input_dim", std::to_string(ckpt.net.InputDim()));
  f.SetScalar("hidden_dim", std::to_string(ckpt.net.HiddenDim()));
  f.SetScalar("embed_dim", std::to_string(ckpt.net.EmbedDim()));
  f.SetScalar("strategy", ckpt.strategy);
  f.SetScalar("seed", std::to_string(ckpt.seed));
  f.SetScalar("num_heads", std::to_string(ckpt.heads.heads.size()));
  f.SetScalar("ge2e_w", ckpt.heads.ge2e.w);
  f.SetScalar("ge2e_b", ckpt.heads.ge2e.b);
  f.AddMatrix("w1", ckpt.net.w1);
  f.AddVector("b1", ckpt.net.b1);
  f.AddMatrix("w2", ckpt.net.w2);
  f.AddVector("b2", ckpt.net.b2);
  for (size_t h = 0; h < ckpt.heads.heads.size(); ++h) {
    const std::string p = "head" + std::to_string(h);
    f.SetScalar(p + ".scale", ckpt.heads.heads[h].scale);
    f.SetScalar(p + ".margin", ckpt.heads.heads[h].margin);
    f.AddMatrix(p + ".weights", ckpt.heads.heads[h].weights);
  }
  return f;
}

ExtractorCheckpoint CheckpointFromFile(const ModelFile &file) {
  ExpectType(file, "extractor");
  ExtractorCheckpoint c;
  c.net.w1 = file.GetMatrix("w1");
  c.net.b1 = file.GetVector("b1");
  c.net.w2 = file.GetMatrix("w2");
  c.net.b2 = file.GetVector("b2");
  c.net.Check();
  c.strategy = file.Scalar("strategy");
  c.seed = std::stoull(file.Scalar("seed"));
  c.heads.ge2e = {file.ScalarDouble("ge2e_w"), file.ScalarDouble("ge2e_b")};
  const int n_heads = std::stoi(file.Scalar("num_heads"));
  for (int h = 0; h < n_heads; ++h) {
    const std::string p = "head" + std::to_string(h);
    AamHead head;
    head.weights = file.GetMatrix(p + ".weights");
    head.scale = file.ScalarDouble(p + ".scale");
    head.margin = file.ScalarDouble(p + ".margin");
    c.heads.heads.push_back(std::move(head));
  }
  return c;
}

std::string ReadTextFile(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const std::filesystem::path &path, std::string_view text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace spkv
