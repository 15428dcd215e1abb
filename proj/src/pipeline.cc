// src/pipeline.cc

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

#include "spkv/pipeline.h"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "spkv/backend.h"
#include "spkv/error.h"
#include "spkv/eval.h"
#include "spkv/extractor.h"
#include "spkv/io.h"
#include "spkv/nplda.h"
#include "spkv/norm.h"
#include "spkv/rng.h"
#include "spkv/synthgen.h"

namespace spkv {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<std::string, std::string>> &Defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"seed", "1"},
      {"workers", "1"},
      {"out_dir", "out"},
      {"gen.task", "td"},
      {"gen.train_speakers", "40"},
      {"gen.dev_speakers", "20"},
      {"gen.eval_speakers", "20"},
      {"gen.phrases", "4"},
      {"gen.utts_per_cell", "6"},
      {"gen.dim", "16"},
      {"gen.phrase_strength", "1"},
      {"gen.language_shift", "0"},
      {"gen.noise_sigma", "0.5"},
      {"gen.transcript_error_rate", "0.05"},
      {"gen.trials", "1000"},
      {"gen.proportions", ""},
      {"gen.enroll_utts", "3"},
      {"io.features", ""},
      {"io.meta", ""},
      {"io.phrases", ""},
      {"io.embeddings", ""},
      {"io.enroll", ""},
      {"io.trials", ""},
      {"io.key", ""},
      {"io.scores", ""},
      {"io.model", ""},
      {"io.init", ""},
      {"io.cohort_embeddings", ""},
      {"io.cohort_meta", ""},
      {"io.langid", ""},
      {"io.dev_scores", ""},
      {"io.dev_key", ""},
      {"io.output", ""},
      {"train.target", "extractor"},
      {"train.strategy", "aam"},
      {"train.epochs", "20"},
      {"train.lr_initial", "0.1"},
      {"train.lr_final", "0.001"},
      {"train.batch_speakers", "16"},
      {"train.lambda", "1"},
      {"train.mu", "1"},
      {"train.scale", "32"},
      {"train.margin", "0.2"},
      {"train.hidden", "32"},
      {"train.embed_dim", "16"},
      {"pretrain.epochs", "20"},
      {"pretrain.lr_initial", "0.1"},
      {"pretrain.lr_final", "0.001"},
      {"plda.iters", "20"},
      {"plda.ridge", "-1"},
      {"nplda.lr", "5e-05"},
      {"nplda.epochs", "5"},
      {"nplda.alpha", "10"},
      {"langid.epochs", "100"},
      {"langid.lr", "0.5"},
      {"score.backend", "cosine"},
      {"norm.mode", "ld"},
      {"norm.top", "200"},
      {"filter.floor", "-1000"},
      {"fuse.weights", "tune"},
      {"fuse.grid_step", "0.1"},
      {"dcf.p_target", "0.01"},
      {"dcf.c_miss", "10"},
      {"dcf.c_fa", "1"},
  };
  return d;
}

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void RequireFile(const fs::path &p) {
  if (!fs::is_regular_file(p))
    throw DataError("missing input file: " + p.string());
}

template <typename T>
void WriteWith(const fs::path &path, const T &writer) {
  std::ostringstream os;
  writer(os);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  WriteTextFile(path, os.str());
}

ModelFile LoadModel(const fs::path &p) {
  RequireFile(p);
  return ReadFromFile(p, ReadModelFile);
}

void SaveModel(const fs::path &p, const ModelFile &m) {
  WriteWith(p, [&](std::ostream &os) { WriteModelFile(os, m); });
}

void SaveScores(const fs::path &p, const ScoreSet &s) {
  WriteWith(p, [&](std::ostream &os) { WriteScores(os, s); });
}

ScoreSet LoadScores(const fs::path &p) {
  RequireFile(p);
  return ReadFromFile(p, ReadScores);
}

template <typename Fn>
auto Load(const fs::path &p, Fn reader) {
  RequireFile(p);
  return ReadFromFile(p, reader);
}

DcfParams DcfFrom(const PipelineConfig &c) {
  return DcfParams{c.GetDouble("dcf.p_target"), c.GetDouble("dcf.c_miss"),
                   c.GetDouble("dcf.c_fa")};
}

using EmbIndex = std::unordered_map<std::string, const Vector *>;

EmbIndex IndexOf(const std::vector<Embedding> &e) {
  EmbIndex idx;
  for (const auto &x : e) idx.emplace(x.utt_id, &x.vec);
  return idx;
}

const Vector &Lookup(const EmbIndex &idx, const std::string &id) {
  auto it = idx.find(id);
  if (it == idx.end()) throw DataError("no embedding for utterance " + id);
  return *it->second;
}

std::map<std::string, Vector> BuildModels(const EnrollMap &enroll,
                                          const EmbIndex &idx) {
  std::map<std::string, Vector> out;
  for (const auto &[model, utts] : enroll) {
    std::vector<Embedding> e;
    for (const auto &u : utts) e.push_back({u, Lookup(idx, u)});
    out.emplace(model, BuildEnrollModel(model, e).centroid);
  }
  return out;
}

const Vector &ModelOf(const std::map<std::string, Vector> &models,
                      const std::string &id) {
  auto it = models.find(id);
  if (it == models.end()) throw DataError("trial references unknown model " + id);
  return it->second;
}

// Scores every trial in parallel; results keep the trial order.
ScoreSet ScoreAll(std::span<const Trial> trials, int workers,
                  const std::function<double(size_t)> &fn) {
  std::vector<double> out(trials.size());
  ParallelFor(trials.size(), workers, [&](size_t i) { out[i] = fn(i); });
  ScoreSet s;
  for (size_t i = 0; i < trials.size(); ++i) s.Add(trials[i].trial_id, out[i]);
  return s;
}

template <typename Map>
const typename Map::mapped_type &BankEntry(const Map &bank, const Trial &t) {
  if (t.claimed_phrase_id) {
    auto it = bank.find(*t.claimed_phrase_id);
    if (it == bank.end())
      throw DataError("no backend model for phrase " + *t.claimed_phrase_id);
    return it->second;
  }
  if (bank.size() != 1)
    throw DataError("trial " + t.trial_id + " has no claimed phrase");
  return bank.begin()->second;
}

// ---- stage bodies shared by the subcommands and e2e ----

struct GenOutput {
  PhraseInventory inventory;
  std::map<std::string, std::pair<std::vector<Embedding>, std::vector<UttMeta>>>
      splits;
  std::map<std::string, TrialList> trials;
};

bool IsTd(const PipelineConfig &c) {
  const std::string &t = c.Get("gen.task");
  if (t == "td") return true;
  if (t == "ti") return false;
  throw UsageError("gen.task must be td or ti, got '" + t + "'");
}

GenOutput RunGen(const PipelineConfig &c) {
  const bool td = IsTd(c);
  const int n_train = c.GetInt("gen.train_speakers");
  const int n_dev = c.GetInt("gen.dev_speakers");
  const int n_eval = c.GetInt("gen.eval_speakers");
  if (n_train < 2 || n_dev < 2 || n_eval < 2)
    throw UsageError("gen: every split needs at least 2 speakers");
  GenConfig gc;
  gc.n_speakers = n_train + n_dev + n_eval;
  gc.n_phrases = c.GetInt("gen.phrases");
  gc.n_utts_per_cell = c.GetInt("gen.utts_per_cell");
  gc.dim = c.GetInt("gen.dim");
  gc.phrase_strength = c.GetDouble("gen.phrase_strength");
  gc.language_shift = c.GetDouble("gen.language_shift");
  gc.noise_sigma = c.GetDouble("gen.noise_sigma");
  gc.transcript_error_rate = c.GetDouble("gen.transcript_error_rate");
  gc.phrase_labels = td;
  gc.seed = DeriveSeed(c.GetSeed("seed"), "gen");
  const SynthCorpus all = GenCorpus(gc);

  GenOutput out;
  out.inventory = all.inventory;
  const size_t per_spk =
      static_cast<size_t>(gc.n_phrases) * static_cast<size_t>(gc.n_utts_per_cell);
  const std::vector<std::pair<std::string, int>> ranges = {
      {"train", n_train}, {"dev", n_dev}, {"eval", n_eval}};
  size_t start = 0;
  for (const auto &[name, n] : ranges) {
    SynthCorpus part;
    part.inventory = all.inventory;
    const size_t end = start + per_spk * static_cast<size_t>(n);
    for (size_t i = start; i < end; ++i) {
      part.embeddings.push_back(all.embeddings[i]);
      part.metas.push_back(all.metas[i]);
    }
    start = end;
    if (name != "train") {
      TrialRequest req;
      req.task = td ? TaskType::kTextDependent : TaskType::kTextIndependent;
      req.n_trials = c.GetInt("gen.trials");
      req.enroll_utts = c.GetInt("gen.enroll_utts");
      const auto props = c.GetList("gen.proportions");
      if (props.empty()) {
        req.proportions = td ? std::vector<double>{0.25, 0.25, 0.25, 0.25}
                             : std::vector<double>{0.5, 0.5};
      } else {
        req.proportions.clear();
        for (const auto &p : props) {
          auto v = ParseDouble(p);
          if (!v) throw UsageError("gen.proportions: bad value '" + p + "'");
          req.proportions.push_back(*v);
        }
      }
      req.seed = DeriveSeed(c.GetSeed("seed"), "trials." + name);
      out.trials.emplace(name, GenTrials(part, req));
    }
    out.splits.emplace(name, std::make_pair(std::move(part.embeddings),
                                            std::move(part.metas)));
  }
  return out;
}

void WriteGen(const GenOutput &g, const fs::path &dir) {
  WriteWith(dir / "phrases.txt",
            [&](std::ostream &os) { WritePhrases(os, g.inventory); });
  for (const auto &[name, data] : g.splits) {
    WriteWith(dir / (name + ".feats"),
              [&](std::ostream &os) { WriteEmbeddings(os, data.first); });
    WriteWith(dir / (name + ".meta"),
              [&](std::ostream &os) { WriteMetas(os, data.second); });
  }
  for (const auto &[name, t] : g.trials) {
    WriteWith(dir / (name + ".enroll"),
              [&](std::ostream &os) { WriteEnrollMap(os, t.enroll); });
    WriteWith(dir / (name + ".trials"),
              [&](std::ostream &os) { WriteTrials(os, t.trials); });
    WriteWith(dir / (name + ".key"),
              [&](std::ostream &os) { WriteKeys(os, t.keys); });
  }
}

TrainConfig ExtractorConfig(const PipelineConfig &c, const std::string &prefix,
                            Strategy strategy, uint64_t seed) {
  TrainConfig tc;
  tc.strategy = strategy;
  tc.epochs = c.GetInt(prefix + ".epochs");
  tc.lr_initial = c.GetDouble(prefix + ".lr_initial");
  tc.lr_final = c.GetDouble(prefix + ".lr_final");
  tc.batch_speakers = c.GetInt("train.batch_speakers");
  tc.lambda = c.GetDouble("train.lambda");
  tc.mu = c.GetDouble("train.mu");
  tc.scale = c.GetDouble("train.scale");
  tc.margin = c.GetDouble("train.margin");
  tc.seed = seed;
  tc.Check();
  return tc;
}

ExtractorCheckpoint TrainExtractor(const PipelineConfig &c,
                                   const std::vector<Embedding> &feats,
                                   const std::vector<UttMeta> &metas,
                                   const PhraseInventory &inv,
                                   const std::optional<Extractor> &init,
                                   const std::string &prefix, Strategy strategy,
                                   uint64_t seed) {
  const TrainingSet data = TrainingSet::FromCorpus(feats, metas, inv);
  const Extractor start =
      init ? *init
           : Extractor::Random(static_cast<int>(data.features.cols()),
                               c.GetInt("train.hidden"),
                               c.GetInt("train.embed_dim"),
                               DeriveSeed(seed, "init"));
  const TrainConfig tc = ExtractorConfig(c, prefix, strategy, seed);
  TrainResult r = Train(start, data, tc);
  ExtractorCheckpoint ck;
  ck.net = std::move(r.net);
  ck.heads = std::move(r.heads);
  ck.strategy = std::string(StrategyName(strategy));
  ck.seed = seed;
  return ck;
}

PldaEmOptions PldaOptions(const PipelineConfig &c) {
  PldaEmOptions o;
  o.iters = c.GetInt("plda.iters");
  o.ridge = c.GetDouble("plda.ridge");
  return o;
}

struct Labeled {
  std::vector<Vector> x;
  std::vector<std::string> spk;
  std::vector<std::string> phrase;
  std::vector<Language> lang;
};

Labeled Join(const std::vector<Embedding> &emb,
             const std::vector<UttMeta> &metas, bool need_phrase) {
  std::unordered_map<std::string, const UttMeta *> by_id;
  for (const auto &m : metas) by_id.emplace(m.utt_id, &m);
  Labeled l;
  for (const auto &e : emb) {
    auto it = by_id.find(e.utt_id);
    if (it == by_id.end()) throw DataError("no metadata for utterance " + e.utt_id);
    const UttMeta &m = *it->second;
    if (need_phrase && !m.phrase_id)
      throw DataError("utterance " + e.utt_id + " has no phrase label");
    l.x.push_back(e.vec);
    l.spk.push_back(m.speaker_id);
    l.phrase.push_back(m.phrase_id.value_or(""));
    l.lang.push_back(m.language);
  }
  return l;
}

PhrasePldaBank TrainPldaBank(const PipelineConfig &c, const Labeled &l) {
  PhrasePldaBank bank =
      TrainPhrasePldaBank(l.x, l.spk, l.phrase, PldaOptions(c));
  if (!bank.failures.empty()) {
    std::string msg = "plda bank: training failed for";
    for (const auto &[ph, why] : bank.failures) msg += " " + ph + " (" + why + ")";
    throw NumericError(msg);
  }
  return bank;
}

std::map<std::string, NpldaParams> TrainNpldaBank(const PipelineConfig &c,
                                                  const Labeled &l,
                                                  const PhrasePldaBank &plda) {
  NpldaTrainConfig nc;
  nc.learning_rate = c.GetDouble("nplda.lr");
  nc.epochs = c.GetInt("nplda.epochs");
  nc.alpha = c.GetDouble("nplda.alpha");
  nc.cost = DcfFrom(c);
  std::map<std::string, std::vector<size_t>> rows;
  for (size_t i = 0; i < l.x.size(); ++i) rows[l.phrase[i]].push_back(i);
  std::map<std::string, NpldaParams> bank;
  for (const auto &[ph, model] : plda.models) {
    auto it = rows.find(ph);
    if (it == rows.end()) continue;
    std::vector<NpldaPair> pairs;
    const auto &r = it->second;
    for (size_t a = 0; a < r.size(); ++a)
      for (size_t b = a + 1; b < r.size(); ++b)
        pairs.push_back({l.x[r[a]], l.x[r[b]], ph, ph,
                         l.spk[r[a]] == l.spk[r[b]]});
    bank.emplace(ph, TrainNplda(InitFromPlda(model), pairs, nc).params);
  }
  return bank;
}

LangClassifier TrainLangId(const PipelineConfig &c, const Labeled &l) {
  return TrainLanguageId(l.x, l.lang, c.GetInt("langid.epochs"),
                         c.GetDouble("langid.lr"));
}

struct ScoreInputs {
  std::vector<Trial> trials;
  EmbIndex emb;
  std::map<std::string, Vector> models;
};

ScoreSet ScoreBackend(const std::string &backend, const ModelFile *model,
                      const ScoreInputs &in, int workers) {
  const auto &trials = in.trials;
  auto pair = [&](size_t i) -> std::pair<const Vector *, const Vector *> {
    return {&ModelOf(in.models, trials[i].model_id),
            &Lookup(in.emb, trials[i].test_utt_id)};
  };
  if (backend == "cosine")
    return ScoreAll(trials, workers, [&](size_t i) {
      auto [e, t] = pair(i);
      return CosineScore(*e, *t);
    });
  if (!model) throw UsageError("score.backend " + backend + " needs io.model");
  const std::string type = model->Scalar("type");
  if (backend == "plda") {
    if (type == "plda") {
      const PldaModel m = PldaFromFile(*model);
      return ScoreAll(trials, workers, [&](size_t i) {
        auto [e, t] = pair(i);
        return PldaLlrScore(m, *e, *t);
      });
    }
    const PhrasePldaBank bank = PldaBankFromFile(*model);
    return ScoreAll(trials, workers, [&](size_t i) {
      auto [e, t] = pair(i);
      return PldaLlrScore(BankEntry(bank.models, trials[i]), *e, *t);
    });
  }
  if (backend == "nplda") {
    const auto bank = NpldaBankFromFile(*model);
    return ScoreAll(trials, workers, [&](size_t i) {
      auto [e, t] = pair(i);
      return NpldaScore(BankEntry(bank, trials[i]), *e, *t);
    });
  }
  throw UsageError("unknown score.backend '" + backend + "'");
}

// One member per (speaker, language): the normalized mean embedding.
Cohort BuildCohort(const std::vector<Embedding> &emb,
                   const std::vector<UttMeta> &metas) {
  const Labeled l = Join(emb, metas, false);
  std::map<std::pair<std::string, int>, Vector> sums;
  for (size_t i = 0; i < l.x.size(); ++i) {
    auto key = std::make_pair(l.spk[i], static_cast<int>(l.lang[i]));
    auto [it, fresh] = sums.try_emplace(key, Vector::Zero(l.x[i].size()));
    it->second += l.x[i];
  }
  Cohort c;
  for (const auto &[key, v] : sums) {
    const double n = v.norm();
    if (!(n > 0.0)) continue;
    const Language lang = static_cast<Language>(key.second);
    c.push_back({key.first + "/" + std::string(LanguageName(lang)), v / n, lang});
  }
  if (c.empty()) throw DataError("cohort is empty");
  return c;
}

ScoreSet Normalize(const std::string &mode, int top, const ScoreSet &raw,
                   const ScoreInputs &in, const Cohort &cohort,
                   const LangClassifier *lid, int workers) {
  if (mode != "ld" && mode != "plain")
    throw UsageError("norm.mode must be ld or plain, got '" + mode + "'");
  if (mode == "ld" && !lid) throw UsageError("norm.mode ld needs io.langid");
  std::unordered_map<std::string, double> raw_by_id;
  for (size_t i = 0; i < raw.size(); ++i) raw_by_id.emplace(raw.ids()[i], raw.scores()[i]);
  return ScoreAll(in.trials, workers, [&](size_t i) {
    const Trial &t = in.trials[i];
    auto it = raw_by_id.find(t.trial_id);
    if (it == raw_by_id.end()) throw DataError("no raw score for trial " + t.trial_id);
    const Vector &e = ModelOf(in.models, t.model_id);
    const Vector &x = Lookup(in.emb, t.test_utt_id);
    if (mode == "plain") return PlainAsNorm(it->second, e, x, cohort, CosineScore, top);
    const Language lang = PredictLanguage(*lid, x).language;
    return LanguageDependentAsNorm(it->second, e, x, cohort, CosineScore, top, lang);
  });
}

std::unordered_map<std::string, std::string> ClassifyAll(
    const std::vector<UttMeta> &metas, const PhraseInventory &inv,
    const std::set<std::string> &wanted, int workers) {
  std::vector<const UttMeta *> todo;
  for (const auto &m : metas)
    if (wanted.count(m.utt_id)) todo.push_back(&m);
  std::vector<std::string> labels(todo.size());
  ParallelFor(todo.size(), workers, [&](size_t i) {
    if (!todo[i]->transcript)
      throw DataError("utterance " + todo[i]->utt_id + " has no transcript");
    labels[i] = ClassifyPhrase(*todo[i]->transcript, inv);
  });
  std::unordered_map<std::string, std::string> out;
  for (size_t i = 0; i < todo.size(); ++i) out.emplace(todo[i]->utt_id, labels[i]);
  return out;
}

ScoreSet Filter(const ScoreSet &scores, const std::vector<Trial> &trials,
                const std::vector<UttMeta> &metas, const PhraseInventory &inv,
                double floor, int workers) {
  std::set<std::string> wanted;
  for (const auto &t : trials) wanted.insert(t.test_utt_id);
  return ApplyPhraseFilter(scores, trials, ClassifyAll(metas, inv, wanted, workers),
                           floor);
}

std::string EvalReport(const ScoreSet &scores, const std::vector<TrialKey> &keys,
                       const DcfParams &dcf) {
  const double eer = ComputeEer(scores, keys);
  const double mindcf = ComputeMinDcf(scores, keys, dcf);
  return "eer " + FormatDouble(eer) + "\nmindcf " + FormatDouble(mindcf) + "\n";
}

std::string WeightsText(const FusionWeights &w) {
  std::string s;
  for (size_t i = 0; i < w.w.size(); ++i) s += (i ? "," : "") + FormatDouble(w.w[i]);
  return s;
}

FusionWeights ParseWeights(const std::vector<std::string> &items) {
  FusionWeights w;
  for (const auto &s : items) {
    auto v = ParseDouble(s);
    if (!v) throw UsageError("fuse.weights: bad value '" + s + "'");
    w.w.push_back(*v);
  }
  w.Check();
  return w;
}

}  // namespace

// ---- PipelineConfig ----

PipelineConfig::PipelineConfig() {
  for (const auto &[k, v] : Defaults()) values_.emplace(k, v);
}

void PipelineConfig::ParseText(std::string_view text, std::string_view source) {
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw UsageError(std::string(source) + ":" + std::to_string(line_no) +
                       ": expected key=value");
    try {
      Set(Trim(trimmed.substr(0, eq)), Trim(trimmed.substr(eq + 1)));
    } catch (const UsageError &e) {
      throw UsageError(std::string(source) + ":" + std::to_string(line_no) +
                       ": " + e.what());
    }
  }
}

void PipelineConfig::Set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw UsageError("expected key=value, got '" + std::string(assignment) + "'");
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

void PipelineConfig::Set(const std::string &key, const std::string &value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string &PipelineConfig::Get(const std::string &key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

double PipelineConfig::GetDouble(const std::string &key) const {
  auto v = ParseDouble(Get(key));
  if (!v) throw UsageError(key + ": not a number: '" + Get(key) + "'");
  return *v;
}

int PipelineConfig::GetInt(const std::string &key) const {
  const std::string &s = Get(key);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw UsageError(key + ": not an integer: '" + s + "'");
  return v;
}

uint64_t PipelineConfig::GetSeed(const std::string &key) const {
  const std::string &s = Get(key);
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw UsageError(key + ": not an unsigned integer: '" + s + "'");
  return v;
}

std::vector<std::string> PipelineConfig::GetList(const std::string &key) const {
  std::vector<std::string> out;
  std::string_view s = Get(key);
  while (!s.empty()) {
    const auto comma = s.find(',');
    const std::string item = Trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

fs::path PipelineConfig::GetPath(const std::string &key) const {
  const std::string &s = Get(key);
  if (s.empty()) throw UsageError(key + " must be set");
  return fs::path(s);
}

// ---- utilities ----

uint64_t DeriveSeed(uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, mixed with the seed through splitmix64.
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void ParallelFor(size_t n, int workers, const std::function<void(size_t)> &fn) {
  if (workers < 1) throw UsageError("workers must be >= 1");
  const size_t w = std::min<size_t>(static_cast<size_t>(workers), n);
  if (w <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  size_t error_index = n;
  std::mutex mu;
  auto body = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        // Keep the lowest failing index.
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  for (size_t t = 0; t < w; ++t) threads.emplace_back(body);
  for (auto &t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string Sha256Hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ExitCode::kData, "sha256 failed");
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

// ---- subcommands ----

void CmdGen(const PipelineConfig &c) {
  WriteGen(RunGen(c), c.GetPath("out_dir"));
}

void CmdTrain(const PipelineConfig &c) {
  const std::string &target = c.Get("train.target");
  const fs::path out = c.GetPath("io.output");
  const uint64_t seed = DeriveSeed(c.GetSeed("seed"), "train." + target);
  if (target == "extractor") {
    const auto feats = Load(c.GetPath("io.features"), ReadEmbeddings);
    const auto metas = Load(c.GetPath("io.meta"), ReadMetas);
    const auto inv = Load(c.GetPath("io.phrases"), ReadPhrases);
    std::optional<Extractor> init;
    if (!c.Get("io.init").empty())
      init = CheckpointFromFile(LoadModel(c.GetPath("io.init"))).net;
    const Strategy s = ParseStrategy(c.Get("train.strategy"));
    SaveModel(out, CheckpointToFile(
                       TrainExtractor(c, feats, metas, inv, init, "train", s, seed)));
    return;
  }
  const auto emb = Load(c.GetPath("io.embeddings"), ReadEmbeddings);
  const auto metas = Load(c.GetPath("io.meta"), ReadMetas);
  if (target == "plda") {
    const Labeled l = Join(emb, metas, false);
    SaveModel(out, PldaToFile(PldaEmTrain(l.x, l.spk, PldaOptions(c)).model));
  } else if (target == "plda-bank") {
    SaveModel(out, PldaBankToFile(TrainPldaBank(c, Join(emb, metas, true))));
  } else if (target == "nplda-bank") {
    const PhrasePldaBank plda = PldaBankFromFile(LoadModel(c.GetPath("io.model")));
    SaveModel(out, NpldaBankToFile(TrainNpldaBank(c, Join(emb, metas, true), plda)));
  } else if (target == "langid") {
    SaveModel(out, LangIdToFile(TrainLangId(c, Join(emb, metas, false))));
  } else {
    throw UsageError("unknown train.target '" + target + "'");
  }
}

void CmdExtract(const PipelineConfig &c) {
  const ExtractorCheckpoint ck = CheckpointFromFile(LoadModel(c.GetPath("io.model")));
  const auto feats = Load(c.GetPath("io.features"), ReadEmbeddings);
  const auto emb = ExtractEmbeddings(ck.net, feats);
  WriteWith(c.GetPath("io.output"),
            [&](std::ostream &os) { WriteEmbeddings(os, emb); });
}

namespace {

struct LoadedScoreInputs {
  std::vector<Embedding> emb;
  ScoreInputs in;
};

LoadedScoreInputs LoadInputs(const PipelineConfig &c) {
  LoadedScoreInputs l;
  l.emb = Load(c.GetPath("io.embeddings"), ReadEmbeddings);
  const EnrollMap enroll = Load(c.GetPath("io.enroll"), ReadEnrollMap);
  l.in.trials = Load(c.GetPath("io.trials"), ReadTrials);
  l.in.emb = IndexOf(l.emb);
  l.in.models = BuildModels(enroll, l.in.emb);
  return l;
}

}  // namespace

void CmdScore(const PipelineConfig &c) {
  const std::string &backend = c.Get("score.backend");
  std::optional<ModelFile> model;
  if (backend != "cosine") model = LoadModel(c.GetPath("io.model"));
  const LoadedScoreInputs l = LoadInputs(c);
  SaveScores(c.GetPath("io.output"),
             ScoreBackend(backend, model ? &*model : nullptr, l.in,
                          c.GetInt("workers")));
}

void CmdNorm(const PipelineConfig &c) {
  const std::string &mode = c.Get("norm.mode");
  const ScoreSet raw = LoadScores(c.GetPath("io.scores"));
  const auto cohort_emb = Load(c.GetPath("io.cohort_embeddings"), ReadEmbeddings);
  const auto cohort_meta = Load(c.GetPath("io.cohort_meta"), ReadMetas);
  std::optional<LangClassifier> lid;
  if (mode == "ld") lid = LangIdFromFile(LoadModel(c.GetPath("io.langid")));
  const LoadedScoreInputs l = LoadInputs(c);
  const Cohort cohort = BuildCohort(cohort_emb, cohort_meta);
  SaveScores(c.GetPath("io.output"),
             Normalize(mode, c.GetInt("norm.top"), raw, l.in, cohort,
                       lid ? &*lid : nullptr, c.GetInt("workers")));
}

void CmdFilter(const PipelineConfig &c) {
  const ScoreSet scores = LoadScores(c.GetPath("io.scores"));
  const auto trials = Load(c.GetPath("io.trials"), ReadTrials);
  const auto metas = Load(c.GetPath("io.meta"), ReadMetas);
  const auto inv = Load(c.GetPath("io.phrases"), ReadPhrases);
  SaveScores(c.GetPath("io.output"),
             Filter(scores, trials, metas, inv, c.GetDouble("filter.floor"),
                    c.GetInt("workers")));
}

void CmdFuse(const PipelineConfig &c) {
  std::vector<ScoreSet> sets;
  for (const auto &p : c.GetList("io.scores")) sets.push_back(LoadScores(p));
  if (sets.empty()) throw UsageError("io.scores must list at least one file");
  FusionWeights w;
  if (c.Get("fuse.weights") == "tune") {
    std::vector<ScoreSet> dev;
    for (const auto &p : c.GetList("io.dev_scores")) dev.push_back(LoadScores(p));
    if (dev.size() != sets.size())
      throw UsageError("io.dev_scores must list one file per io.scores entry");
    const auto keys = Load(c.GetPath("io.dev_key"), ReadKeys);
    w = TuneWeights(dev, keys, DcfFrom(c), c.GetDouble("fuse.grid_step"));
  } else {
    w = ParseWeights(c.GetList("fuse.weights"));
  }
  if (w.w.size() != sets.size())
    throw UsageError("fuse: " + std::to_string(w.w.size()) + " weights for " +
                     std::to_string(sets.size()) + " score files");
  SaveScores(c.GetPath("io.output"), Fuse(sets, w));
}

std::string CmdEval(const PipelineConfig &c) {
  const ScoreSet scores = LoadScores(c.GetPath("io.scores"));
  const auto keys = Load(c.GetPath("io.key"), ReadKeys);
  const std::string report = EvalReport(scores, keys, DcfFrom(c));
  if (!c.Get("io.output").empty()) WriteTextFile(c.GetPath("io.output"), report);
  return report;
}

std::string CmdE2e(const PipelineConfig &c) {
  const fs::path dir = c.GetPath("out_dir");
  const int workers = c.GetInt("workers");
  const bool td = IsTd(c);
  const uint64_t seed = c.GetSeed("seed");
  const DcfParams dcf = DcfFrom(c);
  std::map<std::string, uint64_t> seeds;
  auto derive = [&](const std::string &tag) {
    const uint64_t s = DeriveSeed(seed, tag);
    seeds[tag] = s;
    return s;
  };
  derive("gen");
  derive("trials.dev");
  derive("trials.eval");

  // Data.
  const GenOutput g = RunGen(c);
  WriteGen(g, dir / "data");
  const auto &train = g.splits.at("train");

  // Extractor: AAM pre-training, then fine-tuning with the chosen strategy.
  const uint64_t pre_seed = derive("pretrain");
  seeds["pretrain.init"] = DeriveSeed(pre_seed, "init");
  const ExtractorCheckpoint pre =
      TrainExtractor(c, train.first, train.second, g.inventory, std::nullopt,
                     "pretrain", Strategy::kAamOnly, pre_seed);
  SaveModel(dir / "models/pretrain.ckpt", CheckpointToFile(pre));
  const Strategy strategy = ParseStrategy(c.Get("train.strategy"));
  const ExtractorCheckpoint fine =
      TrainExtractor(c, train.first, train.second, g.inventory, pre.net, "train",
                     strategy, derive("finetune"));
  SaveModel(dir / "models/extractor.ckpt", CheckpointToFile(fine));

  std::map<std::string, std::vector<Embedding>> emb;
  for (const auto &[name, data] : g.splits) {
    emb[name] = ExtractEmbeddings(fine.net, data.first);
    WriteWith(dir / "emb" / (name + ".emb"),
              [&](std::ostream &os) { WriteEmbeddings(os, emb[name]); });
  }

  // Backends.
  const Labeled train_l = Join(emb.at("train"), train.second, td);
  ModelFile plda_file, nplda_file;
  if (td) {
    const PhrasePldaBank bank = TrainPldaBank(c, train_l);
    plda_file = PldaBankToFile(bank);
    nplda_file = NpldaBankToFile(TrainNpldaBank(c, train_l, bank));
    SaveModel(dir / "models/nplda.mdl", nplda_file);
  } else {
    plda_file = PldaToFile(PldaEmTrain(train_l.x, train_l.spk, PldaOptions(c)).model);
  }
  SaveModel(dir / "models/plda.mdl", plda_file);
  const LangClassifier lid = TrainLangId(c, train_l);
  SaveModel(dir / "models/langid.mdl", LangIdToFile(lid));
  const Cohort cohort = BuildCohort(emb.at("train"), train.second);

  std::vector<std::string> systems = {"cosine", "cosine-asnorm", "plda"};
  if (td) systems.push_back("nplda");
  std::map<std::string, std::map<std::string, ScoreSet>> scores;  // split, system
  for (const std::string split : {"dev", "eval"}) {
    const TrialList &tl = g.trials.at(split);
    ScoreInputs in;
    in.trials = tl.trials;
    in.emb = IndexOf(emb.at(split));
    in.models = BuildModels(tl.enroll, in.emb);
    auto &out = scores[split];
    out["cosine"] = ScoreBackend("cosine", nullptr, in, workers);
    out["cosine-asnorm"] = Normalize(c.Get("norm.mode"), c.GetInt("norm.top"),
                                     out["cosine"], in, cohort, &lid, workers);
    out["plda"] = ScoreBackend("plda", &plda_file, in, workers);
    if (td) out["nplda"] = ScoreBackend("nplda", &nplda_file, in, workers);
    for (const auto &[name, s] : out)
      SaveScores(dir / "scores" / split / (name + ".scores"), s);
    if (td) {
      const auto &metas = g.splits.at(split).second;
      for (auto &[name, s] : out) {
        s = Filter(s, tl.trials, metas, g.inventory, c.GetDouble("filter.floor"),
                   workers);
        SaveScores(dir / "scores" / split / (name + ".filtered.scores"), s);
      }
    }
  }

  auto collect = [&](const std::string &split) {
    std::vector<ScoreSet> v;
    for (const auto &name : systems) v.push_back(scores.at(split).at(name));
    return v;
  };
  FusionWeights w;
  if (c.Get("fuse.weights") == "tune")
    w = TuneWeights(collect("dev"), g.trials.at("dev").keys, dcf,
                    c.GetDouble("fuse.grid_step"));
  else
    w = ParseWeights(c.GetList("fuse.weights"));
  if (w.w.size() != systems.size())
    throw UsageError("fuse.weights needs " + std::to_string(systems.size()) +
                     " entries");
  std::string report = "fusion.systems";
  for (const auto &s : systems) report += " " + s;
  report += "\nfusion.weights " + WeightsText(w) + "\n";
  for (const std::string split : {"dev", "eval"}) {
    scores[split]["fusion"] = Fuse(collect(split), w);
    SaveScores(dir / "scores" / split / "fusion.scores", scores[split]["fusion"]);
    const auto &keys = g.trials.at(split).keys;
    std::vector<std::string> names = systems;
    names.push_back("fusion");
    for (const auto &name : names) {
      const ScoreSet &s = scores[split][name];
      report += split + " " + name + " eer " + FormatDouble(ComputeEer(s, keys)) +
                " mindcf " + FormatDouble(ComputeMinDcf(s, keys, dcf)) + "\n";
    }
  }
  WriteTextFile(dir / "report.txt", report);

  std::string manifest = "rng " + std::string(Rng::kAlgorithm) + "\n";
  for (const auto &[k, v] : c.values())
    if (k != "workers" && k != "out_dir" && k.rfind("io.", 0) != 0)
      manifest += "config " + k + "=" + v + "\n";
  for (const auto &[tag, s] : seeds)
    manifest += "seed " + tag + " " + std::to_string(s) + "\n";
  std::vector<std::string> files;
  for (const auto &entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "manifest.txt") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  for (const auto &f : files)
    manifest += "file " + f + " sha256 " + Sha256Hex(ReadTextFile(dir / f)) + "\n";
  WriteTextFile(dir / "manifest.txt", manifest);
  return manifest;
}

}  // namespace spkv
