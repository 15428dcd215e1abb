// src/synthgen.cc

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

#include "spkv/synthgen.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "spkv/error.h"
#include "spkv/eval.h"
#include "spkv/rng.h"

namespace spkv {

void GenConfig::Check() const {
  if (n_speakers < 1 || n_phrases < 1 || n_utts_per_cell < 1)
    throw UsageError("gen: counts must be positive");
  if (dim < 2) throw UsageError("gen: dim must be at least 2");
  if (!(phrase_strength >= 0.0) || !(language_shift >= 0.0) ||
      !(noise_sigma >= 0.0))
    throw UsageError("gen: strengths and noise must be non-negative");
  if (!(transcript_error_rate >= 0.0 && transcript_error_rate <= 1.0))
    throw UsageError("gen: transcript error rate must lie in [0, 1]");
}

namespace {

std::string Format(const char *fmt, int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string SpeakerId(int s) { return Format("spk%04d", s); }
std::string PhraseId(int p) { return Format("ph%02d", p); }

Vector NormalVector(Rng &rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.Normal();
  return v;
}

char RandomLetter(Rng &rng) {
  return static_cast<char>('a' + rng.UniformInt(26));
}

// Word sequences of random letters; regenerated until every pair differs
// by at least 30% of the longer text in edit distance.
std::vector<std::string> ReferenceTexts(int n, Rng &rng) {
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n) {
    std::string text;
    const int words = 3 + static_cast<int>(rng.UniformInt(3));
    for (int w = 0; w < words; ++w) {
      if (w) text.push_back(' ');
      const int len = 3 + static_cast<int>(rng.UniformInt(5));
      for (int c = 0; c < len; ++c) text.push_back(RandomLetter(rng));
    }
    bool ok = true;
    for (const auto &other : out) {
      const double longest =
          static_cast<double>(std::max(other.size(), text.size()));
      if (Levenshtein(text, other) < 0.3 * longest) ok = false;
    }
    if (ok) out.push_back(std::move(text));
  }
  return out;
}

Language PhraseLanguage(int p, int n_phrases) {
  return p < (n_phrases + 1) / 2 ? Language::kL1 : Language::kL2;
}

}  // namespace

std::string GenTranscript(const std::string &reference, double error_rate,
                          uint64_t seed) {
  if (!(error_rate > 0.0)) return reference;
  Rng rng(seed);
  std::string out;
  out.reserve(reference.size() + 8);
  for (char ch : reference) {
    if (rng.Uniform() >= error_rate) {
      out.push_back(ch);
      continue;
    }
    switch (rng.UniformInt(3)) {
      case 0: {  // substitution with a different letter
        char sub;
        do {
          sub = RandomLetter(rng);
        } while (sub == ch);
        out.push_back(sub);
        break;
      }
      case 1:  // deletion
        break;
      default:  // insertion after the character
        out.push_back(ch);
        out.push_back(RandomLetter(rng));
        break;
    }
  }
  return out;
}

SynthCorpus GenCorpus(const GenConfig &config) {
  config.Check();
  Rng rng(config.seed);
  SynthCorpus c;
  for (int s = 0; s < config.n_speakers; ++s)
    c.speaker_factors.push_back(NormalVector(rng, config.dim));
  for (int p = 0; p < config.n_phrases; ++p)
    c.phrase_factors.push_back(NormalVector(rng, config.dim));
  c.language_shift = NormalVector(rng, config.dim);
  c.language_shift.normalize();

  Rng text_rng(rng.Fork());
  Rng transcript_rng(rng.Fork());
  const std::vector<std::string> texts =
      ReferenceTexts(config.n_phrases, text_rng);
  std::vector<PhraseEntry> entries;
  for (int p = 0; p < config.n_phrases; ++p)
    entries.push_back(
        {PhraseId(p), texts[p], PhraseLanguage(p, config.n_phrases)});
  c.inventory = PhraseInventory(std::move(entries));

  for (int s = 0; s < config.n_speakers; ++s) {
    for (int p = 0; p < config.n_phrases; ++p) {
      const Language lang = PhraseLanguage(p, config.n_phrases);
      for (int u = 0; u < config.n_utts_per_cell; ++u) {
        Vector x = c.speaker_factors[s] +
                   config.phrase_strength * c.phrase_factors[p] +
                   config.noise_sigma * NormalVector(rng, config.dim);
        if (lang == Language::kL2) x += config.language_shift * c.language_shift;
        const double norm = x.norm();
        if (!(norm > 0.0)) throw NumericError("gen: zero-norm utterance");
        x /= norm;

        UttMeta meta;
        meta.utt_id = SpeakerId(s) + "-" + PhraseId(p) + Format("-u%03d", u);
        meta.speaker_id = SpeakerId(s);
        meta.language = lang;
        const uint64_t transcript_seed = transcript_rng.NextU64();
        if (config.phrase_labels) {
          meta.phrase_id = PhraseId(p);
          meta.transcript = GenTranscript(
              texts[p], config.transcript_error_rate, transcript_seed);
        }
        c.embeddings.push_back({meta.utt_id, std::move(x)});
        c.metas.push_back(std::move(meta));
      }
    }
  }
  return c;
}

std::vector<int> AllocateCounts(const std::vector<double> &proportions,
                                int n_trials) {
  double total = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw UsageError("trial proportions must be >= 0");
    total += p;
  }
  if (!(total > 0.0)) throw UsageError("trial proportions sum to zero");
  std::vector<int> counts(proportions.size());
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < proportions.size(); ++i) {
    const double exact = proportions[i] / total * n_trials;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  // Largest remainder first; lower index on ties.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });
  for (size_t k = 0; assigned < n_trials; ++k, ++assigned)
    ++counts[remainders[k % remainders.size()].second];
  return counts;
}

namespace {

struct Cell {
  std::string model_id;
  std::string speaker;
  std::string phrase;
  std::vector<size_t> enroll;
  std::vector<size_t> rest;
};

template <typename T>
const T &Pick(const std::vector<T> &v, Rng &rng) {
  return v[rng.UniformInt(v.size())];
}

}  // namespace

TrialList GenTrials(const SynthCorpus &corpus, const TrialRequest &req) {
  if (req.n_trials < 0) throw UsageError("trials: negative count");
  if (req.enroll_utts < 1) throw UsageError("trials: enroll_utts must be >= 1");
  const bool td = req.task == TaskType::kTextDependent;
  if (req.proportions.size() != (td ? 4u : 2u))
    throw UsageError(td ? "trials: TD needs four proportions (TC TW IC IW)"
                        : "trials: TI needs two proportions (target nontarget)");
  const auto &metas = corpus.metas;
  std::map<std::string, std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < metas.size(); ++i)
    by_speaker[metas[i].speaker_id].push_back(i);
  if (by_speaker.size() < 2) throw DataError("trials: need two speakers");

  Rng rng(req.seed);
  const std::vector<int> counts = AllocateCounts(req.proportions, req.n_trials);
  TrialList out;
  std::vector<std::pair<Trial, TrialLabel>> made;

  auto add = [&](const Cell &cell, size_t test, TrialLabel label) {
    Trial t;
    t.model_id = cell.model_id;
    t.test_utt_id = metas[test].utt_id;
    if (td) t.claimed_phrase_id = cell.phrase;
    made.push_back({std::move(t), label});
  };

  if (td) {
    std::map<std::pair<std::string, std::string>, std::vector<size_t>> cells;
    std::set<std::string> phrases;
    for (size_t i = 0; i < metas.size(); ++i) {
      if (!metas[i].phrase_id)
        throw DataError("trials: TD requires phrase labels (" +
                        metas[i].utt_id + ")");
      cells[{metas[i].speaker_id, *metas[i].phrase_id}].push_back(i);
      phrases.insert(*metas[i].phrase_id);
    }
    std::vector<Cell> models;
    for (const auto &[key, idx] : cells) {
      if (idx.size() < static_cast<size_t>(req.enroll_utts)) continue;
      Cell c{key.first + "-" + key.second, key.first, key.second,
             {idx.begin(), idx.begin() + req.enroll_utts},
             {idx.begin() + req.enroll_utts, idx.end()}};
      models.push_back(std::move(c));
    }
    if (models.empty()) throw DataError("trials: no cell can be enrolled");
    std::vector<const Cell *> tc_models;
    for (const auto &m : models)
      if (!m.rest.empty()) tc_models.push_back(&m);
    const bool multi_phrase = phrases.size() >= 2;
    if (counts[0] > 0 && tc_models.empty())
      throw DataError("trials: TC infeasible, no cell has spare utterances");
    if ((counts[1] > 0 || counts[3] > 0) && !multi_phrase)
      throw DataError("trials: TW/IW infeasible with a single phrase");

    // Candidate test utterances for a model and label.
    auto candidates = [&](const Cell &m, TrialLabel label) {
      std::vector<size_t> c;
      if (label == TrialLabel::kTC) return m.rest;
      for (size_t i = 0; i < metas.size(); ++i) {
        const bool same_spk = metas[i].speaker_id == m.speaker;
        const bool same_ph = *metas[i].phrase_id == m.phrase;
        if ((label == TrialLabel::kTW && same_spk && !same_ph) ||
            (label == TrialLabel::kIC && !same_spk && same_ph) ||
            (label == TrialLabel::kIW && !same_spk && !same_ph))
          c.push_back(i);
      }
      return c;
    };
    const TrialLabel labels[4] = {TrialLabel::kTC, TrialLabel::kTW,
                                  TrialLabel::kIC, TrialLabel::kIW};
    for (int li = 0; li < 4; ++li) {
      // Models that admit at least one test utterance for this label.
      std::vector<std::pair<const Cell *, std::vector<size_t>>> usable;
      if (counts[li] > 0)
        for (const auto &m : models) {
          auto c = candidates(m, labels[li]);
          if (!c.empty()) usable.push_back({&m, std::move(c)});
        }
      if (counts[li] > 0 && usable.empty())
        throw DataError("trials: label " + std::string(LabelName(labels[li])) +
                        " infeasible for this corpus");
      for (int k = 0; k < counts[li]; ++k) {
        const auto &[model, cand] = Pick(usable, rng);
        add(*model, Pick(cand, rng), labels[li]);
      }
    }
    for (const auto &m : models)
      for (size_t i : m.enroll) out.enroll[m.model_id].push_back(metas[i].utt_id);
  } else {
    std::vector<Cell> models;
    for (const auto &[spk, idx] : by_speaker) {
      Cell c{spk, spk, "", {}, {}};
      for (size_t i : idx) {
        if (metas[i].language == Language::kL1 &&
            c.enroll.size() < static_cast<size_t>(req.enroll_utts))
          c.enroll.push_back(i);
        else
          c.rest.push_back(i);
      }
      if (c.enroll.size() == static_cast<size_t>(req.enroll_utts))
        models.push_back(std::move(c));
    }
    if (models.empty())
      throw DataError("trials: no speaker has enough L1 utterances to enroll");
    std::vector<const Cell *> tgt_models;
    for (const auto &m : models)
      if (!m.rest.empty()) tgt_models.push_back(&m);
    if (counts[0] > 0 && tgt_models.empty())
      throw DataError("trials: target trials infeasible");
    for (int k = 0; k < counts[0]; ++k) {
      const Cell &m = *Pick(tgt_models, rng);
      add(m, Pick(m.rest, rng), TrialLabel::kTarget);
    }
    for (int k = 0; k < counts[1]; ++k) {
      const Cell &m = Pick(models, rng);
      size_t test;
      do {
        test = rng.UniformInt(metas.size());
      } while (metas[test].speaker_id == m.speaker);
      add(m, test, TrialLabel::kNontarget);
    }
    for (const auto &m : models)
      for (size_t i : m.enroll) out.enroll[m.model_id].push_back(metas[i].utt_id);
  }

  // Fisher-Yates shuffle so labels are interleaved, then number the trials.
  for (size_t i = made.size(); i > 1; --i)
    std::swap(made[i - 1], made[rng.UniformInt(i)]);
  for (size_t i = 0; i < made.size(); ++i) {
    Trial &t = made[i].first;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "trial%06zu", i);
    t.trial_id = buf;
    out.keys.push_back({t.trial_id, made[i].second});
    out.trials.push_back(std::move(t));
  }
  return out;
}

}  // namespace spkv
