// tools/spkv-cli.cc

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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spkv/error.h"
#include "spkv/io.h"
#include "spkv/pipeline.h"

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
};

spkv::PipelineConfig Resolve(const Options &o) {
  spkv::PipelineConfig c;
  if (!o.config_path.empty()) {
    if (!std::filesystem::is_regular_file(o.config_path))
      throw spkv::UsageError("config file not found: " + o.config_path);
    c.ParseText(spkv::ReadTextFile(o.config_path), o.config_path);
  }
  for (const auto &s : o.sets) c.Set(s);
  if (!o.seed.empty()) {
    c.Set("seed", o.seed);
    c.GetSeed("seed");
  }
  return c;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"spkv: speaker verification pipeline"};
  app.require_subcommand(1);
  Options opts;

  using Runner = std::function<void(const spkv::PipelineConfig &)>;
  const std::vector<std::pair<std::string, Runner>> commands = {
      {"gen", spkv::CmdGen},
      {"train", spkv::CmdTrain},
      {"extract", spkv::CmdExtract},
      {"score", spkv::CmdScore},
      {"norm", spkv::CmdNorm},
      {"filter", spkv::CmdFilter},
      {"fuse", spkv::CmdFuse},
      {"eval", [](const spkv::PipelineConfig &c) { std::cout << spkv::CmdEval(c); }},
      {"e2e", [](const spkv::PipelineConfig &c) { spkv::CmdE2e(c); }},
  };
  Runner chosen;
  for (const auto &[name, run] : commands) {
    CLI::App *sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config_path, "key=value config file");
    sub->add_option("--set", opts.sets, "override one key (key=value)")
        ->take_all()
        ->allow_extra_args(false);
    sub->add_option("--seed", opts.seed, "override the global seed");
    sub->callback([&chosen, run = run] { chosen = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(spkv::ExitCode::kUsage);
  }

  try {
    chosen(Resolve(opts));
  } catch (const spkv::Error &e) {
    std::cerr << "spkv: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error &e) {
    std::cerr << "spkv: " << e.what() << "\n";
    return static_cast<int>(spkv::ExitCode::kData);
  } catch (const std::exception &e) {
    std::cerr << "spkv: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
