// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <iostream>

#include "cli.hpp"
#include "deskmoe/errors.hpp"

namespace {

using deskmoe::cli::ExitCode;

int guarded(const deskmoe::cli::Action& action) {
  try {
    return action();
  } catch (const deskmoe::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return ExitCode::kNumeric;
  } catch (const deskmoe::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deskmoe: desk-scale sparse MoE training and evaluation toolkit", "deskmoe"};
  app.require_subcommand(1);

  deskmoe::cli::CommonFlags flags;
  deskmoe::cli::Action action;
  deskmoe::cli::add_init_config(app, flags, action);
  deskmoe::cli::add_pack(app, flags, action);
  deskmoe::cli::add_filter_corpus(app, flags, action);
  deskmoe::cli::add_train(app, flags, action);
  deskmoe::cli::add_generate(app, flags, action);
  deskmoe::cli::add_merge_soup(app, flags, action);
  deskmoe::cli::add_render_template(app, flags, action);
  deskmoe::cli::add_eval_metrics(app, flags, action);
  deskmoe::cli::add_flops_report(app, flags, action);
  deskmoe::cli::add_perplexity(app, flags, action);

  if (argc <= 1) {
    std::cerr << app.help();
    return ExitCode::kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return ExitCode::kUsage;
  }
  return guarded(action);
}
