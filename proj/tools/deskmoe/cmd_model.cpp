// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <memory>
#include <random>

#include "cli.hpp"
#include "deskmoe/chat_template.hpp"
#include "deskmoe/errors.hpp"
#include "deskmoe/generation.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/perplexity.hpp"
#include "deskmoe/schedule.hpp"
#include "deskmoe/soup.hpp"
#include "deskmoe/tokenizer.hpp"
#include "deskmoe/trainer.hpp"

namespace deskmoe::cli {

void add_init_config(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::string preset = "chat";
    std::string stage = "desk";
    std::size_t steps = 1000;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> ckpt;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("init-config", "Write a run config and optionally an initialised checkpoint");
  sub->add_option("--preset", o->preset, "Model preset")
      ->check(CLI::IsMember({"desk", "chat", "reference"}))
      ->capture_default_str();
  sub->add_option("--stage", o->stage, "Stage preset: desk, sft, preference, stage1, stage2, stage3")
      ->capture_default_str();
  sub->add_option("--steps", o->steps, "Steps for presets whose length is configurable")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out", o->out, "Run config (JSON); stdout when omitted");
  sub->add_option("--ckpt", o->ckpt, "Also write a checkpoint initialised from --seed");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const ModelConfig config = preset_config(o->preset);
      const StageSpec stage = stages::by_name(o->stage, o->steps);
      nlohmann::json j = {{"model", config}, {"stage", stage}, {"fingerprint", config.fingerprint()}};
      j.update(flags.stamp());
      if (o->ckpt) build_model(config, flags.seed).save(*o->ckpt, flags.stamp());
      emit_json(o->out, j);
      return static_cast<int>(kOk);
    };
  });
}

void add_train(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::optional<std::filesystem::path> config;
    std::string preset = "chat";
    std::optional<std::string> stage;
    std::optional<double> lr;
    std::filesystem::path data;
    std::optional<std::filesystem::path> init;
    std::size_t steps = 100;
    std::optional<std::filesystem::path> checkpoint_dir;
    std::size_t checkpoint_interval = 100;
    std::optional<std::filesystem::path> metrics;
    std::filesystem::path out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("train", "Train on a packed batch file");
  auto* cfg = sub->add_option("--config", o->config, "Run config from init-config")->check(CLI::ExistingFile);
  sub->add_option("--preset", o->preset, "Model preset when no config is given")
      ->check(CLI::IsMember({"desk", "chat", "reference"}))
      ->excludes(cfg)
      ->capture_default_str();
  sub->add_option("--stage", o->stage, "Stage preset; overrides the config's stage");
  sub->add_option("--lr", o->lr, "Constant learning rate for the desk stage")->check(CLI::PositiveNumber);
  sub->add_option("--data", o->data, "Packed batch file")->required()->check(CLI::ExistingFile);
  sub->add_option("--init", o->init, "Start from this checkpoint instead of a fresh model")->check(CLI::ExistingFile);
  sub->add_option("--steps", o->steps, "Optimizer steps")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--checkpoint-dir", o->checkpoint_dir, "Directory for periodic checkpoints")
      ->envname("DESKMOE_CHECKPOINT_DIR");
  sub->add_option("--checkpoint-interval", o->checkpoint_interval, "Steps between checkpoints")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--metrics", o->metrics, "Per-step metrics (JSON Lines, appended)");
  sub->add_option("--out", o->out, "Final checkpoint")->required();
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      ModelConfig config = preset_config(o->preset);
      StageSpec stage = stages::desk(o->steps);
      if (o->config) {
        const nlohmann::json run = read_json(*o->config);
        config = load_model_config(*o->config);
        if (run.contains("stage")) stage = run.at("stage").get<StageSpec>();
      }
      if (o->stage) stage = stages::by_name(*o->stage, o->steps);
      if (o->lr) stage = stages::desk(o->steps, *o->lr, stage.aux_coefficient);

      ParameterStore store = o->init ? ParameterStore::load(*o->init) : build_model(config, flags.seed);
      if (o->init && store.config() != config && o->config) {
        throw IncompatibleError("checkpoint " + o->init->string() + " does not match the run config");
      }
      const std::vector<PackedSequence> data = read_packed(o->data);

      TrainOptions opts;
      opts.stage = stage;
      opts.seed = flags.seed;
      opts.checkpoint_dir = o->checkpoint_dir;
      opts.checkpoint_interval = o->checkpoint_interval;
      opts.metrics_path = o->metrics;
      Trainer trainer(store, opts);
      const auto metrics = trainer.run(data, o->steps);

      nlohmann::json meta = flags.stamp();
      meta["step"] = trainer.step();
      meta["stage"] = stage.name;
      store.save(o->out, meta);

      nlohmann::json summary = {{"steps", trainer.step()},
                                {"tokens_seen", trainer.tokens_seen()},
                                {"first", metrics.front()},
                                {"last", metrics.back()},
                                {"checkpoints", nlohmann::json::array()}};
      for (const auto& p : trainer.checkpoints()) summary["checkpoints"].push_back(p.string());
      summary.update(flags.stamp());
      emit_json(std::nullopt, summary);
      return static_cast<int>(kOk);
    };
  });
}

void add_generate(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path ckpt;
    std::string mode = "reasoning_en";
    std::optional<std::filesystem::path> prompt_file;
    std::optional<std::string> prompt;
    std::optional<std::string> system;
    SamplingParams sampling;
    GenerationLimits limits;
    bool json = false;
    std::optional<std::filesystem::path> out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("generate", "Sample one assistant turn in a reasoning mode");
  sub->add_option("--ckpt", o->ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--mode", o->mode, "none | reasoning_en | reasoning_ita | reasoning_en_turbo | reasoning_ita_turbo")
      ->capture_default_str();
  auto* pf = sub->add_option("--prompt-file", o->prompt_file, "User message file")->check(CLI::ExistingFile);
  sub->add_option("--prompt", o->prompt, "User message")->excludes(pf);
  sub->add_option("--system", o->system, "System message");
  sub->add_option("--temperature", o->sampling.temperature, "Sampling temperature")->capture_default_str();
  sub->add_option("--top-k", o->sampling.top_k, "Top-k cutoff; 0 disables")->capture_default_str();
  sub->add_option("--top-p", o->sampling.top_p, "Nucleus mass")->capture_default_str();
  sub->add_option("--min-p", o->sampling.min_p, "Minimum probability relative to the top token")->capture_default_str();
  sub->add_option("--max-reasoning-tokens", o->limits.max_reasoning_tokens, "Reasoning budget")->capture_default_str();
  sub->add_option("--max-answer-tokens", o->limits.max_answer_tokens, "Answer budget")->capture_default_str();
  sub->add_flag("--json", o->json, "Print a JSON record instead of the assistant text");
  sub->add_option("--out", o->out, "Output file; stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const ReasoningConfig rc = parse_mode(o->mode);
      Conversation conv;
      if (o->system) conv.messages.push_back({Role::kSystem, *o->system});
      std::string prompt = o->prompt_file ? read_text(*o->prompt_file) : o->prompt.value_or("");
      if (prompt.empty()) throw InputError("generate needs a non-empty --prompt or --prompt-file");
      conv.messages.push_back({Role::kUser, std::move(prompt)});

      const ParameterStore store = ParameterStore::load(o->ckpt);
      std::mt19937_64 rng(flags.seed);
      const GenerationResult g = generate(store, conv, rc, o->sampling, rng, o->limits);
      if (!o->json) {
        emit(o->out, g.text);
        return static_cast<int>(kOk);
      }
      nlohmann::json j = {{"mode", mode_name(rc)},
                          {"reasoning", g.body.reasoning},
                          {"answer", g.body.answer},
                          {"text", g.text},
                          {"generated_tokens", g.generated_ids.size()},
                          {"truncated", g.truncated}};
      j.update(flags.stamp());
      emit_json(o->out, j);
      return static_cast<int>(kOk);
    };
  });
}

void add_merge_soup(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path recipe;
    std::optional<std::string> scheme;
    std::optional<double> anchor_weight;
    std::filesystem::path out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("merge-soup", "Merge checkpoints with a weighting scheme");
  sub->add_option("--recipe", o->recipe, "Recipe JSON {anchor?, members, scheme, anchor_weight?}")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--scheme", o->scheme, "Override the recipe scheme")
      ->check(CLI::IsMember({"uniform-low", "uniform-high", "increasing", "decreasing"}));
  sub->add_option("--anchor-weight", o->anchor_weight, "Override the anchor weight");
  sub->add_option("--out", o->out, "Merged checkpoint")->required();
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      SoupRecipe recipe = recipe_from_json(read_json(o->recipe), o->recipe.parent_path());
      if (o->scheme) recipe.scheme = parse_scheme(*o->scheme);
      if (o->anchor_weight) recipe.anchor_weight = *o->anchor_weight;
      const std::vector<double> weights = recipe.weights();
      std::vector<ParameterStore> stores;
      for (const auto& p : recipe.checkpoints()) stores.push_back(ParameterStore::load(p));
      const ParameterStore merged = soup(stores, weights);

      nlohmann::json meta = flags.stamp();
      meta["scheme"] = scheme_name(recipe.scheme);
      meta["weights"] = weights;
      meta["checkpoints"] = nlohmann::json::array();
      for (const auto& p : recipe.checkpoints()) meta["checkpoints"].push_back(p.string());
      merged.save(o->out, meta);
      emit_json(std::nullopt, meta);
      return static_cast<int>(kOk);
    };
  });
}

void add_perplexity(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path ckpt;
    std::filesystem::path tokens;
    bool text = false;
    std::optional<std::size_t> window;
    std::optional<std::size_t> stride;
    std::optional<std::filesystem::path> out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("perplexity", "Sliding-window perplexity of a token stream");
  sub->add_option("--ckpt", o->ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--tokens", o->tokens, "JSON array of token ids, or raw text with --text")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_flag("--text", o->text, "Encode the input file as bytes");
  sub->add_option("--window", o->window, "Window length; defaults to the model context");
  sub->add_option("--stride", o->stride, "Window stride; defaults to the window");
  sub->add_option("--out", o->out, "Report file; stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const ParameterStore store = ParameterStore::load(o->ckpt);
      std::vector<std::int32_t> stream;
      if (o->text) {
        stream = ByteTokenizer().encode_text(read_text(o->tokens));
      } else {
        stream = read_json(o->tokens).get<std::vector<std::int32_t>>();
      }
      const std::size_t window =
          o->window.value_or(std::max<std::size_t>(2, std::min(store.config().context_length, stream.size())));
      const PerplexityResult r = perplexity(store, stream, window, o->stride.value_or(window));
      nlohmann::json j = {{"perplexity", r.perplexity},
                          {"nll_sum", r.nll_sum},
                          {"predicted_tokens", r.predicted},
                          {"windows", r.windows},
                          {"window", window},
                          {"stride", o->stride.value_or(window)}};
      j.update(flags.stamp());
      emit_json(o->out, j);
      return static_cast<int>(kOk);
    };
  });
}

}  // namespace deskmoe::cli
