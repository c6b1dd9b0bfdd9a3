// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "deskmoe/chat_template.hpp"
#include "deskmoe/corpus_filter.hpp"
#include "deskmoe/errors.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/tokenizer.hpp"

namespace deskmoe::cli {

namespace {

std::vector<SourceExample> read_chat_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SourceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(training_example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (out.back().id.empty()) out.back().id = "line-" + std::to_string(lineno);
  }
  return out;
}

}  // namespace

void add_pack(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path input;
    std::string format = "tokens";
    std::size_t capacity = 256;
    std::int32_t separator = ByteTokenizer().id(Special::kImEnd);
    std::int32_t pad = ByteTokenizer().id(Special::kPad);
    std::filesystem::path out;
    std::optional<std::filesystem::path> report;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("pack", "Pack examples into fixed-capacity rows with loss weights");
  sub->add_option("--input", o->input, "JSON Lines of examples")->required()->check(CLI::ExistingFile);
  sub->add_option("--format", o->format, "tokens: {id, tokens, loss}; chat: {messages, mode, reasoning, answer}")
      ->check(CLI::IsMember({"tokens", "chat"}))
      ->capture_default_str();
  sub->add_option("--capacity", o->capacity, "Tokens per packed row")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--separator", o->separator, "Token appended after every example")->capture_default_str();
  sub->add_option("--pad", o->pad, "Padding token")->capture_default_str();
  sub->add_option("--out", o->out, "Packed batch file")->required();
  sub->add_option("--report", o->report, "Packing report (JSON); stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const std::vector<SourceExample> examples =
          o->format == "chat" ? read_chat_jsonl(o->input) : read_examples_jsonl(o->input);
      const auto rows = pack(examples, o->capacity, o->separator, o->pad);
      nlohmann::json meta = flags.stamp();
      meta["source"] = o->input.filename().string();
      write_packed(o->out, rows, meta);
      nlohmann::json report = packing_report(rows);
      report.update(flags.stamp());
      emit_json(o->report, report);
      return static_cast<int>(kOk);
    };
  });
}

void add_filter_corpus(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::filesystem::path input;
    std::filesystem::path blacklist;
    FilterOptions filter;
    std::optional<std::filesystem::path> kept;
    std::optional<std::filesystem::path> removed;
    std::optional<std::filesystem::path> report;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("filter-corpus", "Score records for copyright risk and split the corpus");
  sub->add_option("--input", o->input, "JSON Lines {id, url, text}")->required()->check(CLI::ExistingFile);
  sub->add_option("--blacklist", o->blacklist, "Domain blacklist, lines 'domain<TAB>category'")
      ->required()
      ->envname("DESKMOE_BLACKLIST")
      ->check(CLI::ExistingFile);
  sub->add_option("--threshold", o->filter.threshold, "Remove records scoring at or above this")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--report-thresholds", o->filter.report_thresholds, "Thresholds reported in the exclusion table")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--kept", o->kept, "Kept records (JSON Lines)");
  sub->add_option("--removed", o->removed, "Removed records (JSON Lines)");
  sub->add_option("--report", o->report, "Risk report (JSON); stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      const CorpusFilter filter(Blacklist::load(o->blacklist), o->filter);
      std::ifstream in(o->input);
      if (!in) throw IoError("cannot open " + o->input.string());
      std::ostringstream kept, removed;
      const RiskReport report = filter.run_jsonl(in, o->kept ? &kept : nullptr, o->removed ? &removed : nullptr);
      if (o->kept) emit(o->kept, kept.str());
      if (o->removed) emit(o->removed, removed.str());
      nlohmann::json j = report;
      j.update(flags.stamp());
      emit_json(o->report, j);
      return static_cast<int>(kOk);
    };
  });
}

void add_render_template(CLI::App& app, CommonFlags& flags, Action& action) {
  struct Opts {
    std::optional<std::filesystem::path> conversation;
    std::optional<std::string> prompt;
    std::string mode = "reasoning_en";
    std::optional<std::string> reasoning;
    std::optional<std::filesystem::path> reasoning_file;
    std::optional<std::string> answer;
    std::optional<std::filesystem::path> answer_file;
    bool assistant_only = false;
    bool generation = false;
    std::optional<std::filesystem::path> parse_file;
    std::optional<std::filesystem::path> out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* sub = app.add_subcommand("render-template", "Render a conversation, or parse an assistant output");
  auto* conv = sub->add_option("--conversation", o->conversation, "Conversation JSON")->check(CLI::ExistingFile);
  sub->add_option("--prompt", o->prompt, "Single user message")->excludes(conv);
  sub->add_option("--mode", o->mode, "none | reasoning_en | reasoning_ita | reasoning_en_turbo | reasoning_ita_turbo")
      ->capture_default_str();
  auto* r = sub->add_option("--reasoning", o->reasoning, "Reasoning text");
  sub->add_option("--reasoning-file", o->reasoning_file, "Reasoning text file")->check(CLI::ExistingFile)->excludes(r);
  auto* a = sub->add_option("--answer", o->answer, "Answer text");
  sub->add_option("--answer-file", o->answer_file, "Answer text file")->check(CLI::ExistingFile)->excludes(a);
  sub->add_flag("--assistant-only", o->assistant_only, "Print only the assistant segment");
  sub->add_flag("--generation-prompt", o->generation, "Print the prompt that opens the assistant turn");
  sub->add_option("--parse", o->parse_file, "Parse an assistant output file and print JSON")->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Output file; stdout when omitted");
  add_common(sub, flags);
  sub->callback([o, &flags, &action] {
    action = [o, &flags] {
      if (o->parse_file) {
        const ParsedOutput p = parse(read_text(*o->parse_file));
        nlohmann::json j = {{"mode", mode_name(p.mode)},
                            {"reasoning", p.body.reasoning},
                            {"answer", p.body.answer},
                            {"conforming", p.conforming}};
        j.update(flags.stamp());
        emit_json(o->out, j);
        return static_cast<int>(kOk);
      }
      const ReasoningConfig rc = parse_mode(o->mode);
      AssistantBody body;
      if (o->reasoning) body.reasoning = *o->reasoning;
      if (o->reasoning_file) body.reasoning = read_text(*o->reasoning_file);
      if (o->answer) body.answer = *o->answer;
      if (o->answer_file) body.answer = read_text(*o->answer_file);
      if (o->assistant_only) {
        emit(o->out, render_assistant(rc, body));
        return static_cast<int>(kOk);
      }
      Conversation c;
      if (o->conversation) c = read_json(*o->conversation).get<Conversation>();
      if (o->prompt) c.messages.push_back({Role::kUser, *o->prompt});
      if (!o->conversation && !o->prompt) {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        c = nlohmann::json::parse(buf.str()).get<Conversation>();
      }
      if (c.messages.empty()) throw InputError("conversation has no messages");
      emit(o->out, pieces_text(o->generation ? generation_prompt(c, rc) : render(c, rc, body)));
      return static_cast<int>(kOk);
    };
  });
}

}  // namespace deskmoe::cli
