// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deskmoe/packing.hpp"
#include "deskmoe/tokenizer.hpp"

namespace deskmoe {

enum class Role { kSystem, kUser, kAssistant, kTool };

std::string_view role_name(Role r);
Role parse_role(std::string_view name);

struct Message {
  Role role = Role::kUser;
  std::string content;
};

struct Conversation {
  std::vector<Message> messages;

  /// Throws InputError on empty user or assistant content.
  void validate() const;
};

void to_json(nlohmann::json& j, const Conversation& c);
/// Accepts {"messages": [{"role", "content"}, ...]} or a bare message array.
void from_json(const nlohmann::json& j, Conversation& c);

enum class Language { kEnglish, kItalian };

struct ReasoningConfig {
  bool enabled = false;
  Language language = Language::kEnglish;
  bool turbo = false;

  /// Throws ConfigError for turbo without reasoning.
  void validate() const;
  friend bool operator==(const ReasoningConfig&, const ReasoningConfig&) = default;
};

/// Mode names: "none", "reasoning_en", "reasoning_ita", "reasoning_en_turbo",
/// "reasoning_ita_turbo".
ReasoningConfig parse_mode(std::string_view name);
std::string mode_name(const ReasoningConfig& rc);

struct AssistantBody {
  std::string reasoning;
  std::string answer;
  friend bool operator==(const AssistantBody&, const AssistantBody&) = default;
};

/// The assistant segment as pieces: language line, optional /turbo line,
/// think block, answer. Reasoning and answer pieces are trainable.
std::vector<Piece> assistant_pieces(const ReasoningConfig& rc, const AssistantBody& body);
/// Surface text of assistant_pieces().
std::string render_assistant(const ReasoningConfig& rc, const AssistantBody& body);

/// Full transcript: every message framed as <|im_start|>role\ncontent<|im_end|>\n,
/// followed by the assistant turn holding `body`.
std::vector<Piece> render(const Conversation& conv, const ReasoningConfig& rc, const AssistantBody& body);

/// Prompt for generation: the conversation, the assistant header and the
/// mode prefix up to and including "<think>\n". With reasoning disabled the
/// empty think block is included as well.
std::vector<Piece> generation_prompt(const Conversation& conv, const ReasoningConfig& rc);

std::string pieces_text(const std::vector<Piece>& pieces);

struct ParsedOutput {
  ReasoningConfig mode;
  AssistantBody body;
  /// False when the text carried no think tags at all.
  bool conforming = true;
};

/// Inverse of render_assistant(). A trailing <|im_end|> is ignored. Text
/// with no tags parses as a non-conforming plain answer; unbalanced or
/// nested think tags throw MalformedOutputError.
ParsedOutput parse(std::string_view text);

/// Encodes a rendered conversation with loss eligibility on the assistant's
/// reasoning and answer only.
SourceExample training_example(const Conversation& conv, const ReasoningConfig& rc, const AssistantBody& body,
                               std::string id = {});
/// {"id"?, "messages": [...], "mode"?, "reasoning"?, "answer"}.
SourceExample training_example_from_json(const nlohmann::json& j);

}  // namespace deskmoe
