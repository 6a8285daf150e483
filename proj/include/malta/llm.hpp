//===-- llm.hpp - Chat-completion client and prompt templates -------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Wire contract: POST <base_url>/chat/completions with
//   {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": ...}
// and "Authorization: Bearer $MALTA_LLM_TOKEN" when the token is set. The
// reply's choices[0].message.content must hold one JSON object or array,
// located by extract_json_payload().
//
//===----------------------------------------------------------------------===//

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace malta {

struct LlmEndpoint {
  std::string base_url; // e.g. "http://localhost:8000/v1"
  std::string model;
  std::string token_env = "MALTA_LLM_TOKEN";
  double timeout_s = 60;
  int max_retries = 2;
  double temperature = 0.2;
};

nlohmann::json llm_endpoint_to_json(const LlmEndpoint &e);
LlmEndpoint llm_endpoint_from_json(const nlohmann::json &j);
/// Fills an empty base_url / model from MALTA_LLM_URL / MALTA_LLM_MODEL.
LlmEndpoint resolve_endpoint(LlmEndpoint e);

struct ChatMessage {
  std::string role;
  std::string content;
};

class ChatTransport {
public:
  virtual ~ChatTransport() = default;
  /// Content of the assistant's reply. Throws Error(Transport) once retries
  /// are exhausted. Must be safe to call from several threads at once.
  virtual std::string complete(const std::vector<ChatMessage> &messages) = 0;
};

class HttpChatTransport : public ChatTransport {
public:
  /// Throws Error(Config) when the base URL is empty or malformed.
  explicit HttpChatTransport(LlmEndpoint endpoint);
  std::string complete(const std::vector<ChatMessage> &messages) override;

  /// Request body sent for `messages`.
  nlohmann::json request_body(const std::vector<ChatMessage> &messages) const;

private:
  LlmEndpoint endpoint_;
  std::string origin_; // scheme://host[:port]
  std::string path_;   // base path + "/chat/completions"
};

/// The JSON document carried by a model reply. The last ``` fenced block
/// wins (an optional language tag such as "json" is skipped); without a
/// fence the whole reply is tried, then the span from the first '{' or '['
/// to the last matching closer. nullopt when nothing parses.
std::optional<nlohmann::json> extract_json_payload(std::string_view reply);

/// Prompt template data_dir()/prompts/<name>.v1.txt. A line consisting of
/// "---" separates the system message from the user message; {{key}}
/// placeholders are substituted from `vars`. Throws Error(Config) for a
/// missing file or an unfilled placeholder.
std::vector<ChatMessage> render_prompt(std::string_view name,
                                       const std::map<std::string, std::string> &vars);

} // namespace malta
