#include "malta/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "json_util.hpp"
#include "malta/data.hpp"
#include "malta/error.hpp"
#include "malta/log.hpp"

namespace malta {

namespace {
constexpr std::string_view kEndpoint = "llm endpoint";

std::string env_or(const char *name, std::string fallback) {
  const char *v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}
} // namespace

nlohmann::json llm_endpoint_to_json(const LlmEndpoint &e) {
  return {{"base_url", e.base_url},       {"model", e.model},
          {"token_env", e.token_env},     {"timeout_s", e.timeout_s},
          {"max_retries", e.max_retries}, {"temperature", e.temperature}};
}

LlmEndpoint llm_endpoint_from_json(const nlohmann::json &j) {
  using namespace detail;
  reject_unknown_keys(j, {"base_url", "model", "token_env", "timeout_s", "max_retries", "temperature"},
                      kEndpoint);
  LlmEndpoint e;
  if (j.contains("base_url"))
    e.base_url = get_string(j["base_url"], "base_url", kEndpoint);
  if (j.contains("model"))
    e.model = get_string(j["model"], "model", kEndpoint);
  if (j.contains("token_env"))
    e.token_env = get_string(j["token_env"], "token_env", kEndpoint);
  if (j.contains("timeout_s"))
    e.timeout_s = get_number(j["timeout_s"], "timeout_s", kEndpoint);
  if (j.contains("max_retries"))
    e.max_retries = static_cast<int>(get_integer(j["max_retries"], "max_retries", kEndpoint));
  if (j.contains("temperature"))
    e.temperature = get_number(j["temperature"], "temperature", kEndpoint);
  if (!(e.timeout_s > 0) || e.max_retries < 0)
    throw Error(ErrorCode::Config, "llm endpoint: timeout_s must be > 0 and max_retries >= 0");
  return e;
}

LlmEndpoint resolve_endpoint(LlmEndpoint e) {
  if (e.base_url.empty())
    e.base_url = env_or("MALTA_LLM_URL", "");
  if (e.model.empty())
    e.model = env_or("MALTA_LLM_MODEL", "");
  return e;
}

HttpChatTransport::HttpChatTransport(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, url))
    throw Error(ErrorCode::Config,
                "llm base_url '" + endpoint_.base_url + "' is not an http(s) URL");
  origin_ = m[1];
  std::string base = m[2];
  while (!base.empty() && base.back() == '/')
    base.pop_back();
  path_ = base + "/chat/completions";
}

nlohmann::json HttpChatTransport::request_body(const std::vector<ChatMessage> &messages) const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto &m : messages)
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", endpoint_.model}, {"messages", msgs}, {"temperature", endpoint_.temperature}};
}

std::string HttpChatTransport::complete(const std::vector<ChatMessage> &messages) {
  const std::string body = request_body(messages).dump();
  const std::string token = env_or(endpoint_.token_env.c_str(), "");
  const auto timeout = std::chrono::milliseconds(static_cast<long>(endpoint_.timeout_s * 1000));

  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(250 << (attempt - 1)));
    httplib::Client cli(origin_);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!token.empty())
      headers.emplace("Authorization", "Bearer " + token);
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status >= 400 && res->status < 500 && res->status != 429)
        break; // retrying a rejected request will not help
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception &e) {
      last_error = std::string("malformed completion: ") + e.what();
    }
  }
  throw Error(ErrorCode::Transport, "chat completion via " + origin_ + path_ + " failed: " + last_error);
}

std::optional<nlohmann::json> extract_json_payload(std::string_view reply) {
  auto try_parse = [](std::string_view s) -> std::optional<nlohmann::json> {
    auto j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded() || !(j.is_object() || j.is_array()))
      return std::nullopt;
    return j;
  };

  // Last fenced block.
  std::optional<std::string_view> fenced;
  for (std::size_t pos = 0;;) {
    const auto open = reply.find("```", pos);
    if (open == std::string_view::npos)
      break;
    auto content = reply.find('\n', open + 3);
    if (content == std::string_view::npos)
      break;
    const auto close = reply.find("```", content + 1);
    if (close == std::string_view::npos)
      break;
    fenced = reply.substr(content + 1, close - content - 1);
    pos = close + 3;
  }
  if (fenced)
    return try_parse(*fenced);

  if (auto j = try_parse(reply))
    return j;
  const auto first = reply.find_first_of("{[");
  if (first == std::string_view::npos)
    return std::nullopt;
  const char closer = reply[first] == '{' ? '}' : ']';
  const auto last = reply.rfind(closer);
  if (last == std::string_view::npos || last < first)
    return std::nullopt;
  return try_parse(reply.substr(first, last - first + 1));
}

std::vector<ChatMessage> render_prompt(std::string_view name,
                                       const std::map<std::string, std::string> &vars) {
  const auto path = data_dir() / "prompts" / (std::string(name) + ".v1.txt");
  std::string text;
  try {
    text = detail::read_file(path.string());
  } catch (const Error &) {
    throw Error(ErrorCode::Config, "prompt template not found: " + path.string());
  }
  // One pass over the template, so substituted values may contain braces.
  std::string filled;
  std::size_t pos = 0;
  for (auto open = text.find("{{"); open != std::string::npos; open = text.find("{{", pos)) {
    const auto close = text.find("}}", open);
    const std::string key = close == std::string::npos ? "" : text.substr(open + 2, close - open - 2);
    const auto it = vars.find(key);
    if (it == vars.end())
      throw Error(ErrorCode::Config, "prompt '" + std::string(name) + "' has an unfilled placeholder {{" +
                                         key + "}}");
    filled.append(text, pos, open - pos).append(it->second);
    pos = close + 2;
  }
  filled.append(text, pos);
  text = std::move(filled);

  std::string system, user = text;
  if (const auto sep = text.find("\n---\n"); sep != std::string::npos) {
    system = text.substr(0, sep);
    user = text.substr(sep + 5);
  }
  std::vector<ChatMessage> out;
  if (!system.empty())
    out.push_back({"system", system});
  out.push_back({"user", user});
  return out;
}

} // namespace malta
