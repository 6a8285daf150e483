#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "malta/error.hpp"
#include "malta/llm.hpp"

namespace malta::testing {

/// Replays canned replies in order; an empty reply string throws
/// Error(Transport). Once the script runs out the last reply repeats.
class ScriptedTransport : public ChatTransport {
public:
  explicit ScriptedTransport(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string complete(const std::vector<ChatMessage> &messages) override {
    std::lock_guard lock(mu_);
    prompts.push_back(messages);
    const std::string &r = replies_.empty() ? empty_ : replies_[std::min(next_++, replies_.size() - 1)];
    if (r.empty())
      throw Error(ErrorCode::Transport, "scripted transport failure");
    return r;
  }

  std::vector<std::vector<ChatMessage>> prompts;

private:
  std::mutex mu_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::string empty_;
};

} // namespace malta::testing
