#include "malta/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

namespace malta {

spdlog::logger &log() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("malta");
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *logger;
}

} // namespace malta
