#pragma once

#include <spdlog/spdlog.h>

namespace malta {

/// Shared logger. Writes to stderr only, so stdout stays free for
/// machine-readable output.
spdlog::logger &log();

} // namespace malta
