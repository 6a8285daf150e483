#pragma once

#include <filesystem>

namespace malta {

/// Directory holding the shipped kernel corpus, cost coefficients and prompt
/// templates. MALTA_DATA_DIR in the environment overrides the build default.
std::filesystem::path data_dir();

} // namespace malta
