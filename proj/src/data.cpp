#include "malta/data.hpp"

#include <cstdlib>

#ifndef MALTA_DEFAULT_DATA_DIR
#define MALTA_DEFAULT_DATA_DIR "data"
#endif

namespace malta {

std::filesystem::path data_dir() {
  if (const char *env = std::getenv("MALTA_DATA_DIR"); env && *env)
    return env;
  return MALTA_DEFAULT_DATA_DIR;
}

} // namespace malta
