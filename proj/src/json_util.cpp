#include "json_util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace malta::detail {

nlohmann::json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error &e) {
    // e.byte is 1-based and points one past the offending character.
    std::size_t offset = e.byte == 0 ? 0 : e.byte - 1;
    offset = std::min(offset, text.size());
    int line = 1;
    int column = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorCode::Syntax, std::string(what) + ": syntax error at " +
                                       std::to_string(line) + ":" +
                                       std::to_string(column));
  }
}

void reject_unknown_keys(const nlohmann::json &obj,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view what) {
  if (!obj.is_object())
    throw Error(ErrorCode::TypeMismatch,
                std::string(what) + ": expected a JSON object");
  for (const auto &[key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::UnknownField,
                  std::string(what) + ": unknown field '" + key + "'");
  }
}

const nlohmann::json &require(const nlohmann::json &obj, std::string_view key,
                              std::string_view what) {
  auto it = obj.find(std::string(key));
  if (it == obj.end())
    throw Error(ErrorCode::MissingField, std::string(what) +
                                             ": missing field '" +
                                             std::string(key) + "'");
  return *it;
}

long long get_integer(const nlohmann::json &v, std::string_view key,
                      std::string_view what) {
  if (!v.is_number_integer())
    throw Error(ErrorCode::TypeMismatch, std::string(what) + ": field '" +
                                             std::string(key) +
                                             "' must be an integer");
  return v.get<long long>();
}

double get_number(const nlohmann::json &v, std::string_view key,
                  std::string_view what) {
  if (!v.is_number())
    throw Error(ErrorCode::TypeMismatch, std::string(what) + ": field '" +
                                             std::string(key) +
                                             "' must be a number");
  return v.get<double>();
}

std::string get_string(const nlohmann::json &v, std::string_view key,
                       std::string_view what) {
  if (!v.is_string())
    throw Error(ErrorCode::TypeMismatch, std::string(what) + ": field '" +
                                             std::string(key) +
                                             "' must be a string");
  return v.get<std::string>();
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace malta::detail
