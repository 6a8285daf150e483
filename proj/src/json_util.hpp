// Private helpers for the strict JSON readers used by the file formats.

#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "malta/error.hpp"

namespace malta::detail {

/// Parses `text`, translating syntax errors into Error(Syntax) carrying a
/// 1-based line:column position.
nlohmann::json parse_json_text(std::string_view text, std::string_view what);

/// Throws Error(UnknownField) for any key of `obj` outside `allowed`.
void reject_unknown_keys(const nlohmann::json &obj,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view what);

const nlohmann::json &require(const nlohmann::json &obj, std::string_view key,
                              std::string_view what);

long long get_integer(const nlohmann::json &v, std::string_view key,
                      std::string_view what);
double get_number(const nlohmann::json &v, std::string_view key,
                  std::string_view what);
std::string get_string(const nlohmann::json &v, std::string_view key,
                       std::string_view what);

std::string read_file(const std::string &path);

} // namespace malta::detail
