// Copyright 2026 The fedval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDVAL_UTIL_JSON_UTIL_H_
#define FEDVAL_UTIL_JSON_UTIL_H_

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fedval/util/errors.h"

namespace fedval {

// Strict-parsing helpers; every failure is a ConfigError naming `context`.

void RequireObject(const nlohmann::json& j, std::string_view context);

// Rejects keys outside `allowed`.
void CheckKeys(const nlohmann::json& j,
               std::initializer_list<std::string_view> allowed,
               std::string_view context);

template <typename T>
T GetOr(const nlohmann::json& j, const char* key, T fallback,
        std::string_view context) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

template <typename T>
T GetRequired(const nlohmann::json& j, const char* key,
              std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError(std::string(context) + ": missing required key '" + key +
                      "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

}  // namespace fedval

#endif  // FEDVAL_UTIL_JSON_UTIL_H_
