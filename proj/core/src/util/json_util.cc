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
#include "fedval/util/json_util.h"

namespace fedval {

void RequireObject(const nlohmann::json& j, std::string_view context) {
  if (!j.is_object()) {
    throw ConfigError(std::string(context) + ": expected a JSON object");
  }
}

void CheckKeys(const nlohmann::json& j,
               std::initializer_list<std::string_view> allowed,
               std::string_view context) {
  RequireObject(j, context);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view a : allowed) {
      if (key == a) known = true;
    }
    if (!known) {
      throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace fedval
