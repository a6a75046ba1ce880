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
#ifndef FEDVAL_PIPELINE_REPORT_H_
#define FEDVAL_PIPELINE_REPORT_H_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedval {

inline constexpr int kReportSchemaVersion = 1;

// Canonical text: keys sorted, two-space indent, floats printed with 12
// significant digits and always carrying a '.' or exponent. Throws
// NumericError on NaN or infinity.
std::string CanonicalJson(const nlohmann::json& j);

// Rounds every float in `j` to 12 significant digits, so that a canonical
// dump parses back to an equal value. Throws NumericError on NaN/Inf with
// the JSON pointer of the offending entry.
nlohmann::json CanonicalizeNumbers(const nlohmann::json& j);

struct Report {
  int schema_version = kReportSchemaVersion;
  std::string command;
  std::string config_hash;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
  static Report FromJson(const nlohmann::json& j);
  // Canonicalizes numbers in place; throws NumericError on NaN/Inf.
  void Validate();
  friend bool operator==(const Report&, const Report&) = default;
};

// Validates, then writes the canonical text. Throws IoError with the path.
void EmitReport(Report& report, const std::string& path);
Report ParseReport(const std::string& text);
Report ReadReport(const std::string& path);

}  // namespace fedval

#endif  // FEDVAL_PIPELINE_REPORT_H_
