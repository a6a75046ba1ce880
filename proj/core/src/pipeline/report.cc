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
#include "fedval/pipeline/report.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedval/util/errors.h"
#include "fedval/util/json_util.h"

namespace fedval {

using nlohmann::json;

namespace {

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  std::string s = buf;
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

void CheckFinite(double v, const std::string& where) {
  if (!std::isfinite(v)) {
    throw NumericError("report value at '" + where + "' is not finite");
  }
}

json Canonicalize(const json& j, const std::string& where) {
  switch (j.type()) {
    case json::value_t::object: {
      json out = json::object();
      for (auto it = j.begin(); it != j.end(); ++it) {
        out[it.key()] = Canonicalize(it.value(), where + "/" + it.key());
      }
      return out;
    }
    case json::value_t::array: {
      json out = json::array();
      for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(Canonicalize(j[i], where + "/" + std::to_string(i)));
      }
      return out;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      CheckFinite(v, where);
      return std::strtod(FormatDouble(v).c_str(), nullptr);
    }
    default:
      return j;
  }
}

void Write(const json& j, int indent, std::string& out) {
  const std::string pad(2 * (indent + 1), ' ');
  const std::string close(2 * indent, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map: sorted
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        Write(it.value(), indent + 1, out);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out += ",\n";
        out += pad;
        Write(j[i], indent + 1, out);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      CheckFinite(v, "<float>");
      out += FormatDouble(v);
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string CanonicalJson(const json& j) {
  std::string out;
  Write(j, 0, out);
  out += "\n";
  return out;
}

json CanonicalizeNumbers(const json& j) { return Canonicalize(j, ""); }

json Report::ToJson() const {
  return {{"schema_version", schema_version},
          {"command", command},
          {"config_hash", config_hash},
          {"config", config},
          {"seeds", seeds},
          {"results", results},
          {"warnings", warnings}};
}

Report Report::FromJson(const json& j) {
  constexpr std::string_view kCtx = "report";
  RequireObject(j, kCtx);
  CheckKeys(j,
            {"schema_version", "command", "config_hash", "config", "seeds",
             "results", "warnings"},
            kCtx);
  Report r;
  r.schema_version = GetRequired<int>(j, "schema_version", kCtx);
  if (r.schema_version != kReportSchemaVersion) {
    throw ConfigError("report schema version " +
                      std::to_string(r.schema_version) + " is not supported");
  }
  r.command = GetRequired<std::string>(j, "command", kCtx);
  r.config_hash = GetRequired<std::string>(j, "config_hash", kCtx);
  r.config = GetRequired<json>(j, "config", kCtx);
  r.seeds = GetRequired<json>(j, "seeds", kCtx);
  r.results = GetRequired<json>(j, "results", kCtx);
  r.warnings = GetRequired<std::vector<std::string>>(j, "warnings", kCtx);
  return r;
}

void Report::Validate() {
  config = Canonicalize(config, "/config");
  seeds = Canonicalize(seeds, "/seeds");
  results = Canonicalize(results, "/results");
}

void EmitReport(Report& report, const std::string& path) {
  report.Validate();
  const std::string text = CanonicalJson(report.ToJson());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing report '" + path + "'");
}

Report ParseReport(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("report is not valid JSON: ") + e.what());
  }
  return Report::FromJson(j);
}

Report ReadReport(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseReport(ss.str());
}

}  // namespace fedval
