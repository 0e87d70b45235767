// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/benchmark.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "eciwb/error.hpp"

namespace eciwb {

using nlohmann::json;

std::string source_name(RecordSource s) {
  switch (s) {
    case RecordSource::kPubmedqaStyle:
      return "pubmedqa_style";
    case RecordSource::kUsmleStyle:
      return "usmle_style";
    case RecordSource::kSynthetic:
      return "synthetic";
  }
  return "synthetic";
}

RecordSource parse_source(const std::string& s) {
  if (s == "pubmedqa_style") return RecordSource::kPubmedqaStyle;
  if (s == "usmle_style") return RecordSource::kUsmleStyle;
  if (s == "synthetic") return RecordSource::kSynthetic;
  throw DataError("unknown source '" + s + "'");
}

std::vector<std::string> BenchmarkRecord::labels() const {
  std::vector<std::string> out;
  for (const auto& [label, text] : options) out.push_back(label);
  return out;
}

void validate(const BenchmarkRecord& r) {
  if (r.id.empty()) throw DataError("record has an empty id");
  if (r.options.empty()) throw DataError("record '" + r.id + "' has no options");
  std::set<std::string> seen;
  for (const auto& [label, text] : r.options) {
    if (label.empty()) throw DataError("record '" + r.id + "' has an empty option label");
    if (!seen.insert(label).second) throw DataError("record '" + r.id + "' repeats option label '" + label + "'");
  }
  if (!seen.count(r.gold)) throw DataError("record '" + r.id + "': gold label '" + r.gold + "' is not among the options");
}

json to_json(const BenchmarkRecord& r) {
  json options = json::array();
  for (const auto& [label, text] : r.options) options.push_back({{"label", label}, {"text", text}});
  json j = {{"id", r.id},         {"question", r.question}, {"options", options},
            {"gold", r.gold},     {"has_image", r.has_image}, {"source", source_name(r.source)}};
  if (r.context) j["context"] = *r.context;
  if (r.reference) j["reference"] = *r.reference;
  return j;
}

namespace {

const std::set<std::string> kRecordKeys{"id", "question", "context", "options", "gold", "has_image", "source", "reference"};

std::string str_field(const json& j, const char* key, const std::string& id) {
  if (!j.contains(key)) throw DataError("record '" + id + "' is missing '" + key + "'");
  if (!j[key].is_string()) throw DataError("record '" + id + "': '" + key + "' must be a string");
  return j[key].get<std::string>();
}

std::optional<std::string> opt_str(const json& j, const char* key, const std::string& id) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return str_field(j, key, id);
}

}  // namespace

BenchmarkRecord record_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record must be a JSON object");
  BenchmarkRecord r;
  r.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::string("?");
  for (const auto& [key, value] : j.items())
    if (!kRecordKeys.count(key)) throw DataError("record '" + r.id + "' has unknown field '" + key + "'");
  r.id = str_field(j, "id", r.id);
  r.question = str_field(j, "question", r.id);
  r.context = opt_str(j, "context", r.id);
  r.reference = opt_str(j, "reference", r.id);
  r.gold = str_field(j, "gold", r.id);
  if (j.contains("has_image")) {
    if (!j["has_image"].is_boolean()) throw DataError("record '" + r.id + "': 'has_image' must be a boolean");
    r.has_image = j["has_image"].get<bool>();
  }
  if (j.contains("source")) r.source = parse_source(str_field(j, "source", r.id));
  if (!j.contains("options")) throw DataError("record '" + r.id + "' is missing 'options'");
  const json& opts = j["options"];
  // Either [{"label","text"}, ...] or an object; object order is not kept by
  // the parser, so the array form is what save writes.
  if (opts.is_array()) {
    for (const auto& o : opts) {
      if (!o.is_object() || !o.contains("label") || !o.contains("text") || !o["label"].is_string() ||
          !o["text"].is_string() || o.size() != 2)
        throw DataError("record '" + r.id + "': options entries must be {\"label\", \"text\"}");
      r.options.emplace_back(o["label"].get<std::string>(), o["text"].get<std::string>());
    }
  } else if (opts.is_object()) {
    for (const auto& [label, text] : opts.items()) {
      if (!text.is_string()) throw DataError("record '" + r.id + "': option '" + label + "' must be a string");
      r.options.emplace_back(label, text.get<std::string>());
    }
  } else {
    throw DataError("record '" + r.id + "': 'options' must be an array or object");
  }
  validate(r);
  return r;
}

LoadedBenchmark parse_benchmark(const std::string& jsonl) {
  LoadedBenchmark out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    BenchmarkRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what(), lineno);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    if (!ids.insert(r.id).second)
      throw DataError("line " + std::to_string(lineno) + ": duplicate record id '" + r.id + "'", lineno);
    if (r.has_image) {
      ++out.dropped_images;
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

LoadedBenchmark load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open benchmark file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_benchmark(ss.str());
}

std::string format_benchmark(const std::vector<BenchmarkRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

void save_benchmark(const std::string& path, const std::vector<BenchmarkRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write benchmark file '" + path + "'");
  out << format_benchmark(records);
}

std::size_t DatasetManifest::expected_total() const {
  return std::accumulate(expected_counts.begin(), expected_counts.end(), std::size_t{0});
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    for (const auto& [key, value] : j.items())
      if (key != "name" && key != "files" && key != "expected_counts")
        throw DataError("manifest '" + path + "' has unknown field '" + key + "'");
    m.name = j.at("name").get<std::string>();
    m.files = j.at("files").get<std::vector<std::string>>();
    m.expected_counts = j.at("expected_counts").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path + "' is invalid: " + e.what());
  }
  if (m.files.size() != m.expected_counts.size())
    throw DataError("manifest '" + path + "': files and expected_counts differ in length");
  return m;
}

LoadedBenchmark load_manifest_records(const std::string& manifest_path) {
  const DatasetManifest m = load_manifest(manifest_path);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  LoadedBenchmark all;
  for (std::size_t i = 0; i < m.files.size(); ++i) {
    LoadedBenchmark part = load_benchmark((dir / m.files[i]).string());
    if (part.records.size() != m.expected_counts[i])
      throw DataError("'" + m.files[i] + "' holds " + std::to_string(part.records.size()) + " records, manifest expects " +
                      std::to_string(m.expected_counts[i]));
    all.dropped_images += part.dropped_images;
    for (auto& r : part.records) all.records.push_back(std::move(r));
  }
  return all;
}

}  // namespace eciwb
