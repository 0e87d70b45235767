// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Multiple-choice benchmark records stored as JSON Lines.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace eciwb {

enum class RecordSource { kPubmedqaStyle, kUsmleStyle, kSynthetic };

std::string source_name(RecordSource s);
RecordSource parse_source(const std::string& s);

struct BenchmarkRecord {
  std::string id;
  std::string question;
  std::optional<std::string> context;
  // Ordered label -> option text.
  std::vector<std::pair<std::string, std::string>> options;
  std::string gold;
  bool has_image = false;
  RecordSource source = RecordSource::kSynthetic;
  // Reference free-text answer, used for BLEU/ROUGE when present.
  std::optional<std::string> reference;

  std::vector<std::string> labels() const;
  bool operator==(const BenchmarkRecord&) const = default;
};

// Throws DataError naming the record id on an invalid record.
void validate(const BenchmarkRecord& record);

nlohmann::json to_json(const BenchmarkRecord& record);
// Strict: unknown keys and wrong types throw DataError.
BenchmarkRecord record_from_json(const nlohmann::json& j);

struct LoadedBenchmark {
  std::vector<BenchmarkRecord> records;
  std::size_t dropped_images = 0;
};

// Records with has_image set are dropped and counted. Malformed lines throw
// DataError with the 1-based line number; blank lines are skipped.
LoadedBenchmark load_benchmark(const std::string& path);
LoadedBenchmark parse_benchmark(const std::string& jsonl);
void save_benchmark(const std::string& path, const std::vector<BenchmarkRecord>& records);
std::string format_benchmark(const std::vector<BenchmarkRecord>& records);

// Dataset manifest {name, files[], expected_counts}.
struct DatasetManifest {
  std::string name;
  std::vector<std::string> files;
  std::vector<std::size_t> expected_counts;
  std::size_t expected_total() const;
};

DatasetManifest load_manifest(const std::string& path);

// Loads every file of the manifest (relative to the manifest's directory) and
// checks each kept-record count against expected_counts.
LoadedBenchmark load_manifest_records(const std::string& manifest_path);

}  // namespace eciwb
