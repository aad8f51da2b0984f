// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "selftrain/common.hpp"

namespace selftrain {

using Json = nlohmann::ordered_json;

/// Ordered set of class names. The order is the tie-break order everywhere
/// (argmax, sampling remainders, report columns).
class LabelSchema {
 public:
  LabelSchema(std::string name, std::vector<std::string> classes);

  /// entailment, contradiction, neutral
  static LabelSchema nli3();
  /// entailment, not_entailment
  static LabelSchema nli2();
  /// Accepts "nli3" / "nli2" (also "3way" / "2way").
  static LabelSchema by_name(std::string_view name);
  static LabelSchema from_json(const Json& j);
  Json to_json() const;

  const std::string& name() const { return name_; }
  std::span<const std::string> classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  const std::string& at(std::size_t i) const { return classes_.at(i); }

  std::optional<std::size_t> index_of(std::string_view cls) const;
  bool contains(std::string_view cls) const { return index_of(cls).has_value(); }
  /// Throws ValidationError when cls is not in the schema.
  std::size_t require(std::string_view cls) const;

  bool operator==(const LabelSchema&) const = default;

 private:
  std::string name_;
  std::vector<std::string> classes_;
};

struct LabeledExample {
  std::string id;
  std::string premise;
  std::string hypothesis;
  std::string label;
  Json extra = Json::object();  // unknown fields, preserved on write

  bool operator==(const LabeledExample&) const = default;
};

struct UnlabeledPremise {
  std::string id;
  std::string premise;
  Json extra = Json::object();

  bool operator==(const UnlabeledPremise&) const = default;
};

/// A generated premise/hypothesis pair. synthetic_label is the class of the
/// generator that produced it; it is absent for randomly paired hypotheses.
struct SyntheticExample {
  std::string id;
  std::string premise_id;
  std::string premise;
  std::string hypothesis;
  std::optional<std::string> synthetic_label;
  std::string generator_id;
  Json extra = Json::object();

  bool operator==(const SyntheticExample&) const = default;
};

struct PseudoLabeledExample {
  SyntheticExample base;
  std::string pseudo_label;
  double confidence = 0.0;
  int iteration_selected = 0;
  bool noised = false;

  const std::string& id() const { return base.id; }
  bool operator==(const PseudoLabeledExample&) const = default;
};

struct DatasetStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_class;

  std::size_t count(const std::string& cls) const {
    auto it = per_class.find(cls);
    return it == per_class.end() ? 0 : it->second;
  }
};

/// premise_id + "#" + class name.
std::string synthetic_id(std::string_view premise_id, std::string_view cls);

// --- JSON record mapping ----------------------------------------------------

Json to_json(const LabeledExample& ex);
Json to_json(const UnlabeledPremise& p);
Json to_json(const SyntheticExample& ex);
Json to_json(const PseudoLabeledExample& ex);

/// Record parsers. `where` prefixes error messages (e.g. "data.jsonl:3").
LabeledExample labeled_from_json(const Json& j, const LabelSchema& schema, std::string_view where);
UnlabeledPremise unlabeled_from_json(const Json& j, std::string_view where);
SyntheticExample synthetic_from_json(const Json& j, const LabelSchema& schema,
                                     std::string_view where);
PseudoLabeledExample pseudo_from_json(const Json& j, const LabelSchema& schema,
                                      std::string_view where);

// --- Files ------------------------------------------------------------------

/// Calls fn(record, line_number) for each non-blank line. Line numbers are
/// 1-based. Malformed JSON raises ValidationError naming the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

template <typename Record>
std::string to_jsonl(std::span<const Record> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

template <typename Record>
void write_jsonl(const std::filesystem::path& path, std::span<const Record> records) {
  write_file_atomic(path, to_jsonl(records));
}

/// Ids missing from the file default to "line-<n>". Duplicate ids are errors.
std::vector<LabeledExample> load_labeled(const std::filesystem::path& path,
                                         const LabelSchema& schema);

struct UnlabeledSet {
  std::vector<UnlabeledPremise> premises;
  /// Lines whose premise text already appeared earlier in the file.
  std::size_t duplicate_premises = 0;
};

UnlabeledSet load_unlabeled(const std::filesystem::path& path);

std::vector<SyntheticExample> load_synthetic(const std::filesystem::path& path,
                                             const LabelSchema& schema);

// --- Operations -------------------------------------------------------------

std::vector<LabeledExample> partition_by_class(std::span<const LabeledExample> examples,
                                               std::string_view cls, const LabelSchema& schema);

DatasetStats stats(std::span<const LabeledExample> examples, const LabelSchema& schema);
DatasetStats stats(std::span<const SyntheticExample> examples, const LabelSchema& schema);
DatasetStats stats(std::span<const PseudoLabeledExample> examples, const LabelSchema& schema);

}  // namespace selftrain
