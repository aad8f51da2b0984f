// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/datamodel.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

namespace selftrain {

LabelSchema::LabelSchema(std::string name, std::vector<std::string> classes)
    : name_(std::move(name)), classes_(std::move(classes)) {
  if (classes_.size() != 2 && classes_.size() != 3) {
    throw ValidationError("label schema '" + name_ + "' must have 2 or 3 classes, got " +
                          std::to_string(classes_.size()));
  }
  std::set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) throw ValidationError("label schema '" + name_ + "' has an empty class name");
    if (!seen.insert(c).second) {
      throw ValidationError("label schema '" + name_ + "' repeats class '" + c + "'");
    }
  }
}

LabelSchema LabelSchema::nli3() {
  return LabelSchema("nli3", {"entailment", "contradiction", "neutral"});
}

LabelSchema LabelSchema::nli2() { return LabelSchema("nli2", {"entailment", "not_entailment"}); }

LabelSchema LabelSchema::by_name(std::string_view name) {
  if (name == "nli3" || name == "3way") return nli3();
  if (name == "nli2" || name == "2way") return nli2();
  throw ValidationError("unknown label schema '" + std::string(name) + "'");
}

LabelSchema LabelSchema::from_json(const Json& j) {
  if (j.is_string()) return by_name(j.get<std::string>());
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array()) {
    throw ValidationError("schema must be a name or an object with a 'classes' array");
  }
  std::vector<std::string> classes;
  for (const auto& c : j["classes"]) {
    if (!c.is_string()) throw ValidationError("schema classes must be strings");
    classes.push_back(c.get<std::string>());
  }
  return LabelSchema(j.value("name", std::string("custom")), std::move(classes));
}

Json LabelSchema::to_json() const {
  Json j;
  j["name"] = name_;
  j["classes"] = classes_;
  return j;
}

std::optional<std::size_t> LabelSchema::index_of(std::string_view cls) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == cls) return i;
  }
  return std::nullopt;
}

std::size_t LabelSchema::require(std::string_view cls) const {
  auto idx = index_of(cls);
  if (!idx) {
    throw ValidationError("class '" + std::string(cls) + "' is not in schema '" + name_ + "'");
  }
  return *idx;
}

std::string synthetic_id(std::string_view premise_id, std::string_view cls) {
  std::string id(premise_id);
  id += '#';
  id += cls;
  return id;
}

// ---------------------------------------------------------------------------

namespace {

std::string prefix(std::string_view where) {
  return where.empty() ? std::string() : std::string(where) + ": ";
}

std::string required_text(const Json& j, const char* field, std::string_view where) {
  if (!j.contains(field)) {
    throw ValidationError(prefix(where) + "missing field '" + field + "'");
  }
  const auto& v = j[field];
  if (!v.is_string()) {
    throw ValidationError(prefix(where) + "field '" + field + "' must be a string");
  }
  std::string text = trim(v.get<std::string>());
  if (text.empty()) throw ValidationError(prefix(where) + "field '" + field + "' is empty");
  return text;
}

std::optional<std::string> optional_id(const Json& j, std::string_view where) {
  if (!j.contains("id") || j["id"].is_null()) return std::nullopt;
  const auto& v = j["id"];
  if (v.is_string()) {
    std::string id = trim(v.get<std::string>());
    if (id.empty()) throw ValidationError(prefix(where) + "field 'id' is empty");
    return id;
  }
  if (v.is_number_integer()) return v.dump();
  throw ValidationError(prefix(where) + "field 'id' must be a string or integer");
}

std::string checked_label(const Json& j, const char* field, const LabelSchema& schema,
                          std::string_view where) {
  std::string label = required_text(j, field, where);
  if (!schema.contains(label)) {
    throw ValidationError(prefix(where) + "unknown label '" + label + "' for schema '" +
                          schema.name() + "'");
  }
  return label;
}

Json extras(const Json& j, std::initializer_list<std::string_view> known) {
  Json out = Json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool is_known = false;
    for (auto k : known) is_known = is_known || it.key() == k;
    if (!is_known) out[it.key()] = it.value();
  }
  return out;
}

void append_extras(Json& j, const Json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    if (!j.contains(it.key())) j[it.key()] = it.value();
  }
}

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line);
}

}  // namespace

Json to_json(const LabeledExample& ex) {
  Json j;
  j["id"] = ex.id;
  j["premise"] = ex.premise;
  j["hypothesis"] = ex.hypothesis;
  j["label"] = ex.label;
  append_extras(j, ex.extra);
  return j;
}

Json to_json(const UnlabeledPremise& p) {
  Json j;
  j["id"] = p.id;
  j["premise"] = p.premise;
  append_extras(j, p.extra);
  return j;
}

Json to_json(const SyntheticExample& ex) {
  Json j;
  j["id"] = ex.id;
  j["premise_id"] = ex.premise_id;
  j["premise"] = ex.premise;
  j["hypothesis"] = ex.hypothesis;
  j["synthetic_label"] = ex.synthetic_label ? Json(*ex.synthetic_label) : Json(nullptr);
  j["generator_id"] = ex.generator_id;
  append_extras(j, ex.extra);
  return j;
}

Json to_json(const PseudoLabeledExample& ex) {
  Json j;
  j["base"] = to_json(ex.base);
  j["pseudo_label"] = ex.pseudo_label;
  j["confidence"] = ex.confidence;
  j["iteration_selected"] = ex.iteration_selected;
  j["noised"] = ex.noised;
  return j;
}

LabeledExample labeled_from_json(const Json& j, const LabelSchema& schema,
                                 std::string_view where) {
  if (!j.is_object()) throw ValidationError(prefix(where) + "record must be a JSON object");
  LabeledExample ex;
  ex.id = optional_id(j, where).value_or("");
  ex.premise = required_text(j, "premise", where);
  ex.hypothesis = required_text(j, "hypothesis", where);
  ex.label = checked_label(j, "label", schema, where);
  ex.extra = extras(j, {"id", "premise", "hypothesis", "label"});
  return ex;
}

UnlabeledPremise unlabeled_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) throw ValidationError(prefix(where) + "record must be a JSON object");
  UnlabeledPremise p;
  p.id = optional_id(j, where).value_or("");
  p.premise = required_text(j, "premise", where);
  p.extra = extras(j, {"id", "premise"});
  return p;
}

SyntheticExample synthetic_from_json(const Json& j, const LabelSchema& schema,
                                     std::string_view where) {
  if (!j.is_object()) throw ValidationError(prefix(where) + "record must be a JSON object");
  SyntheticExample ex;
  ex.id = required_text(j, "id", where);
  ex.premise_id = required_text(j, "premise_id", where);
  ex.premise = required_text(j, "premise", where);
  ex.hypothesis = required_text(j, "hypothesis", where);
  if (j.contains("synthetic_label") && !j["synthetic_label"].is_null()) {
    ex.synthetic_label = checked_label(j, "synthetic_label", schema, where);
  }
  if (j.contains("generator_id")) {
    if (!j["generator_id"].is_string()) {
      throw ValidationError(prefix(where) + "field 'generator_id' must be a string");
    }
    ex.generator_id = j["generator_id"].get<std::string>();
  }
  ex.extra = extras(j, {"id", "premise_id", "premise", "hypothesis", "synthetic_label",
                        "generator_id"});
  return ex;
}

PseudoLabeledExample pseudo_from_json(const Json& j, const LabelSchema& schema,
                                      std::string_view where) {
  if (!j.is_object() || !j.contains("base")) {
    throw ValidationError(prefix(where) + "pseudo-labeled record needs a 'base' object");
  }
  PseudoLabeledExample ex;
  ex.base = synthetic_from_json(j["base"], schema, where);
  ex.pseudo_label = checked_label(j, "pseudo_label", schema, where);
  if (!j.contains("confidence") || !j["confidence"].is_number()) {
    throw ValidationError(prefix(where) + "field 'confidence' must be a number");
  }
  ex.confidence = j["confidence"].get<double>();
  if (ex.confidence < 0.0 || ex.confidence > 1.0) {
    throw ValidationError(prefix(where) + "confidence outside [0,1]");
  }
  ex.iteration_selected = j.value("iteration_selected", 0);
  if (ex.iteration_selected < 0) {
    throw ValidationError(prefix(where) + "iteration_selected must be non-negative");
  }
  ex.noised = j.value("noised", false);
  return ex;
}

// ---------------------------------------------------------------------------

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ValidationError(location(path, line_no) + ": malformed JSON (" + e.what() + ")");
    }
    fn(j, line_no);
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<LabeledExample> load_labeled(const std::filesystem::path& path,
                                         const LabelSchema& schema) {
  std::vector<LabeledExample> out;
  std::unordered_set<std::string> ids;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    auto where = location(path, line);
    auto ex = labeled_from_json(j, schema, where);
    if (ex.id.empty()) ex.id = "line-" + std::to_string(line);
    if (!ids.insert(ex.id).second) {
      throw ValidationError(where + ": duplicate id '" + ex.id + "'");
    }
    out.push_back(std::move(ex));
  });
  return out;
}

UnlabeledSet load_unlabeled(const std::filesystem::path& path) {
  UnlabeledSet set;
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> texts;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    auto where = location(path, line);
    auto p = unlabeled_from_json(j, where);
    if (p.id.empty()) p.id = "line-" + std::to_string(line);
    if (!ids.insert(p.id).second) {
      throw ValidationError(where + ": duplicate id '" + p.id + "'");
    }
    if (!texts.insert(p.premise).second) ++set.duplicate_premises;
    set.premises.push_back(std::move(p));
  });
  return set;
}

std::vector<SyntheticExample> load_synthetic(const std::filesystem::path& path,
                                             const LabelSchema& schema) {
  std::vector<SyntheticExample> out;
  std::unordered_set<std::string> ids;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    auto where = location(path, line);
    auto ex = synthetic_from_json(j, schema, where);
    if (!ids.insert(ex.id).second) {
      throw ValidationError(where + ": duplicate id '" + ex.id + "'");
    }
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<LabeledExample> partition_by_class(std::span<const LabeledExample> examples,
                                               std::string_view cls, const LabelSchema& schema) {
  schema.require(cls);
  std::vector<LabeledExample> out;
  for (const auto& ex : examples) {
    if (ex.label == cls) out.push_back(ex);
  }
  return out;
}

namespace {

DatasetStats empty_stats(const LabelSchema& schema) {
  DatasetStats s;
  for (const auto& c : schema.classes()) s.per_class[c] = 0;
  return s;
}

}  // namespace

DatasetStats stats(std::span<const LabeledExample> examples, const LabelSchema& schema) {
  auto s = empty_stats(schema);
  for (const auto& ex : examples) ++s.per_class[ex.label];
  s.total = examples.size();
  return s;
}

DatasetStats stats(std::span<const SyntheticExample> examples, const LabelSchema& schema) {
  auto s = empty_stats(schema);
  // Randomly paired hypotheses carry no label; they are counted under "".
  for (const auto& ex : examples) ++s.per_class[ex.synthetic_label.value_or("")];
  s.total = examples.size();
  return s;
}

DatasetStats stats(std::span<const PseudoLabeledExample> examples, const LabelSchema& schema) {
  auto s = empty_stats(schema);
  for (const auto& ex : examples) ++s.per_class[ex.pseudo_label];
  s.total = examples.size();
  return s;
}

}  // namespace selftrain
