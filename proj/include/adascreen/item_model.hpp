#pragma once

// Item bank, response datasets, and outcome derivation.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "adascreen/code_matrix.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"

namespace adascreen {

enum class RiskClass : std::uint8_t { NotAtRisk = 0, AtRisk = 1 };

inline constexpr std::size_t kDefaultMaxLevels = 6;

struct Level {
  int code = 0;
  std::string label;
  friend bool operator==(const Level&, const Level&) = default;
};

struct ItemDef {
  std::string id;
  std::string text;
  std::vector<Level> levels;
  std::optional<std::string> scale;

  bool has_code(int code) const {
    return std::any_of(levels.begin(), levels.end(), [&](const Level& l) { return l.code == code; });
  }
  int lowest_code() const { return levels.front().code; }
  int highest_code() const { return levels.back().code; }

  friend bool operator==(const ItemDef&, const ItemDef&) = default;
};

struct ConditioningVar {
  std::string name;
  std::string type = "integer";
  friend bool operator==(const ConditioningVar&, const ConditioningVar&) = default;
};

class ItemBank {
 public:
  ItemBank() = default;

  /// Validates every invariant; throws Error on the first violation.
  ItemBank(std::vector<ItemDef> items, std::vector<std::string> outcome_items,
           std::vector<ConditioningVar> conditioning_vars,
           std::size_t max_levels = kDefaultMaxLevels)
      : items_(std::move(items)),
        outcome_items_(std::move(outcome_items)),
        conditioning_vars_(std::move(conditioning_vars)) {
    std::set<std::string> seen;
    for (const auto& item : items_) {
      require(!item.id.empty(), ErrorCode::SchemaViolation, "item with empty id");
      require(seen.insert(item.id).second, ErrorCode::DuplicateItemId, "duplicate item id '" + item.id + "'");
      require(!item.levels.empty(), ErrorCode::EmptyLevels, "item '" + item.id + "' declares no levels");
      require(item.levels.size() >= 2, ErrorCode::SchemaViolation,
              "item '" + item.id + "' needs at least 2 levels");
      require(item.levels.size() <= max_levels, ErrorCode::SchemaViolation,
              "item '" + item.id + "' has " + std::to_string(item.levels.size()) + " levels (max " +
                  std::to_string(max_levels) + ")");
      for (std::size_t l = 1; l < item.levels.size(); ++l) {
        require(item.levels[l - 1].code < item.levels[l].code, ErrorCode::SchemaViolation,
                "item '" + item.id + "' level codes must be strictly increasing");
      }
      for (const auto& l : item.levels) {
        require(l.code >= -32768 && l.code <= 32767, ErrorCode::SchemaViolation,
                "item '" + item.id + "' code out of 16-bit range");
      }
    }
    std::set<std::string> outcomes;
    for (const auto& id : outcome_items_) {
      require(seen.count(id) == 1, ErrorCode::SchemaViolation, "outcome item '" + id + "' is not a declared item");
      require(outcomes.insert(id).second, ErrorCode::DuplicateItemId, "outcome item '" + id + "' listed twice");
    }
    std::set<std::string> names;
    for (const auto& v : conditioning_vars_) {
      require(!v.name.empty(), ErrorCode::SchemaViolation, "conditioning variable with empty name");
      require(v.type == "integer", ErrorCode::SchemaViolation,
              "conditioning variable '" + v.name + "' has unsupported type '" + v.type + "'");
      require(seen.count(v.name) == 0 && names.insert(v.name).second, ErrorCode::DuplicateItemId,
              "conditioning variable '" + v.name + "' collides with another column");
      require(v.name != "Y" && v.name != "row_id", ErrorCode::SchemaViolation,
              "conditioning variable name '" + v.name + "' is reserved");
    }
    for (const auto& item : items_) {
      require(item.id != "Y" && item.id != "row_id", ErrorCode::SchemaViolation,
              "item id '" + item.id + "' is reserved");
      if (outcomes.count(item.id) == 0) splitting_.push_back(&item - items_.data());
    }
  }

  const std::vector<ItemDef>& items() const noexcept { return items_; }
  const std::vector<std::string>& outcome_items() const noexcept { return outcome_items_; }
  const std::vector<ConditioningVar>& conditioning_vars() const noexcept { return conditioning_vars_; }
  std::size_t size() const noexcept { return items_.size(); }

  /// Items eligible as splitting variables: every item not used to define Y.
  std::vector<const ItemDef*> splitting_items() const {
    std::vector<const ItemDef*> out;
    for (auto idx : splitting_) out.push_back(&items_[idx]);
    return out;
  }
  std::vector<std::string> splitting_ids() const {
    std::vector<std::string> out;
    for (auto idx : splitting_) out.push_back(items_[idx].id);
    return out;
  }

  const ItemDef* find(const std::string& id) const {
    auto it = std::find_if(items_.begin(), items_.end(), [&](const ItemDef& d) { return d.id == id; });
    return it == items_.end() ? nullptr : &*it;
  }
  bool is_outcome_item(const std::string& id) const {
    return std::find(outcome_items_.begin(), outcome_items_.end(), id) != outcome_items_.end();
  }

  friend bool operator==(const ItemBank& a, const ItemBank& b) {
    return a.items_ == b.items_ && a.outcome_items_ == b.outcome_items_ &&
           a.conditioning_vars_ == b.conditioning_vars_;
  }

 private:
  std::vector<ItemDef> items_;
  std::vector<std::string> outcome_items_;
  std::vector<ConditioningVar> conditioning_vars_;
  std::vector<std::size_t> splitting_;
};

inline nlohmann::json item_to_json(const ItemDef& item) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : item.levels) levels.push_back({{"code", l.code}, {"label", l.label}});
  nlohmann::json j = {{"id", item.id}, {"text", item.text}, {"levels", levels}};
  if (item.scale) j["scale"] = *item.scale;
  return j;
}

inline ItemDef item_from_json(const nlohmann::json& j, std::size_t index) {
  const std::string where = "items[" + std::to_string(index) + "]";
  require(j.is_object(), ErrorCode::SchemaViolation, where + " is not an object");
  ItemDef item;
  require(j.contains("id") && j["id"].is_string(), ErrorCode::SchemaViolation, where + " lacks a string 'id'");
  item.id = j["id"].get<std::string>();
  const std::string name = "item '" + item.id + "'";
  if (j.contains("text")) {
    require(j["text"].is_string(), ErrorCode::SchemaViolation, name + ": 'text' must be a string");
    item.text = j["text"].get<std::string>();
  }
  if (j.contains("scale") && !j["scale"].is_null()) {
    require(j["scale"].is_string(), ErrorCode::SchemaViolation, name + ": 'scale' must be a string");
    item.scale = j["scale"].get<std::string>();
  }
  require(j.contains("levels") && j["levels"].is_array(), ErrorCode::EmptyLevels, name + " has no 'levels' array");
  require(!j["levels"].empty(), ErrorCode::EmptyLevels, name + " declares no levels");
  for (const auto& lj : j["levels"]) {
    require(lj.is_object() && lj.contains("code") && lj["code"].is_number_integer(), ErrorCode::SchemaViolation,
            name + ": every level needs an integer 'code'");
    Level level;
    level.code = lj["code"].get<int>();
    if (lj.contains("label")) {
      require(lj["label"].is_string(), ErrorCode::SchemaViolation, name + ": level 'label' must be a string");
      level.label = lj["label"].get<std::string>();
    }
    item.levels.push_back(std::move(level));
  }
  return item;
}

inline nlohmann::json to_json(const ItemBank& bank) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : bank.items()) items.push_back(item_to_json(item));
  nlohmann::json cond = nlohmann::json::array();
  for (const auto& v : bank.conditioning_vars()) cond.push_back({{"name", v.name}, {"type", v.type}});
  return {{"items", items}, {"outcome_items", bank.outcome_items()}, {"conditioning_vars", cond}};
}

inline ItemBank item_bank_from_json(const nlohmann::json& j, std::size_t max_levels = kDefaultMaxLevels) {
  require(j.is_object(), ErrorCode::SchemaViolation, "item bank must be a JSON object");
  require(j.contains("items") && j["items"].is_array(), ErrorCode::SchemaViolation, "item bank lacks 'items' array");
  std::vector<ItemDef> items;
  for (std::size_t i = 0; i < j["items"].size(); ++i) items.push_back(item_from_json(j["items"][i], i));
  std::vector<std::string> outcome_items;
  if (j.contains("outcome_items")) {
    require(j["outcome_items"].is_array(), ErrorCode::SchemaViolation, "'outcome_items' must be an array");
    for (const auto& v : j["outcome_items"]) {
      require(v.is_string(), ErrorCode::SchemaViolation, "'outcome_items' entries must be strings");
      outcome_items.push_back(v.get<std::string>());
    }
  }
  std::vector<ConditioningVar> cond;
  if (j.contains("conditioning_vars")) {
    require(j["conditioning_vars"].is_array(), ErrorCode::SchemaViolation, "'conditioning_vars' must be an array");
    for (const auto& v : j["conditioning_vars"]) {
      require(v.is_object() && v.contains("name") && v["name"].is_string(), ErrorCode::SchemaViolation,
              "conditioning variable lacks a string 'name'");
      ConditioningVar var;
      var.name = v["name"].get<std::string>();
      if (v.contains("type")) var.type = v["type"].get<std::string>();
      cond.push_back(std::move(var));
    }
  }
  return ItemBank(std::move(items), std::move(outcome_items), std::move(cond), max_levels);
}

inline ItemBank load_item_bank(const std::string& path, std::size_t max_levels = kDefaultMaxLevels) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "' is not valid JSON: " + e.what());
  }
  return item_bank_from_json(j, max_levels);
}

inline void save_item_bank(const ItemBank& bank, const std::string& path) {
  write_file(path, to_json(bank).dump(2) + "\n");
}

/// Y = 1 iff any outcome item was answered positively.
inline RiskClass derive_outcome(std::span<const int> outcome_responses) {
  for (int v : outcome_responses) {
    if (v == 1) return RiskClass::AtRisk;
  }
  return RiskClass::NotAtRisk;
}

inline RiskClass derive_outcome(std::initializer_list<int> outcome_responses) {
  return derive_outcome(std::span<const int>(outcome_responses.begin(), outcome_responses.size()));
}

/// Complete-case item responses with binary outcomes and auxiliary covariates.
struct Dataset {
  std::vector<std::string> item_ids;          // splitting items, bank order
  CodeMatrix responses;                       // n x p
  std::vector<std::uint8_t> outcomes;         // n, values in {0,1}
  std::vector<std::string> conditioning_names;
  CodeMatrix conditioning;                    // n x q
  std::vector<std::string> row_ids;

  std::size_t rows() const noexcept { return outcomes.size(); }
  std::size_t num_items() const noexcept { return item_ids.size(); }

  /// Items followed by conditioning columns; the layout the copula model is fit to.
  CodeMatrix augmented() const {
    CodeMatrix out(rows(), num_items() + conditioning_names.size());
    for (std::size_t c = 0; c < num_items(); ++c) {
      auto src = responses.column(c);
      std::copy(src.begin(), src.end(), out.column(c).begin());
    }
    for (std::size_t c = 0; c < conditioning_names.size(); ++c) {
      auto src = conditioning.column(c);
      std::copy(src.begin(), src.end(), out.column(num_items() + c).begin());
    }
    return out;
  }
  std::vector<std::string> augmented_names() const {
    auto names = item_ids;
    names.insert(names.end(), conditioning_names.begin(), conditioning_names.end());
    return names;
  }

  double base_rate() const {
    if (outcomes.empty()) return 0.0;
    std::size_t pos = 0;
    for (auto y : outcomes) pos += y;
    return static_cast<double>(pos) / static_cast<double>(outcomes.size());
  }

  Dataset subset(std::span<const std::size_t> rows_to_keep) const {
    Dataset out;
    out.item_ids = item_ids;
    out.conditioning_names = conditioning_names;
    out.responses = CodeMatrix(rows_to_keep.size(), num_items());
    out.conditioning = CodeMatrix(rows_to_keep.size(), conditioning_names.size());
    for (std::size_t r = 0; r < rows_to_keep.size(); ++r) {
      const auto src = rows_to_keep[r];
      for (std::size_t c = 0; c < num_items(); ++c) out.responses(r, c) = responses(src, c);
      for (std::size_t c = 0; c < conditioning_names.size(); ++c) out.conditioning(r, c) = conditioning(src, c);
      out.outcomes.push_back(outcomes[src]);
      out.row_ids.push_back(row_ids[src]);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

inline std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a CSV of integer-coded responses against `bank`. Columns may appear in
/// any order; every splitting item, the outcome `Y` (or all outcome items, from
/// which Y is derived) and every conditioning variable must be present. An
/// optional `row_id` column supplies opaque row identifiers.
inline Dataset parse_dataset(std::istream& in, const ItemBank& bank, const std::string& source = "<stream>") {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaViolation, source + ": missing header row");
  const auto header = detail::split_csv_line(line);

  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    const bool known = name == "Y" || name == "row_id" || bank.find(name) != nullptr ||
                       std::any_of(bank.conditioning_vars().begin(), bank.conditioning_vars().end(),
                                   [&](const ConditioningVar& v) { return v.name == name; });
    require(known, ErrorCode::UnknownColumn, source + ": unknown column '" + name + "'");
    require(column_of.emplace(name, c).second, ErrorCode::SchemaViolation,
            source + ": column '" + name + "' appears twice");
  }

  Dataset data;
  data.item_ids = bank.splitting_ids();
  for (const auto& id : data.item_ids) {
    require(column_of.count(id) == 1, ErrorCode::SchemaViolation, source + ": missing column for item '" + id + "'");
  }
  for (const auto& v : bank.conditioning_vars()) {
    require(column_of.count(v.name) == 1, ErrorCode::SchemaViolation,
            source + ": missing conditioning column '" + v.name + "'");
    data.conditioning_names.push_back(v.name);
  }
  const bool has_y = column_of.count("Y") == 1;
  bool derive_y = false;
  if (!has_y) {
    derive_y = !bank.outcome_items().empty() &&
               std::all_of(bank.outcome_items().begin(), bank.outcome_items().end(),
                           [&](const std::string& id) { return column_of.count(id) == 1; });
    require(derive_y, ErrorCode::SchemaViolation, source + ": missing outcome column 'Y'");
  }

  std::vector<std::vector<Code>> item_cols(data.item_ids.size());
  std::vector<std::vector<Code>> cond_cols(data.conditioning_names.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorCode::SchemaViolation,
            source + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    auto cell_int = [&](const std::string& name) -> int {
      const auto& cell = cells[column_of.at(name)];
      require(!cell.empty() && cell != "NA", ErrorCode::MissingValue,
              source + ": missing value at row " + std::to_string(row) + ", column '" + name + "'");
      auto v = detail::parse_int(cell);
      require(v.has_value(), ErrorCode::CodeOutOfRange,
              source + ": non-integer value '" + cell + "' at row " + std::to_string(row) + ", column '" + name + "'");
      return *v;
    };
    for (std::size_t c = 0; c < data.item_ids.size(); ++c) {
      const auto& id = data.item_ids[c];
      const int v = cell_int(id);
      require(bank.find(id)->has_code(v), ErrorCode::CodeOutOfRange,
              source + ": code " + std::to_string(v) + " at row " + std::to_string(row) + " is not a level of item '" +
                  id + "'");
      item_cols[c].push_back(static_cast<Code>(v));
    }
    for (std::size_t c = 0; c < data.conditioning_names.size(); ++c) {
      const int v = cell_int(data.conditioning_names[c]);
      require(v >= -32768 && v <= 32767, ErrorCode::CodeOutOfRange,
              source + ": value at row " + std::to_string(row) + ", column '" + data.conditioning_names[c] +
                  "' exceeds the 16-bit range");
      cond_cols[c].push_back(static_cast<Code>(v));
    }
    if (has_y) {
      const int y = cell_int("Y");
      require(y == 0 || y == 1, ErrorCode::CodeOutOfRange,
              source + ": outcome at row " + std::to_string(row) + " must be 0 or 1");
      data.outcomes.push_back(static_cast<std::uint8_t>(y));
    } else {
      std::vector<int> positives;
      for (const auto& id : bank.outcome_items()) {
        const int v = cell_int(id);
        const ItemDef* item = bank.find(id);
        require(item->has_code(v), ErrorCode::CodeOutOfRange,
                source + ": code " + std::to_string(v) + " at row " + std::to_string(row) +
                    " is not a level of item '" + id + "'");
        positives.push_back(v > item->lowest_code() ? 1 : 0);
      }
      data.outcomes.push_back(static_cast<std::uint8_t>(derive_outcome(positives)));
    }
    if (column_of.count("row_id")) {
      data.row_ids.push_back(cells[column_of.at("row_id")]);
    } else {
      data.row_ids.push_back(std::to_string(row));
    }
  }

  const std::size_t n = data.outcomes.size();
  data.responses = CodeMatrix(n, data.item_ids.size());
  for (std::size_t c = 0; c < item_cols.size(); ++c) std::copy(item_cols[c].begin(), item_cols[c].end(), data.responses.column(c).begin());
  data.conditioning = CodeMatrix(n, data.conditioning_names.size());
  for (std::size_t c = 0; c < cond_cols.size(); ++c) std::copy(cond_cols[c].begin(), cond_cols[c].end(), data.conditioning.column(c).begin());
  return data;
}

inline Dataset load_dataset(const std::string& path, const ItemBank& bank) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open dataset '" + path + "'");
  return parse_dataset(in, bank, path);
}

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  out << "row_id";
  for (const auto& id : data.item_ids) out << ',' << id;
  out << ",Y";
  for (const auto& name : data.conditioning_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    out << data.row_ids[r];
    for (std::size_t c = 0; c < data.num_items(); ++c) out << ',' << data.responses(r, c);
    out << ',' << static_cast<int>(data.outcomes[r]);
    for (std::size_t c = 0; c < data.conditioning_names.size(); ++c) out << ',' << data.conditioning(r, c);
    out << '\n';
  }
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  std::ostringstream os;
  write_dataset_csv(data, os);
  write_file(path, os.str());
}

}  // namespace adascreen
