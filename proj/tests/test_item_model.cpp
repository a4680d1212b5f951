#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace adascreen;
using testing_support::five_level_item;
using testing_support::q_bank;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an adascreen::Error";
  return ErrorCode::Io;
}

Dataset parse(const std::string& csv, const ItemBank& bank) {
  std::istringstream in(csv);
  return parse_dataset(in, bank);
}

}  // namespace

TEST(ItemBank, MinimalTwoItemBank) {
  const auto bank = item_bank_from_json(nlohmann::json::parse(R"({
    "items": [
      {"id": "Q1", "text": "first", "levels": [{"code":1,"label":"a"},{"code":2,"label":"b"},{"code":3,"label":"c"},{"code":4,"label":"d"},{"code":5,"label":"e"}]},
      {"id": "Q2", "text": "second", "levels": [{"code":1,"label":"a"},{"code":2,"label":"b"},{"code":3,"label":"c"},{"code":4,"label":"d"},{"code":5,"label":"e"}]}
    ]})"));
  EXPECT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.splitting_ids(), (std::vector<std::string>{"Q1", "Q2"}));
}

TEST(ItemBank, HoldsALargeInstrument) {
  std::vector<ItemDef> items;
  for (int i = 0; i < 173; ++i) items.push_back(five_level_item("IRf" + std::to_string(i)));
  EXPECT_EQ(ItemBank(std::move(items), {}, {}).size(), 173u);
}

TEST(ItemBank, RejectsDuplicateIds) {
  EXPECT_EQ(code_of([] { ItemBank({five_level_item("IRf3"), five_level_item("IRf3")}, {}, {}); }),
            ErrorCode::DuplicateItemId);
}

TEST(ItemBank, RejectsEmptyAndSingleLevelItems) {
  EXPECT_EQ(code_of([] {
              item_bank_from_json(nlohmann::json::parse(R"({"items":[{"id":"Q1","levels":[]}]})"));
            }),
            ErrorCode::EmptyLevels);
  EXPECT_EQ(code_of([] { ItemBank({five_level_item("Q1", 1)}, {}, {}); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([] { ItemBank({five_level_item("Q1", 7)}, {}, {}); }), ErrorCode::SchemaViolation);
  EXPECT_NO_THROW(ItemBank({five_level_item("Q1", 7)}, {}, {}, 7));
}

TEST(ItemBank, RejectsNonIncreasingCodes) {
  auto item = five_level_item("Q1", 3);
  std::swap(item.levels[0], item.levels[1]);
  EXPECT_EQ(code_of([&] { ItemBank({item}, {}, {}); }), ErrorCode::SchemaViolation);
}

TEST(ItemBank, SchemaErrorNamesTheItem) {
  try {
    item_bank_from_json(nlohmann::json::parse(R"({"items":[{"id":"Q9","levels":[{"code":"x"}]}]})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Q9"), std::string::npos);
  }
}

TEST(ItemBank, OutcomeItemsAreNotSplittingItems) {
  const ItemBank bank({five_level_item("Q1"), five_level_item("V1", 2), five_level_item("Q2")}, {"V1"}, {});
  EXPECT_EQ(bank.splitting_ids(), (std::vector<std::string>{"Q1", "Q2"}));
  EXPECT_EQ(code_of([] { ItemBank({five_level_item("Q1")}, {"V9"}, {}); }), ErrorCode::SchemaViolation);
}

TEST(ItemBank, JsonRoundTripIsIdentical) {
  auto item = five_level_item("Q1");
  item.scale = "impulsivity";
  const ItemBank bank({item, five_level_item("Q2", 4), five_level_item("V1", 2)}, {"V1"}, {{"age", "integer"}});
  const auto again = item_bank_from_json(nlohmann::json::parse(to_json(bank).dump()));
  EXPECT_EQ(again, bank);
}

TEST(DeriveOutcome, AnyYesRule) {
  EXPECT_EQ(derive_outcome({0, 0, 0}), RiskClass::NotAtRisk);
  EXPECT_EQ(derive_outcome({0, 1, 0}), RiskClass::AtRisk);
  EXPECT_EQ(derive_outcome({1, 1, 1}), RiskClass::AtRisk);
}

TEST(DeriveOutcome, EqualsMaxOverAllBinaryTriples) {
  for (int bits = 0; bits < 8; ++bits) {
    const int a = bits & 1, b = (bits >> 1) & 1, c = (bits >> 2) & 1;
    EXPECT_EQ(static_cast<int>(derive_outcome({a, b, c})), std::max({a, b, c})) << bits;
  }
}

TEST(Dataset, LoadsValidRows) {
  const auto data = parse("Q1,Q2,Y\n1,5,0\n2,4,1\n3,3,0\n5,1,1\n", q_bank(2));
  EXPECT_EQ(data.rows(), 4u);
  EXPECT_EQ(data.responses(3, 0), 5);
  EXPECT_EQ(data.outcomes, (std::vector<std::uint8_t>{0, 1, 0, 1}));
  EXPECT_DOUBLE_EQ(data.base_rate(), 0.5);
}

TEST(Dataset, OutOfRangeCodeNamesRowAndItem) {
  try {
    parse("Q1,Q2,Y\n1,5,0\n2,7,1\n", q_bank(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CodeOutOfRange);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos);
    EXPECT_NE(msg.find("Q2"), std::string::npos);
  }
}

TEST(Dataset, EmptyCellIsMissingValue) {
  EXPECT_EQ(code_of([] { parse("Q1,Q2,Y\n1,,0\n", q_bank(2)); }), ErrorCode::MissingValue);
  EXPECT_EQ(code_of([] { parse("Q1,Q2,Y\n1,NA,0\n", q_bank(2)); }), ErrorCode::MissingValue);
}

TEST(Dataset, UnknownColumnRejected) {
  EXPECT_EQ(code_of([] { parse("Q1,Q2,Q3,Y\n1,1,1,0\n", q_bank(2)); }), ErrorCode::UnknownColumn);
}

TEST(Dataset, NonBinaryOutcomeRejected) {
  EXPECT_EQ(code_of([] { parse("Q1,Q2,Y\n1,1,2\n", q_bank(2)); }), ErrorCode::CodeOutOfRange);
}

TEST(Dataset, OutcomeDerivedFromOutcomeItemsWhenYAbsent) {
  const ItemBank bank({five_level_item("Q1"), five_level_item("V1", 2), five_level_item("V2", 2)}, {"V1", "V2"}, {});
  const auto data = parse("Q1,V1,V2\n1,1,1\n2,2,1\n3,1,2\n", bank);
  EXPECT_EQ(data.item_ids, (std::vector<std::string>{"Q1"}));
  EXPECT_EQ(data.outcomes, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Dataset, ConditioningColumnsAndCsvRoundTrip) {
  const ItemBank bank({five_level_item("Q1"), five_level_item("Q2")}, {}, {{"age", "integer"}});
  const auto data = parse("row_id,Q1,Q2,Y,age\na,1,2,0,14\nb,3,4,1,17\n", bank);
  EXPECT_EQ(data.conditioning(1, 0), 17);
  std::ostringstream out;
  write_dataset_csv(data, out);
  const auto again = parse(out.str(), bank);
  EXPECT_EQ(again.row_ids, data.row_ids);
  EXPECT_EQ(again.responses.row(1), data.responses.row(1));
  EXPECT_EQ(again.outcomes, data.outcomes);
  EXPECT_EQ(again.conditioning(0, 0), 14);
}

// Every single-cell corruption of a valid file is rejected; the valid file is accepted.
TEST(Dataset, RejectsExactlyTheInvalidFiles) {
  const auto bank = q_bank(2, 3);
  const std::vector<std::string> cells{"1", "2", "3", "4", "0", "", "x", "-1"};
  for (const auto& v : cells) {
    for (int col = 0; col < 3; ++col) {
      std::vector<std::string> row{"2", "3", "1"};
      row[static_cast<std::size_t>(col)] = v;
      const std::string csv = "Q1,Q2,Y\n1,1,0\n" + row[0] + "," + row[1] + "," + row[2] + "\n";
      const bool valid = col < 2 ? (v == "1" || v == "2" || v == "3") : (v == "0" || v == "1");
      if (valid) {
        EXPECT_NO_THROW(parse(csv, bank)) << csv;
      } else {
        EXPECT_THROW(parse(csv, bank), Error) << csv;
      }
    }
  }
}
