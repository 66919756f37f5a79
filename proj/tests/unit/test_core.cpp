#include "doctest.h"

#include "avs/core.hpp"
#include "avs/errors.hpp"

using namespace avs;

TEST_CASE("precision divides matched by examined") {
  CHECK(precision_of({50, 32, 18}) == doctest::Approx(0.64));
  CHECK(precision_of({50, 3, 47}) == doctest::Approx(0.06));
  CHECK(precision_of({7, 7, 0}) == 1.0);
  CHECK_THROWS_AS(precision_of({0, 0, 0}), InvariantViolation);
  CHECK_THROWS_AS(precision_of({50, 30, 30}), InvariantViolation);
}

TEST_CASE("windows reset to the head and advance by k") {
  CHECK(reset_window(50) == ExaminationWindow{0, 50});
  CHECK(advance_window({0, 50}, 50) == ExaminationWindow{50, 100});
  CHECK(advance_window({100, 150}, 50) == ExaminationWindow{150, 200});
  CHECK_THROWS_AS(reset_window(0), InvariantViolation);
}

TEST_CASE("ranked list order") {
  CHECK_NOTHROW(RankedList({{"a", 0.9}, {"b", 0.5}, {"c", 0.5}}));
  CHECK_THROWS_AS(RankedList({{"a", 0.5}, {"b", 0.9}}), InvariantViolation);
  CHECK_THROWS_AS(RankedList({{"b", 0.5}, {"a", 0.5}}), InvariantViolation);
  CHECK_THROWS_AS(RankedList({{"a", 0.9}, {"a", 0.5}}), InvariantViolation);
  auto sorted = RankedList::from_unsorted({{"z", 0.1}, {"b", 0.7}, {"a", 0.7}});
  REQUIRE(sorted.size() == 3);
  CHECK(sorted[0].id == "a");
  CHECK(sorted[1].id == "b");
  CHECK(sorted.head(10).size() == 3);
  CHECK(sorted.head(2).size() == 2);
}

TEST_CASE("memory bank is append-only and iteration-monotone") {
  MemoryBank m;
  auto q = Query::original("a dog on a beach");
  m = update_memory(m, {0, q, 0.64, {50, 32, 18}, {0, 50}});
  m = update_memory(m, {1, q, 0.06, {50, 3, 47}, {50, 100}});
  CHECK(m.size() == 2);
  CHECK_THROWS_AS(m.append({1, q, 0.5, {2, 1, 1}, {0, 2}}), InvariantViolation);
  CHECK_THROWS_AS(m.append({2, q, 0.5, {50, 3, 47}, {0, 50}}), InvariantViolation);
  CHECK(m.size() == 2);
}

TEST_CASE("submission keeps matched before padding and caps at L") {
  SubmissionList s(4);
  std::vector<CandidateId> first{"a", "b"};
  s = append_submission(s, first);
  CHECK(s.size() == 2);
  std::vector<CandidateId> dup{"a"};
  CHECK_THROWS_AS(s.append(dup, Provenance::matched), InvariantViolation);
  std::vector<CandidateId> pad{"x"};
  CHECK(s.append(pad, Provenance::padding) == 1);
  std::vector<CandidateId> late{"c"};
  CHECK_THROWS_AS(s.append(late, Provenance::matched), InvariantViolation);
  std::vector<CandidateId> more{"y", "z"};
  CHECK(s.append(more, Provenance::padding) == 1);
  CHECK(s.full());
  CHECK(s.matched_count() == 2);
  CHECK(s.entries().back().id == "y");
}

TEST_CASE("queries validate their origin") {
  CHECK_THROWS_AS(Query::original("").validate(), InvariantViolation);
  Query q = Query::original("x");
  q.reasoning = "why";
  CHECK_THROWS_AS(q.validate(), InvariantViolation);
  CHECK_NOTHROW(Query::reformulated("y", "because").validate());
}

TEST_CASE("memory bank round-trips through JSON and text") {
  MemoryBank m;
  m.append({0, Query::original("tab\there\nand \\ slash", {0.25f, -1.5f}), 0.64, {50, 32, 18},
            {0, 50}});
  m.append({3, Query::reformulated("next", "drifted\tfar"), 1.0 / 3.0, {3, 1, 2}, {0, 50}});
  CHECK(memory_bank_from_json(to_json(m)) == m);
  CHECK(memory_bank_from_text(memory_bank_to_text(m)) == m);
  CHECK(memory_bank_to_text(memory_bank_from_text(memory_bank_to_text(m))) ==
        memory_bank_to_text(m));
}

TEST_CASE("field escaping") {
  for (std::string s : {"", "plain", "a\tb", "line\nbreak\r", "back\\slash", "\\t literal"}) {
    CHECK(unescape_field(escape_field(s)) == s);
    CHECK(escape_field(s).find('\t') == std::string::npos);
  }
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
