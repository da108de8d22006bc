#include <doctest.h>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "alcr/metrics.hpp"

using namespace alcr::metrics;

namespace {

/// Plain textbook recursion with memoisation on suffix indices; the oracle the
/// DP implementation is checked against.
int slow_edit(const std::string& a, const std::string& b, std::size_t i,
              std::size_t j, std::map<std::pair<std::size_t, std::size_t>, int>& memo) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int best;
  if (a[i] == b[j]) {
    best = slow_edit(a, b, i + 1, j + 1, memo);
  } else {
    int sub = slow_edit(a, b, i + 1, j + 1, memo);
    int del = slow_edit(a, b, i + 1, j, memo);
    int ins = slow_edit(a, b, i, j + 1, memo);
    best = 1 + std::min(sub, std::min(del, ins));
  }
  memo[key] = best;
  return best;
}

int slow_edit(const std::string& a, const std::string& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  return slow_edit(a, b, 0, 0, memo);
}

}  // namespace

TEST_CASE("metrics: edit distance on known pairs") {
  CHECK(edit_distance("", "") == 0);
  CHECK(edit_distance("abc", "abc") == 0);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "") == 3);
  // [DERIVED] classic example: kitten -> sitting needs 3 edits.
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("ab", "ba") == 2);
  CHECK(edit_distance("abcdef", "azced") == 3);
}

TEST_CASE("metrics: edit distance equals brute-force recursion on all short pairs") {
  // Every string over {a,b,c} with length <= 4 against every other; the full
  // length-6 sweep lives in the acceptance suite.
  std::vector<std::string> all = {""};
  std::size_t begin = 0;
  for (int len = 1; len <= 4; ++len) {
    std::size_t end = all.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : {'a', 'b', 'c'}) all.push_back(all[i] + c);
    begin = end;
  }
  for (const auto& a : all)
    for (const auto& b : all) CHECK(edit_distance(a, b) == slow_edit(a, b));
}

TEST_CASE("metrics: cer is micro-averaged in percent") {
  // [DERIVED] 1 edit over 4 reference characters = 25%.
  CHECK(cer({"ab", "ce"}, {"ab", "cd"}) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(cer({"ab"}, {"ab"}) == 0.0);
  // Micro average weights by reference length: (0 + 4) / (4 + 4) = 50%.
  CHECK(cer({"aaaa", "bbbb"}, {"aaaa", "aaaa"}) == doctest::Approx(50.0));
  // CER can exceed 100 when hypotheses are longer than references.
  CHECK(cer({"aaaa"}, {"b"}) == doctest::Approx(400.0));
}

TEST_CASE("metrics: cer input validation and degenerate references") {
  CHECK_THROWS_AS(cer({"a"}, {"a", "b"}), std::invalid_argument);
  // Zero reference characters: 0 when the hypotheses are empty too, 100 when
  // anything was hallucinated.
  CHECK(cer({}, {}) == 0.0);
  CHECK(cer({""}, {""}) == 0.0);
  CHECK(cer({"x"}, {""}) == 100.0);
}

TEST_CASE("metrics: cer_by_id matches cer over aligned ids") {
  std::map<std::string, std::string> refs = {{"u1", "ab"}, {"u2", "cd"}};
  std::map<std::string, std::string> hyps = {{"u2", "ce"}, {"u1", "ab"}};
  CHECK(cer_by_id(hyps, refs) == doctest::Approx(25.0));
  hyps.erase("u2");
  CHECK_THROWS_AS(cer_by_id(hyps, refs), std::invalid_argument);
}
